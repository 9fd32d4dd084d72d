"""Balanced datasets and per-property logistic-regression stability classifiers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .changes import timestamp_criterion
from .errors import ContractError, MissingInputError, ParseError, ValidationError
from .features import FeatureMatrix, FeatureVector, knn_change_fraction
from .ingest import EmbeddingTable, escape, unescape
from .metrics import Metrics, binary_metrics
from .model import Interval, project

log = logging.getLogger(__name__)

MIN_TEST_FRACTION = 0.4
MAX_TEST_FRACTION = 0.9


@dataclass(frozen=True)
class Hyperparams:
    l2: float = 1.0
    tolerance: float = 1e-6
    max_iter: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class LabeledDataset:
    """Entities, binary change targets and aligned feature blocks."""

    property: str
    interval: Optional[Interval]
    entities: tuple
    y: np.ndarray
    blocks: tuple = ()
    dropped: int = 0

    def __post_init__(self):
        if self.y.shape != (len(self.entities),):
            raise ValidationError("targets do not align with entities")
        if not np.isin(self.y, (0, 1)).all():
            raise ValidationError("targets must be 0 or 1")
        for b in self.blocks:
            if b.entities != self.entities:
                raise ValidationError(f"feature block {b.kind} is not aligned with the dataset rows")

    def __len__(self):
        return len(self.entities)

    @property
    def feature_names(self) -> tuple:
        return tuple(n for b in self.blocks for n in b.names)

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    @property
    def n_negative(self) -> int:
        return len(self.y) - self.n_positive

    def subset(self, idx) -> "LabeledDataset":
        idx = list(idx)
        ents = tuple(self.entities[i] for i in idx)
        return replace(self, entities=ents, y=self.y[idx], blocks=tuple(b.take(ents) for b in self.blocks))

    def with_block(self, block: FeatureMatrix) -> "LabeledDataset":
        return replace(self, blocks=self.blocks + (block.take(self.entities),))


def change_target(state2, interval: Interval) -> int:
    """1 when the timestamp criterion sees a change inside the interval."""
    return int(timestamp_criterion(state2, interval))


def balance(entities: Sequence[str], y: np.ndarray, seed: int):
    """Down-sample the majority class uniformly to the minority size; keeps input order."""
    y = np.asarray(y)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    m = min(pos.size, neg.size)
    if m < 2:
        raise ContractError(
            f"need at least 2 entities per class to balance, got {pos.size} positive / {neg.size} negative"
        )
    rng = np.random.default_rng(seed)
    if pos.size > m:
        pos = np.sort(rng.choice(pos, size=m, replace=False))
    elif neg.size > m:
        neg = np.sort(rng.choice(neg, size=m, replace=False))
    return np.sort(np.concatenate([pos, neg]))


def dataset_from_targets(targets: dict, property: str, interval: Optional[Interval],
                         blocks: Sequence[FeatureMatrix] = (), seed: int = 0,
                         balanced: bool = True) -> LabeledDataset:
    """Join targets with feature blocks, drop entities missing any block, then balance."""
    keep = [e for e in targets if all(e in b.row for b in blocks)]
    dropped = len(targets) - len(keep)
    if dropped:
        log.info("dropped %d entities lacking required features", dropped)
    y = np.asarray([int(targets[e]) for e in keep], dtype=np.int64)
    if balanced:
        idx = balance(keep, y, seed)
        keep = [keep[i] for i in idx]
        y = y[idx]
    ents = tuple(keep)
    return LabeledDataset(property, interval, ents, y, tuple(b.take(ents) for b in blocks), dropped)


def build_dataset(entities, property: str, interval: Optional[Interval], snapshots, blocks=(),
                  seed: int = 0, balanced: bool = True) -> LabeledDataset:
    """Targets from the timestamp criterion on the later snapshot, features from ``blocks``.

    ``snapshots`` is ``(K_tau1, K_tau2)``; the interval defaults to their sampling times.
    """
    snap1, snap2 = snapshots
    if interval is None:
        interval = Interval.make(snap1.sampled_at, snap2.sampled_at)
    targets = {}
    for e in entities:
        if e not in targets:
            targets[e] = change_target(project(snap2, e, property), interval)
    return dataset_from_targets(targets, property, interval, blocks, seed, balanced)


def split(dataset: LabeledDataset, test_fraction: float = MIN_TEST_FRACTION, seed: int = 0):
    """Stratified train/test split; each class sends ``ceil(fraction * n_class)`` rows to test."""
    if not MIN_TEST_FRACTION <= test_fraction <= MAX_TEST_FRACTION:
        raise ContractError(
            f"test_fraction must lie in [{MIN_TEST_FRACTION}, {MAX_TEST_FRACTION}], got {test_fraction}"
        )
    rng = np.random.default_rng(seed)
    test_idx = []
    for cls in (0, 1):
        members = np.flatnonzero(dataset.y == cls)
        n_test = math.ceil(test_fraction * members.size - 1e-9)
        test_idx.extend(rng.permutation(members)[:n_test].tolist())
    test_set = set(test_idx)
    train_idx = [i for i in range(len(dataset)) if i not in test_set]
    return dataset.subset(train_idx), dataset.subset(sorted(test_set))


def attach_knn(train: LabeledDataset, test: LabeledDataset, embeddings: EmbeddingTable, k: int = 10):
    """Add the neighbourhood change fraction, with neighbours drawn from the training rows only."""
    for e in train.entities + test.entities:
        if e not in embeddings:
            raise MissingInputError(f"no embedding for entity {e}")
    reference = list(zip(train.entities, train.y.tolist()))

    def block(ds):
        vals = [knn_change_fraction(e, ds.property, embeddings, reference, k) for e in ds.entities]
        X = np.asarray(vals, dtype=np.float64).reshape(-1, 1)
        return FeatureMatrix("knn_fraction", ("knn_fraction",), ds.entities, X, False)

    return train.with_block(block(train)), test.with_block(block(test))


# -- model ------------------------------------------------------------------


@dataclass(frozen=True)
class LogRegModel:
    feature_names: tuple
    weights: np.ndarray
    bias: float
    means: np.ndarray
    scales: np.ndarray
    scaled: np.ndarray  # bool mask of z-scored columns
    hyperparams: Hyperparams = Hyperparams()
    converged: bool = True
    n_iter: int = 0
    gradient_norm: float = 0.0
    loss_history: tuple = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.weights.size


def _design(blocks: Sequence[FeatureMatrix], means=None, scales=None):
    """Stack blocks column-wise, z-scoring dense blocks. Returns (X, means, scales, mask)."""
    parts, mu, sd, mask = [], [], [], []
    col = 0
    for b in blocks:
        d = len(b.names)
        if b.sparse:
            parts.append(sp.csr_matrix(b.X))
            mu.append(np.zeros(d))
            sd.append(np.ones(d))
            mask.append(np.zeros(d, dtype=bool))
        else:
            X = np.asarray(b.X, dtype=np.float64)
            if means is None:
                m = X.mean(axis=0) if X.shape[0] else np.zeros(d)
                s = X.std(axis=0) if X.shape[0] else np.ones(d)
                s = np.where(s > 0, s, 1.0)
            else:
                m = means[col:col + d]
                s = scales[col:col + d]
            parts.append((X - m) / s)
            mu.append(m)
            sd.append(s)
            mask.append(np.ones(d, dtype=bool))
        col += d
    n = len(blocks[0].entities) if blocks else 0
    if not parts:
        X = np.zeros((n, 0))
    elif any(sp.issparse(p) for p in parts):
        X = sp.hstack([sp.csr_matrix(p) for p in parts], format="csr")
    else:
        X = np.hstack(parts)
    return X, np.concatenate(mu) if mu else np.zeros(0), np.concatenate(sd) if sd else np.zeros(0), (
        np.concatenate(mask) if mask else np.zeros(0, dtype=bool)
    )


def loss_and_grad(w: np.ndarray, b: float, X, y: np.ndarray, l2: float):
    """Mean logistic loss plus ``l2/2 * |w|^2`` and its gradient ``(dw, db)``; ``y`` in {0, 1}."""
    s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    margin = s * (X @ w + b)
    n = margin.size
    loss = float(np.logaddexp(0.0, -margin).sum() / n + 0.5 * l2 * np.dot(w, w))
    coef = -s * _sigmoid(-margin) / n
    gw = np.asarray(X.T @ coef).ravel() + l2 * w
    gb = float(coef.sum())
    return loss, gw, gb


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def fit_logreg(X, y, hp: Hyperparams = Hyperparams()):
    """Gradient descent with Barzilai-Borwein steps and Armijo backtracking.

    Every accepted step decreases the objective, so the loss history is
    monotone. Returns ``(w, b, converged, n_iter, grad_norm, history)``.
    """
    n, d = X.shape
    rng = np.random.default_rng(hp.seed)
    theta = rng.normal(0.0, 0.01, size=d + 1)

    def fg(t):
        loss, gw, gb = loss_and_grad(t[:d], t[d], X, y, hp.l2)
        return loss, np.append(gw, gb)

    f, g = fg(theta)
    history = [f]
    step = 1.0
    converged = False
    it = 0
    gnorm = float(np.linalg.norm(g))
    while it < hp.max_iter:
        if gnorm < hp.tolerance:
            converged = True
            break
        t = step
        while True:
            cand = theta - t * g
            fc, gc = fg(cand)
            if fc <= f - 1e-4 * t * gnorm * gnorm:
                break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20:
            log.warning("line search stalled at gradient norm %.3g", gnorm)
            break
        s_k = cand - theta
        y_k = gc - g
        sy = float(np.dot(s_k, y_k))
        step = float(np.dot(s_k, s_k)) / sy if sy > 0 else 2.0 * t
        theta, f, g = cand, fc, gc
        gnorm = float(np.linalg.norm(g))
        history.append(f)
        it += 1
    if not converged and gnorm < hp.tolerance:
        converged = True
    return theta[:d], float(theta[d]), converged, it, gnorm, tuple(history)


def train(train_set: LabeledDataset, hyperparams: Hyperparams = Hyperparams()) -> LogRegModel:
    """Fit an L2-regularised logistic regression; dense blocks are z-scored on training statistics."""
    if len(train_set) == 0:
        raise ContractError("empty training set")
    if train_set.n_positive != train_set.n_negative:
        log.warning("training set is not balanced (%d/%d)", train_set.n_positive, train_set.n_negative)
    X, means, scales, mask = _design(train_set.blocks)
    w, b, converged, n_iter, gnorm, history = fit_logreg(X, train_set.y, hyperparams)
    if not converged:
        log.warning("logistic regression did not converge in %d iterations (|g|=%.3g)", n_iter, gnorm)
    return LogRegModel(train_set.feature_names, w, b, means, scales, mask, hyperparams,
                       converged, n_iter, gnorm, history)


def _as_row(model: LogRegModel, features) -> np.ndarray:
    if isinstance(features, FeatureVector):
        x = features.dense()
    elif isinstance(features, (list, tuple)) and features and isinstance(features[0], FeatureVector):
        x = np.concatenate([v.dense() for v in features])
    else:
        x = np.asarray(features, dtype=np.float64).ravel()
    if x.size != model.dim:
        raise ContractError(f"feature dimension {x.size} does not match model dimension {model.dim}")
    x = x.copy()
    x[model.scaled] = (x[model.scaled] - model.means[model.scaled]) / model.scales[model.scaled]
    return x


def predict(model: LogRegModel, features):
    """``(probability, label)`` for one raw feature vector (unscaled)."""
    x = _as_row(model, features)
    z = float(np.dot(model.weights, x)) + model.bias
    # label from the margin so it stays exact where the sigmoid rounds to 0.5
    return sigmoid(z), int(z >= 0.0)


def decision_function(model: LogRegModel, dataset: LabeledDataset) -> np.ndarray:
    names = dataset.feature_names
    if names != model.feature_names:
        raise ContractError("dataset features do not match the model's feature names")
    X, _, _, _ = _design(dataset.blocks, model.means, model.scales)
    return np.asarray(X @ model.weights).ravel() + model.bias


def predict_proba(model: LogRegModel, dataset: LabeledDataset) -> np.ndarray:
    return _sigmoid(decision_function(model, dataset))


def evaluate(model: LogRegModel, test: LabeledDataset) -> Metrics:
    """P/R/F1 with change as the positive class; balanced data gives a 50% chance baseline."""
    pred = decision_function(model, test) >= 0.0
    gold = test.y == 1
    return binary_metrics(
        gold.tolist(),
        pred.tolist(),
        labels=("change", "no_change"),
        gold_labels=["change" if g else "no_change" for g in gold],
        predicted_labels=["change" if p else "no_change" for p in pred],
    )


def inspect(model: LogRegModel, feature_names=None, top_k: int = 30):
    """Top ``top_k`` positive and negative weights as ``[(name, weight), ...]``."""
    names = model.feature_names if feature_names is None else tuple(feature_names)
    if len(names) != model.dim:
        raise ContractError("feature names do not align with the weights")
    w = model.weights
    pos = sorted((i for i in range(w.size) if w[i] > 0), key=lambda i: (-w[i], names[i]))
    neg = sorted((i for i in range(w.size) if w[i] < 0), key=lambda i: (w[i], names[i]))
    return ([(names[i], float(w[i])) for i in pos[:top_k]],
            [(names[i], float(w[i])) for i in neg[:top_k]])


# -- persistence ------------------------------------------------------------

MODEL_MAGIC = "#kbstab-logreg"


def write_model(model: LogRegModel, path) -> None:
    hp = model.hyperparams
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MODEL_MAGIC + "\n")
        fh.write(f"#l2={hp.l2!r}\n#tolerance={hp.tolerance!r}\n#max_iter={hp.max_iter}\n#seed={hp.seed}\n")
        fh.write(f"#converged={int(model.converged)}\n#n_iter={model.n_iter}\n")
        fh.write(f"#bias={model.bias!r}\n")
        fh.write("feature\tweight\tmean\tscale\tscaled\n")
        for name, w, m, s, z in zip(model.feature_names, model.weights, model.means,
                                     model.scales, model.scaled):
            fh.write(f"{escape(name)}\t{float(w)!r}\t{float(m)!r}\t{float(s)!r}\t{int(z)}\n")


def read_model(path) -> LogRegModel:
    meta = {}
    names, rows = [], []
    with open(path, encoding="utf-8") as fh:
        if fh.readline().rstrip("\n") != MODEL_MAGIC:
            raise ParseError("not a kbstab model file", 1, path)
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k] = v
                continue
            if line.startswith("feature\t") or not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError("expected 5 tab-separated fields", lineno, path)
            try:
                names.append(unescape(parts[0]))
                rows.append((float(parts[1]), float(parts[2]), float(parts[3]), parts[4] == "1"))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
    try:
        hp = Hyperparams(float(meta["l2"]), float(meta["tolerance"]), int(meta["max_iter"]), int(meta["seed"]))
        bias = float(meta["bias"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"missing or malformed model header field: {exc}", None, path) from None
    arr = np.asarray([r[:3] for r in rows], dtype=np.float64).reshape(-1, 3)
    return LogRegModel(
        tuple(names), arr[:, 0].copy(), bias, arr[:, 1].copy(), arr[:, 2].copy(),
        np.asarray([r[3] for r in rows], dtype=bool), hp,
        meta.get("converged", "1") == "1", int(meta.get("n_iter", 0)),
    )
