"""Feature extraction: text n-grams with tf-idf, structured bag-of-words, age,
embeddings and neighbourhood change fractions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ContractError, MissingInputError, ParseError, ValidationError
from .ingest import ArticleVersion, EmbeddingTable, escape, unescape
from .model import KbTimestamp, Snapshot

FEATURE_KINDS = ("structured_bow", "text_tfidf", "scalar", "embedding", "knn_fraction")
DEFAULT_MIN_DF = 5
DEFAULT_K = 10

_WORD_RE = re.compile(r"[^\W_]+")


def _check_range(ngram_range):
    low, high = ngram_range
    if not (1 <= low <= high <= 3):
        raise ContractError(f"ngram_range must satisfy 1 <= low <= high <= 3, got {ngram_range}")
    return low, high


def words(text: str) -> list:
    """Lowercased maximal alphanumeric runs; numeric tokens are kept."""
    return _WORD_RE.findall(text.lower())


def token_counts(text: str, ngram_range=(1, 1)) -> dict:
    low, high = _check_range(ngram_range)
    return _kernels.ngram_counts(words(text), low, high)


def tokenize(text: str, ngram_range=(1, 1)) -> list:
    """All n-grams of the text in range, as a list (a multiset)."""
    low, high = _check_range(ngram_range)
    toks = words(text)
    out = []
    for n in range(low, high + 1):
        if n == 1:
            out.extend(toks)
        else:
            out.extend(" ".join(toks[i:i + n]) for i in range(len(toks) - n + 1))
    return out


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple
    doc_freq: tuple
    n_docs: int
    ngram_range: tuple = (1, 1)
    index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if list(self.terms) != sorted(set(self.terms)):
            raise ValidationError("vocabulary terms must be unique and sorted")
        if any(df < 1 or df > self.n_docs for df in self.doc_freq):
            raise ValidationError("document frequencies must lie in [1, n_docs]")
        if self.index is None:
            object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def idf(self) -> np.ndarray:
        """Smoothed idf: ``ln((1 + n) / (1 + df)) + 1``."""
        df = np.asarray(self.doc_freq, dtype=np.float64)
        return np.log((1.0 + self.n_docs) / (1.0 + df)) + 1.0


def vocabulary_from_counts(docs: Iterable[dict], min_df: int = DEFAULT_MIN_DF, ngram_range=(1, 1)) -> Vocabulary:
    """Vocabulary of terms present in at least ``min_df`` of the per-document count maps."""
    df: dict = {}
    n = 0
    for counts in docs:
        n += 1
        for t in counts:
            df[t] = df.get(t, 0) + 1
    if n == 0:
        raise ContractError("cannot fit a vocabulary on an empty corpus")
    terms = sorted(t for t, c in df.items() if c >= min_df)
    return Vocabulary(tuple(terms), tuple(df[t] for t in terms), n, tuple(ngram_range))


def fit_vocabulary(corpus: Sequence, ngram_range=(1, 1), min_df: int = DEFAULT_MIN_DF) -> Vocabulary:
    """Fit on article versions (or plain strings)."""
    _check_range(ngram_range)
    texts = [c.text if isinstance(c, ArticleVersion) else c for c in corpus]
    if not texts:
        raise ContractError("cannot fit a vocabulary on an empty corpus")
    return vocabulary_from_counts((token_counts(t, ngram_range) for t in texts), min_df, ngram_range)


def write_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#n_docs={vocab.n_docs}\tngram={vocab.ngram_range[0]}-{vocab.ngram_range[1]}\n")
        for t, df in zip(vocab.terms, vocab.doc_freq):
            fh.write(f"{escape(t)}\t{df}\n")


def read_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        m = re.match(r"^#n_docs=(\d+)\tngram=(\d)-(\d)$", header)
        if m is None:
            raise ParseError("malformed vocabulary header", 1, path)
        terms, dfs = [], []
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError("expected term<TAB>df", lineno, path)
            terms.append(unescape(parts[0]))
            dfs.append(int(parts[1]))
    return Vocabulary(tuple(terms), tuple(dfs), int(m.group(1)), (int(m.group(2)), int(m.group(3))))


@dataclass(frozen=True)
class FeatureVector:
    entity: str
    kind: str
    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"non-finite feature value for {self.entity}")

    @classmethod
    def dense_of(cls, entity, kind, values) -> "FeatureVector":
        v = np.asarray(values, dtype=np.float64).ravel()
        return cls(entity, kind, v.size, np.arange(v.size), v)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2)))


def _weights(counts: dict, vocab: Vocabulary, tfidf: bool):
    idx = vocab.index
    pairs = sorted((idx[t], c) for t, c in counts.items() if t in idx)
    if not pairs:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    indices = np.fromiter((i for i, _ in pairs), dtype=np.int64, count=len(pairs))
    values = np.fromiter((c for _, c in pairs), dtype=np.float64, count=len(pairs))
    if tfidf:
        n = vocab.n_docs
        df = np.asarray([vocab.doc_freq[i] for i in indices], dtype=np.float64)
        values = values * (np.log((1.0 + n) / (1.0 + df)) + 1.0)
        values = values / math.sqrt(float(np.dot(values, values)))
    return indices, values


def vectorize_tfidf(doc: str, vocab: Vocabulary, entity: str = "", kind: str = "text_tfidf") -> FeatureVector:
    """Raw term frequency times smoothed idf, L2-normalised; unknown terms are ignored."""
    counts = token_counts(doc, vocab.ngram_range)
    indices, values = _weights(counts, vocab, tfidf=True)
    return FeatureVector(entity, kind, len(vocab), indices, values)


# -- structured bag of words ------------------------------------------------


def structured_tokens(snapshot: Snapshot, subject: str, exclude: Optional[str] = None) -> list:
    """``prop:<p>`` and ``propval:<p>=<object>`` tokens for every fact except the target property."""
    out = []
    for f in snapshot.facts_of(subject):
        if f.property == exclude:
            continue
        out.append(f"prop:{f.property}")
        out.append(f"propval:{f.property}={f.object.value.lower()}")
    return out


def _counts(tokens):
    c: dict = {}
    for t in tokens:
        c[t] = c.get(t, 0) + 1
    return c


def fit_structured_vocabulary(snapshot: Snapshot, entities, exclude: Optional[str] = None,
                              min_df: int = 1) -> Vocabulary:
    return vocabulary_from_counts(
        (_counts(structured_tokens(snapshot, e, exclude)) for e in entities), min_df
    )


def structured_bow(snapshot: Snapshot, subject: str, exclude: Optional[str] = None, mode: str = "count",
                   vocab: Optional[Vocabulary] = None) -> FeatureVector:
    """Structured bag-of-words vector; ``vocab`` is normally fitted over the entity class."""
    if mode not in ("count", "tfidf"):
        raise ContractError(f"mode must be count or tfidf, got {mode!r}")
    counts = _counts(structured_tokens(snapshot, subject, exclude))
    if vocab is None:
        if not counts:
            empty = np.zeros(0)
            return FeatureVector(subject, "structured_bow", 0, empty.astype(np.int64), empty)
        vocab = vocabulary_from_counts([counts], 1)
    indices, values = _weights(counts, vocab, tfidf=(mode == "tfidf"))
    return FeatureVector(subject, "structured_bow", len(vocab), indices, values)


# -- text deltas and scalars ------------------------------------------------


def text_delta(old: ArticleVersion, new: ArticleVersion) -> str:
    """Lines of ``new`` outside a longest common subsequence of lines with ``old``."""
    if old.entity != new.entity:
        raise ContractError(f"article versions belong to different entities: {old.entity} vs {new.entity}")
    a = old.text.split("\n") if old.text else []
    b = new.text.split("\n") if new.text else []
    mask = _kernels.unmatched_mask(a, b)
    return "\n".join(line for line, keep in zip(b, mask) if keep)


def _birth_date(snapshot: Snapshot, subject: str, birth_property: str) -> Optional[KbTimestamp]:
    dates = []
    for r in snapshot.records(subject, birth_property):
        if r.valid_time is not None:
            dates.append(r.valid_time)
            continue
        try:
            dates.append(KbTimestamp.parse(r.object.value))
        except ValidationError:
            continue
    return min(dates) if dates else None


def age_feature(snapshot: Snapshot, subject: str, birth_property: str, as_of: KbTimestamp) -> Optional[float]:
    """Whole years from the birth fact to ``as_of``; None without a usable birth fact."""
    born = _birth_date(snapshot, subject, birth_property)
    if born is None:
        return None
    b, t = born.as_date(), as_of.as_date()
    years = t.year - b.year - ((t.month, t.day) < (b.month, b.day))
    return float(years)


# -- neighbourhood ----------------------------------------------------------


def _neighbour_order(d2: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    rank = np.empty(len(ids), dtype=np.int64)
    rank[np.argsort(np.asarray(ids, dtype=object), kind="stable")] = np.arange(len(ids))
    return np.lexsort((rank, d2))


def knn_change_fraction(subject: str, property: str, embeddings: EmbeddingTable, reference, k: int = DEFAULT_K) -> float:
    """Share of the ``k`` nearest reference entities (Euclidean) whose ``property`` changed.

    ``reference`` is a list of ``(entity, changed)``; the subject itself is
    skipped and distance ties are broken by entity id.
    """
    ref = [(e, bool(c)) for e, c in reference if e != subject]
    for e in [subject] + [e for e, _ in ref]:
        if e not in embeddings:
            raise MissingInputError(f"no embedding for entity {e}")
    if k < 1 or k > len(ref):
        raise ContractError(f"k={k} must lie in [1, {len(ref)}] for this reference set")
    ids = [e for e, _ in ref]
    rows = np.asarray([embeddings.index[e] for e in ids])
    delta = embeddings.matrix[rows] - embeddings[subject]
    d2 = np.einsum("ij,ij->i", delta, delta)
    nearest = _neighbour_order(d2, ids)[:k]
    flags = np.asarray([c for _, c in ref], dtype=bool)
    return float(flags[nearest].sum()) / k


# -- feature matrices -------------------------------------------------------

MATRIX_MAGIC = "#kbstab-features"


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows keyed by entity. ``sparse`` matrices hold CSR data and are never rescaled."""

    kind: str
    names: tuple
    entities: tuple
    X: object  # scipy.sparse.csr_matrix when sparse, else 2-D ndarray
    sparse: bool
    row: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.X.shape != (len(self.entities), len(self.names)):
            raise ValidationError(
                f"matrix shape {self.X.shape} does not match {len(self.entities)} entities x {len(self.names)} features"
            )
        if self.row is None:
            object.__setattr__(self, "row", {e: i for i, e in enumerate(self.entities)})

    def take(self, entities) -> "FeatureMatrix":
        idx = [self.row[e] for e in entities]
        X = self.X[idx]
        return FeatureMatrix(self.kind, self.names, tuple(entities), X, self.sparse)


def matrix_from_vectors(kind: str, names, vectors: Sequence[FeatureVector], sparse: bool) -> FeatureMatrix:
    dim = len(names)
    entities = tuple(v.entity for v in vectors)
    if sparse:
        indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
        for i, v in enumerate(vectors):
            indptr[i + 1] = indptr[i] + v.indices.size
        indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, np.int64)
        data = np.concatenate([v.values for v in vectors]) if vectors else np.zeros(0)
        X = sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))
    else:
        X = np.vstack([v.dense() for v in vectors]) if vectors else np.zeros((0, dim))
    return FeatureMatrix(kind, tuple(names), entities, X, sparse)


def text_matrix(texts: dict, entities, ngram_range=(1, 1), min_df: int = DEFAULT_MIN_DF,
                vocab: Optional[Vocabulary] = None):
    """tf-idf rows for the entities that have text; returns ``(matrix, vocab)``."""
    present = [e for e in entities if e in texts]
    if vocab is None:
        vocab = fit_vocabulary([texts[e] for e in present], ngram_range, min_df)
    vecs = [vectorize_tfidf(texts[e], vocab, e) for e in present]
    return matrix_from_vectors("text_tfidf", vocab.terms, vecs, sparse=True), vocab


def structured_matrix(snapshot: Snapshot, entities, exclude: Optional[str], mode: str = "count",
                      min_df: int = DEFAULT_MIN_DF, vocab: Optional[Vocabulary] = None):
    entities = list(entities)
    if vocab is None:
        vocab = fit_structured_vocabulary(snapshot, entities, exclude, min_df)
    vecs = [structured_bow(snapshot, e, exclude, mode, vocab) for e in entities]
    return matrix_from_vectors("structured_bow", vocab.terms, vecs, sparse=True), vocab


def age_matrix(snapshot: Snapshot, entities, birth_property: str, as_of: KbTimestamp) -> FeatureMatrix:
    vecs = []
    for e in entities:
        age = age_feature(snapshot, e, birth_property, as_of)
        if age is not None:
            vecs.append(FeatureVector.dense_of(e, "scalar", [age]))
    return matrix_from_vectors("scalar", ("age",), vecs, sparse=False)


def embedding_matrix(table: EmbeddingTable, entities) -> FeatureMatrix:
    present = [e for e in entities if e in table]
    X = table.matrix[[table.index[e] for e in present]] if present else np.zeros((0, table.dimension))
    names = tuple(f"emb_{i}" for i in range(table.dimension))
    return FeatureMatrix("embedding", names, tuple(present), np.array(X), False)


def knn_matrix(entities, embeddings: EmbeddingTable, reference, k: int = DEFAULT_K) -> FeatureMatrix:
    """Neighbourhood change fraction for each entity that has an embedding."""
    present = [e for e in entities if e in embeddings]
    ref = [(e, c) for e, c in reference if e in embeddings]
    vals = [knn_change_fraction(e, "", embeddings, ref, k) for e in present]
    X = np.asarray(vals, dtype=np.float64).reshape(-1, 1)
    return FeatureMatrix("knn_fraction", ("knn_fraction",), tuple(present), X, False)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix(m: FeatureMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MATRIX_MAGIC}\tkind={m.kind}\tsparse={int(m.sparse)}\tdim={len(m.names)}\n")
        fh.write("entity\t" + "\t".join(escape(n) for n in m.names) + "\n")
        if m.sparse:
            X = m.X.tocsr()
            for i, e in enumerate(m.entities):
                lo, hi = X.indptr[i], X.indptr[i + 1]
                cells = "".join(f"\t{j}:{_fmt(v)}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
                fh.write(e + cells + "\n")
        else:
            for i, e in enumerate(m.entities):
                fh.write(e + "".join("\t" + _fmt(v) for v in m.X[i]) + "\n")


def read_matrix(path) -> FeatureMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != MATRIX_MAGIC:
            raise ParseError("not a kbstab feature matrix", 1, path)
        meta = dict(h.split("=", 1) for h in header[1:])
        names_line = fh.readline().rstrip("\n").split("\t")
        names = tuple(unescape(n) for n in names_line[1:]) if len(names_line) > 1 else ()
        if names_line[0] != "entity":
            raise ParseError("missing feature-name header", 2, path)
        if int(meta.get("dim", len(names))) != len(names):
            raise ParseError("dim does not match the number of feature names", 2, path)
        sparse = meta.get("sparse") == "1"
        entities, rows = [], []
        for lineno, line in enumerate(fh, 3):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            entities.append(parts[0])
            try:
                if sparse:
                    rows.append([(int(j), float(v)) for j, v in (c.split(":", 1) for c in parts[1:])])
                else:
                    if len(parts) - 1 != len(names):
                        raise ValueError(f"expected {len(names)} values, got {len(parts) - 1}")
                    rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
    if sparse:
        indptr = np.cumsum([0] + [len(r) for r in rows])
        indices = np.asarray([j for r in rows for j, _ in r], dtype=np.int64)
        data = np.asarray([v for r in rows for _, v in r], dtype=np.float64)
        if indices.size and (indices.min() < 0 or indices.max() >= len(names)):
            raise ParseError("sparse index out of range", None, path)
        X = sp.csr_matrix((data, indices, indptr), shape=(len(entities), len(names)))
    else:
        X = np.asarray(rows, dtype=np.float64).reshape(len(entities), len(names))
    if not np.all(np.isfinite(X.data if sparse else X)):
        raise ValidationError(f"{path}: non-finite feature value")
    return FeatureMatrix(meta.get("kind", "scalar"), names, tuple(entities), X, sparse)
