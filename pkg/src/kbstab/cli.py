"""Command-line entry point: ``kbstab <subcommand> ...``.

Exit codes: 0 success, 1 usage or validation error, 2 I/O or parse error.
Every output file is written atomically and gets a ``<out>.manifest.json``
listing the inputs (with sha256), the seed and a digest of the arguments.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, changes, density, features, filters, ingest, predictor, synth
from .errors import KbStabError, ParseError, ValidationError
from .features import FeatureMatrix
from .model import Interval, KbTimestamp, project

log = logging.getLogger("kbstab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# -- output plumbing --------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename it into place on success."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    write_text(path, buf.getvalue())


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Run:
    """Tracks inputs and outputs of one subcommand so it can write manifests."""

    def __init__(self, args):
        self.args = args
        self.inputs = []
        self.outputs = []

    def input(self, path):
        if path is not None and path not in self.inputs:
            self.inputs.append(str(path))
        return path

    def output(self, path):
        self.outputs.append(str(path))
        return path

    def config_digest(self) -> str:
        cfg = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
        blob = json.dumps(cfg, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def write_manifests(self):
        manifest = {
            "command": self.args.command,
            "version": __version__,
            "seed": self.args.seed,
            "config_digest": self.config_digest(),
            "inputs": [{"path": p, "sha256": _sha256(p)} for p in self.inputs if os.path.isfile(p)],
            "outputs": [{"path": p, "sha256": _sha256(p)} for p in self.outputs],
        }
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        for p in self.outputs:
            write_text(f"{p}.manifest.json", text)


def _write_with(run: Run, writer, obj, path):
    with atomic_path(path) as tmp:
        writer(obj, tmp)
    run.output(path)


# -- argument helpers -------------------------------------------------------


def _ts(text: str) -> KbTimestamp:
    try:
        return KbTimestamp.parse(text)
    except (ValueError, KbStabError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ngram(text: str):
    lo, _, hi = text.partition("-")
    try:
        return (int(lo), int(hi or lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or N-M, got {text!r}") from None


def _csv_list(text: str):
    return [t for t in (x.strip() for x in text.split(",")) if t]


def _interval(snap1, snap2, args) -> Interval:
    tau1 = args.tau1 if args.tau1 is not None else snap1.sampled_at
    tau2 = args.tau2 if args.tau2 is not None else snap2.sampled_at
    return Interval.make(tau1, tau2)


def _entities(run, path, fallback=None):
    if path is None:
        if fallback is None:
            raise ValidationError("an entity list is required")
        return list(fallback)
    return ingest.load_entity_list(run.input(path))


def _snapshot(run, path):
    return ingest.load_snapshot(run.input(path))


TARGET_KIND = "target"


def _read_targets(run, path):
    m = features.read_matrix(run.input(path))
    if m.kind != TARGET_KIND or len(m.names) != 1:
        raise ValidationError(f"{path}: not a target dataset (expected kind={TARGET_KIND})")
    prop = m.names[0].partition(":")[2] or "target"
    y = np.asarray(m.X).ravel()
    return {e: int(v) for e, v in zip(m.entities, y)}, prop


def read_config(path) -> dict:
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError("expected key=value", lineno, path)
            out[key.strip()] = value.strip()
    return out


# -- subcommands ------------------------------------------------------------


def cmd_analyze(args, run):
    snap1 = _snapshot(run, args.t1)
    snap2 = _snapshot(run, args.t2)
    interval = _interval(snap1, snap2, args)
    records = changes.analyze(snap1, snap2, args.criterion, interval, strict=args.strict,
                              strict_timestamp=args.strict_timestamp, workers=args.threads)
    text = "".join(json.dumps(changes.record_to_json(r), sort_keys=True) + "\n" for r in records)
    write_text(args.out, text)
    run.output(args.out)
    dist = changes.category_distribution((r.property, r.assigned_label) for r in records)
    rows = [[p] + [d[c] for c in changes.CAUSES] + [sum(d.values())] for p, d in dist.items()]
    out = f"{args.out}.distribution.csv"
    write_csv(out, ["property", *changes.CAUSES, "total"], rows)
    run.output(out)
    log.info("%d changed pairs", len(records))


def cmd_eval_criteria(args, run):
    records = []
    with open(run.input(args.report), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, lineno, args.report) from None
            records.append(changes.record_from_json(obj))
    gold = ingest.load_labels(run.input(args.gold))
    report = changes.evaluate_criteria(records, gold, args.criteria)
    rows = []
    for c, m in report.metrics.items():
        rows.append([c, _fmt(m.precision), _fmt(m.recall), _fmt(m.f1), m.tp, m.fp, m.fn, m.tn])
    write_csv(args.out, ["criterion", "precision", "recall", "f1", "tp", "fp", "fn", "tn"], rows)
    run.output(args.out)
    dist = f"{args.out}.distribution.csv"
    write_csv(dist, ["property", *changes.CAUSES],
              [[p] + [d[c] for c in changes.CAUSES] for p, d in report.distribution.items()])
    run.output(dist)


def cmd_filter_entities(args, run):
    snap = _snapshot(run, args.snapshot)
    ents = _entities(run, args.entities, snap.subjects())
    rows = [[e, int(filters.entity_is_stable(snap, e, args.terminating))] for e in ents]
    write_csv(args.out, ["entity", "stable"], rows)
    run.output(args.out)


def cmd_filter_properties(args, run):
    ents = _entities(run, args.class_entities)
    snap = _snapshot(run, args.snapshot) if args.snapshot else None
    edit_log = ingest.load_edit_log(run.input(args.edit_log)) if args.edit_log else None
    measure = filters.canonical_measure(args.measure)
    if args.properties:
        props = args.properties
    else:
        seen = set()
        if snap is not None:
            for e in ents:
                seen.update(snap.properties_of(e))
        if edit_log is not None:
            members = set(ents)
            seen.update(x.property for x in edit_log if x.subject in members)
        props = sorted(seen)
    if edit_log is not None:
        edit_log = filters.edit_counts(edit_log)
    verdicts, rows = {}, []
    for p in props:
        frac = filters.change_fraction(ents, p, measure, snap, edit_log)
        verdicts[p] = frac >= args.threshold
        rows.append([p, _fmt(frac), "unstable" if verdicts[p] else "stable"])
    write_csv(args.out, ["property", "fraction", "verdict"], rows)
    run.output(args.out)
    if args.gold:
        gold = ingest.load_property_labels(run.input(args.gold))
        m = filters.evaluate_filter({p: verdicts.get(p, False) for p in gold}, gold)
        out = f"{args.out}.metrics.csv"
        write_csv(out, ["measure", "threshold", "precision", "recall", "f1", "tp", "fp", "fn", "tn"],
                  [[measure, _fmt(args.threshold), _fmt(m.precision), _fmt(m.recall), _fmt(m.f1),
                    m.tp, m.fp, m.fn, m.tn]])
        run.output(out)


def _texts(run, args, as_of):
    arts = ingest.load_articles(run.input(args.articles))
    return {e: a.text for e, a in ingest.latest_versions(arts, as_of).items()}


def cmd_extract_features(args, run):
    kind = args.kind
    vocab_in = features.read_vocabulary(run.input(args.vocab)) if args.vocab else None
    vocab = None
    if kind == TARGET_KIND:
        if not args.property:
            raise ValidationError("--property is required for target datasets")
        snap1 = _snapshot(run, args.t1)
        snap2 = _snapshot(run, args.t2)
        interval = _interval(snap1, snap2, args)
        ents = _entities(run, args.entities, sorted(set(snap1.subjects()) | set(snap2.subjects())))
        ents = list(dict.fromkeys(ents))
        y = [[predictor.change_target(project(snap2, e, args.property), interval)] for e in ents]
        m = FeatureMatrix(TARGET_KIND, (f"target:{args.property}",), tuple(ents),
                          np.asarray(y, dtype=np.float64).reshape(-1, 1), False)
    elif kind in ("text", "text-delta"):
        if not args.articles:
            raise ValidationError("--articles is required for text features")
        if kind == "text":
            as_of = args.as_of or args.tau2
            if as_of is None:
                raise ValidationError("--as-of is required for text features")
            texts = _texts(run, args, as_of)
        else:
            if args.tau1 is None or args.tau2 is None:
                raise ValidationError("--tau1 and --tau2 are required for text-delta features")
            arts = ingest.load_articles(run.input(args.articles))
            old = ingest.latest_versions(arts, args.tau1)
            new = ingest.latest_versions(arts, args.tau2)
            texts = {}
            for e, a in new.items():
                prev = old.get(e, ingest.ArticleVersion(e, args.tau1, ""))
                texts[e] = features.text_delta(prev, a)
        ents = _entities(run, args.entities, sorted(texts))
        m, vocab = features.text_matrix(texts, ents, args.ngram, args.min_df, vocab_in)
        if kind == "text-delta":
            m = FeatureMatrix("text_delta", m.names, m.entities, m.X, True)
    elif kind == "structured":
        snap = _snapshot(run, args.snapshot)
        ents = _entities(run, args.entities, snap.subjects())
        m, vocab = features.structured_matrix(snap, ents, args.exclude, args.mode, args.min_df, vocab_in)
    elif kind == "age":
        if args.as_of is None:
            raise ValidationError("--as-of is required for the age feature")
        snap = _snapshot(run, args.snapshot)
        ents = _entities(run, args.entities, snap.subjects())
        m = features.age_matrix(snap, ents, args.birth_property, args.as_of)
    elif kind in ("embedding", "knn"):
        if not args.embeddings:
            raise ValidationError("--embeddings is required")
        table = ingest.load_embeddings(run.input(args.embeddings))
        ents = _entities(run, args.entities, table.ids)
        if kind == "embedding":
            m = features.embedding_matrix(table, ents)
        else:
            if not args.reference:
                raise ValidationError("--reference (a target dataset) is required for knn features")
            targets, _ = _read_targets(run, args.reference)
            m = features.knn_matrix(ents, table, sorted(targets.items()), args.k)
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown feature kind {kind}")
    _write_with(run, features.write_matrix, m, args.out)
    if vocab is not None and vocab_in is None:
        _write_with(run, features.write_vocabulary, vocab, f"{args.out}.vocab.tsv")
    dropped = len(ents) - len(m.entities)
    if dropped:
        log.info("%d entities lacked the inputs for %s features", dropped, kind)


def _load_blocks(run, paths):
    return [features.read_matrix(run.input(p)) for p in paths]


def _hyperparams(args):
    return predictor.Hyperparams(args.l2, args.tolerance, args.max_iter, args.seed)


def _read_split(run, path):
    parts = {}
    with open(run.input(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line == "entity\tpartition":
                continue
            e, sep, part = line.partition("\t")
            if not sep or part not in ("train", "test"):
                raise ParseError("expected entity<TAB>train|test", lineno, path)
            parts[e] = part
    return parts


def _split_from_file(ds, parts):
    train_idx = [i for i, e in enumerate(ds.entities) if parts.get(e) == "train"]
    test_idx = [i for i, e in enumerate(ds.entities) if parts.get(e) == "test"]
    return ds.subset(train_idx), ds.subset(test_idx)


def cmd_train(args, run):
    targets, prop = _read_targets(run, args.dataset)
    blocks = _load_blocks(run, args.features)
    ds = predictor.dataset_from_targets(targets, prop, None, blocks, args.seed)
    train, test = predictor.split(ds, args.test_frac, args.seed)
    if args.knn_embeddings:
        table = ingest.load_embeddings(run.input(args.knn_embeddings))
        train, test = predictor.attach_knn(train, test, table, args.k)
    model = predictor.train(train, _hyperparams(args))
    _write_with(run, predictor.write_model, model, args.out)
    split_path = f"{args.out}.split.tsv"
    lines = ["entity\tpartition\n"]
    lines += [f"{e}\ttrain\n" for e in train.entities]
    lines += [f"{e}\ttest\n" for e in test.entities]
    write_text(split_path, "".join(lines))
    run.output(split_path)
    log.info("trained on %d rows (%d dropped for missing features), converged=%s",
             len(train), ds.dropped, model.converged)


def cmd_eval(args, run):
    model = predictor.read_model(run.input(args.model))
    targets, prop = _read_targets(run, args.dataset)
    blocks = _load_blocks(run, args.features)
    ds = predictor.dataset_from_targets(targets, prop, None, blocks, args.seed)
    if args.split:
        train, test = _split_from_file(ds, _read_split(run, args.split))
    else:
        train, test = ds, ds
    if args.knn_embeddings:
        if not args.split:
            raise ValidationError("--knn-embeddings needs --split to find the training neighbours")
        table = ingest.load_embeddings(run.input(args.knn_embeddings))
        train, test = predictor.attach_knn(train, test, table, args.k)
    m = predictor.evaluate(model, test)
    header = ["property", "features", "n_test", "precision", "recall", "f1", "accuracy", "baseline"]
    kinds = "+".join(b.kind for b in test.blocks)
    write_csv(args.out, header, [[prop, kinds, len(test), _fmt(m.precision), _fmt(m.recall),
                                  _fmt(m.f1), _fmt(m.accuracy), "0.5"]])
    run.output(args.out)


def cmd_predict(args, run):
    model = predictor.read_model(run.input(args.model))
    blocks = _load_blocks(run, args.features)
    ents = [e for e in blocks[0].entities if all(e in b.row for b in blocks)] if blocks else []
    ds = predictor.LabeledDataset("", None, tuple(ents), np.zeros(len(ents), dtype=np.int64),
                                  tuple(b.take(ents) for b in blocks))
    z = predictor.decision_function(model, ds)
    prob = predictor._sigmoid(z)
    rows = [[e, _fmt(p), int(v >= 0)] for e, p, v in zip(ents, prob, z)]
    write_csv(args.out, ["entity", "probability", "label"], rows)
    run.output(args.out)


def cmd_inspect_model(args, run):
    model = predictor.read_model(run.input(args.model))
    pos, neg = predictor.inspect(model, top_k=args.top)
    rows = [[n, _fmt(w)] for n, w in pos] + [[n, _fmt(w)] for n, w in neg]
    write_csv(args.out, ["feature", "weight"], rows)
    run.output(args.out)


def cmd_kde(args, run):
    snap = _snapshot(run, args.snapshot)
    ents = _entities(run, args.entities, snap.subjects())
    samples = density.pool(ents, args.property, snap)
    est = density.kde(samples, args.bandwidth, args.bins)
    rows = [["histogram", _fmt(x), int(c)] for x, c in zip(est.bin_edges[:-1], est.bin_counts)]
    rows.append(["histogram", _fmt(est.bin_edges[-1]), 0])
    rows += [["density", _fmt(x), _fmt(f)] for x, f in zip(est.grid, est.grid_density)]
    write_csv(args.out, ["series", "x", "y"], rows)
    run.output(args.out)
    log.info("%d samples, bandwidth %.4g", len(samples), est.bandwidth)


GEN_KEYS = {
    "real_world": float, "completion": float, "correction": float, "none": float,
    "entities": int, "tau1": KbTimestamp.parse, "tau2": KbTimestamp.parse,
    "properties": str, "signal_rate": float, "text_property": str, "embedding_dim": int,
}


def _gen_config(path):
    raw = read_config(path) if path else {}
    unknown = sorted(set(raw) - set(GEN_KEYS))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    try:
        vals = {k: GEN_KEYS[k](v) for k, v in raw.items()}
    except (ValueError, KbStabError) as exc:
        raise ValidationError(f"bad config value: {exc}") from None
    gen_kw = {k: vals[k] for k in ("real_world", "completion", "correction", "none", "entities",
                                   "tau1", "tau2") if k in vals}
    if "properties" in vals:
        specs = []
        for item in _csv_list(vals["properties"]):
            pid, _, kind = item.partition(":")
            if (kind or "entity") not in ("entity", "literal"):
                raise ValidationError(f"property kind must be entity or literal, got {kind!r}")
            specs.append(synth.PropertySpec(pid, kind or "entity"))
        gen_kw["properties"] = tuple(specs)
    text_kw = {}
    if "signal_rate" in vals:
        text_kw["signal_rate"] = vals["signal_rate"]
    text_kw["property"] = vals.get("text_property", gen_kw.get("properties", synth.DEFAULT_PROPERTIES)[0].id)
    return synth.GeneratorConfig(**gen_kw), synth.TextConfig(**text_kw), vals.get("embedding_dim", 8)


def cmd_gen(args, run):
    run.input(args.config)
    cfg, text_cfg, dim = _gen_config(args.config)
    snap1, snap2, gold = synth.generate(cfg, args.seed)
    pairs = synth.generate_text(gold, text_cfg, args.seed + 1)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_with(run, ingest.write_snapshot, snap1, out / "snapshot_t1.tsv")
    _write_with(run, ingest.write_snapshot, snap2, out / "snapshot_t2.tsv")
    _write_with(run, ingest.write_labels, gold, out / "labels.tsv")
    _write_with(run, ingest.write_articles, [a for pair in pairs for a in pair], out / "articles.tsv")
    subjects = sorted({g.subject for g in gold})
    _write_with(run, ingest.write_entity_list, subjects, out / "entities.txt")
    # embeddings: real-world entities of the text property sit in a shifted cluster
    changed = {g.subject for g in gold if g.property == text_cfg.property and g.label == "real_world"}
    rng = np.random.default_rng(args.seed + 2)
    rows = {}
    for s in subjects:
        v = rng.normal(0.0, 1.0, size=dim)
        if s in changed:
            v[0] += 2.0
        rows[s] = v.tolist()
    table = ingest.EmbeddingTable.from_rows(rows)
    _write_with(run, ingest.write_embeddings, table, out / "embeddings.tsv")


def cmd_convert_wikidata(args, run):
    report = ingest.ConversionReport()
    snap = ingest.convert_wikidata(run.input(args.dump), set(args.properties), args.sampled_at, report)
    _write_with(run, ingest.write_snapshot, snap, args.out)
    for k, v in sorted(vars(report).items()):
        log.info("%s: %s", k, v)


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every stochastic step")
    common.add_argument("--threads", type=int, default=1, help="cap on worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kbstab", description="Change analysis and stability prediction for temporal KBs.")
    parser.add_argument("--version", action="version", version=f"kbstab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    def interval_flags(p):
        p.add_argument("--tau1", type=_ts, help="interval start (default: sampled_at of --t1)")
        p.add_argument("--tau2", type=_ts, help="interval end (default: sampled_at of --t2)")

    p = add("analyze", cmd_analyze, "classify changes between two snapshots")
    p.add_argument("--t1", required=True)
    p.add_argument("--t2", required=True)
    p.add_argument("--criterion", choices=changes.CRITERIA, default="timestamp")
    p.add_argument("--strict", action="store_true", help="compare transaction times too")
    p.add_argument("--strict-timestamp", action="store_true", help="timestamp criterion on additions only")
    interval_flags(p)
    p.add_argument("--out", required=True)

    p = add("eval-criteria", cmd_eval_criteria, "score the criteria against gold labels")
    p.add_argument("--report", required=True, help="JSONL written by analyze")
    p.add_argument("--gold", required=True)
    p.add_argument("--criteria", type=_csv_list, default=list(changes.CRITERIA))
    p.add_argument("--out", required=True)

    p = add("filter-entities", cmd_filter_entities, "flag entities holding a terminating property")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--entities")
    p.add_argument("--terminating", type=_csv_list, default=sorted(filters.DEFAULT_TERMINATING))
    p.add_argument("--out", required=True)

    p = add("filter-properties", cmd_filter_properties, "flag unstable properties of a class")
    p.add_argument("--class", dest="class_entities", required=True, help="entity list of the class")
    p.add_argument("--measure", choices=sorted(filters.MEASURE_ALIASES), default="objects")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--snapshot")
    p.add_argument("--edit-log")
    p.add_argument("--properties", type=_csv_list)
    p.add_argument("--gold", help="property<TAB>unstable|stable labels")
    p.add_argument("--out", required=True)

    p = add("extract-features", cmd_extract_features, "write a feature matrix")
    p.add_argument("--kind", required=True,
                   choices=("text", "text-delta", "structured", "age", "embedding", "knn", TARGET_KIND))
    p.add_argument("--entities")
    p.add_argument("--snapshot")
    p.add_argument("--t1")
    p.add_argument("--t2")
    p.add_argument("--property")
    p.add_argument("--articles")
    p.add_argument("--as-of", type=_ts)
    interval_flags(p)
    p.add_argument("--ngram", type=_ngram, default=(1, 1))
    p.add_argument("--min-df", type=int, default=features.DEFAULT_MIN_DF)
    p.add_argument("--vocab", help="reuse a persisted vocabulary")
    p.add_argument("--exclude", help="target property left out of structured features")
    p.add_argument("--mode", choices=("count", "tfidf"), default="count")
    p.add_argument("--birth-property", default="P569")
    p.add_argument("--embeddings")
    p.add_argument("--reference", help="target dataset giving the neighbours' change flags")
    p.add_argument("--k", type=int, default=features.DEFAULT_K)
    p.add_argument("--out", required=True)

    def model_flags(p):
        p.add_argument("--dataset", required=True, help="target dataset from extract-features --kind target")
        p.add_argument("--features", nargs="+", required=True)
        p.add_argument("--knn-embeddings", help="add the neighbourhood feature from training rows")
        p.add_argument("--k", type=int, default=features.DEFAULT_K)

    p = add("train", cmd_train, "train a logistic-regression stability model")
    model_flags(p)
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--test-frac", type=float, default=0.4)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "evaluate a model on the test partition")
    p.add_argument("--model", required=True)
    model_flags(p)
    p.add_argument("--split", help="partition file written by train")
    p.add_argument("--out", required=True)

    p = add("predict", cmd_predict, "score entities with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = add("inspect-model", cmd_inspect_model, "rank model weights")
    p.add_argument("--model", required=True)
    p.add_argument("--top", type=int, default=30)
    p.add_argument("--out", required=True)

    p = add("kde", cmd_kde, "inter-change-time histogram and density")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--property", required=True)
    p.add_argument("--entities")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--out", required=True)

    p = add("gen", cmd_gen, "generate a synthetic snapshot pair with gold labels")
    p.add_argument("--config", help="key=value file")
    p.add_argument("--out-dir", required=True)

    p = add("convert-wikidata", cmd_convert_wikidata, "convert an entity-per-line dump to a snapshot")
    p.add_argument("--dump", required=True)
    p.add_argument("--properties", type=_csv_list, required=True)
    p.add_argument("--sampled-at", type=_ts, required=True)
    p.add_argument("--out", required=True)
    return parser


def run(argv=None) -> int:
    """Execute one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="kbstab: %(levelname)s: %(message)s")
    r = Run(args)
    try:
        args.func(args, r)
        r.write_manifests()
    except ParseError as exc:
        sys.stderr.write(f"kbstab: parse error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"kbstab: I/O error: {exc}\n")
        return 2
    except (KbStabError, ValueError) as exc:
        sys.stderr.write(f"kbstab: error: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
