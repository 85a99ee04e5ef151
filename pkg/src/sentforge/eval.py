"""Splits, cross-validation, weighted metrics and annotator agreement."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from sentforge import LABELS
from sentforge.errors import InputError, MetricsError, SplitError, TrainingError, UndefinedKappa
from sentforge.textprep import Label

logger = logging.getLogger(__name__)

NUM_CLASSES = len(LABELS)


def _label_index(value):
    return int(Label.parse(value))


def _labels_of(docs):
    out = []
    for d in docs:
        if hasattr(d, "label"):
            out.append(_label_index(d.label))
        elif isinstance(d, tuple) and len(d) == 2:
            out.append(_label_index(d[1]))
        else:
            out.append(_label_index(d))
    return np.array(out, dtype=np.int64)


# ------------------------------------------------------------------ splits


def parse_ratio(ratio):
    """``(train, val)`` positive integers from a tuple or a ``"4:1"`` string."""
    if isinstance(ratio, str):
        parts = ratio.split(":")
        try:
            ratio = tuple(int(p) for p in parts)
        except ValueError:
            raise SplitError(f"ratio must look like '4:1', got {ratio!r}") from None
    if len(ratio) != 2 or min(ratio) < 1:
        raise SplitError(f"ratio must be two positive integers, got {ratio!r}")
    return int(ratio[0]), int(ratio[1])


def holdout_split(docs, ratio=(4, 1), seed=0):
    """Shuffled train/validation split; train gets ``floor(n * a / (a + b))``."""
    a, b = parse_ratio(ratio)
    docs = list(docs)
    n_classes = len(set(_labels_of(docs).tolist())) if docs else 0
    if len(docs) < max(n_classes, 2):
        raise SplitError(f"cannot split {len(docs)} document(s) covering {n_classes} class(es)")
    order = np.random.default_rng(seed).permutation(len(docs))
    n_train = len(docs) * a // (a + b)
    return [docs[i] for i in order[:n_train]], [docs[i] for i in order[n_train:]]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple
    stratified: bool
    seed: int

    @property
    def size(self):
        return sum(len(f) for f in self.folds)

    def train_indices(self, i):
        return tuple(sorted(j for f, fold in enumerate(self.folds) if f != i for j in fold))

    def test_indices(self, i):
        return self.folds[i]


def kfold(docs, k=10, stratified=True, seed=0):
    """Partition document indices into ``k`` folds.

    Indices are shuffled (within each class when ``stratified``), laid end to
    end class by class and dealt round-robin, so fold sizes differ by at most
    one overall and, when stratified, per class.
    """
    labels = _labels_of(docs)
    n = len(labels)
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    if k > n:
        raise SplitError(f"k = {k} exceeds the number of documents ({n})")
    rng = np.random.default_rng(seed)
    if stratified:
        sequence = []
        for c in range(NUM_CLASSES):
            members = np.flatnonzero(labels == c)
            sequence.extend(rng.permutation(members).tolist())
    else:
        sequence = rng.permutation(n).tolist()
    folds = [[] for _ in range(k)]
    for pos, idx in enumerate(sequence):
        folds[pos % k].append(idx)
    return FoldPlan(k=k, folds=tuple(tuple(sorted(f)) for f in folds), stratified=stratified, seed=seed)


# ----------------------------------------------------------------- metrics


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are actual classes, columns predicted, in label order."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def row(self, label):
        return self.counts[_label_index(label)].tolist()

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)


def confusion(preds, actuals):
    preds, actuals = list(preds), list(actuals)
    if len(preds) != len(actuals):
        raise InputError(f"{len(preds)} predictions but {len(actuals)} actual labels")
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for p, a in zip(preds, actuals):
        counts[_label_index(a), _label_index(p)] += 1
    return ConfusionMatrix(counts)


def _ratio(num, den):
    return Fraction(num, den) if den else Fraction(0)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: tuple
    recall: tuple
    f1: tuple
    support: tuple
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: ConfusionMatrix | None = None

    @property
    def total(self):
        return int(sum(self.support))

    def as_dict(self):
        """Flat mapping with the stable key names used in report files."""
        d = {
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
        }
        for i, name in enumerate(LABELS):
            d[f"precision.{name}"] = self.precision[i]
            d[f"recall.{name}"] = self.recall[i]
            d[f"f1.{name}"] = self.f1[i]
            d[f"support.{name}"] = self.support[i]
        return d


def weighted_metrics(cm):
    """Per-class and support-weighted precision, recall and F1 plus accuracy.

    Empty denominators give 0.  Weights are the row sums (actual supports).
    Everything is computed in exact rationals and rounded once.
    """
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    if counts.shape != (NUM_CLASSES, NUM_CLASSES) or (counts < 0).any():
        raise MetricsError(f"need a {NUM_CLASSES}x{NUM_CLASSES} matrix of non-negative counts, got shape {counts.shape}")
    total = int(counts.sum())
    if total <= 0:
        raise MetricsError("confusion matrix is empty")
    diag = [int(counts[c, c]) for c in range(NUM_CLASSES)]
    col = [int(counts[:, c].sum()) for c in range(NUM_CLASSES)]
    row = [int(counts[c].sum()) for c in range(NUM_CLASSES)]
    # exact rationals, rounded once at the end
    prec = [_ratio(diag[c], col[c]) for c in range(NUM_CLASSES)]
    rec = [_ratio(diag[c], row[c]) for c in range(NUM_CLASSES)]
    f1 = [2 * p * r / (p + r) if p + r else Fraction(0) for p, r in zip(prec, rec)]

    def weighted(values):
        return float(sum(v * s for v, s in zip(values, row)) / total)

    return MetricsReport(
        accuracy=float(Fraction(sum(diag), total)),
        precision=tuple(float(v) for v in prec),
        recall=tuple(float(v) for v in rec),
        f1=tuple(float(v) for v in f1),
        support=tuple(row),
        weighted_precision=weighted(prec),
        weighted_recall=weighted(rec),
        weighted_f1=weighted(f1),
        confusion=ConfusionMatrix(np.array(counts, dtype=np.int64)),
    )


def evaluate(preds, actuals):
    return weighted_metrics(confusion(preds, actuals))


# ---------------------------------------------------------------- agreement


@dataclass(frozen=True)
class Agreement:
    kappa: float
    observed: float
    expected: float
    n: int


def agreement(labels_a, labels_b):
    """Cohen's kappa with its observed and chance agreement."""
    a = [_label_index(x) for x in labels_a]
    b = [_label_index(x) for x in labels_b]
    if len(a) != len(b):
        raise InputError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise InputError("need at least one labelled item")
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    ca = np.bincount(a, minlength=NUM_CLASSES)
    cb = np.bincount(b, minlength=NUM_CLASSES)
    p_e = float(sum(int(x) * int(y) for x, y in zip(ca, cb))) / (n * n)
    if p_e == 1.0:
        if p_o == 1.0:
            return Agreement(1.0, p_o, p_e, n)
        raise UndefinedKappa("chance agreement is 1 but observed agreement is not")
    return Agreement((p_o - p_e) / (1.0 - p_e), p_o, p_e, n)


def cohens_kappa(labels_a, labels_b):
    return agreement(labels_a, labels_b).kappa


# --------------------------------------------------------- cross-validation


AGGREGATE_KEYS = ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1")


@dataclass
class FoldResult:
    index: int
    report: MetricsReport
    history: object
    train_size: int
    test_size: int


@dataclass
class CVResult:
    folds: list
    plan: FoldPlan
    aggregate: dict = field(default_factory=dict)


def aggregate(reports):
    """Unweighted mean (and population std) of fold-level weighted metrics."""
    out = {}
    for key in AGGREGATE_KEYS:
        vals = [getattr(r, key) for r in reports]
        out[key] = math.fsum(vals) / len(vals)
        out[f"{key}_std"] = float(np.std(vals))
    return out


def cross_validate(
    spec,
    docs,
    k=10,
    seed=0,
    *,
    stratified=True,
    epochs=10,
    vocab_size,
    embed_dim,
    embeddings=None,
    question_id=None,
    jobs=1,
    deterministic=True,
    fold_callback=None,
):
    """Train one fresh model per fold and score it on the held-out fold.

    Fold ``i`` trains with seed ``seed * 1000 + i`` so results do not depend
    on the order folds run in.  When the spec enables early stopping, a 9:1
    split of the training folds supplies the validation loss.
    """
    from sentforge.models.train import predict, train_model

    docs = list(docs)
    plan = kfold(docs, k, stratified, seed)
    labels = _labels_of(docs)
    jobs = 1 if deterministic else max(1, int(jobs))

    def run(i):
        train = [docs[j] for j in plan.train_indices(i)]
        test = [docs[j] for j in plan.test_indices(i)]
        val = None
        if spec.early_stop_patience is not None:
            train, val = holdout_split(train, (9, 1), seed=seed * 1000 + i)
        try:
            tm = train_model(
                spec,
                train,
                val,
                epochs=epochs,
                rng=seed * 1000 + i,
                vocab_size=vocab_size,
                embed_dim=embed_dim,
                embeddings=embeddings,
                question_id=question_id,
            )
        except TrainingError as e:
            raise TrainingError(f"fold {i}: {e}") from e
        pred, _ = predict(tm.model, test)
        report = evaluate(pred.tolist(), labels[list(plan.test_indices(i))].tolist())
        logger.info("fold %d/%d accuracy %.4f", i + 1, k, report.accuracy)
        result = FoldResult(i, report, tm.history, len(train), len(test))
        if fold_callback is not None:
            fold_callback(result)
        return result

    if jobs == 1:
        folds = [run(i) for i in range(k)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(run, range(k)))
    return CVResult(folds=folds, plan=plan, aggregate=aggregate([f.report for f in folds]))


# ----------------------------------------------------------------- reports


def _fmt(v):
    return str(v) if isinstance(v, (int, np.integer)) else f"{v:.4f}"


def report_keyvalues(report, prefix="", extra=None):
    """``key = value`` lines: floats to 4 decimals, counts as integers."""
    lines = [f"{prefix}{k} = {_fmt(v)}" for k, v in report.as_dict().items()]
    if report.confusion is not None:
        for i, a in enumerate(LABELS):
            for j, p in enumerate(LABELS):
                lines.append(f"{prefix}confusion.{a}.{p} = {int(report.confusion.counts[i, j])}")
    for k, v in (extra or {}).items():
        lines.append(f"{prefix}{k} = {v if isinstance(v, str) else _fmt(v)}")
    return lines


def report_table(report):
    """Human-readable per-class table followed by the confusion matrix."""
    w = max(len(n) for n in LABELS) + 2
    lines = [f"{'class':<{w}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"]
    for i, name in enumerate(LABELS):
        lines.append(
            f"{name:<{w}}{report.precision[i]:>10.4f}{report.recall[i]:>10.4f}{report.f1[i]:>10.4f}"
            f"{report.support[i]:>10d}"
        )
    lines.append(
        f"{'weighted':<{w}}{report.weighted_precision:>10.4f}{report.weighted_recall:>10.4f}"
        f"{report.weighted_f1:>10.4f}{report.total:>10d}"
    )
    lines.append(f"accuracy {report.accuracy:.4f} ({int(np.trace(report.confusion.counts))}/{report.total})"
                 if report.confusion is not None else f"accuracy {report.accuracy:.4f}")
    if report.confusion is not None:
        lines.append("")
        lines.append("confusion (rows actual, columns predicted)")
        lines.append(" " * w + "".join(f"{n[:8]:>10}" for n in LABELS))
        for i, name in enumerate(LABELS):
            lines.append(f"{name:<{w}}" + "".join(f"{int(c):>10d}" for c in report.confusion.counts[i]))
    return lines


def format_report(report, repro=None, title=None):
    """Full report text: human table, then a ``[metrics]`` key block and ``[run]`` block."""
    lines = []
    if title:
        lines += [title, "=" * len(title), ""]
    lines += report_table(report)
    lines += ["", "[metrics]"] + report_keyvalues(report)
    if repro:
        lines += ["", "[run]"] + [f"{k} = {v}" for k, v in repro.items()]
    return "\n".join(lines) + "\n"


def format_cv_report(result, repro=None, title=None):
    lines = []
    if title:
        lines += [title, "=" * len(title), ""]
    lines.append(f"{'fold':>4}{'accuracy':>10}{'w-prec':>10}{'w-recall':>10}{'w-f1':>10}{'test':>7}")
    for f in result.folds:
        r = f.report
        lines.append(
            f"{f.index + 1:>4}{r.accuracy:>10.4f}{r.weighted_precision:>10.4f}{r.weighted_recall:>10.4f}"
            f"{r.weighted_f1:>10.4f}{f.test_size:>7d}"
        )
    agg = result.aggregate
    lines.append(
        f"{'mean':>4}{agg['accuracy']:>10.4f}{agg['weighted_precision']:>10.4f}"
        f"{agg['weighted_recall']:>10.4f}{agg['weighted_f1']:>10.4f}"
    )
    total = result.folds[0].report.confusion
    for f in result.folds[1:]:
        total = total + f.report.confusion
    lines += ["", "pooled over folds:"] + report_table(weighted_metrics(total))
    lines += ["", "[aggregate]"] + [f"{k} = {_fmt(v)}" for k, v in agg.items()]
    for f in result.folds:
        lines += ["", f"[fold.{f.index + 1}]"] + report_keyvalues(f.report)
    if repro:
        lines += ["", "[run]"] + [f"{k} = {v}" for k, v in repro.items()]
    return "\n".join(lines) + "\n"


def parse_report(text):
    """``{section: {key: value}}`` from the bracketed key blocks of a report."""
    out, section = {}, None
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1]
            out[section] = {}
        elif section is not None and " = " in s:
            k, v = s.split(" = ", 1)
            out[section][k] = v
    return out


__all__ = [
    "AGGREGATE_KEYS",
    "Agreement",
    "CVResult",
    "ConfusionMatrix",
    "FoldPlan",
    "FoldResult",
    "MetricsReport",
    "agreement",
    "aggregate",
    "cohens_kappa",
    "confusion",
    "cross_validate",
    "evaluate",
    "format_cv_report",
    "format_report",
    "holdout_split",
    "kfold",
    "parse_ratio",
    "parse_report",
    "report_keyvalues",
    "report_table",
    "weighted_metrics",
]
