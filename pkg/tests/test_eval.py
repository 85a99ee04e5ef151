from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from model_toys import OVERFIT_DIM, OVERFIT_VOCAB, overfit_embeddings, overfit_spec, separable_docs

from sentforge import LABELS
from sentforge.autograd import sgd
from sentforge.errors import InputError, LabelError, MetricsError, SplitError, TrainingError, UndefinedKappa
from sentforge.eval import (
    ConfusionMatrix,
    agreement,
    aggregate,
    cohens_kappa,
    confusion,
    cross_validate,
    format_cv_report,
    format_report,
    holdout_split,
    kfold,
    parse_ratio,
    parse_report,
    weighted_metrics,
)
from sentforge.textprep import Label

REFERENCE_COUNTS = [[1407, 56, 41, 29], [344, 110, 35, 16], [162, 30, 367, 31], [272, 15, 50, 47]]


def pairs_from_matrix(counts):
    """Expand a confusion matrix back into (actual, predicted) label pairs."""
    out = []
    for a in range(4):
        for p in range(4):
            out += [(a, p)] * int(counts[a][p])
    return out


def brute_force_metrics(counts):
    """Per-class counting over expanded pairs, exact rationals throughout."""
    pairs = pairs_from_matrix(counts)
    n = len(pairs)
    res = {"accuracy": Fraction(sum(a == p for a, p in pairs), n)}
    wp = wr = wf = Fraction(0)
    for c in range(4):
        tp = sum(1 for a, p in pairs if a == c and p == c)
        fp = sum(1 for a, p in pairs if a != c and p == c)
        fn = sum(1 for a, p in pairs if a == c and p != c)
        prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else Fraction(0)
        support = tp + fn
        res[f"precision.{LABELS[c]}"] = prec
        res[f"recall.{LABELS[c]}"] = rec
        res[f"f1.{LABELS[c]}"] = f1
        wp += prec * support
        wr += rec * support
        wf += f1 * support
    res["weighted_precision"] = wp / n
    res["weighted_recall"] = wr / n
    res["weighted_f1"] = wf / n
    return {k: float(v) for k, v in res.items()}


def labelled(n_per_class):
    return [(i, c) for c, n in enumerate(n_per_class) for i in range(n)]


# ----------------------------------------------------------------- splits


def test_holdout_sizes():
    docs = [([1], i % 4) for i in range(15059)]
    train, val = holdout_split(docs, (4, 1), seed=0)
    assert (len(train), len(val)) == (12047, 3012)
    train, val = holdout_split(docs[:10], "4:1", seed=0)
    assert (len(train), len(val)) == (8, 2)


def test_holdout_deterministic_and_disjoint():
    docs = [(i, i % 4) for i in range(50)]
    a = holdout_split(docs, (4, 1), seed=3)
    b = holdout_split(docs, (4, 1), seed=3)
    assert a == b
    assert sorted(a[0] + a[1]) == sorted(docs)
    assert holdout_split(docs, (4, 1), seed=4) != a


def test_holdout_errors():
    with pytest.raises(SplitError):
        holdout_split([(0, 0), (1, 1), (2, 2)][:1], (4, 1))
    with pytest.raises(SplitError):
        parse_ratio("4-1")
    with pytest.raises(SplitError):
        parse_ratio((4, 0))


def test_kfold_even_and_remainder_sizes():
    plan = kfold([(i, i % 4) for i in range(100)], k=10, stratified=False)
    assert [len(f) for f in plan.folds] == [10] * 10
    sizes = Counter(len(f) for f in kfold([(i, i % 4) for i in range(103)], k=10, stratified=False).folds)
    assert sizes == {11: 3, 10: 7}


def test_stratified_kfold_class_balance():
    docs = labelled([50, 25, 15, 10])
    plan = kfold(docs, k=10, stratified=True, seed=1)
    for c, n in enumerate([50, 25, 15, 10]):
        per_fold = [sum(1 for i in f if docs[i][1] == c) for f in plan.folds]
        assert max(per_fold) - min(per_fold) <= 1
        assert all(abs(x - n / 10) <= 1 for x in per_fold)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 120), st.integers(2, 12), st.booleans(), st.integers(0, 1000))
def test_kfold_partitions(n, k, stratified, seed):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    docs = [(i, int(c)) for i, c in enumerate(rng.integers(0, 4, size=n))]
    plan = kfold(docs, k=k, stratified=stratified, seed=seed)
    flat = [i for f in plan.folds for i in f]
    assert sorted(flat) == list(range(n))
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1
    if stratified:
        for c in range(4):
            per = [sum(1 for i in f if docs[i][1] == c) for f in plan.folds]
            assert max(per) - min(per) <= 1
    for i in range(k):
        assert set(plan.train_indices(i)).isdisjoint(plan.test_indices(i))
        assert len(plan.train_indices(i)) + len(plan.test_indices(i)) == n


def test_kfold_errors():
    with pytest.raises(SplitError):
        kfold([(0, 0)] * 5, k=6)
    with pytest.raises(SplitError):
        kfold([(0, 0)] * 5, k=1)


# ---------------------------------------------------------------- metrics


def test_confusion_basics():
    labels = ["NEGATIVE", "NEUTRAL", "POSITIVE", "CONFLICT", "NEGATIVE"]
    cm = confusion(labels, labels)
    assert np.array_equal(cm.counts, np.diag([2, 1, 1, 1]))
    assert confusion([], []).total == 0
    with pytest.raises(LabelError):
        confusion(["HAPPY"], ["NEGATIVE"])
    with pytest.raises(InputError):
        confusion([0, 1], [0])


def test_reference_counts_row_and_accuracy():
    pairs = pairs_from_matrix(REFERENCE_COUNTS)
    cm = confusion([p for _, p in pairs], [a for a, _ in pairs])
    assert cm.row(Label.NEGATIVE) == [1407, 56, 41, 29]
    assert cm.total == 3012
    r = weighted_metrics(cm)
    assert r.accuracy == 1931 / 3012
    assert round(r.accuracy, 4) == 0.6411
    assert r.weighted_recall == r.accuracy


def test_perfect_diagonal():
    r = weighted_metrics(ConfusionMatrix(np.diag([3, 4, 5, 6])))
    assert r.accuracy == r.weighted_precision == r.weighted_recall == r.weighted_f1 == 1.0
    assert r.precision == r.recall == r.f1 == (1.0,) * 4


def test_empty_column_gives_zero():
    r = weighted_metrics(np.array([[5, 0, 0, 0], [3, 0, 0, 0], [0, 0, 2, 0], [1, 0, 0, 0]]))
    assert r.precision[1] == 0.0 and r.f1[1] == 0.0 and r.precision[3] == 0.0


def test_metrics_errors():
    with pytest.raises(MetricsError):
        weighted_metrics(np.zeros((4, 4), dtype=int))
    with pytest.raises(MetricsError):
        weighted_metrics(np.ones((3, 3), dtype=int))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=16, max_size=16).filter(lambda v: sum(v) > 0))
def test_metrics_match_brute_force(flat):
    counts = np.array(flat).reshape(4, 4)
    r = weighted_metrics(ConfusionMatrix(counts))
    got = r.as_dict()
    for k, v in brute_force_metrics(counts).items():
        assert got[k] == v, k
    assert r.weighted_recall == r.accuracy
    assert all(0.0 <= v <= 1.0 for k, v in got.items() if not k.startswith("support"))


# ------------------------------------------------------------------ kappa


def test_kappa_examples():
    assert cohens_kappa(["NEGATIVE"] * 3 + ["POSITIVE"], ["NEGATIVE"] * 3 + ["POSITIVE"]) == 1.0
    a = ["NEGATIVE", "NEGATIVE", "POSITIVE", "POSITIVE"]
    b = ["NEGATIVE", "POSITIVE", "POSITIVE", "POSITIVE"]
    ag = agreement(a, b)
    assert (ag.kappa, ag.observed, ag.expected) == (0.5, 0.75, 0.5)


def test_kappa_degenerate_and_errors():
    assert cohens_kappa(["NEUTRAL"] * 4, ["NEUTRAL"] * 4) == 1.0
    with pytest.raises(InputError):
        cohens_kappa(["NEUTRAL"], ["NEUTRAL", "NEGATIVE"])
    with pytest.raises(InputError):
        cohens_kappa([], [])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10_000), st.permutations(range(4)))
def test_kappa_symmetric_and_relabel_invariant(n, seed, perm):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, size=n).tolist()
    b = [x if rng.random() < 0.6 else int(rng.integers(4)) for x in a]
    try:
        k = cohens_kappa(a, b)
    except UndefinedKappa:
        return
    assert cohens_kappa(b, a) == k
    assert cohens_kappa([perm[x] for x in a], [perm[x] for x in b]) == k
    assert -1.0 <= k <= 1.0


# --------------------------------------------------------------- reports


def test_report_keys_are_stable_and_four_decimals():
    r = weighted_metrics(np.array(REFERENCE_COUNTS))
    text = format_report(r, {"seed": 3, "mode": "holdout"}, title="holdout")
    parsed = parse_report(text)
    m = parsed["metrics"]
    assert m["accuracy"] == "0.6411"
    assert m["support.NEGATIVE"] == "1533"
    assert m["confusion.CONFLICT.CONFLICT"] == "47"
    assert all(len(v.split(".")[1]) == 4 for k, v in m.items() if "." in v)
    assert parsed["run"] == {"seed": "3", "mode": "holdout"}
    assert "accuracy 0.6411 (1931/3012)" in text


def test_aggregate_is_unweighted_mean():
    r1 = weighted_metrics(np.diag([1, 1, 1, 1]))
    r2 = weighted_metrics(np.array(REFERENCE_COUNTS))
    agg = aggregate([r1, r2])
    assert agg["accuracy"] == (1.0 + 1931 / 3012) / 2
    assert agg["weighted_f1"] == pytest.approx((1.0 + r2.weighted_f1) / 2, abs=1e-15)


# -------------------------------------------------------- cross-validation


def cv(seed=0, k=2, **kw):
    return cross_validate(
        overfit_spec("lstm"),
        separable_docs(),
        k=k,
        seed=seed,
        epochs=kw.pop("epochs", 150),
        vocab_size=OVERFIT_VOCAB,
        embed_dim=OVERFIT_DIM,
        embeddings=overfit_embeddings(),
        **kw,
    )


def test_cross_validate_two_folds_on_separable_set():
    res = cv()
    assert len(res.folds) == 2
    assert all(f.report.accuracy >= 0.9 for f in res.folds)
    assert res.aggregate["accuracy"] == sum(f.report.accuracy for f in res.folds) / 2
    assert sum(f.test_size for f in res.folds) == 32


def test_cross_validate_deterministic_report():
    a = format_cv_report(cv(seed=5, epochs=3), {"seed": 5})
    b = format_cv_report(cv(seed=5, epochs=3), {"seed": 5})
    assert a == b
    assert "[aggregate]" in a and "[fold.2]" in a


def test_cross_validate_parallel_matches_serial():
    serial = cv(seed=2, epochs=3)
    threaded = cv(seed=2, epochs=3, jobs=2, deterministic=False)
    assert [f.report for f in serial.folds] == [f.report for f in threaded.folds]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cross_validate_reports_failing_fold():
    spec = overfit_spec("lstm").replace(optimizer=sgd(1e300))
    with pytest.raises(TrainingError, match="fold 0"):
        cross_validate(spec, separable_docs(), k=2, epochs=2, vocab_size=OVERFIT_VOCAB, embed_dim=OVERFIT_DIM,
                       embeddings=overfit_embeddings())
