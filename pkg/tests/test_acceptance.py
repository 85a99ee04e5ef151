"""Acceptance gate: one verdict line per criterion, printed in the run summary.

Each test computes its measurement, records PASS/FAIL with the observed
numbers, then asserts.  The dataset-scale check runs only when
``SENTFORGE_DATASET`` points at the annotated corpus.
"""

import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sentforge import cli
from sentforge.autograd import Tensor, ops
from sentforge.autograd.gradcheck import check_gradients, kink_distance
from sentforge.embed import EmbeddingConfig, cosine, train_embeddings, vector
from sentforge.errors import EmptyAfterFilter
from sentforge.eval import agreement, cohens_kappa, parse_report, weighted_metrics
from sentforge.models import MODEL_NAMES, Classifier, attention_pool, dynamic_routing, predict, train_model
from sentforge.textprep import PunctuationPolicy, filter_chars
from model_toys import (
    OVERFIT_DIM,
    OVERFIT_VOCAB,
    architecture_gradient_error,
    overfit_embeddings,
    overfit_spec,
    separable_docs,
    toy_spec,
)
from sinhala_corpus import write_labeled

SEEDS = 20
TOL = 1e-4


# ----------------------------------------------------------- gradient suite


def _p(rng, *shape, low=None, high=None):
    data = rng.uniform(low, high, size=shape) if low is not None else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


def _proj(fn, rng):
    """``sum(fn() * R)`` for a fixed random R (scalars pass through)."""
    shape = fn().shape
    if shape == ():
        return fn
    r = rng.normal(size=shape)
    return lambda: ops.sum(ops.mul(fn(), r))


def _one_hot(rng, n):
    t = np.zeros((n, 4))
    t[np.arange(n), rng.integers(0, 4, size=n)] = 1.0
    return t


def _op_cases(rng):
    """``{op: (objective, tensors)}`` at toy sizes, freshly drawn from ``rng``."""
    a, b = _p(rng, 3, 4), _p(rng, 4)
    pos = _p(rng, 3, 4, low=0.5, high=2.0)
    m, x3 = _p(rng, 4, 5), _p(rng, 2, 6, 3)
    k = _p(rng, 2, 3, 4)
    u = _p(rng, 2, 3, 4, 3)
    c = _p(rng, 2, 3, 4)
    table = _p(rng, 10, 4)
    ids = rng.integers(0, 10, size=(2, 6))
    mask = rng.random((3, 4)) < 0.7
    mask[:, 0] = True
    seed = int(rng.integers(2**31))
    tgt = _one_hot(rng, 3)
    norms = _p(rng, 3, 4, low=0.0, high=1.0)
    cases = {
        "add": (lambda: ops.add(a, b), [a, b]),
        "sub": (lambda: ops.sub(a, b), [a, b]),
        "mul": (lambda: ops.mul(a, b), [a, b]),
        "div": (lambda: ops.div(a, pos), [a, pos]),
        "neg": (lambda: ops.neg(a), [a]),
        "matmul": (lambda: ops.matmul(a, m), [a, m]),
        "matmul-batched": (lambda: ops.matmul(x3, m[:3]), [x3, m]),
        "tanh": (lambda: ops.tanh(a), [a]),
        "sigmoid": (lambda: ops.sigmoid(a), [a]),
        "relu": (lambda: ops.relu(a), [a]),
        "exp": (lambda: ops.exp(a), [a]),
        "log": (lambda: ops.log(pos), [pos]),
        "abs": (lambda: ops.absolute(a), [a]),
        "square": (lambda: ops.square(a), [a]),
        "sum": (lambda: ops.sum(x3, axis=1), [x3]),
        "mean": (lambda: ops.mean(x3, axis=2), [x3]),
        "reshape": (lambda: ops.reshape(x3, (6, 6)), [x3]),
        "transpose": (lambda: ops.transpose(x3, (2, 0, 1)), [x3]),
        "getitem": (lambda: x3[np.array([1, 0, 1])][:, 2:5], [x3]),
        "concat": (lambda: ops.concat([a, pos], axis=1), [a, pos]),
        "stack": (lambda: ops.stack([a, pos], axis=0), [a, pos]),
        "pad": (lambda: ops.pad(x3, [(0, 0), (1, 2), (0, 0)]), [x3]),
        "embedding": (lambda: ops.embedding(table, ids), [table]),
        "einsum": (lambda: ops.einsum("bij,bijd->bjd", c, u), [c, u]),
        "softmax": (lambda: ops.softmax(a, axis=1), [a]),
        "softmax-masked": (lambda: ops.softmax(a, axis=1, mask=mask), [a]),
        "log_softmax": (lambda: ops.log_softmax(a, axis=1), [a]),
        "conv1d": (lambda: ops.conv1d(x3, k), [x3, k]),
        "conv1d-stride2": (lambda: ops.conv1d(x3, k, stride=2), [x3, k]),
        "maxpool1d": (lambda: ops.maxpool1d(x3, 2), [x3]),
        "dropout": (lambda: ops.dropout(a, 0.3, True, np.random.default_rng(seed)), [a]),
        "cross_entropy": (lambda: ops.cross_entropy(a[:, :4], tgt), [a]),
        "margin_loss": (lambda: ops.margin_loss(norms, tgt), [norms]),
        "squash": (lambda: ops.squash(a), [a]),
        "norm": (lambda: ops.norm(a), [a]),
    }
    return {name: (_proj(f, rng), ts) for name, (f, ts) in cases.items()}


OP_NAMES = sorted(_op_cases(np.random.default_rng(0)))


def op_gradient_error(name, seed, margin=1e-3):
    rng = np.random.default_rng(seed)
    while True:
        f, ts = _op_cases(rng)[name]
        if kink_distance(f) > margin:
            return check_gradients(f, ts)


@pytest.mark.criterion("gradient suite")
def test_gradient_suite(verdict):
    t0 = time.perf_counter()
    worst = {}
    for name in OP_NAMES:
        worst[f"op:{name}"] = max(op_gradient_error(name, s) for s in range(SEEDS))
    for name in MODEL_NAMES:
        worst[f"model:{name}"] = max(architecture_gradient_error(name, s) for s in range(SEEDS))
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, v in worst.items() if not v <= TOL}
    top = max(worst, key=worst.get)
    ok = not bad and elapsed < 300
    verdict.record(ok, f"{len(OP_NAMES)} ops + {len(MODEL_NAMES)} architectures x {SEEDS} seeds, "
                       f"max rel err {worst[top]:.2e} ({top}), {elapsed:.0f}s (limit 300s)"
                       + (f", over tolerance: {sorted(bad)}" if bad else ""))
    assert ok


# ------------------------------------------------------------- overfit suite


@pytest.mark.criterion("overfit suite")
def test_overfit_suite(verdict):
    t0 = time.perf_counter()
    docs = separable_docs()
    results = {}
    for name in MODEL_NAMES:
        tm = train_model(overfit_spec(name), docs, epochs=200, rng=0, vocab_size=OVERFIT_VOCAB,
                         embed_dim=OVERFIT_DIM, embeddings=overfit_embeddings(), stop_at_accuracy=1.0)
        labels, _ = predict(tm.model, docs)
        acc = float(np.mean(labels == np.array([lab for _, lab in docs])))
        results[name] = (acc, tm.history.epochs_run)
    elapsed = time.perf_counter() - t0
    failing = [n for n, (acc, _) in results.items() if acc < 0.99]
    slowest = max(results, key=lambda n: results[n][1])
    ok = not failing and elapsed < 600
    verdict.record(ok, f"{len(docs)} docs, {len(results)} models, min train acc "
                       f"{min(a for a, _ in results.values()):.3f}, max epochs {results[slowest][1]} ({slowest}), "
                       f"{elapsed:.0f}s (limit 600s)" + (f", below 0.99: {failing}" if failing else ""))
    assert ok


# -------------------------------------------------- normalization invariants

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 9)), elements=finite),
       st.integers(0, 2**31 - 1))
def _softmax_rows(x, seed):
    rng = np.random.default_rng(seed)
    assert np.all(np.abs(ops.softmax(x, axis=1).data.sum(axis=1) - 1.0) <= 1e-12)
    mask = rng.random(x.shape) < 0.5
    mask[:, 0] = True
    y = ops.softmax(x, axis=1, mask=mask).data
    assert np.all(np.abs(y.sum(axis=1) - 1.0) <= 1e-12) and np.all(y[~mask] == 0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(1, 8), st.integers(1, 6), st.floats(0.01, 20.0), st.integers(0, 2**31 - 1))
def _attention_weights(n, t, d, scale, seed):
    rng = np.random.default_rng(seed)
    H = rng.normal(scale=scale, size=(n, t, d))
    mask = rng.random((n, t)) < 0.6
    mask[:, rng.integers(t)] = True
    a = 3
    _, alpha = attention_pool(H, mask, rng.normal(size=(d, a)), rng.normal(size=a), rng.normal(scale=scale, size=a))
    assert np.all(np.abs(alpha.data.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(alpha.data[~mask] == 0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3), st.integers(1, 7), st.integers(1, 5), st.integers(1, 6), st.integers(1, 5),
       st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def _routing(b, i, j, d, iters, scale, seed):
    rng = np.random.default_rng(seed)
    v, couplings = dynamic_routing(rng.normal(scale=scale, size=(b, i, j, d)), iterations=iters)
    assert len(couplings) == iters
    for c in couplings:
        assert np.all(np.abs(c.sum(axis=2) - 1.0) <= 1e-12)
    assert np.all(np.sqrt((v.data ** 2).sum(axis=-1)) < 1.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["capsule-a", "capsule-b"]), st.integers(0, 2**31 - 1), st.floats(0.1, 30.0))
def _capsule_outputs(name, seed, scale):
    rng = np.random.default_rng(seed)
    model = Classifier(toy_spec(name), 10, 4, embeddings=rng.normal(scale=scale, size=(10, 4)), seed=seed)
    ids = rng.integers(1, 10, size=(3, 6))
    ids[1, rng.integers(1, 6):] = 0
    norms = model.logits(ids).data
    assert np.all((norms >= 0.0) & (norms < 1.0))


@pytest.mark.criterion("normalization invariants")
def test_normalization_invariants(verdict):
    checks = {"softmax rows": _softmax_rows, "attention weights": _attention_weights,
              "routing couplings + capsule norms": _routing, "capsule model outputs": _capsule_outputs}
    failed = []
    for label, prop in checks.items():
        try:
            prop()
        except Exception as e:  # noqa: BLE001 - the verdict line names the failing property
            failed.append(f"{label} ({type(e).__name__})")
    ok = not failed
    verdict.record(ok, "softmax / masked softmax, attention, routing (every iteration), squash norms, capsule "
                       "outputs: sums within 1e-12, norms < 1" + (f"; failed: {failed}" if failed else ""))
    assert ok


# ------------------------------------------------------------ metrics oracle

REFERENCE_COUNTS = [[1407, 56, 41, 29], [344, 110, 35, 16], [162, 30, 367, 31], [272, 15, 50, 47]]


def scalar_metrics(counts):
    """Per-class loops over plain integers; zero denominators count as 0."""
    n = len(counts)
    total = sum(sum(row) for row in counts)
    acc = Fraction(sum(counts[i][i] for i in range(n)), total)
    wp = wr = wf = Fraction(0)
    for c in range(n):
        tp = counts[c][c]
        support = sum(counts[c])
        predicted = sum(counts[r][c] for r in range(n))
        p = Fraction(tp, predicted) if predicted else Fraction(0)
        r = Fraction(tp, support) if support else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        w = Fraction(support, total)
        wp += w * p
        wr += w * r
        wf += w * f
    return acc, wp, wr, wf


@pytest.mark.criterion("metrics oracle")
def test_metrics_oracle(verdict):
    r = weighted_metrics(np.array(REFERENCE_COUNTS))
    table_ok = r.accuracy == 1931 / 3012 and round(r.accuracy, 4) == 0.6411
    rng = np.random.default_rng(2024)
    mismatches = 0
    for i in range(1000):
        counts = rng.integers(0, [5, 50, 1000][i % 3], size=(4, 4))
        if i % 7 == 0:
            counts[:, rng.integers(4)] = 0  # a class never predicted
        if i % 11 == 0:
            counts[rng.integers(4), :] = 0  # a class with no support
        if counts.sum() == 0:
            counts[0, 0] = 1
        want = [float(v) for v in scalar_metrics(counts.tolist())]
        got = weighted_metrics(counts)
        if [got.accuracy, got.weighted_precision, got.weighted_recall, got.weighted_f1] != want:
            mismatches += 1
    ok = table_ok and mismatches == 0
    verdict.record(ok, f"reference counts -> accuracy {r.accuracy:.6f} (1931/3012 = {1931 / 3012:.6f}); "
                       f"{mismatches} of 1000 random matrices differ from the scalar recomputation")
    assert ok


# -------------------------------------------------------------- kappa oracle


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31 - 1), st.permutations(range(4)))
def _kappa_symmetric_relabel(n, seed, perm):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, size=n).tolist()
    b = [x if rng.random() < 0.6 else int(rng.integers(4)) for x in a]
    ag = agreement(a, b)
    if ag.expected == 1.0:
        return
    assert cohens_kappa(b, a) == ag.kappa
    assert cohens_kappa([perm[x] for x in a], [perm[x] for x in b]) == pytest.approx(ag.kappa, abs=1e-12)


@pytest.mark.criterion("kappa oracle")
def test_kappa_oracle(verdict):
    same = cohens_kappa(["NEGATIVE", "NEUTRAL", "POSITIVE", "CONFLICT", "NEGATIVE"],
                        ["NEGATIVE", "NEUTRAL", "POSITIVE", "CONFLICT", "NEGATIVE"])
    worked = agreement(["NEGATIVE", "NEGATIVE", "POSITIVE", "POSITIVE"],
                       ["NEGATIVE", "POSITIVE", "POSITIVE", "POSITIVE"])
    try:
        _kappa_symmetric_relabel()
        props = True
    except AssertionError:
        props = False
    ok = same == 1.0 and worked.kappa == 0.5 and props
    verdict.record(ok, f"identical labels kappa={same}, worked example kappa={worked.kappa} "
                       f"(p_o={worked.observed}, p_e={worked.expected}), symmetry/relabel property "
                       f"{'held' if props else 'FAILED'} over 300 random pairs")
    assert ok


# -------------------------------------------------------- preprocessing


P = PunctuationPolicy
POOLS = [
    (0x0D80, 0x0DFF),  # Sinhala block
    (0x20, 0x7E),  # ASCII printable
    (0x00A0, 0x024F),  # Latin-1 / Latin extended
    (0x0900, 0x097F),  # Devanagari
    (0x2000, 0x206F),  # general punctuation incl. ZWJ
    (0x1F300, 0x1F64F),  # emoji
    (0x4E00, 0x4E80),  # CJK
]


def random_unicode(rng, max_len=40):
    out = []
    for _ in range(int(rng.integers(0, max_len + 1))):
        lo, hi = POOLS[int(rng.integers(len(POOLS)))]
        out.append(chr(int(rng.integers(lo, hi + 1))))
    return "".join(out)


def _once(text, policy):
    try:
        return filter_chars(text, policy).text
    except EmptyAfterFilter:
        return None


@pytest.mark.criterion("preprocessing bit-exactness")
def test_preprocessing(verdict):
    examples = [
        ("කා!. ?", P.STRIP_EXCEPT_QUESTION, "කා ?"),
        ("ABC ක 123?", P.STRIP_EXCEPT_QUESTION, "ක 123?"),
        ("", P.STRIP_EXCEPT_QUESTION, None),
    ]
    exact = sum(
        (_once(raw, pol) or "").encode("utf-8") == (want or "").encode("utf-8")
        and (_once(raw, pol) is None) == (want is None)
        for raw, pol, want in examples
    )
    # the same text under the three policies
    raw = "ක? ග!, ."
    policy_outputs = [_once(raw, p) for p in (P.KEEP_ALL, P.STRIP_ALL, P.STRIP_EXCEPT_QUESTION)]
    policies_ok = policy_outputs == ["ක? ග!, .", "ක ග", "ක? ග"]
    rng = np.random.default_rng(7)
    n, broken, empty = 10_000, 0, 0
    for i in range(n):
        text = random_unicode(rng)
        policy = list(P)[i % 3]
        first = _once(text, policy)
        if first is None:
            empty += 1
            continue
        if _once(first, policy) != first:
            broken += 1
    ok = exact == 3 and policies_ok and broken == 0
    verdict.record(ok, f"{exact}/3 examples byte-identical, three-policy example {'ok' if policies_ok else 'WRONG'}, "
                       f"idempotence broken on {broken} of {n} random strings ({empty} empty after filtering)")
    assert ok


# ------------------------------------------------------------ embeddings


def cooccurrence_corpus(seed, n=300):
    """X and Y share every sentence of one token group; Z lives in a disjoint group."""
    rng = np.random.default_rng(seed)
    group_a = ["xqw", "ypl"] + [f"ka{i}" for i in range(6)]
    group_b = ["zrn"] + [f"mo{i}" for i in range(7)]
    out = []
    for _ in range(n):
        out.append(list(rng.permutation(["xqw", "ypl"] + list(rng.choice(group_a, 6)))))
        out.append(list(rng.permutation(["zrn"] + list(rng.choice(group_b, 7)))))
    return out


@pytest.mark.criterion("embedding sanity")
def test_embedding_sanity(verdict):
    t0 = time.perf_counter()
    rows = []
    for mode in ("word2vec", "fasttext"):
        for seed in range(5):
            conf = EmbeddingConfig(dim=32, mode=mode, epochs=10, bucket_count=2000, seed=seed, downsample_t=1.0)
            m = train_embeddings(cooccurrence_corpus(seed), conf)
            x, y, z = (vector(w, m) for w in ("xqw", "ypl", "zrn"))
            rows.append((mode, seed, cosine(x, y), cosine(x, z)))
    elapsed = time.perf_counter() - t0
    bad = [(m, s) for m, s, xy, xz in rows if not xy > 0.5 > xz]
    ok = not bad and elapsed < 120
    verdict.record(ok, f"2 modes x 5 seeds: min cos(X,Y) {min(r[2] for r in rows):.3f} > 0.5 > max cos(X,Z) "
                       f"{max(r[3] for r in rows):.3f}, {elapsed:.0f}s (limit 120s)" + (f", failing {bad}" if bad else ""))
    assert ok


# ------------------------------------------------------------- determinism

CV_TOML = """
seed = 11
[paths]
labeled = "lab.tsv"
report = "{report}"
[model]
name = "{model}"
embed_dim = 6
hidden_units = 4
max_len = 10
batch_size = 8
dense_units = 4
td_units = 2
[train]
epochs = 2
[eval]
k = 3
"""


@pytest.mark.criterion("determinism")
def test_cv_determinism(verdict, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    write_labeled(tmp_path / "lab.tsv", n_per_class=9, seed=4)
    models = ["lstm", "stacked-bilstm-2", "cnn-bilstm", "hahnn", "capsule-b"]
    extra = {"cnn-bilstm": ["model.conv.filters=3"], "hahnn": ["model.attention.sentence_len=4",
             "model.attention.conv_filters=2"], "capsule-b": ["model.routing.capsule_dim=3",
             "model.routing.capsule_filters=2", "model.routing.conv_filters=3"]}
    same, rerun = [], []
    for name in models:
        (tmp_path / "run.toml").write_text(CV_TOML.format(model=name, report=f"{name}.txt"))
        sets = [x for kv in extra.get(name, []) for x in ("--set", kv)]
        reports = []
        for _ in range(2):
            assert cli.main(["cv", "-c", "run.toml", *sets]) == 0
            capsys.readouterr()
            reports.append((tmp_path / f"{name}.txt").read_bytes())
        same.append(reports[0] == reports[1])
        # rerun from the reproducibility blocks recorded in the report itself
        assert cli.main(["cv", "--from-report", f"{name}.txt"]) == 0
        rerun.append(capsys.readouterr().out.encode("utf-8") == reports[0])
    ok = all(same) and all(rerun)
    verdict.record(ok, f"3-fold cv, deterministic mode, fixed seed: {sum(same)}/{len(models)} reports bit-identical "
                       f"on rerun, {sum(rerun)}/{len(models)} reproduced from their own [config]/[run] blocks "
                       f"({', '.join(models)})")
    assert ok


# ----------------------------------------------------- dataset-scale check


@pytest.mark.dataset
@pytest.mark.criterion("dataset-scale reproduction (optional)")
def test_dataset_scale(verdict, tmp_path, capsys):
    """LSTM + fastText-300 holdout near 63.35%; 10-fold BiLSTM and Capsule-B near 63.81% / 63.23%.

    ``SENTFORGE_DATASET``: labelled TSV.  ``SENTFORGE_EMBEDDINGS``: a 300-d vector
    file; when absent, fastText-300 vectors are trained on the dataset text
    (plus ``SENTFORGE_CORPUS`` if given).  Runs for hours.
    """
    data = os.environ.get("SENTFORGE_DATASET")
    if not data:
        verdict.record("SKIP", "SENTFORGE_DATASET not set")
        pytest.skip("SENTFORGE_DATASET not set")
    base = ["--set", f"paths.labeled={cli.toml_value(str(Path(data).resolve()))}", "--set", "seed=1",
            "--set", "model.embed_dim=300", "--set", "deterministic=false", "--set", "eval.jobs=4"]
    vec = os.environ.get("SENTFORGE_EMBEDDINGS") or str(tmp_path / "fasttext300.vec")
    base += ["--set", f"paths.embeddings={cli.toml_value(vec)}"]
    if not os.environ.get("SENTFORGE_EMBEDDINGS"):
        corpus = os.environ.get("SENTFORGE_CORPUS")
        extra = ["--set", f"paths.corpus={cli.toml_value(corpus)}"] if corpus else []
        assert cli.main(["embed", *base, *extra, "--set", "embed.evaluate=false"]) == 0
    capsys.readouterr()
    results = {}
    assert cli.main(["train", *base, "--set", "model.name=\"lstm\"", "--set", "train.epochs=20"]) == 0
    results["lstm holdout"] = (float(parse_report(capsys.readouterr().out)["metrics"]["accuracy"]), 0.6335)
    for name, target in (("bilstm", 0.6381), ("capsule-b", 0.6323)):
        assert cli.main(["cv", *base, "--set", f"model.name=\"{name}\"", "--set", "eval.k=10",
                         "--set", "train.epochs=20"]) == 0
        results[f"{name} 10-fold"] = (float(parse_report(capsys.readouterr().out)["aggregate"]["accuracy"]), target)
    ok = all(abs(got - want) <= 0.03 for got, want in results.values())
    verdict.record(ok, "; ".join(f"{k} {100 * g:.2f}% (target {100 * w:.2f} +/- 3)" for k, (g, w) in results.items()))
    if not ok:
        pytest.xfail("dataset-scale reproduction outside +/-3 points (reported, does not fail the build)")
