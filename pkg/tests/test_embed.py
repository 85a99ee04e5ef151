import math

import numpy as np
import pytest

from sentforge.embed import (
    EmbeddingConfig,
    bucket,
    cosine,
    draw_negatives,
    fnv1a_64,
    load_npz,
    load_text,
    negative_table,
    save_npz,
    save_text,
    subsample_keep,
    subword_ngrams,
    train_embeddings,
    unigram_weights,
    vector,
)
from sentforge.errors import ConfigError, ParseError, TrainingError


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


def small_config(mode, seed=0, **kw):
    base = dict(dim=32, mode=mode, epochs=10, bucket_count=2000, seed=seed, downsample_t=1.0)
    base.update(kw)
    return EmbeddingConfig(**base)


# -------------------------------------------------------------- subwords


def test_subword_ngrams_examples():
    assert subword_ngrams("abc", 3, 6) == ["<ab", "abc", "bc>", "<abc", "abc>", "<abc>"]
    assert subword_ngrams("a", 3, 6) == ["<a>"]


@pytest.mark.parametrize("token", ["a", "ab", "abc", "abcd", "abcdefgh", "කාගි", "x" * 12])
@pytest.mark.parametrize("nmin,nmax", [(3, 6), (1, 2), (2, 4), (5, 5)])
def test_subword_count_formula(token, nmin, nmax):
    wrapped_len = len(token) + 2
    expected = sum(max(0, wrapped_len - n + 1) for n in range(nmin, nmax + 1))
    if not nmin <= wrapped_len <= nmax:
        expected += 1  # whole wrapped token appended
    assert len(subword_ngrams(token, nmin, nmax)) == expected


def test_fnv1a_reference_values():
    # published FNV-1a 64 test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8
    assert bucket("<ab", 2_000_000) == fnv1a_64("<ab".encode()) % 2_000_000


# ------------------------------------------------------------ subsampling


def test_subsample_keep():
    assert subsample_keep(1e-3, 1e-3) == 1.0
    assert subsample_keep(0.1, 1e-3) == pytest.approx(0.1, rel=1e-12)
    assert subsample_keep(1e-5, 1e-3) == 1.0


def test_negative_sampling_distribution():
    # ten tokens with comparable mass so 10^6 draws resolve 1% per token
    counts = np.array([0, 0] + list(range(10, 20)), dtype=float)
    table = negative_table(counts)
    expected = unigram_weights(counts)
    in_table = np.bincount(table, minlength=len(counts)) / len(table)
    np.testing.assert_allclose(in_table[2:], expected[2:], rtol=1e-4)

    draws = draw_negatives(table, 1_000_000, seed=11)
    freq = np.bincount(draws, minlength=len(counts)) / len(draws)
    assert freq[0] == 0 and freq[1] == 0
    rel = np.abs(freq[2:] - expected[2:]) / expected[2:]
    assert rel.max() <= 0.01, rel
    # a plain unigram distribution would be rejected at this tolerance
    plain = counts[2:] / counts[2:].sum()
    assert (np.abs(freq[2:] - plain) / plain).max() > 0.01


# --------------------------------------------------------------- training


@pytest.mark.parametrize("mode", ["word2vec", "fasttext"])
def test_cooccurrence_oracle(mode):
    for seed in range(5):
        m = train_embeddings(cooccurrence_corpus(seed), small_config(mode, seed))
        x, y, z = (vector(w, m) for w in ("xqw", "ypl", "zrn"))
        assert cosine(x, y) > 0.5 > cosine(x, z), (seed, cosine(x, y), cosine(x, z))


@pytest.mark.parametrize("mode", ["word2vec", "fasttext"])
def test_training_loss_decreases(mode):
    for seed in range(3):
        cfg = small_config(mode, seed, epochs=6, learning_rate=0.0025)
        h = train_embeddings(cooccurrence_corpus(seed), cfg).loss_history
        rises = sum(b > a for a, b in zip(h, h[1:]))
        assert rises <= 1, h
        assert h[-1] < h[0]


@pytest.mark.parametrize("mode", ["word2vec", "fasttext"])
def test_training_deterministic(mode):
    corpus = cooccurrence_corpus(3, n=60)
    a = train_embeddings(corpus, small_config(mode, 5, epochs=2))
    b = train_embeddings(corpus, small_config(mode, 5, epochs=2))
    assert a.input_vectors.tobytes() == b.input_vectors.tobytes()
    if mode == "fasttext":
        assert a.subword_vectors.tobytes() == b.subword_vectors.tobytes()


def test_parallel_workers_mode_runs():
    corpus = cooccurrence_corpus(0, n=100)
    m = train_embeddings(corpus, small_config("word2vec", 0, workers=3, epochs=2))
    assert np.all(np.isfinite(m.input_vectors))
    assert len(m.loss_history) == 2


def test_empty_corpus():
    with pytest.raises(TrainingError):
        train_embeddings([], EmbeddingConfig(dim=4))


def test_config_validation():
    with pytest.raises(ConfigError):
        EmbeddingConfig(mode="glove")
    with pytest.raises(ConfigError):
        EmbeddingConfig(mode="fasttext", ngram_min=5, ngram_max=3)


def test_default_configuration_is_fasttext_300():
    cfg = EmbeddingConfig()
    assert (cfg.mode, cfg.dim, cfg.window, cfg.min_count, cfg.workers, cfg.downsample_t) == (
        "fasttext", 300, 5, 1, 1, 1e-3,
    )


# ---------------------------------------------------------------- lookup


@pytest.fixture(scope="module")
def models():
    corpus = cooccurrence_corpus(1, n=80)
    return {mode: train_embeddings(corpus, small_config(mode, 1, epochs=3)) for mode in ("word2vec", "fasttext")}


def test_oov_lookup(models):
    np.testing.assert_array_equal(vector("unseen", models["word2vec"]), np.zeros(32))
    assert np.linalg.norm(vector("unseen", models["fasttext"])) > 0
    assert np.linalg.norm(vector("xqwz", models["fasttext"])) > 0


def test_in_vocab_lookup_shapes(models):
    for m in models.values():
        assert vector("xqw", m).shape == (32,)
    ft = models["fasttext"]
    wid = ft.vocab.id("xqw")
    rows = ft.subword_rows("xqw")
    manual = (ft.input_vectors[wid] + ft.subword_vectors[rows].sum(axis=0)) / (1 + len(rows))
    np.testing.assert_allclose(vector("xqw", ft), manual, rtol=1e-15)


# ----------------------------------------------------------------- text io


def test_text_round_trip_preserves_cosines(models, tmp_path):
    for mode, m in models.items():
        path = tmp_path / f"{mode}.txt"
        save_text(m, path)
        header = path.read_text(encoding="utf-8").split("\n")[0]
        assert header == f"{len(m.vocab) - 2} 32"
        back = load_text(path)
        words = list(m.vocab.words())
        for a in words[:6]:
            for b in words[:6]:
                assert abs(cosine(vector(a, m), vector(b, m)) - cosine(back.vector(a), back.vector(b))) <= 1e-6


def test_load_text_errors(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("", encoding="utf-8")
    with pytest.raises(ParseError):
        load_text(p)
    p.write_text("2 3\na 1 2 3\nb 1 2 3\nc 1 2 3\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 1"):
        load_text(p)
    p.write_text("2 3\na 1 2 3\nb 1 2\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 3"):
        load_text(p)


def test_npz_round_trip_keeps_subwords(models, tmp_path):
    ft = models["fasttext"]
    path = tmp_path / "ft.npz"
    save_npz(ft, path)
    back = load_npz(path)
    np.testing.assert_array_equal(vector("unseen", back), vector("unseen", ft))
    assert math.isclose(cosine(vector("xqw", back), vector("ypl", back)), cosine(vector("xqw", ft), vector("ypl", ft)))
