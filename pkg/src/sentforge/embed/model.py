"""Skip-gram / fastText embedding training and lookup."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from sentforge import kernels
from sentforge.embed.subword import bucket, subword_ngrams
from sentforge.errors import ConfigError, ParseError, TrainingError
from sentforge.textprep import OOV_ID, Vocabulary, build_vocab

logger = logging.getLogger(__name__)

MODES = ("word2vec", "fasttext")
NEG_TABLE_SIZE = 10_000_000


@dataclass
class EmbeddingConfig:
    dim: int = 300
    window: int = 5
    min_count: int = 1
    workers: int = 1
    downsample_t: float = 1e-3
    negatives: int = 5
    epochs: int = 5
    mode: str = "fasttext"
    ngram_min: int = 3
    ngram_max: int = 6
    bucket_count: int = 200_000
    learning_rate: float = 0.025
    seed: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"embedding mode must be one of {MODES}, got {self.mode!r}")
        if self.dim < 1 or self.window < 1 or self.min_count < 1 or self.epochs < 1:
            raise ConfigError("dim, window, min_count and epochs must all be >= 1")
        if self.workers < 1 or self.negatives < 0:
            raise ConfigError("workers must be >= 1 and negatives >= 0")
        if self.mode == "fasttext" and not 1 <= self.ngram_min <= self.ngram_max:
            raise ConfigError("need 1 <= ngram_min <= ngram_max")
        if self.mode == "fasttext" and self.bucket_count < 1:
            raise ConfigError("bucket_count must be >= 1")
        if self.downsample_t <= 0:
            raise ConfigError("downsample_t must be > 0")


@dataclass
class EmbeddingMatrix:
    """Trained input vectors.

    ``input_vectors`` has one row per vocabulary id (rows 0 and 1, PAD and
    OOV, stay zero).  ``subword_vectors`` is present only in fastText mode.
    """

    vocab: Vocabulary
    input_vectors: np.ndarray
    mode: str = "word2vec"
    subword_vectors: np.ndarray | None = None
    ngram_min: int = 3
    ngram_max: int = 6
    loss_history: list = field(default_factory=list)

    @property
    def dim(self):
        return self.input_vectors.shape[1]

    @property
    def bucket_count(self):
        return 0 if self.subword_vectors is None else self.subword_vectors.shape[0]

    def subword_rows(self, token):
        return [bucket(g, self.bucket_count) for g in subword_ngrams(token, self.ngram_min, self.ngram_max)]

    def vector(self, token):
        return vector(token, self)


def vector(token, m):
    """Lookup with fastText-style composition for subword models.

    In-vocabulary fastText words average their own row with their n-gram rows;
    OOV fastText words average the n-gram rows alone; OOV word2vec words map
    to the zero vector.
    """
    wid = m.vocab.id(token)
    if m.subword_vectors is None:
        if wid == OOV_ID:
            return np.zeros(m.dim)
        return m.input_vectors[wid].copy()
    sub = m.subword_vectors[m.subword_rows(token)]
    if wid == OOV_ID:
        return sub.mean(axis=0)
    return (m.input_vectors[wid] + sub.sum(axis=0)) / (1 + len(sub))


def subsample_keep(freq, t):
    """Keep probability ``min(1, sqrt(t / f))`` for a token of relative frequency f."""
    if not 0 < freq <= 1 or t <= 0:
        raise ValueError("need 0 < freq <= 1 and t > 0")
    return min(1.0, math.sqrt(t / freq))


def unigram_weights(counts, power=0.75):
    w = np.asarray(counts, dtype=np.float64) ** power
    return w / w.sum()


def negative_table(counts, size=NEG_TABLE_SIZE):
    """Lookup table whose uniform sampling follows counts**0.75.

    ``counts`` is indexed by vocabulary id; zero-count ids never appear.
    """
    p = unigram_weights(counts)
    edges = np.cumsum(p)
    edges[-1] = 1.0
    pos = (np.arange(size) + 0.5) / size
    return np.searchsorted(edges, pos, side="right").astype(np.int64)


def draw_negatives(table, n, seed):
    """Sample ``n`` ids from ``table`` with the same generator the training kernel uses."""
    state = kernels.lcg_seed(seed)
    out = np.empty(n, dtype=np.int64)
    size = table.shape[0]
    for i in range(n):
        state = (state * kernels.LCG_MULT) % kernels.LCG_MOD
        out[i] = table[state % size]
    return out


def _components(vocab, config):
    """CSR layout of the syn0 rows that make up each word's input vector."""
    V = len(vocab)
    ptr = [0]
    rows = []
    for wid in range(V):
        rows.append(wid)
        if config.mode == "fasttext" and wid > OOV_ID:
            token = vocab.token(wid)
            for g in subword_ngrams(token, config.ngram_min, config.ngram_max):
                rows.append(V + bucket(g, config.bucket_count))
        ptr.append(len(rows))
    return np.asarray(ptr, dtype=np.int64), np.asarray(rows, dtype=np.int64)


def _subsample(sentences, keep_prob, rng):
    kept = []
    offsets = [0]
    for sent in sentences:
        mask = rng.random(len(sent)) < keep_prob[sent]
        s = sent[mask]
        if len(s) > 1:
            kept.append(s)
            offsets.append(offsets[-1] + len(s))
    tokens = np.concatenate(kept) if kept else np.zeros(0, dtype=np.int64)
    return tokens.astype(np.int64), np.asarray(offsets, dtype=np.int64)


def train_embeddings(corpus, config=None, seed=None, epoch_callback=None):
    """Train skip-gram with negative sampling on tokenised sentences.

    ``corpus`` is an iterable of token lists.  With ``config.workers == 1`` the
    result is bit-identical for a fixed seed; more workers apply lock-free
    concurrent updates and are not reproducible.
    """
    config = config or EmbeddingConfig()
    seed = config.seed if seed is None else seed
    corpus = [list(s) for s in corpus if s]
    if not corpus:
        raise TrainingError("cannot train embeddings on an empty corpus")
    vocab = build_vocab(corpus, config.min_count)
    sentences = [np.array([vocab.id(t) for t in s if t in vocab], dtype=np.int64) for s in corpus]
    sentences = [s for s in sentences if len(s) > 1]
    if not sentences:
        raise TrainingError("no sentence has two in-vocabulary tokens")

    counts = np.asarray(vocab.counts, dtype=np.float64)
    freq = counts / counts.sum()
    keep_prob = np.ones(len(vocab))
    for wid in range(2, len(vocab)):
        keep_prob[wid] = subsample_keep(freq[wid], config.downsample_t)

    rng = np.random.default_rng(seed)
    V, dim = len(vocab), config.dim
    n_rows = V + (config.bucket_count if config.mode == "fasttext" else 0)
    syn0 = (rng.random((n_rows, dim)) - 0.5) / dim
    syn0[:2] = 0.0
    syn1 = np.zeros((V, dim))
    table = negative_table(counts, min(NEG_TABLE_SIZE, max(100_000, 100 * V)))
    comp_ptr, comp = _components(vocab, config)

    history = []
    lcg_states = [kernels.lcg_seed(seed * 7919 + w + 1) for w in range(config.workers)]
    for epoch in range(config.epochs):
        tokens, offsets = _subsample(sentences, keep_prob, rng)
        if len(tokens) == 0:
            history.append(float("nan"))
            continue
        eff_win = rng.integers(1, config.window + 1, size=len(tokens)).astype(np.int64)
        total = config.epochs * len(tokens)
        before = epoch * len(tokens)
        if config.workers == 1:
            loss, pairs, lcg_states[0] = kernels.sgns_epoch(
                tokens, offsets, eff_win, comp_ptr, comp, syn0, syn1, table,
                config.negatives, config.learning_rate, before, total, lcg_states[0],
            )
        else:
            loss, pairs = _parallel_epoch(
                tokens, offsets, eff_win, comp_ptr, comp, syn0, syn1, table,
                config, before, total, lcg_states,
            )
        history.append(loss / max(pairs, 1))
        logger.debug("epoch %d: mean pair loss %.5f over %d pairs", epoch + 1, history[-1], pairs)
        if epoch_callback is not None:
            epoch_callback(epoch, history[-1])

    return EmbeddingMatrix(
        vocab=vocab,
        input_vectors=syn0[:V].copy(),
        mode=config.mode,
        subword_vectors=syn0[V:].copy() if config.mode == "fasttext" else None,
        ngram_min=config.ngram_min,
        ngram_max=config.ngram_max,
        loss_history=history,
    )


def _parallel_epoch(tokens, offsets, eff_win, comp_ptr, comp, syn0, syn1, table, config, before, total, states):
    # Hogwild: workers share syn0/syn1 without locks.
    n_sent = len(offsets) - 1
    bounds = np.linspace(0, n_sent, config.workers + 1).astype(int)

    def run(w):
        lo, hi = bounds[w], bounds[w + 1]
        if hi <= lo:
            return 0.0, 0, states[w]
        sub_off = offsets[lo : hi + 1]
        base = int(sub_off[0])
        sub_tokens = tokens[base : int(sub_off[-1])]
        return kernels.sgns_epoch(
            sub_tokens, sub_off - base, eff_win[base : int(sub_off[-1])], comp_ptr, comp,
            syn0, syn1, table, config.negatives, config.learning_rate, before + base, total, states[w],
        )

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(run, range(config.workers)))
    for w, (_, _, st) in enumerate(results):
        states[w] = st
    return sum(r[0] for r in results), sum(r[1] for r in results)


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


# ------------------------------------------------------------------ text io


def save_text(m, path):
    """``V dim`` header then one ``token v1 ... v_dim`` line per word."""
    words = m.vocab.words()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {m.dim}\n")
        for token in words:
            vec = vector(token, m)
            fh.write(token + " " + " ".join(f"{v:.10g}" for v in vec) + "\n")


def load_text(path):
    """Inverse of :func:`save_text`.  The result looks words up directly (no subwords)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty embedding file", line=1)
    head = lines[0].split()
    if len(head) != 2 or not all(h.isdigit() for h in head):
        raise ParseError("header must be 'V dim'", line=1)
    n, dim = int(head[0]), int(head[1])
    if dim < 1:
        raise ParseError("dimension must be >= 1", line=1)
    if len(lines) - 1 != n:
        raise ParseError(f"header declares {n} vectors but file has {len(lines) - 1}", line=1)
    tokens = []
    vecs = np.zeros((n + 2, dim))
    for i, line in enumerate(lines[1:], start=2):
        parts = line.rstrip(" ").split(" ")
        if len(parts) != dim + 1:
            raise ParseError(f"expected token plus {dim} values, got {len(parts) - 1} values", line=i)
        try:
            vecs[i] = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError("non-numeric vector component", line=i) from None
        tokens.append(parts[0])
    if len(set(tokens)) != len(tokens):
        raise ParseError(f"{path}: duplicate tokens")
    vocab = Vocabulary.from_tokens(tokens, [1] * len(tokens))
    return EmbeddingMatrix(vocab=vocab, input_vectors=vecs, mode="word2vec")


def save_npz(m, path):
    """Full model including subword buckets, for OOV lookups after reloading."""
    np.savez(
        path,
        tokens=np.array(m.vocab.words(), dtype=object),
        counts=np.array(m.vocab.counts[2:], dtype=np.int64),
        input_vectors=m.input_vectors,
        subword_vectors=m.subword_vectors if m.subword_vectors is not None else np.zeros((0, m.dim)),
        meta=np.array([m.mode, m.ngram_min, m.ngram_max], dtype=object),
    )


def load_npz(path):
    with np.load(path, allow_pickle=True) as z:
        vocab = Vocabulary.from_tokens(list(z["tokens"]), list(z["counts"]))
        mode, nmin, nmax = z["meta"]
        sub = z["subword_vectors"]
        return EmbeddingMatrix(
            vocab=vocab,
            input_vectors=z["input_vectors"],
            mode=str(mode),
            subword_vectors=sub if mode == "fasttext" else None,
            ngram_min=int(nmin),
            ngram_max=int(nmax),
        )


def config_dict(config):
    return asdict(config)
