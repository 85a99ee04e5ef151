"""Toy-sized model configurations and datasets shared by the model tests."""

import numpy as np

from sentforge.autograd.gradcheck import check_gradients, kink_distance
from sentforge.models import AttentionSpec, Classifier, ConvSpec, RoutingConfig, default_spec

VOCAB, DIM = 10, 4
KINK_MARGIN = 1e-3


def toy_spec(name, **extra):
    """vocab 10, dim 4, hidden 3, T = 6; every variant, no dropout, trainable embeddings."""
    kw = dict(hidden_units=3, max_len=6, dense_units=3, td_units=2, dropout_p=0.0, trainable_embeddings=True)
    if name.startswith("cnn"):
        kw["conv"] = ConvSpec(filters=2, kernel_sizes=(2, 3))
    if name == "hahnn":
        kw["attention"] = AttentionSpec(word_context_dim=3, sentence_context_dim=3, conv_filters=2, sentence_len=3)
    if name.startswith("capsule"):
        grams = (3,) if name == "capsule-a" else (3, 4, 5)
        kw["routing"] = RoutingConfig(capsule_dim=3, capsule_filters=2, conv_filters=2, grams=grams)
    kw.update(extra)
    return default_spec(name, **kw)


def random_instance(name, rng):
    """A model, a ragged id batch and a scalar objective away from every kink.

    Biases are randomised so no squash input sits exactly at zero, and the
    objective is a random projection of the raw scores.  Instances whose
    distance to a relu / max-pool / norm kink is below ``KINK_MARGIN`` are
    redrawn: a finite difference across a kink measures nothing.
    """
    while True:
        model = Classifier(
            toy_spec(name), VOCAB, DIM, embeddings=rng.normal(size=(VOCAB, DIM)), seed=int(rng.integers(2**31))
        )
        for key, p in model.params.items():
            if key.endswith(".b"):
                p.data = rng.normal(scale=0.1, size=p.shape)
        ids = rng.integers(1, VOCAB, size=(2, 6))
        ids[1, 4:] = 0
        proj = rng.normal(size=(2, 4))

        def objective(model=model, ids=ids, proj=proj):
            return (model.logits(ids) * proj).sum()

        if kink_distance(objective) > KINK_MARGIN:
            return model, objective


def architecture_gradient_error(name, seed, sample=6):
    rng = np.random.default_rng(seed)
    model, objective = random_instance(name, rng)
    return check_gradients(objective, list(model.trainable().values()), sample=sample, rng=rng)


def separable_docs(seed=0, n_per_class=8, max_len=10, keys_per_doc=None):
    """32 labelled id sequences; ids 2..17 are class keys (4 per class), 18..29 noise.

    Each document carries ``keys_per_doc`` keys of its class (half its length by default).
    """
    rng = np.random.default_rng(seed)
    docs = []
    for c in range(4):
        keys = list(range(2 + 4 * c, 6 + 4 * c))
        for _ in range(n_per_class):
            n = int(rng.integers(6, max_len + 1))
            toks = [int(t) for t in rng.integers(18, 30, size=n)]
            for p in rng.choice(n, n // 2 if keys_per_doc is None else keys_per_doc, replace=False):
                toks[p] = int(rng.choice(keys))
            docs.append((toks, c))
    return docs


def overfit_spec(name):
    """Small enough to train in seconds; default optimizer and dropout, batch 8."""
    kw = dict(hidden_units=8, max_len=10, dense_units=8, td_units=4, batch_size=8)
    if name.startswith("cnn"):
        kw["conv"] = ConvSpec(filters=8, kernel_sizes=(3, 5))
    if name == "hahnn":
        kw["attention"] = AttentionSpec(word_context_dim=8, sentence_context_dim=8, conv_filters=4, sentence_len=5)
    if name.startswith("capsule"):
        grams = (3,) if name == "capsule-a" else (3, 4, 5)
        kw["routing"] = RoutingConfig(capsule_dim=8, capsule_filters=4, conv_filters=8, grams=grams)
    return default_spec(name, **kw)


OVERFIT_VOCAB, OVERFIT_DIM = 30, 8


def overfit_embeddings(seed=5):
    """Class keys point along their class axis (dims 0..3); noise tokens live in dims 4..7."""
    rng = np.random.default_rng(seed)
    emb = rng.normal(scale=0.3, size=(OVERFIT_VOCAB, OVERFIT_DIM))
    for c in range(4):
        emb[2 + 4 * c : 6 + 4 * c, c] += 2.0
    emb[18:, :4] = 0.0
    return emb
