"""Word embeddings: skip-gram with negative sampling, optionally with subword buckets."""

from sentforge.embed.model import (
    EmbeddingConfig,
    EmbeddingMatrix,
    cosine,
    draw_negatives,
    load_npz,
    load_text,
    negative_table,
    save_npz,
    save_text,
    subsample_keep,
    train_embeddings,
    unigram_weights,
    vector,
)
from sentforge.embed.subword import bucket, fnv1a_64, subword_ngrams

__all__ = [
    "EmbeddingConfig",
    "EmbeddingMatrix",
    "bucket",
    "cosine",
    "draw_negatives",
    "fnv1a_64",
    "load_npz",
    "load_text",
    "negative_table",
    "save_npz",
    "save_text",
    "subsample_keep",
    "subword_ngrams",
    "train_embeddings",
    "unigram_weights",
    "vector",
]
