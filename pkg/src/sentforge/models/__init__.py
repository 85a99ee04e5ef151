"""Sentiment classifiers built on :mod:`sentforge.autograd`."""

from sentforge.models.layers import (
    attention_pool,
    dynamic_routing,
    gru_cell,
    lstm_cell,
    rnn_cell,
    run_bidirectional,
    run_sequence,
)
from sentforge.models.network import (
    NUM_CLASSES,
    Classifier,
    forward_bilstm,
    forward_capsule,
    forward_cnn_hybrid,
    forward_hahnn,
    forward_recurrent,
    forward_stacked,
    segment_sentences,
)
from sentforge.models.spec import (
    MODEL_NAMES,
    AttentionSpec,
    ConvSpec,
    ModelSpec,
    RoutingConfig,
    Variant,
    default_spec,
)

__all__ = [
    "MODEL_NAMES",
    "NUM_CLASSES",
    "AttentionSpec",
    "Classifier",
    "ConvSpec",
    "ModelSpec",
    "RoutingConfig",
    "Variant",
    "attention_pool",
    "default_spec",
    "dynamic_routing",
    "forward_bilstm",
    "forward_capsule",
    "forward_cnn_hybrid",
    "forward_hahnn",
    "forward_recurrent",
    "forward_stacked",
    "gru_cell",
    "lstm_cell",
    "rnn_cell",
    "run_bidirectional",
    "run_sequence",
    "segment_sentences",
]

from sentforge.models.train import (  # noqa: E402
    History,
    TrainedModel,
    evaluate_loss,
    load_model,
    predict,
    save_model,
    train_model,
)

__all__ += ["History", "TrainedModel", "evaluate_loss", "load_model", "predict", "save_model", "train_model"]
