"""Model specifications: which architecture, and every hyperparameter it needs."""

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field

from sentforge.autograd.optim import OptimizerState, adadelta, adam
from sentforge.errors import ConfigError


class Variant(enum.Enum):
    RNN = "rnn"
    LSTM = "lstm"
    GRU = "gru"
    BILSTM = "bilstm"
    CNN_GRU = "cnn-gru"
    CNN_LSTM = "cnn-lstm"
    CNN_BILSTM = "cnn-bilstm"
    STACKED_LSTM_2 = "stacked-lstm-2"
    STACKED_LSTM_3 = "stacked-lstm-3"
    STACKED_BILSTM_2 = "stacked-bilstm-2"
    STACKED_BILSTM_3 = "stacked-bilstm-3"
    HAHNN = "hahnn"
    CAPSULE_A = "capsule-a"
    CAPSULE_B = "capsule-b"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ConfigError(f"unknown model {value!r}; expected one of: {'|'.join(v.value for v in cls)}")

    @property
    def family(self):
        if self.value.startswith("cnn-"):
            return "cnn"
        if self.value.startswith("stacked-"):
            return "stacked"
        if self.value.startswith("capsule-"):
            return "capsule"
        if self is Variant.HAHNN:
            return "hahnn"
        return "recurrent"

    @property
    def cell(self):
        """Recurrent cell kind ("rnn", "lstm", "gru"); None for capsules."""
        if self.family == "capsule":
            return None
        if self is Variant.HAHNN:
            return "gru"
        if self in (Variant.RNN,):
            return "rnn"
        if self in (Variant.GRU, Variant.CNN_GRU):
            return "gru"
        return "lstm"

    @property
    def bidirectional(self):
        return "bilstm" in self.value or self is Variant.HAHNN

    @property
    def depth(self):
        return int(self.value[-1]) if self.family == "stacked" else 1


MODEL_NAMES = tuple(v.value for v in Variant)


@dataclass(frozen=True)
class ConvSpec:
    """Parallel convolution branches, one per kernel size."""

    num_layers: int = 2
    filters: int = 64
    kernel_sizes: tuple = (3, 5)
    pool_window: int = 2
    dilation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        if not self.kernel_sizes:
            raise ConfigError("conv.kernel_sizes must be non-empty")
        if any(k < 1 for k in self.kernel_sizes):
            raise ConfigError(f"conv.kernel_sizes must be >= 1, got {self.kernel_sizes}")
        if self.filters < 1:
            raise ConfigError(f"conv.filters must be >= 1, got {self.filters}")
        if self.num_layers != len(self.kernel_sizes):
            raise ConfigError(
                f"conv.num_layers ({self.num_layers}) must equal the number of kernel sizes {self.kernel_sizes}"
            )
        if self.pool_window < 1 or self.dilation < 1:
            raise ConfigError("conv.pool_window and conv.dilation must be >= 1")

    def effective_kernel(self, k):
        return (k - 1) * self.dilation + 1


@dataclass(frozen=True)
class RoutingConfig:
    iterations: int = 3
    capsule_dim: int = 16
    capsule_filters: int = 16
    conv_filters: int = 32
    grams: tuple = (3,)

    def __post_init__(self):
        object.__setattr__(self, "grams", tuple(int(g) for g in self.grams))
        if self.iterations < 1:
            raise ConfigError(f"routing.iterations must be >= 1, got {self.iterations}")
        if min(self.capsule_dim, self.capsule_filters, self.conv_filters) < 1:
            raise ConfigError("routing capsule_dim, capsule_filters and conv_filters must be >= 1")
        if not self.grams or min(self.grams) < 1:
            raise ConfigError(f"routing.grams must be non-empty positive sizes, got {self.grams}")


@dataclass(frozen=True)
class AttentionSpec:
    word_context_dim: int = 50
    sentence_context_dim: int = 50
    word_encoder: str = "gru"
    conv_filter_sizes: tuple = (3, 4, 5)
    conv_filters: int = 32
    sentence_len: int = 10

    def __post_init__(self):
        object.__setattr__(self, "conv_filter_sizes", tuple(int(k) for k in self.conv_filter_sizes))
        if self.word_context_dim < 1 or self.sentence_context_dim < 1:
            raise ConfigError("attention context dims must be >= 1")
        if self.word_encoder not in ("gru", "lstm"):
            raise ConfigError(f"attention.word_encoder must be gru or lstm, got {self.word_encoder!r}")
        if any(k < 1 for k in self.conv_filter_sizes) or self.conv_filters < 1:
            raise ConfigError("attention conv filter sizes and count must be >= 1")
        if self.sentence_len < 1:
            raise ConfigError("attention.sentence_len must be >= 1")


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant
    hidden_units: int = 100
    dropout_p: float = 0.5
    conv: ConvSpec | None = None
    routing: RoutingConfig | None = None
    attention: AttentionSpec | None = None
    optimizer: OptimizerState = field(default_factory=adam)
    batch_size: int = 32
    max_len: int = 50
    dense_units: int = 64
    td_units: int = 16
    l1: float = 0.0
    l2: float = 0.0
    early_stop_patience: int | None = None
    trainable_embeddings: bool = False
    class_weights: bool = False
    margin: tuple = (0.8, 0.2, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "margin", tuple(float(m) for m in self.margin))
        validate(self)

    @property
    def loss(self):
        return "margin" if self.variant.family == "capsule" else "cross_entropy"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def fresh_optimizer(self):
        o = self.optimizer
        return OptimizerState(o.variant, o.learning_rate, o.decay, o.beta1, o.beta2, o.rho, o.eps)

    def to_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "variant":
                v = v.value
            elif f.name == "optimizer":
                v = {k: val for k, val in v.hyperparameters().items() if k != "step_count"}
            elif dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
                v = {k: list(x) if isinstance(x, tuple) else x for k, x in v.items()}
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown model setting(s): {', '.join(sorted(unknown))}")
        for key, typ in (("conv", ConvSpec), ("routing", RoutingConfig), ("attention", AttentionSpec)):
            if d.get(key) is not None and not isinstance(d[key], typ):
                try:
                    d[key] = typ(**d[key])
                except TypeError as e:
                    raise ConfigError(f"{key}: {e}") from None
        if isinstance(d.get("optimizer"), dict):
            try:
                d["optimizer"] = OptimizerState(**d["optimizer"])
            except TypeError as e:
                raise ConfigError(f"optimizer: {e}") from None
        if "margin" in d:
            d["margin"] = tuple(d["margin"])
        return cls(**d)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def validate(spec):
    """Raise :class:`ConfigError` unless the variant-specific fields line up."""
    v = spec.variant
    fam = v.family
    needs_conv = fam in ("cnn", "capsule")
    needs_routing = fam == "capsule"
    needs_attention = fam == "hahnn"
    for name, needed in (("conv", needs_conv), ("routing", needs_routing), ("attention", needs_attention)):
        present = getattr(spec, name) is not None
        if needed and not present:
            raise ConfigError(f"model {v.value} requires a {name} section")
        if present and not needed:
            raise ConfigError(f"model {v.value} does not take a {name} section")
    if spec.hidden_units < 1 and fam != "capsule":
        raise ConfigError(f"hidden_units must be >= 1, got {spec.hidden_units}")
    if not 0.0 <= spec.dropout_p < 1.0:
        raise ConfigError(f"dropout_p must be in [0, 1), got {spec.dropout_p}")
    if spec.batch_size < 1 or spec.max_len < 1 or spec.dense_units < 1 or spec.td_units < 1:
        raise ConfigError("batch_size, max_len, dense_units and td_units must be >= 1")
    if spec.l1 < 0 or spec.l2 < 0:
        raise ConfigError("l1 and l2 must be >= 0")
    if spec.early_stop_patience is not None and spec.early_stop_patience < 0:
        raise ConfigError("early_stop_patience must be >= 0")
    if len(spec.margin) != 3:
        raise ConfigError("margin must be (m_plus, m_minus, lambda)")
    if needs_routing:
        want = (3,) if v is Variant.CAPSULE_A else (3, 4, 5)
        if spec.routing.grams != want:
            raise ConfigError(f"{v.value} uses grams {list(want)}, got {list(spec.routing.grams)}")
        if spec.conv.kernel_sizes != spec.routing.grams or spec.conv.filters != spec.routing.conv_filters:
            raise ConfigError("capsule conv section must match routing grams and conv_filters")
    if needs_conv and fam == "cnn":
        longest = max(spec.conv.effective_kernel(k) for k in spec.conv.kernel_sizes)
        shortest_conv = spec.max_len - longest + 1
        if shortest_conv < spec.conv.pool_window:
            raise ConfigError(
                f"max_len {spec.max_len} too short for kernel {longest} followed by pool {spec.conv.pool_window}"
            )
    if not isinstance(spec.optimizer, OptimizerState):
        raise ConfigError("optimizer must be an OptimizerState")


def default_spec(name, **overrides):
    """The configuration used for ``name`` unless overridden.

    Baselines train with Adadelta at 0.95 and dropout 0.5; the BiLSTM, CNN
    and stacked models with Adam; HAHNN with Adam 0.001, decay 1e-4, dropout
    0.2 and batch 64; capsules with Adam 0.001, batch 50 and margin loss.
    """
    v = Variant.parse(name)
    fam = v.family
    kw = {"variant": v}
    if v in (Variant.RNN, Variant.LSTM, Variant.GRU):
        kw.update(optimizer=adadelta(0.95), dropout_p=0.5)
    elif fam == "hahnn":
        kw.update(optimizer=adam(0.001, decay=1e-4), dropout_p=0.2, batch_size=64, attention=AttentionSpec())
    elif fam == "capsule":
        grams = (3,) if v is Variant.CAPSULE_A else (3, 4, 5)
        kw.update(
            optimizer=adam(0.001),
            dropout_p=0.0,
            batch_size=50,
            conv=ConvSpec(num_layers=len(grams), filters=32, kernel_sizes=grams, pool_window=1),
            routing=RoutingConfig(grams=grams),
        )
    else:
        kw.update(optimizer=adam(0.001), dropout_p=0.5)
        if fam == "cnn":
            kw["conv"] = ConvSpec()
    kw.update(overrides)
    if fam == "capsule" and "routing" in overrides and "conv" not in overrides:
        r = kw["routing"]
        kw["conv"] = ConvSpec(num_layers=len(r.grams), filters=r.conv_filters, kernel_sizes=r.grams, pool_window=1)
    return ModelSpec(**kw)
