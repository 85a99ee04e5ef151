"""Mini-batch training, prediction and checkpointing for :class:`Classifier`."""

import logging
from dataclasses import dataclass, field

import numpy as np

from sentforge.autograd import ops
from sentforge.autograd.checkpoint import load_checkpoint, save_checkpoint
from sentforge.autograd.optim import optimizer_step, zero_grad
from sentforge.autograd.regularize import StopDecision, early_stop_check, penalty
from sentforge.autograd.tensor import Tape
from sentforge.errors import CheckpointError, ConfigError, TrainingError
from sentforge.models.network import NUM_CLASSES, Classifier
from sentforge.models.spec import ModelSpec

logger = logging.getLogger(__name__)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    stopped_early: bool = False
    epochs_run: int = 0

    def as_dict(self):
        return {
            "train_loss": list(self.train_loss),
            "train_acc": list(self.train_acc),
            "val_loss": list(self.val_loss),
            "val_acc": list(self.val_acc),
            "stopped_early": self.stopped_early,
            "epochs_run": self.epochs_run,
        }


@dataclass
class TrainedModel:
    model: Classifier
    history: History
    optimizer: object


def _arrays(docs, max_len):
    """``(ids [N, max_len], labels [N])`` from LabeledDocuments or (ids, label) pairs."""
    ids = np.zeros((len(docs), max_len), dtype=np.int64)
    labels = np.zeros(len(docs), dtype=np.int64)
    for i, d in enumerate(docs):
        tok, lab = (d.token_ids, d.label) if hasattr(d, "token_ids") else d
        tok = list(tok)[:max_len]
        ids[i, : len(tok)] = tok
        labels[i] = int(lab)
    return ids, labels


def _one_hot(labels):
    out = np.zeros((len(labels), NUM_CLASSES))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _loss(model, out, labels, weights=None):
    spec = model.spec
    t = _one_hot(labels)
    if spec.loss == "margin":
        mp, mm, lam = spec.margin
        return ops.margin_loss(out, t, mp, mm, lam, sample_weights=weights)
    return ops.cross_entropy(out, t, sample_weights=weights)


def evaluate_loss(model, ids, labels, batch_size=256):
    """Eval-mode mean loss and accuracy."""
    total, correct = 0.0, 0
    for start in range(0, len(ids), batch_size):
        b_ids, b_lab = ids[start : start + batch_size], labels[start : start + batch_size]
        out = model.logits(b_ids)
        total += _loss(model, out, b_lab).item() * len(b_ids)
        correct += int((out.data.argmax(axis=1) == b_lab).sum())
    return total / len(ids), correct / len(ids)


def class_weight_vector(labels):
    counts = np.bincount(labels, minlength=NUM_CLASSES).astype(np.float64)
    present = counts > 0
    w = np.zeros(NUM_CLASSES)
    w[present] = len(labels) / (present.sum() * counts[present])
    return w


def train_model(
    model_or_spec,
    train_docs,
    val_docs=None,
    epochs=10,
    rng=None,
    *,
    vocab_size=None,
    embed_dim=None,
    embeddings=None,
    question_id=None,
    stop_at_accuracy=None,
    epoch_callback=None,
):
    """Train with the spec's optimizer, loss and regularisers.

    ``model_or_spec`` is a :class:`Classifier` or a :class:`ModelSpec` (then
    ``vocab_size`` and ``embed_dim`` are required).  ``rng`` is a seed or a
    numpy Generator; it drives parameter init (when building), shuffling and
    dropout, so a fixed seed reproduces the history bit for bit.
    ``stop_at_accuracy`` ends training once eval-mode train accuracy reaches it.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)
    if isinstance(model_or_spec, ModelSpec):
        if vocab_size is None or embed_dim is None:
            raise ConfigError("building from a ModelSpec needs vocab_size and embed_dim")
        model = Classifier(
            model_or_spec, vocab_size, embed_dim, embeddings, seed=int(rng.integers(2**31)), question_id=question_id
        )
    else:
        model = model_or_spec
    spec = model.spec
    if not train_docs:
        raise TrainingError("training set is empty")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    ids, labels = _arrays(train_docs, spec.max_len)
    val = _arrays(val_docs, spec.max_len) if val_docs else None
    weights_by_class = class_weight_vector(labels) if spec.class_weights else None
    opt = spec.fresh_optimizer()
    params = model.trainable()
    matrices = model.weight_matrices()
    hist = History()
    n = len(ids)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = order[start : start + spec.batch_size]
            b_ids, b_lab = ids[idx], labels[idx]
            sw = None if weights_by_class is None else weights_by_class[b_lab]
            zero_grad(params)
            with Tape() as tape:
                out = model.logits(b_ids, training=True, rng=rng)
                loss = _loss(model, out, b_lab, sw)
                reg = penalty(matrices, spec.l1, spec.l2)
                if reg is not None:
                    loss = ops.add(loss, reg)
                if not np.isfinite(loss.item()):
                    raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
                tape.backward(loss)
            optimizer_step(opt, params)
        tl, ta = evaluate_loss(model, ids, labels)
        hist.train_loss.append(tl)
        hist.train_acc.append(ta)
        if val is not None:
            vl, va = evaluate_loss(model, *val)
            hist.val_loss.append(vl)
            hist.val_acc.append(va)
        hist.epochs_run = epoch + 1
        logger.debug("epoch %d: train loss %.4f acc %.4f", epoch + 1, tl, ta)
        if epoch_callback is not None:
            epoch_callback(epoch, hist)
        if stop_at_accuracy is not None and ta >= stop_at_accuracy:
            break
        if val is not None and spec.early_stop_patience is not None:
            if early_stop_check(hist.val_loss, spec.early_stop_patience) is StopDecision.STOP:
                hist.stopped_early = True
                break
    zero_grad(params)
    return TrainedModel(model=model, history=hist, optimizer=opt)


def predict(model, docs_or_ids, batch_size=256):
    """``(labels [N], scores [N, 4])`` in eval mode.

    Accepts LabeledDocuments, ``(ids, label)`` pairs or bare id rows.
    """
    first = docs_or_ids[0] if len(docs_or_ids) else None
    is_pair = isinstance(first, tuple) and len(first) == 2 and not np.isscalar(first[0])
    if first is not None and (hasattr(first, "token_ids") or is_pair):
        ids, _ = _arrays(docs_or_ids, model.spec.max_len)
    else:
        ids = model.prepare_ids(docs_or_ids)
    scores = np.concatenate([model.scores(ids[s : s + batch_size]) for s in range(0, len(ids), batch_size)])
    return scores.argmax(axis=1), scores


# ------------------------------------------------------------- checkpoints


def save_model(path, model, optimizer=None, meta=None):
    info = {
        "vocab_size": model.vocab_size,
        "embed_dim": model.embed_dim,
        "question_id": model.question_id,
    }
    info.update(meta or {})
    save_checkpoint(path, model.spec.to_dict(), model.params, optimizer, info)


def load_model(path):
    """Rebuild a :class:`Classifier` from a checkpoint; returns ``(model, checkpoint)``."""
    ck = load_checkpoint(path)
    try:
        spec = ModelSpec.from_dict(ck.spec)
        meta = ck.meta
        model = Classifier(spec, meta["vocab_size"], meta["embed_dim"], question_id=meta.get("question_id"))
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: incomplete model checkpoint ({e})") from None
    for name, p in model.params.items():
        if name not in ck.params:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = ck.params[name]
        if arr.shape != p.shape:
            raise CheckpointError(f"{path}: tensor {name!r} has shape {arr.shape}, expected {p.shape}")
        p.data = arr.copy()
    return model, ck
