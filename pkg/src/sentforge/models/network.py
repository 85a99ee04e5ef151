"""The fourteen classifier architectures as one parameter-holding class.

Every model maps a batch of token-id rows (padded or truncated to
``spec.max_len``) to four class scores: softmax probabilities for the
cross-entropy models, capsule lengths for the capsule models.
"""

import numpy as np

from sentforge.autograd import ops
from sentforge.autograd.regularize import he_init
from sentforge.autograd.tensor import Tensor
from sentforge.errors import (
    ConfigError,
    EmptySequenceError,
    InputError,
    SequenceTooShortError,
)
from sentforge.models import layers
from sentforge.models.spec import ModelSpec, Variant
from sentforge.textprep import PAD_ID

NUM_CLASSES = 4


def _dilate(w, d):
    """Kernel ``[k, ci, co]`` spread out with ``d - 1`` zero taps between rows."""
    if d == 1:
        return w
    k, ci, co = w.shape
    gap = np.zeros((d - 1, ci, co))
    parts = []
    for i in range(k):
        parts.append(w[i : i + 1])
        if i + 1 < k:
            parts.append(gap)
    return ops.concat(parts, axis=0)


def segment_sentences(ids, sentence_len, question_id=None):
    """Split one document's non-PAD ids into sentences.

    Sentences are consecutive chunks of at most ``sentence_len`` tokens; when
    ``question_id`` is given a '?' token also closes the current sentence.
    """
    out, cur = [], []
    for i in ids:
        if i == PAD_ID:
            continue
        cur.append(int(i))
        if len(cur) == sentence_len or (question_id is not None and i == question_id):
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out


class Classifier:
    """Parameters plus forward pass for one :class:`ModelSpec`.

    ``embeddings`` (``[vocab_size, embed_dim]``) seeds the embedding table;
    rows 0 (PAD) is forced to zero.  Without it the table is drawn from
    uniform(-0.05, 0.05).
    """

    def __init__(self, spec, vocab_size, embed_dim, embeddings=None, seed=0, question_id=None):
        if not isinstance(spec, ModelSpec):
            raise ConfigError("Classifier needs a ModelSpec")
        if vocab_size < 3 or embed_dim < 1:
            raise ConfigError(f"vocab_size must be >= 3 and embed_dim >= 1, got {vocab_size}, {embed_dim}")
        self.spec = spec
        self.vocab_size = int(vocab_size)
        self.embed_dim = int(embed_dim)
        self.question_id = question_id
        self.params = {}
        self.last_attention = None
        self.last_routing = None
        rng = np.random.default_rng(seed)
        if embeddings is None:
            table = rng.uniform(-0.05, 0.05, size=(vocab_size, embed_dim))
        else:
            table = np.array(embeddings, dtype=np.float64)
            if table.shape != (vocab_size, embed_dim):
                raise ConfigError(
                    f"embedding matrix shape {table.shape} does not match vocab {vocab_size} x dim {embed_dim}"
                )
        table[PAD_ID] = 0.0
        self.params["embedding"] = Tensor(table, requires_grad=spec.trainable_embeddings, name="embedding")
        self._build(rng)

    # ------------------------------------------------------------ building

    def _add(self, name, tensor):
        tensor.name = name
        tensor.requires_grad = True
        self.params[name] = tensor

    def _dense(self, name, n_in, n_out, rng):
        self._add(f"{name}.W", he_init((n_in, n_out), n_in, rng))
        self._add(f"{name}.b", Tensor(np.zeros(n_out)))

    def _cell(self, name, kind, n_in, hid, rng):
        G = layers.GATES[kind]
        self._add(f"{name}.W", he_init((n_in, G * hid), n_in, rng))
        self._add(f"{name}.U", he_init((hid, G * hid), hid, rng))
        b = np.zeros(G * hid)
        if kind == "lstm":
            b[hid : 2 * hid] = 1.0  # forget gate starts open
        self._add(f"{name}.b", Tensor(b))

    def _recurrent_layer(self, name, kind, n_in, hid, bidirectional, rng):
        if bidirectional:
            self._cell(f"{name}.fw", kind, n_in, hid, rng)
            self._cell(f"{name}.bw", kind, n_in, hid, rng)
            return 2 * hid
        self._cell(name, kind, n_in, hid, rng)
        return hid

    def _conv(self, name, k, c_in, c_out, rng):
        self._add(f"{name}.W", he_init((k, c_in, c_out), k * c_in, rng))
        self._add(f"{name}.b", Tensor(np.zeros(c_out)))

    def _build(self, rng):
        s = self.spec
        v = s.variant
        fam = v.family
        E, H = self.embed_dim, s.hidden_units
        if fam == "recurrent":
            out = self._recurrent_layer(v.cell, v.cell, E, H, v.bidirectional, rng)
            if v.bidirectional:
                self._dense("td", out, s.td_units, rng)
                self._dense("out", s.max_len * s.td_units, NUM_CLASSES, rng)
            else:
                self._dense("dense", out, s.dense_units, rng)
                self._dense("out", s.dense_units, NUM_CLASSES, rng)
        elif fam == "stacked":
            width = E
            for i in range(v.depth):
                width = self._recurrent_layer(f"layer{i}", "lstm", width, H, v.bidirectional, rng)
            if v.bidirectional:
                self._dense("td", width, s.td_units, rng)
                self._dense("out", s.max_len * s.td_units, NUM_CLASSES, rng)
            else:
                self._dense("out", width, NUM_CLASSES, rng)
        elif fam == "cnn":
            c = s.conv
            for i, k in enumerate(c.kernel_sizes):
                self._conv(f"conv{i}", k, E, c.filters, rng)
            longest = max(c.effective_kernel(k) for k in c.kernel_sizes)
            if s.max_len < longest:
                raise SequenceTooShortError(f"max_len {s.max_len} shorter than kernel {longest}")
            width = self._recurrent_layer("rec", v.cell, c.filters * len(c.kernel_sizes), H, v.bidirectional, rng)
            self._dense("out", width, NUM_CLASSES, rng)
        elif fam == "hahnn":
            a = s.attention
            cell = a.word_encoder
            self._recurrent_layer("word", cell, E, H, True, rng)
            for i, k in enumerate(a.conv_filter_sizes):
                self._conv(f"wconv{i}", k, E, a.conv_filters, rng)
            feat = 2 * H + a.conv_filters * len(a.conv_filter_sizes)
            self._attention("word_att", feat, a.word_context_dim, rng)
            self._recurrent_layer("sent", cell, feat, H, True, rng)
            self._attention("sent_att", 2 * H, a.sentence_context_dim, rng)
            self._dense("out", 2 * H, NUM_CLASSES, rng)
        else:
            r = s.routing
            if s.max_len < max(r.grams):
                raise SequenceTooShortError(f"max_len {s.max_len} shorter than gram {max(r.grams)}")
            for i, k in enumerate(r.grams):
                self._conv(f"caps{i}.conv", k, E, r.conv_filters, rng)
                self._dense(f"caps{i}.primary", r.conv_filters, r.capsule_filters * r.capsule_dim, rng)
                fan = r.capsule_dim
                self._add(
                    f"caps{i}.class.W",
                    he_init((r.capsule_filters, NUM_CLASSES, r.capsule_dim, r.capsule_dim), fan, rng),
                )

    def _attention(self, name, n_in, ctx, rng):
        self._dense(name, n_in, ctx, rng)
        self._add(f"{name}.ctx", he_init((ctx,), ctx, rng))

    # ------------------------------------------------------------- helpers

    def _group(self, prefix):
        return {k: self.params[f"{prefix}.{k}"] for k in ("W", "U", "b")}

    def _linear(self, name, x):
        return ops.add(ops.matmul(x, self.params[f"{name}.W"]), self.params[f"{name}.b"])

    def prepare_ids(self, ids):
        """Right-pad or truncate rows to ``max_len``; validate ids and emptiness."""
        L = self.spec.max_len
        if isinstance(ids, np.ndarray):
            rows = [ids] if ids.ndim == 1 else list(ids)
        else:
            rows = list(ids)
            if rows and np.isscalar(rows[0]):
                rows = [rows]
        if not rows:
            raise EmptySequenceError("no documents given")
        out = np.zeros((len(rows), L), dtype=np.int64)
        for i, r in enumerate(rows):
            r = [int(t) for t in r[:L]]
            out[i, : len(r)] = r
        if out.min() < 0 or out.max() >= self.vocab_size:
            raise InputError(f"token ids must be in [0, {self.vocab_size}), got range [{out.min()}, {out.max()}]")
        empty = np.flatnonzero((out != PAD_ID).sum(axis=1) == 0)
        if empty.size:
            raise EmptySequenceError(f"document(s) {empty.tolist()} contain only PAD tokens")
        return out

    def _embed(self, ids, training, rng):
        mask = (ids != PAD_ID).astype(np.float64)
        x = ops.mul(ops.embedding(self.params["embedding"], ids), mask[..., None])
        return ops.dropout(x, self.spec.dropout_p, training, rng), mask

    # ------------------------------------------------------------- forward

    def logits(self, ids, training=False, rng=None):
        """Raw scores ``[B, 4]``: pre-softmax logits, or capsule lengths."""
        ids = self.prepare_ids(ids)
        fam = self.spec.variant.family
        if fam == "hahnn":
            return self._forward_hahnn(ids, training, rng)
        x, mask = self._embed(ids, training, rng)
        return {
            "recurrent": self._forward_recurrent,
            "stacked": self._forward_stacked,
            "cnn": self._forward_cnn,
            "capsule": self._forward_capsule,
        }[fam](x, mask, training, rng)

    def scores(self, ids):
        """Eval-mode class scores as a numpy array ``[B, 4]``."""
        out = self.logits(ids)
        if self.spec.loss == "margin":
            return out.data.copy()
        return ops.softmax(out, axis=1).data

    def predict(self, ids):
        return self.scores(ids).argmax(axis=1)

    def _td_readout(self, seq, mask, training, rng):
        td = ops.relu(self._linear("td", seq))
        td = ops.mul(td, mask[..., None])
        B = seq.shape[0]
        flat = ops.reshape(td, (B, -1))
        return self._linear("out", ops.dropout(flat, self.spec.dropout_p, training, rng))

    def _forward_recurrent(self, x, mask, training, rng):
        v = self.spec.variant
        if v.bidirectional:
            seq, _ = layers.run_bidirectional("lstm", x, mask, self._group("lstm.fw"), self._group("lstm.bw"))
            return self._td_readout(seq, mask, training, rng)
        _, h = layers.run_sequence(v.cell, x, mask, self._group(v.cell))
        h = ops.dropout(h, self.spec.dropout_p, training, rng)
        return self._linear("out", ops.relu(self._linear("dense", h)))

    def _forward_stacked(self, x, mask, training, rng):
        v = self.spec.variant
        seq = x
        for i in range(v.depth):
            if v.bidirectional:
                seq, _ = layers.run_bidirectional(
                    "lstm", seq, mask, self._group(f"layer{i}.fw"), self._group(f"layer{i}.bw")
                )
            else:
                outs, last = layers.run_sequence("lstm", seq, mask, self._group(f"layer{i}"))
                seq = ops.stack(outs, axis=1) if i + 1 < v.depth else None
        if v.bidirectional:
            return self._td_readout(seq, mask, training, rng)
        return self._linear("out", ops.dropout(last, self.spec.dropout_p, training, rng))

    def conv_branches(self, x, mask):
        """Per-kernel conv + ReLU + max-pool, aligned to the shortest branch.

        Returns ``(features [B, L', filters * n_branches], mask [B, L'])``.
        """
        c = self.spec.conv
        feats, masks = [], []
        for i, k in enumerate(c.kernel_sizes):
            w = _dilate(self.params[f"conv{i}.W"], c.dilation)
            y = ops.relu(ops.add(ops.conv1d(x, w), self.params[f"conv{i}.b"]))
            feats.append(ops.maxpool1d(y, c.pool_window))
            masks.append(layers.sequence_mask_after_conv(mask, c.effective_kernel(k), c.pool_window))
        n = min(f.shape[1] for f in feats)
        feats = [f if f.shape[1] == n else f[:, :n, :] for f in feats]
        m = np.logical_or.reduce([mk[:, :n] for mk in masks]).astype(np.float64)
        return ops.concat(feats, axis=2), m

    def _forward_cnn(self, x, mask, training, rng):
        v = self.spec.variant
        z, m = self.conv_branches(x, mask)
        if v.bidirectional:
            _, last = layers.run_bidirectional("lstm", z, m, self._group("rec.fw"), self._group("rec.bw"))
        else:
            _, last = layers.run_sequence(v.cell, z, m, self._group("rec"))
        return self._linear("out", ops.dropout(last, self.spec.dropout_p, training, rng))

    def sentence_batch(self, ids):
        """``[B, S, W]`` ids with word mask and ``[B, S]`` sentence mask."""
        a = self.spec.attention
        docs = [segment_sentences(row, a.sentence_len, self.question_id) for row in ids]
        S = max(len(d) for d in docs)
        W = max(len(s) for d in docs for s in d)
        out = np.zeros((len(docs), S, W), dtype=np.int64)
        for b, d in enumerate(docs):
            for j, sent in enumerate(d):
                out[b, j, : len(sent)] = sent
        wmask = (out != PAD_ID).astype(np.float64)
        return out, wmask, (wmask.sum(axis=2) > 0).astype(np.float64)

    def _forward_hahnn(self, ids, training, rng):
        a = self.spec.attention
        cell = a.word_encoder
        sids, wmask, smask = self.sentence_batch(ids)
        B, S, W = sids.shape
        flat = sids.reshape(B * S, W)
        fmask = wmask.reshape(B * S, W)
        x = ops.mul(ops.embedding(self.params["embedding"], flat), fmask[..., None])
        x = ops.dropout(x, self.spec.dropout_p, training, rng)
        Hw, _ = layers.run_bidirectional(cell, x, fmask, self._group("word.fw"), self._group("word.bw"))
        parts = [Hw]
        for i, k in enumerate(a.conv_filter_sizes):
            left = (k - 1) // 2
            xp = ops.pad(x, [(0, 0), (left, k - 1 - left), (0, 0)])
            parts.append(ops.relu(ops.add(ops.conv1d(xp, self.params[f"wconv{i}.W"]), self.params[f"wconv{i}.b"])))
        feat = ops.concat(parts, axis=2)
        sent, alpha_w = layers.attention_pool(
            feat, fmask, self.params["word_att.W"], self.params["word_att.b"], self.params["word_att.ctx"]
        )
        sent = ops.reshape(sent, (B, S, sent.shape[-1]))
        Hs, _ = layers.run_bidirectional(cell, sent, smask, self._group("sent.fw"), self._group("sent.bw"))
        doc, alpha_s = layers.attention_pool(
            Hs, smask, self.params["sent_att.W"], self.params["sent_att.b"], self.params["sent_att.ctx"]
        )
        self.last_attention = {
            "word": alpha_w.data.reshape(B, S, W),
            "word_mask": wmask,
            "sentence": alpha_s.data.copy(),
            "sentence_mask": smask,
        }
        doc = ops.dropout(doc, self.spec.dropout_p, training, rng)
        return self._linear("out", doc)

    def capsule_branch(self, i, x, mask):
        r = self.spec.routing
        k = r.grams[i]
        y = ops.relu(ops.add(ops.conv1d(x, self.params[f"caps{i}.conv.W"]), self.params[f"caps{i}.conv.b"]))
        B, P, _ = y.shape
        u = self._linear(f"caps{i}.primary", y)
        u = ops.squash(ops.reshape(u, (B, P, r.capsule_filters, r.capsule_dim)), axis=-1)
        u_hat = ops.einsum("bpcd,cjde->bpcje", u, self.params[f"caps{i}.class.W"])
        u_hat = ops.reshape(u_hat, (B, P * r.capsule_filters, NUM_CLASSES, r.capsule_dim))
        pos = layers.sequence_mask_after_conv(mask, k)
        imask = np.repeat(pos, r.capsule_filters, axis=1)
        v, couplings = layers.dynamic_routing(u_hat, r.iterations, imask)
        return v, couplings

    def _forward_capsule(self, x, mask, training, rng):
        r = self.spec.routing
        norms, routing = [], []
        for i in range(len(r.grams)):
            v, couplings = self.capsule_branch(i, x, mask)
            norms.append(ops.norm(v, axis=-1))
            routing.append(couplings)
        self.last_routing = routing
        if len(norms) == 1:
            return norms[0]
        return ops.mean(ops.stack(norms, axis=0), axis=0)

    # ----------------------------------------------------------- reporting

    def trainable(self):
        return {k: p for k, p in self.params.items() if p.requires_grad}

    def weight_matrices(self):
        """Tensors subject to L1/L2 penalties: trainable, non-bias."""
        return [p for k, p in self.params.items() if p.requires_grad and not k.endswith(".b") and k != "embedding"]

    def parameter_count(self, trainable_only=False):
        ps = self.trainable().values() if trainable_only else self.params.values()
        return int(sum(p.size for p in ps))

    def describe(self):
        """Plain-text layer listing with shapes and parameter counts."""
        s = self.spec
        lines = [
            f"model: {s.variant.value}",
            f"loss: {s.loss}",
            f"max_len: {s.max_len}",
            f"embeddings: {'trainable' if s.trainable_embeddings else 'frozen'}",
            f"{'parameter':<28} {'shape':<22} {'count':>10}",
        ]
        for name, p in self.params.items():
            flag = "" if p.requires_grad else " (frozen)"
            lines.append(f"{name:<28} {str(tuple(p.shape)):<22} {p.size:>10}{flag}")
        lines.append(f"total parameters: {self.parameter_count()}")
        lines.append(f"trainable parameters: {self.parameter_count(trainable_only=True)}")
        return "\n".join(lines)


def _checked(model, family):
    if model.spec.variant.family not in family:
        raise ConfigError(f"{model.spec.variant.value} is not a {'/'.join(family)} model")
    return model.scores


def forward_recurrent(model, ids):
    """Class probabilities ``[B, 4]`` for rnn / lstm / gru."""
    if model.spec.variant not in (Variant.RNN, Variant.LSTM, Variant.GRU):
        raise ConfigError(f"{model.spec.variant.value} is not a unidirectional recurrent model")
    return model.scores(ids)


def forward_bilstm(model, ids):
    if model.spec.variant is not Variant.BILSTM:
        raise ConfigError(f"{model.spec.variant.value} is not the bilstm model")
    return model.scores(ids)


def forward_cnn_hybrid(model, ids):
    return _checked(model, ("cnn",))(ids)


def forward_stacked(model, ids):
    return _checked(model, ("stacked",))(ids)


def forward_hahnn(model, ids):
    return _checked(model, ("hahnn",))(ids)


def forward_capsule(model, ids):
    """Class capsule lengths ``[B, 4]``, each in [0, 1)."""
    return _checked(model, ("capsule",))(ids)


__all__ = [
    "Classifier",
    "forward_bilstm",
    "forward_capsule",
    "forward_cnn_hybrid",
    "forward_hahnn",
    "forward_recurrent",
    "forward_stacked",
    "segment_sentences",
]
