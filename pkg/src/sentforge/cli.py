"""Command-line interface: ``sentforge <command> [options]``.

Runs are driven by a TOML file of dotted keys (``embed.dim = 300``) plus
``--set key=value`` overrides.  Exit codes: 0 success, 2 configuration
error, 3 data error, 4 training failure.
"""

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from sentforge import LABELS, __version__
from sentforge import eval as ev
from sentforge.embed import EmbeddingConfig, load_text, save_text, train_embeddings
from sentforge.errors import (
    CheckpointError,
    ConfigError,
    EmptyAfterFilter,
    EmptySequenceError,
    InputError,
    LabelError,
    MetricsError,
    ParseError,
    SentforgeError,
    SplitError,
    TrainingError,
    UndefinedKappa,
    VocabularyError,
)
from sentforge.models import MODEL_NAMES, Classifier, default_spec, load_model, predict, save_model, train_model
from sentforge.textprep import (
    OOV_ID,
    PunctuationPolicy,
    Vocabulary,
    build_vocab,
    clean_records,
    encode,
    filter_chars,
    read_labeled,
    read_unlabeled,
    tokenize,
)

logger = logging.getLogger("sentforge")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4

DATA_ERRORS = (
    ParseError,
    LabelError,
    InputError,
    EmptyAfterFilter,
    EmptySequenceError,
    VocabularyError,
    SplitError,
    MetricsError,
    CheckpointError,
    UndefinedKappa,
    OSError,
)

# ------------------------------------------------------------------ config

TOP_KEYS = {"seed": 1, "deterministic": True}
PATH_KEYS = ("corpus", "labeled", "embeddings", "checkpoint", "report")
PREPROCESS_KEYS = {"policy": "strip-except-question", "detach_question": True, "min_count": 1}
EMBED_EXTRA = {"dims": None, "modes": None, "evaluate": True}
MODEL_EXTRA = {"name": "lstm", "embed_dim": 300}
TRAIN_KEYS = {"epochs": 10}
EVAL_KEYS = {"holdout": "4:1", "k": 10, "stratified": True, "jobs": 1}
MODEL_SCALARS = (
    "hidden_units", "dropout_p", "batch_size", "max_len", "dense_units", "td_units", "l1", "l2",
    "early_stop_patience", "trainable_embeddings", "class_weights", "margin",
)
MODEL_SECTIONS = ("conv", "routing", "attention", "optimizer")


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_value(text):
    """A TOML literal (``300``, ``true``, ``[50, 300]``, ``"x"``); bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    return repr(v)


def _known_key(key):
    parts = key.split(".")
    head = parts[0]
    if len(parts) == 1:
        return head in TOP_KEYS
    rest = ".".join(parts[1:])
    if head == "paths":
        return rest in PATH_KEYS
    if head == "preprocess":
        return rest in PREPROCESS_KEYS
    if head == "embed":
        return rest in EMBED_EXTRA or rest in {f.name for f in dataclasses.fields(EmbeddingConfig)}
    if head == "train":
        return rest in TRAIN_KEYS
    if head == "eval":
        return rest in EVAL_KEYS
    if head == "model":
        if len(parts) == 2:
            return rest in MODEL_EXTRA or rest in MODEL_SCALARS
        return len(parts) == 3 and parts[1] in MODEL_SECTIONS
    return False


def read_config(path=None, overrides=()):
    """Flat ``{dotted.key: value}`` from a TOML file and ``key=value`` overrides."""
    flat = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                flat = _flatten(tomllib.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        flat[k.strip()] = parse_value(v.strip())
    unknown = sorted(k for k in flat if not _known_key(k))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return flat


@dataclasses.dataclass
class RunConfig:
    flat: dict
    seed: int
    deterministic: bool
    paths: dict
    policy: PunctuationPolicy
    detach_question: bool
    min_count: int
    embed: EmbeddingConfig
    embed_dims: tuple
    embed_modes: tuple
    embed_evaluate: bool
    model_name: str
    embed_dim: int
    epochs: int
    holdout: tuple
    k: int
    stratified: bool
    jobs: int

    def config_hash(self):
        blob = json.dumps(self.flat, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def model_spec(self, name=None):
        """The ModelSpec for ``name`` (default: ``model.name``) with every ``model.*`` override."""
        name = name or self.model_name
        base = default_spec(name)
        over = {}
        for key in MODEL_SCALARS:
            if f"model.{key}" in self.flat:
                over[key] = self.flat[f"model.{key}"]
        for section in MODEL_SECTIONS:
            given = {k.split(".", 2)[2]: v for k, v in self.flat.items() if k.startswith(f"model.{section}.")}
            if not given:
                continue
            current = getattr(base, section)
            try:
                if current is None:
                    raise ConfigError(f"model {name} does not take a {section} section")
                over[section] = dataclasses.replace(current, **given)
            except TypeError as e:
                raise ConfigError(f"model.{section}: {e}") from None
        if "routing" in over and "conv" not in over:
            r = over["routing"]
            over["conv"] = dataclasses.replace(base.conv, kernel_sizes=r.grams, num_layers=len(r.grams),
                                               filters=r.conv_filters)
        try:
            return default_spec(name, **over)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def _get(flat, key, default):
    return flat.get(key, default)


def build_config(flat):
    """Validate a flat config into a :class:`RunConfig` (raises ConfigError)."""
    g = lambda k, d: _get(flat, k, d)  # noqa: E731
    try:
        policy = PunctuationPolicy.parse(g("preprocess.policy", PREPROCESS_KEYS["policy"]))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    deterministic = bool(g("deterministic", True))
    embed_kw = {f.name: flat[f"embed.{f.name}"] for f in dataclasses.fields(EmbeddingConfig)
                if f"embed.{f.name}" in flat}
    seed = int(g("seed", 1))
    embed_kw.setdefault("seed", seed)
    if deterministic:
        embed_kw["workers"] = 1
    try:
        embed = EmbeddingConfig(**embed_kw)
    except TypeError as e:
        raise ConfigError(f"embed: {e}") from None
    dims = g("embed.dims", None)
    dims = (embed.dim,) if dims is None else tuple(int(d) for d in (dims if isinstance(dims, list) else [dims]))
    modes = g("embed.modes", None)
    modes = (embed.mode,) if modes is None else tuple(modes if isinstance(modes, list) else [modes])
    for m in modes:
        if m not in ("word2vec", "fasttext"):
            raise ConfigError(f"embed.modes: unknown mode {m!r}")
    if any(d < 1 for d in dims):
        raise ConfigError(f"embed.dims must be positive, got {list(dims)}")
    name = str(g("model.name", MODEL_EXTRA["name"]))
    if name not in MODEL_NAMES:
        raise ConfigError(f"unknown model {name!r}; expected one of: {'|'.join(MODEL_NAMES)}")
    cfg = RunConfig(
        flat=dict(flat),
        seed=seed,
        deterministic=deterministic,
        paths={k: flat.get(f"paths.{k}") for k in PATH_KEYS},
        policy=policy,
        detach_question=bool(g("preprocess.detach_question", True)),
        min_count=int(g("preprocess.min_count", 1)),
        embed=embed,
        embed_dims=dims,
        embed_modes=modes,
        embed_evaluate=bool(g("embed.evaluate", True)),
        model_name=name,
        embed_dim=int(g("model.embed_dim", MODEL_EXTRA["embed_dim"])),
        epochs=int(g("train.epochs", TRAIN_KEYS["epochs"])),
        holdout=ev.parse_ratio(str(g("eval.holdout", EVAL_KEYS["holdout"]))),
        k=int(g("eval.k", EVAL_KEYS["k"])),
        stratified=bool(g("eval.stratified", True)),
        jobs=1 if deterministic else int(g("eval.jobs", 1)),
    )
    if cfg.min_count < 1 or cfg.epochs < 1 or cfg.embed_dim < 1:
        raise ConfigError("preprocess.min_count, train.epochs and model.embed_dim must be >= 1")
    cfg.model_spec()  # every variant-specific omission surfaces here, before any compute
    return cfg


def require_paths(cfg, *names):
    """Input paths named here must be configured and exist."""
    for n in names:
        p = cfg.paths.get(n)
        if not p:
            raise ConfigError(f"paths.{n} is required for this command")
        if not Path(p).exists():
            raise ConfigError(f"paths.{n} does not exist: {p}")


def config_block(cfg):
    return [f"{k} = {toml_value(v)}" for k, v in sorted(cfg.flat.items())]


def repro_block(cfg, mode, extra=None):
    d = {
        "mode": mode,
        "seed": cfg.seed,
        "deterministic": str(cfg.deterministic).lower(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
    }
    d.update(extra or {})
    return d


def config_from_report(path):
    """The flat config recorded in a report's ``[config]`` block."""
    text = Path(path).read_text(encoding="utf-8")
    section = ev.parse_report(text).get("config")
    if section is None:
        raise ConfigError(f"{path}: no [config] block")
    return {k: parse_value(v) for k, v in section.items()}


# ------------------------------------------------------------------ data


def load_labeled(cfg, path=None):
    """``(docs, vocab, stats)``: labelled ``(tokens, label)`` pairs after cleaning."""
    records = read_labeled(path or cfg.paths["labeled"])
    kept, stats = clean_records(records, cfg.policy, cfg.detach_question)
    if not kept:
        raise EmptyAfterFilter("every labelled document is empty after filtering")
    return [(toks, int(rec.label)) for rec, _, toks in kept], stats


def encode_docs(docs, vocab, max_len):
    out = []
    for toks, label in docs:
        ids = encode(toks, vocab, max_len)
        out.append((ids, label))
    return out


def embedding_matrix(vocab, vectors, dim, seed):
    """Rows for ``vocab``: pretrained vectors where known, small uniform noise elsewhere."""
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    table[0] = 0.0
    hits = 0
    if vectors is not None:
        for i, tok in enumerate(vocab.itos[2:], start=2):
            j = vectors.vocab.stoi.get(tok)
            if j is not None and j > OOV_ID:
                table[i] = vectors.input_vectors[j]
                hits += 1
        logger.info("pretrained vectors for %d of %d vocabulary words", hits, len(vocab) - 2)
    return table


def load_vectors(cfg):
    path = cfg.paths.get("embeddings")
    if not path:
        logger.warning("no paths.embeddings given; embeddings start from random values")
        return None
    vectors = load_text(path)
    if vectors.dim != cfg.embed_dim:
        raise ConfigError(f"embedding file {path} has dimension {vectors.dim} but model.embed_dim is {cfg.embed_dim}")
    return vectors


def prepare(cfg):
    """Everything a training command needs, validated before any training starts."""
    require_paths(cfg, "labeled")
    spec = cfg.model_spec()
    vectors = load_vectors(cfg)
    docs, stats = load_labeled(cfg)
    vocab = build_vocab([t for t, _ in docs], cfg.min_count)
    table = embedding_matrix(vocab, vectors, cfg.embed_dim, cfg.seed)
    qid = vocab.id("?") if cfg.detach_question and "?" in vocab else None
    encoded = encode_docs(docs, vocab, spec.max_len)
    encoded = [(ids, lab) for ids, lab in encoded if any(ids)]
    return spec, vocab, table, qid, encoded, stats


def checkpoint_meta(cfg, vocab, qid, mode):
    return {
        "vocab": list(vocab.itos),
        "policy": cfg.policy.value,
        "detach_question": cfg.detach_question,
        "question_id": qid,
        "labels": list(LABELS),
        "run": repro_block(cfg, mode),
    }


def write_text(path, text):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_preprocess(args):
    policy = args.policy or "strip-except-question"
    try:
        policy = PunctuationPolicy.parse(policy)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    records = read_unlabeled(args.input) if args.unlabeled else read_labeled(args.input)
    kept, stats = clean_records(records, policy, not args.keep_question_attached)
    lines = []
    for rec, _, toks in kept:
        text = " ".join(toks)
        lines.append(text if args.unlabeled else f"{rec.label.name}\t{text}")
    write_text(args.output, "\n".join(lines) + ("\n" if lines else ""))
    block = [
        "[preprocess]",
        f"policy = {policy.value}",
        f"docs_in = {stats.docs_in}",
        f"docs_out = {stats.docs_out}",
        f"chars_removed = {stats.chars_removed}",
        f"empty_dropped = {stats.empty_dropped}",
        f"tokens = {stats.tokens}",
    ]
    block += [f"class.{name} = {stats.per_class.get(name, 0)}" for name in LABELS if not args.unlabeled]
    text = "\n".join(block) + "\n"
    write_text(args.output + ".stats", text)
    sys.stdout.write(text)
    return EXIT_OK


def _sweep_path(base, mode, dim, single):
    if single:
        return Path(base)
    base = Path(base)
    return base.with_name(f"{base.stem}.{mode}.{dim}{base.suffix or '.vec'}")


def holdout_accuracy(cfg, docs, vectors, dim, spec_name="lstm"):
    """Train ``spec_name`` on a holdout split with the given vectors; returns the report."""
    spec = cfg.model_spec(spec_name)
    vocab = build_vocab([t for t, _ in docs], cfg.min_count)
    table = embedding_matrix(vocab, vectors, dim, cfg.seed)
    qid = vocab.id("?") if cfg.detach_question and "?" in vocab else None
    encoded = [(ids, lab) for ids, lab in encode_docs(docs, vocab, spec.max_len) if any(ids)]
    train, val = ev.holdout_split(encoded, cfg.holdout, cfg.seed)
    tm = train_model(spec, train, None, epochs=cfg.epochs, rng=cfg.seed, vocab_size=len(vocab), embed_dim=dim,
                     embeddings=table, question_id=qid)
    pred, _ = predict(tm.model, val)
    return ev.evaluate(pred.tolist(), [lab for _, lab in val])


def cmd_embed(args, cfg):
    if args.dims:
        try:
            cfg.embed_dims = tuple(int(d) for d in args.dims.split(","))
        except ValueError:
            raise ConfigError(f"--dims must be comma-separated integers, got {args.dims!r}") from None
        cfg.flat["embed.dims"] = list(cfg.embed_dims)
    if args.modes:
        cfg.embed_modes = tuple(m.strip() for m in args.modes.split(","))
        for m in cfg.embed_modes:
            if m not in ("word2vec", "fasttext"):
                raise ConfigError(f"unknown embedding mode {m!r}")
        cfg.flat["embed.modes"] = list(cfg.embed_modes)
    out = cfg.paths.get("embeddings")
    if not out:
        raise ConfigError("paths.embeddings (output vector file) is required")
    if cfg.paths.get("corpus"):
        require_paths(cfg, "corpus")
        records = read_unlabeled(cfg.paths["corpus"])
    else:
        require_paths(cfg, "labeled")
        records = read_labeled(cfg.paths["labeled"])
    kept, _ = clean_records(records, cfg.policy, cfg.detach_question)
    corpus = [toks for _, _, toks in kept]
    labeled = None
    if cfg.embed_evaluate and cfg.paths.get("labeled"):
        require_paths(cfg, "labeled")
        labeled, _ = load_labeled(cfg)
    single = len(cfg.embed_dims) == 1 and len(cfg.embed_modes) == 1
    results = {}
    key_lines = []
    for mode in cfg.embed_modes:
        for dim in cfg.embed_dims:
            conf = dataclasses.replace(cfg.embed, dim=dim, mode=mode)
            logger.info("training %s vectors, dim %d", mode, dim)
            m = train_embeddings(corpus, conf, seed=cfg.seed)
            path = _sweep_path(out, mode, dim, single)
            path.parent.mkdir(parents=True, exist_ok=True)
            save_text(m, path)
            key_lines.append(f"file.{mode}.{dim} = {path}")
            key_lines.append(f"loss.{mode}.{dim} = {m.loss_history[-1]:.4f}")
            if labeled is not None:
                rep = holdout_accuracy(cfg, labeled, load_text(path), dim)
                results[(mode, dim)] = rep.accuracy
                key_lines.append(f"accuracy.{mode}.{dim} = {rep.accuracy:.4f}")
    lines = [f"{'Embedding dimension':<22}{'LSTM-Word2vec (%)':>20}{'LSTM-Fasttext (%)':>20}"]
    for dim in cfg.embed_dims:
        cells = []
        for mode in ("word2vec", "fasttext"):
            if (mode, dim) in results:
                cells.append(f"{100 * results[(mode, dim)]:.2f}")
            else:
                cells.append("-")
        lines.append(f"{dim:<22}{cells[0]:>20}{cells[1]:>20}")
    text = "\n".join(lines) + "\n\n[embed]\n" + "\n".join(key_lines) + "\n"
    text += "\n[config]\n" + "\n".join(config_block(cfg)) + "\n"
    text += "\n[run]\n" + "\n".join(f"{k} = {v}" for k, v in repro_block(cfg, "embed").items()) + "\n"
    write_text(cfg.paths.get("report"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args, cfg):
    spec, vocab, table, qid, encoded, _ = prepare(cfg)
    train, val = ev.holdout_split(encoded, cfg.holdout, cfg.seed)
    # early stopping watches a slice of the training part; the holdout stays unseen
    fit, watch = ev.holdout_split(train, (9, 1), cfg.seed + 1)
    logger.info("training %s on %d docs, holding out %d", spec.variant.value, len(fit), len(val))
    tm = train_model(spec, fit, watch, epochs=cfg.epochs, rng=cfg.seed, vocab_size=len(vocab),
                     embed_dim=cfg.embed_dim, embeddings=table, question_id=qid)
    pred, _ = predict(tm.model, val)
    report = ev.evaluate(pred.tolist(), [lab for _, lab in val])
    if cfg.paths.get("checkpoint"):
        Path(cfg.paths["checkpoint"]).parent.mkdir(parents=True, exist_ok=True)
        save_model(cfg.paths["checkpoint"], tm.model, tm.optimizer, checkpoint_meta(cfg, vocab, qid, "train"))
    h = tm.history
    text = ev.format_report(report, title=f"holdout {cfg.holdout[0]}:{cfg.holdout[1]} - {spec.variant.value}")
    text += "\n[history]\n" + "\n".join([
        f"epochs_run = {h.epochs_run}",
        f"stopped_early = {str(h.stopped_early).lower()}",
        f"final_train_loss = {h.train_loss[-1]:.4f}",
        f"final_train_accuracy = {h.train_acc[-1]:.4f}",
        f"final_val_loss = {h.val_loss[-1]:.4f}",
        f"final_val_accuracy = {h.val_acc[-1]:.4f}",
    ]) + "\n"
    text += _tail(cfg, "train", spec)
    write_text(cfg.paths.get("report"), text)
    sys.stdout.write(text)
    return EXIT_OK


def _tail(cfg, mode, spec):
    extra = {"model": spec.variant.value, "model_fingerprint": spec.fingerprint()}
    return ("\n[config]\n" + "\n".join(config_block(cfg)) + "\n"
            + "\n[run]\n" + "\n".join(f"{k} = {v}" for k, v in repro_block(cfg, mode, extra).items()) + "\n")


def cmd_cv(args, cfg):
    spec, vocab, table, qid, encoded, _ = prepare(cfg)
    logger.info("%d-fold cross-validation of %s on %d docs", cfg.k, spec.variant.value, len(encoded))
    result = ev.cross_validate(
        spec, encoded, k=cfg.k, seed=cfg.seed, stratified=cfg.stratified, epochs=cfg.epochs,
        vocab_size=len(vocab), embed_dim=cfg.embed_dim, embeddings=table, question_id=qid,
        jobs=cfg.jobs, deterministic=cfg.deterministic,
    )
    text = ev.format_cv_report(result, title=f"{cfg.k}-fold cross-validation - {spec.variant.value}")
    text += _tail(cfg, "cv", spec)
    write_text(cfg.paths.get("report"), text)
    sys.stdout.write(text)
    return EXIT_OK


def read_pairs(path):
    """``ACTUAL<TAB>PREDICTED`` label lines."""
    actual, pred = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected ACTUAL<TAB>PREDICTED", line=lineno)
            for p in parts:
                if p not in LABELS:
                    raise ParseError(f"unknown label {p!r}", line=lineno)
            actual.append(parts[0])
            pred.append(parts[1])
    if not actual:
        raise ParseError(f"{path}: no label pairs")
    return actual, pred


def _model_from_checkpoint(path):
    model, ck = load_model(path)
    meta = ck.meta
    try:
        vocab = Vocabulary.from_tokens(meta["vocab"][2:], [1] * (len(meta["vocab"]) - 2))
        policy = PunctuationPolicy.parse(meta["policy"])
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: checkpoint lacks preprocessing metadata ({e})") from None
    return model, vocab, policy, bool(meta.get("detach_question", True))


def cmd_eval(args):
    if args.pairs:
        actual, pred = read_pairs(args.pairs)
        report = ev.evaluate(pred, actual)
        title = f"evaluation of {args.pairs}"
    else:
        if not (args.checkpoint and args.input):
            raise ConfigError("eval needs --pairs FILE, or --checkpoint and --input")
        model, vocab, policy, detach = _model_from_checkpoint(args.checkpoint)
        kept, _ = clean_records(read_labeled(args.input), policy, detach)
        docs = [(encode(toks, vocab, model.spec.max_len), int(rec.label)) for rec, _, toks in kept]
        if not docs:
            raise EmptyAfterFilter("every document is empty after filtering")
        labels, _ = predict(model, docs)
        report = ev.evaluate(labels.tolist(), [lab for _, lab in docs])
        title = f"evaluation of {args.checkpoint} on {args.input}"
    text = ev.format_report(report, {"mode": "eval"}, title=title)
    write_text(args.report, text)
    sys.stdout.write(text)
    return EXIT_OK


def read_label_file(path):
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s not in LABELS:
                raise ParseError(f"unknown label {s!r}", line=lineno)
            labels.append(s)
    return labels


def cmd_kappa(args):
    a, b = read_label_file(args.file_a), read_label_file(args.file_b)
    if len(a) != len(b):
        raise InputError(f"label files differ in length: {args.file_a} has {len(a)}, {args.file_b} has {len(b)}")
    ag = ev.agreement(a, b)
    sys.stdout.write(
        f"items = {ag.n}\nkappa = {ag.kappa:.4f}\nobserved_agreement = {ag.observed:.4f}\n"
        f"expected_agreement = {ag.expected:.4f}\n"
    )
    return EXIT_OK


def cmd_predict(args):
    model, vocab, policy, detach = _model_from_checkpoint(args.checkpoint)
    texts = list(args.text)
    if args.input:
        texts += [r.text for r in read_unlabeled(args.input)]
    if not texts:
        raise InputError("no text given")
    rows = []
    for i, raw in enumerate(texts, 1):
        try:
            clean = filter_chars(raw, policy, source_id=i)
        except EmptyAfterFilter:
            raise EmptyAfterFilter(
                f"input {i} is empty after filtering with policy {policy.value}; nothing to classify"
            ) from None
        ids = encode(tokenize(clean, detach), vocab, model.spec.max_len)
        rows.append(ids)
    scores = model.scores(np.array(rows))
    out = ["label\t" + "\t".join(LABELS)]
    for s in scores:
        out.append(LABELS[int(np.argmax(s))] + "\t" + "\t".join(f"{v:.4f}" for v in s))
    sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


def cmd_describe(args, cfg):
    spec = cfg.model_spec()
    model = Classifier(spec, max(3, args.vocab_size), cfg.embed_dim, seed=cfg.seed)
    sys.stdout.write(model.describe() + "\n")
    return EXIT_OK


# -------------------------------------------------------------------- main


def _add_config_args(p):
    p.add_argument("--config", "-c", help="TOML run configuration (dotted keys)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--from-report", metavar="REPORT", help="rerun with the [config] block recorded in a report")


def build_parser():
    ap = argparse.ArgumentParser(prog="sentforge", description="Sinhala news-comment sentiment classification.")
    ap.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING (default) or ERROR")
    ap.add_argument("--version", action="version", version=f"sentforge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter and tokenise a corpus")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--policy", choices=[m.value for m in PunctuationPolicy],
                   help="punctuation policy (default strip-except-question)")
    p.add_argument("--unlabeled", action="store_true", help="input is plain text, one document per line")
    p.add_argument("--keep-question-attached", action="store_true", help="do not split '?' into its own token")

    p = sub.add_parser("embed", help="train word vectors (optionally a dimension sweep)")
    _add_config_args(p)
    p.add_argument("--dims", help="comma-separated dimensions, e.g. 50,300")
    p.add_argument("--modes", help="comma-separated modes: word2vec,fasttext")

    for name, text in (("train", "train on a holdout split and save a checkpoint"),
                       ("cv", "k-fold cross-validation"),
                       ("describe", "print a model's layers and parameter counts")):
        p = sub.add_parser(name, help=text)
        _add_config_args(p)
        if name == "describe":
            p.add_argument("--vocab-size", type=int, default=1000)

    p = sub.add_parser("eval", help="score a checkpoint on a labelled file, or a file of label pairs")
    p.add_argument("--checkpoint")
    p.add_argument("--input", help="labelled TSV to score")
    p.add_argument("--pairs", help="ACTUAL<TAB>PREDICTED label lines")
    p.add_argument("--report", help="also write the report here")

    p = sub.add_parser("kappa", help="Cohen's kappa between two label files")
    p.add_argument("file_a")
    p.add_argument("file_b")

    p = sub.add_parser("predict", help="classify text with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="file with one text per line")
    p.add_argument("text", nargs="*")
    return ap


def _config_for(args):
    if getattr(args, "from_report", None):
        flat = config_from_report(args.from_report)
        flat.update(read_config(None, args.set))
        unknown = sorted(k for k in flat if not _known_key(k))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    else:
        flat = read_config(args.config, args.set)
    return build_config(flat)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("embed", "train", "cv", "describe"):
            cfg = _config_for(args)
            handler = {"embed": cmd_embed, "train": cmd_train, "cv": cmd_cv, "describe": cmd_describe}
            return handler[args.command](args, cfg)
        return {"preprocess": cmd_preprocess, "eval": cmd_eval, "kappa": cmd_kappa,
                "predict": cmd_predict}[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_TRAINING
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except SentforgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
