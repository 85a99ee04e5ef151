"""Character filtering, tokenisation and vocabulary encoding for Sinhala comments."""

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field

from sentforge import LABELS
from sentforge.errors import EmptyAfterFilter, LabelError, ParseError, VocabularyError

logger = logging.getLogger(__name__)

PAD_ID = 0
OOV_ID = 1
PAD_TOKEN = "<pad>"
OOV_TOKEN = "<oov>"

SINHALA_FIRST = 0x0D80
SINHALA_LAST = 0x0DFF
ZWJ = "\u200d"
QUESTION = "?"
KEPT_PUNCTUATION = frozenset("?.,!")


class PunctuationPolicy(enum.Enum):
    KEEP_ALL = "keep-all"
    STRIP_ALL = "strip-all"
    STRIP_EXCEPT_QUESTION = "strip-except-question"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown punctuation policy {value!r}; expected one of {[m.value for m in cls]}")


class Label(enum.IntEnum):
    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2
    CONFLICT = 3

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, int) and not isinstance(value, bool) and 0 <= value < len(LABELS):
            return cls(value)
        try:
            return cls[str(value).strip()]
        except KeyError:
            raise LabelError(f"unknown label {value!r}; expected one of {', '.join(LABELS)}") from None


@dataclass(frozen=True)
class CleanComment:
    text: str
    source_id: object = None
    char_classes_removed: int = 0


def _allowed(ch, policy):
    cp = ord(ch)
    if SINHALA_FIRST <= cp <= SINHALA_LAST or ch == ZWJ or "0" <= ch <= "9":
        return True
    if ch == QUESTION:
        return policy is not PunctuationPolicy.STRIP_ALL
    if ch in KEPT_PUNCTUATION:
        return policy is PunctuationPolicy.KEEP_ALL
    return False


def filter_chars(raw, policy=PunctuationPolicy.STRIP_EXCEPT_QUESTION, source_id=None):
    """Keep Sinhala letters, ZWJ, ASCII digits, spaces and the policy's punctuation.

    Every other character becomes a word break.  Runs of whitespace collapse to
    one space and the result is stripped.  Raises :class:`EmptyAfterFilter` when
    nothing remains.
    """
    policy = PunctuationPolicy.parse(policy)
    out = []
    removed = 0
    for ch in raw:
        if _allowed(ch, policy):
            out.append(ch)
        else:
            if not ch.isspace():
                removed += 1
            out.append(" ")
    text = " ".join("".join(out).split())
    if not text:
        raise EmptyAfterFilter(f"comment {source_id!r} is empty after filtering")
    return CleanComment(text=text, source_id=source_id, char_classes_removed=removed)


def tokenize(comment, detach_question=True):
    """Split on spaces.  With ``detach_question`` every '?' is its own token."""
    text = comment.text if isinstance(comment, CleanComment) else comment
    tokens = []
    for piece in text.split(" "):
        if not piece:
            continue
        if detach_question and QUESTION in piece:
            buf = ""
            for ch in piece:
                if ch == QUESTION:
                    if buf:
                        tokens.append(buf)
                        buf = ""
                    tokens.append(QUESTION)
                else:
                    buf += ch
            if buf:
                tokens.append(buf)
        else:
            tokens.append(piece)
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Token/id bijection with ids 0 (PAD) and 1 (OOV) reserved."""

    itos: tuple
    counts: tuple
    stoi: dict = field(compare=False, repr=False)

    @classmethod
    def from_tokens(cls, tokens, counts):
        itos = (PAD_TOKEN, OOV_TOKEN) + tuple(tokens)
        counts = (0, 0) + tuple(counts)
        return cls(itos=itos, counts=counts, stoi={t: i for i, t in enumerate(itos)})

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi and self.stoi[token] > OOV_ID

    def id(self, token):
        i = self.stoi.get(token, OOV_ID)
        return i if i > OOV_ID else OOV_ID

    def token(self, i):
        return self.itos[i]

    def words(self):
        return self.itos[2:]

    def count(self, token):
        i = self.stoi.get(token)
        return 0 if i is None else self.counts[i]


def build_vocab(docs, min_count=1):
    """Tokens with frequency >= min_count, most frequent first, ties lexicographic."""
    counter = Counter()
    for tokens in docs:
        counter.update(tokens)
    kept = [(t, c) for t, c in counter.items() if c >= min_count and t not in (PAD_TOKEN, OOV_TOKEN)]
    if not kept:
        raise VocabularyError(f"no token occurs at least {min_count} time(s)")
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocabulary.from_tokens([t for t, _ in kept], [c for _, c in kept])


def encode(tokens, vocab, max_len=50):
    """Map tokens to ids, truncate at the tail and right-pad with PAD_ID."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.id(t) for t in tokens[:max_len]]
    return ids + [PAD_ID] * (max_len - len(ids))


@dataclass(frozen=True)
class LabeledDocument:
    token_ids: tuple
    label: Label
    raw: CleanComment | None = None

    def __post_init__(self):
        if not any(i != PAD_ID for i in self.token_ids):
            raise ValueError("a labelled document needs at least one non-PAD token")


# ----------------------------------------------------------------- corpus io


@dataclass(frozen=True)
class RawRecord:
    line: int
    label: Label | None
    text: str


def read_labeled(path):
    """Parse ``LABEL<TAB>text`` lines; errors carry the 1-based line number."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError("expected LABEL<TAB>text", line=lineno)
            label, text = line.split("\t", 1)
            if label not in LABELS:
                raise ParseError(f"unknown label {label!r}", line=lineno)
            records.append(RawRecord(lineno, Label[label], text))
    if not records:
        raise ParseError(f"{path}: no records")
    return records


def read_unlabeled(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                records.append(RawRecord(lineno, None, line))
    if not records:
        raise ParseError(f"{path}: no records")
    return records


@dataclass
class PreprocessStats:
    docs_in: int = 0
    docs_out: int = 0
    chars_removed: int = 0
    empty_dropped: int = 0
    tokens: int = 0
    per_class: dict = field(default_factory=dict)


def clean_records(records, policy, detach_question=True):
    """Filter and tokenise records, dropping those that end up empty.

    Returns ``(kept, stats)`` where ``kept`` is a list of
    ``(record, CleanComment, tokens)``.
    """
    stats = PreprocessStats()
    kept = []
    for rec in records:
        stats.docs_in += 1
        try:
            clean = filter_chars(rec.text, policy, source_id=rec.line)
        except EmptyAfterFilter:
            stats.empty_dropped += 1
            continue
        toks = tokenize(clean, detach_question)
        stats.docs_out += 1
        stats.chars_removed += clean.char_classes_removed
        stats.tokens += len(toks)
        if rec.label is not None:
            stats.per_class[rec.label.name] = stats.per_class.get(rec.label.name, 0) + 1
        kept.append((rec, clean, toks))
    if stats.empty_dropped:
        logger.info("dropped %d empty-after-filter document(s)", stats.empty_dropped)
    return kept, stats
