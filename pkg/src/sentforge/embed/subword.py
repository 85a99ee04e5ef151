"""Character n-grams and their hash buckets."""

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def bucket(ngram: str, bucket_count: int) -> int:
    """Bucket of an n-gram: FNV-1a 64 over its UTF-8 bytes, modulo ``bucket_count``."""
    return fnv1a_64(ngram.encode("utf-8")) % bucket_count


def subword_ngrams(token: str, nmin: int = 3, nmax: int = 6) -> list:
    """All n-grams of ``<token>`` with nmin <= n <= nmax, shortest first.

    The whole wrapped token is appended at the end unless it already appeared.

    >>> subword_ngrams("abc")
    ['<ab', 'abc', 'bc>', '<abc', 'abc>', '<abc>']
    """
    if not token:
        raise ValueError("token must be non-empty")
    wrapped = f"<{token}>"
    grams = []
    for n in range(nmin, nmax + 1):
        for i in range(len(wrapped) - n + 1):
            grams.append(wrapped[i : i + n])
    if wrapped not in grams:
        grams.append(wrapped)
    return grams
