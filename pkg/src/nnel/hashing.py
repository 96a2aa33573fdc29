"""Deterministic character-trigram hashing and lexical similarity.

The feature-hash embedder stands in for a neural encoder at desk scale:
it is seeded with a fixed key, so identical text produces bit-identical
vectors on every platform and run.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from hashlib import blake2b

import numpy as np

from .errors import ValidationError

# Fixed key makes the signed feature hash reproducible everywhere.
_HASH_KEY = b"nnel-trigram-v1"
_BOUNDARY = "#"
MIN_DIM = 8


def _normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text).lower()


def char_trigrams(text: str) -> Counter:
    """Multiset of character 3-grams of the NFC-lowercased text.

    The text is padded with a ``#`` sentinel on both ends so that one- and
    two-character surfaces (abbreviations) still produce grams.
    """
    norm = _normalize(text)
    if not norm:
        return Counter()
    padded = _BOUNDARY + norm + _BOUNDARY
    return Counter(padded[i : i + 3] for i in range(len(padded) - 2))


def _bucket_and_sign(gram: str, dim: int) -> tuple[int, int]:
    digest = blake2b(gram.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    value = int.from_bytes(digest, "little")
    sign = 1 if value & (1 << 63) == 0 else -1
    return (value & ((1 << 63) - 1)) % dim, sign


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Signed feature hash of the text's character trigrams, L2-normalized.

    Returns a float32 unit vector of length ``dim``.
    """
    if dim < MIN_DIM:
        raise ValidationError(f"embedding dim must be >= {MIN_DIM}, got {dim}")
    grams = char_trigrams(text)
    if not grams:
        raise ValidationError("cannot embed empty text (no character trigrams)")
    vec = np.zeros(dim, dtype=np.float32)
    for gram, count in grams.items():
        bucket, sign = _bucket_and_sign(gram, dim)
        vec[bucket] += sign * count
    norm = np.float32(np.linalg.norm(vec))
    if norm == 0:
        raise ValidationError("degenerate text: trigram hashes cancelled out")
    return vec / norm


def dice_similarity(a: str, b: str) -> float:
    """Dice coefficient over the two texts' character-trigram multisets."""
    grams_a = char_trigrams(a)
    grams_b = char_trigrams(b)
    total = sum(grams_a.values()) + sum(grams_b.values())
    if total == 0:
        return 0.0
    overlap = sum(min(count, grams_b[gram]) for gram, count in grams_a.items())
    return 2.0 * overlap / total
