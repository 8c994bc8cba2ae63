"""Deterministic hashed n-gram text features.

The featurizer is pure and platform-independent: n-grams are mapped into a
fixed-dimension sparse vector with the package's documented 64-bit hash
(``rng.hash64``). The bucket is ``hash64(key) mod dim`` and, with signed
hashing on, the contribution is +1 or -1 depending on bit 63 of the same
hash, which cancels collision bias in expectation. Vectors are L2-normalized.

Texts containing whitespace use lowercased word n-grams (split on Unicode
whitespace/punctuation); whitespace-free texts (e.g. Chinese) use character
n-grams. Hash keys are prefixed with the n-gram type and order so a word
unigram never collides with a character bigram by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from intentgraft.errors import ValidationError
from intentgraft.rng import hash64

_WORD_SPLIT = re.compile(r"[\W_]+", re.UNICODE)
_WHITESPACE = re.compile(r"\s", re.UNICODE)


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 1 << 18
    word_ngrams: tuple[int, ...] = (1, 2)
    char_ngrams: tuple[int, ...] = (2, 3)
    signed_hashing: bool = True

    def __post_init__(self) -> None:
        if self.dim < 2 or (self.dim & (self.dim - 1)) != 0:
            raise ValidationError(f"dim must be a power of two >= 2, got {self.dim}")
        if not self.word_ngrams and not self.char_ngrams:
            raise ValidationError("at least one n-gram order must be enabled")
        if any(n < 1 for n in self.word_ngrams + self.char_ngrams):
            raise ValidationError("n-gram orders must be >= 1")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "word_ngrams": list(self.word_ngrams),
            "char_ngrams": list(self.char_ngrams),
            "signed_hashing": self.signed_hashing,
        }

    @classmethod
    def from_json(cls, obj: dict) -> EncoderConfig:
        return cls(
            dim=int(obj["dim"]),
            word_ngrams=tuple(obj["word_ngrams"]),
            char_ngrams=tuple(obj["char_ngrams"]),
            signed_hashing=bool(obj["signed_hashing"]),
        )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse unit-norm feature vector (or the zero vector for empty text)."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def dot(self, other: FeatureVector) -> float:
        if self.dim != other.dim:
            raise ValidationError("feature dimension mismatch")
        common, ia, ib = np.intersect1d(self.indices, other.indices, return_indices=True)
        if len(common) == 0:
            return 0.0
        return float(np.dot(self.values[ia], other.values[ib]))


def tokenize(text: str, mode: str) -> list[str]:
    """``whitespace_lower`` lowercases and splits on whitespace/punctuation;
    ``char`` yields per-character tokens."""
    if mode == "whitespace_lower":
        return [t for t in _WORD_SPLIT.split(text.lower()) if t]
    if mode == "char":
        return list(text)
    raise ValidationError(f"unknown tokenize mode {mode!r}")


def _ngram_keys(text: str, cfg: EncoderConfig) -> list[str]:
    keys: list[str] = []
    if _WHITESPACE.search(text):
        tokens = tokenize(text, "whitespace_lower")
        for n in cfg.word_ngrams:
            for i in range(len(tokens) - n + 1):
                keys.append(f"w{n}:" + " ".join(tokens[i : i + n]))
    else:
        chars = tokenize(text, "char")
        for n in cfg.char_ngrams:
            for i in range(len(chars) - n + 1):
                keys.append(f"c{n}:" + "".join(chars[i : i + n]))
    return keys


def featurize(text: str, cfg: EncoderConfig) -> FeatureVector:
    """Hash the text's n-grams into an L2-normalized sparse vector."""
    keys = _ngram_keys(text, cfg)
    if not keys:
        return FeatureVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0, dtype=np.float64), dim=cfg.dim
        )
    accum: dict[int, float] = {}
    for key in keys:
        h = hash64(key)
        idx = h % cfg.dim
        val = -1.0 if cfg.signed_hashing and (h >> 63) & 1 else 1.0
        accum[idx] = accum.get(idx, 0.0) + val
    items = sorted((i, v) for i, v in accum.items() if v != 0.0)
    if not items:
        return FeatureVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0, dtype=np.float64), dim=cfg.dim
        )
    indices = np.array([i for i, _ in items], dtype=np.int64)
    values = np.array([v for _, v in items], dtype=np.float64)
    values /= np.linalg.norm(values)
    return FeatureVector(indices=indices, values=values, dim=cfg.dim)


def featurize_texts(texts: list[str], cfg: EncoderConfig) -> sparse.csr_matrix:
    """Stack featurized texts into a CSR matrix (rows in input order)."""
    indptr = [0]
    indices: list[np.ndarray] = []
    values: list[np.ndarray] = []
    for text in texts:
        fv = featurize(text, cfg)
        indices.append(fv.indices)
        values.append(fv.values)
        indptr.append(indptr[-1] + len(fv.indices))
    data = np.concatenate(values) if values else np.empty(0)
    cols = np.concatenate(indices) if indices else np.empty(0, dtype=np.int64)
    return sparse.csr_matrix(
        (data, cols, np.array(indptr, dtype=np.int64)), shape=(len(texts), cfg.dim)
    )
