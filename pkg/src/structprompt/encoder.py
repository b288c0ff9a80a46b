"""Frozen hashing bag-of-embeddings text encoder.

Tokens are hashed with 64-bit FNV-1a into ``V`` buckets; a text is encoded
as the count-weighted mean of its bucket rows. The table never enters the
trainable-parameter registry.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_SPLIT = re.compile(r"[\W_]+")


class EncoderError(ValueError):
    pass


class VectorFileError(EncoderError):
    """Malformed word2vec-style text file."""


def fnv1a_64(data: str | bytes) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def split_tokens(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character."""
    return [t for t in _SPLIT.split(text.lower()) if t]


def token_id(token: str, vocab_size: int) -> int:
    return fnv1a_64(token) % vocab_size


def tokenize(text: str, vocab_size: int = 4096) -> list[int]:
    return [token_id(t, vocab_size) for t in split_tokens(text)]


@dataclass(frozen=True)
class EncoderTable:
    vocab_size: int
    dim: int
    table: np.ndarray = field(repr=False)
    seed: int | None = None
    vectors_sha256: str | None = None

    def __post_init__(self):
        self.table.setflags(write=False)

    def tokenize(self, text: str) -> list[int]:
        return tokenize(text, self.vocab_size)

    def encode(self, ids) -> np.ndarray:
        return encode(ids, self)

    def encode_text(self, text: str) -> np.ndarray:
        return encode(self.tokenize(text), self)

    def encode_batch(self, id_lists) -> np.ndarray:
        if not id_lists:
            return np.zeros((0, self.dim))
        return np.vstack([encode(ids, self) for ids in id_lists])


def encode(ids, table: EncoderTable) -> np.ndarray:
    """Mean of the selected embedding rows, as a 1 x d_h matrix.

    Computed from sorted unique ids weighted by their counts, so the result
    is bit-identical under any permutation or uniform duplication of ids.
    """
    ids = np.asarray(ids, dtype=np.int64).ravel()
    if ids.size == 0:
        raise EncoderError("cannot encode an empty token list")
    if ids.min() < 0 or ids.max() >= table.vocab_size:
        raise EncoderError(f"token id outside 0..{table.vocab_size - 1}")
    uniq, counts = np.unique(ids, return_counts=True)
    weights = (counts / ids.size).reshape(1, -1)
    # w = c / n: uniform duplication doubles c and n, leaving w unchanged
    return kernels.matmul(weights, table.table[uniq])


def build_encoder(seed: int = 0, vocab_size: int = 4096, dim: int = 64,
                  vectors: str | Path | None = None) -> EncoderTable:
    """Seeded Normal(0, 1/sqrt(dim)) table, optionally overwritten from a vector file.

    The generator is NumPy's PCG64 (``numpy.random.default_rng(seed)``). When
    ``vectors`` is given, ``dim`` is taken from the file header and each listed
    token overwrites its hashed row, in file order.
    """
    if vocab_size < 2:
        raise EncoderError(f"vocab_size must be >= 2, got {vocab_size}")
    if vectors is None:
        if dim < 1:
            raise EncoderError(f"dim must be >= 1, got {dim}")
        rng = np.random.default_rng(seed)
        table = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(vocab_size, dim))
        return EncoderTable(vocab_size, dim, table, seed=seed)

    path = Path(vectors)
    raw = path.read_bytes()
    entries, file_dim = read_vector_file(raw.decode("utf-8").splitlines())
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, 1.0 / np.sqrt(file_dim), size=(vocab_size, file_dim))
    for token, vec in entries:
        table[token_id(token.lower(), vocab_size)] = vec
    return EncoderTable(vocab_size, file_dim, table, seed=seed,
                        vectors_sha256=hashlib.sha256(raw).hexdigest())


def read_vector_file(lines) -> tuple[list[tuple[str, np.ndarray]], int]:
    """Parse word2vec text format: header ``count dim``, then ``token v1 .. v_dim``."""
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise VectorFileError("line 1: missing 'count dim' header")
    head = lines[0].split()
    try:
        count, dim = int(head[0]), int(head[1])
        if len(head) != 2:
            raise ValueError
    except (ValueError, IndexError):
        raise VectorFileError(f"line 1: expected 'count dim' header, got {lines[0]!r}") from None
    if dim < 1:
        raise VectorFileError(f"line 1: dim must be >= 1, got {dim}")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise VectorFileError(
                f"line {lineno}: expected a token and {dim} values, got {len(parts) - 1} values"
            )
        try:
            vec = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise VectorFileError(f"line {lineno}: non-numeric vector entry") from None
        if not np.isfinite(vec).all():
            raise VectorFileError(f"line {lineno}: non-finite vector entry")
        entries.append((parts[0], vec))
    if len(entries) != count:
        raise VectorFileError(f"header declares {count} vectors, file has {len(entries)}")
    return entries, dim
