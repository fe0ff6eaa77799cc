"""Binary code matrices, sign quantization, and label-overlap similarity.

A code matrix holds N items of M bits each, every logical entry being -1
or +1. Storage is bit-packed: item i occupies ceil(M/64) unsigned 64-bit
words, bit j of the item living in word j // 64 at position j % 64
(little-endian bit order within a word). Bit 1 stands for +1, bit 0 for
-1, and padding bits above M are always zero. This layout makes XOR plus
popcount the whole Hamming-distance kernel in the retrieval engine.

Sign quantization maps a real matrix entrywise to {-1, +1} with the tie
rule sign(0) = +1, fixed here so every downstream update is deterministic.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CodeMatrix",
    "build_similarity",
    "normalize_labels",
    "pack_bits",
    "sign_matrix",
    "unpack_bits",
]

WORD_BITS = 64


class CodeMatrix:
    """Immutable bit-packed matrix of {-1, +1} codes.

    Attributes:
        words: uint64 array of shape (count, words_per_code); read-only.
        code_len: M, number of code bits per item.
        count: N, number of items (columns of the logical M x N matrix).
    """

    __slots__ = ("words", "code_len", "count")

    def __init__(self, words: np.ndarray, code_len: int, count: int):
        words = np.asarray(words, dtype=np.uint64)
        if code_len < 1:
            raise ValueError(f"code_len must be >= 1, got {code_len}")
        if count < 0:
            raise ValueError(f"count must be >= 0, got {count}")
        per_code = words_per_code(code_len)
        if words.shape != (count, per_code):
            raise ValueError(
                f"words shape {words.shape} does not match "
                f"(count={count}, words_per_code={per_code})"
            )
        pad = per_code * WORD_BITS - code_len
        if pad and count and np.any(words[:, -1] >> np.uint64(WORD_BITS - pad)):
            raise ValueError("padding bits above code_len must be zero")
        words = words.copy()
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "code_len", code_len)
        object.__setattr__(self, "count", count)

    def __setattr__(self, name, value):
        raise AttributeError("CodeMatrix is immutable")

    @property
    def words_per_code(self) -> int:
        return self.words.shape[1]

    def unpack(self) -> np.ndarray:
        """Return the logical M x N matrix as int8 entries in {-1, +1}."""
        return unpack_bits(self)

    def column(self, i: int) -> "CodeMatrix":
        """Return item i as a single-column CodeMatrix."""
        if not 0 <= i < self.count:
            raise ValueError(f"column index {i} out of range for count {self.count}")
        return CodeMatrix(self.words[i : i + 1], self.code_len, 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return (
            self.code_len == other.code_len
            and self.count == other.count
            and np.array_equal(self.words, other.words)
        )

    def __repr__(self) -> str:
        return f"CodeMatrix(code_len={self.code_len}, count={self.count})"


def words_per_code(code_len: int) -> int:
    return -(-code_len // WORD_BITS)


def sign_matrix(real_matrix: np.ndarray) -> CodeMatrix:
    """Quantize a real D x N matrix entrywise to a packed code matrix.

    Entry (i, j) becomes +1 when the input is >= 0 and -1 otherwise;
    exact zeros map to +1.

    Raises:
        ValueError: if the input contains NaN or infinity.
    """
    arr = np.asarray(real_matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sign quantization requires finite input")
    signs = np.where(arr >= 0.0, 1, -1).astype(np.int8)
    return pack_bits(signs)


def pack_bits(entries: np.ndarray) -> CodeMatrix:
    """Pack a {-1, +1} matrix of shape (M, N) into a CodeMatrix.

    Raises:
        ValueError: if any entry is not exactly -1 or +1.
    """
    arr = np.asarray(entries)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    ones = arr == 1
    if not np.all(ones | (arr == -1)):
        raise ValueError("entries must be exactly -1 or +1")
    code_len, count = arr.shape
    per_code = words_per_code(code_len)
    bits = np.zeros((per_code * WORD_BITS, count), dtype=np.uint8)
    bits[:code_len] = ones
    packed = np.packbits(bits, axis=0, bitorder="little")
    words = np.ascontiguousarray(packed.T).view(np.uint64)
    return CodeMatrix(words, code_len, count)


def unpack_bits(codes: CodeMatrix) -> np.ndarray:
    """Expand a CodeMatrix back to its logical M x N {-1, +1} matrix."""
    raw = codes.words.reshape(codes.count, -1).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, : codes.code_len]
    return (bits.T.astype(np.int8) << 1) - 1


def normalize_labels(labels) -> list[tuple[int, ...]]:
    """Canonicalize per-item label collections to sorted unique int tuples.

    An empty collection is a valid unlabeled item.
    """
    out = []
    for item in labels:
        ids = sorted({int(v) for v in item})
        out.append(tuple(ids))
    return out


def build_similarity(labels_x, labels_y) -> np.ndarray:
    """Build the {0, 1} label-overlap matrix between two item lists.

    Entry (p, q) is 1 exactly when item p of labels_x and item q of
    labels_y share at least one label id. Rows index the first modality,
    columns the second. Unlabeled items produce all-zero rows/columns.

    Raises:
        ValueError: if the two lists differ in length.
    """
    lx = normalize_labels(labels_x)
    ly = normalize_labels(labels_y)
    if len(lx) != len(ly):
        raise ValueError(f"label list lengths differ: {len(lx)} vs {len(ly)}")
    return label_overlap(lx, ly)


def label_overlap(labels_x, labels_y) -> np.ndarray:
    """Label-overlap indicator for possibly different-length item lists.

    Same rule as build_similarity without the square-batch length check;
    used to derive query-vs-gallery relevance judgments.
    """
    lx = normalize_labels(labels_x)
    ly = normalize_labels(labels_y)
    vocab = sorted(set().union(*lx, *ly)) if (lx or ly) else []
    if not vocab:
        return np.zeros((len(lx), len(ly)), dtype=np.uint8)
    index = {v: i for i, v in enumerate(vocab)}
    inc_x = np.zeros((len(lx), len(vocab)), dtype=np.uint8)
    inc_y = np.zeros((len(ly), len(vocab)), dtype=np.uint8)
    for row, ids in zip(inc_x, lx):
        for v in ids:
            row[index[v]] = 1
    for row, ids in zip(inc_y, ly):
        for v in ids:
            row[index[v]] = 1
    return (inc_x.astype(np.int64) @ inc_y.T.astype(np.int64) > 0).astype(np.uint8)
