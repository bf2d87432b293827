"""Kautz-Singleton superimposed codes built from Reed-Solomon outer codes.

Every codeword is a Reed-Solomon codeword over GF(q) (q prime) whose symbols
are expanded one-hot into blocks of q bits.  Two distinct RS codewords of
dimension k agree in at most k-1 positions, so with an outer length of
n = 1 + K(k-1) no codeword is covered by the OR of K others.

When n = q + 1 the outer code is the singly-extended RS code: the extra
coordinate carries the leading coefficient (evaluation "at infinity"), which
keeps the code MDS.

Codewords are stored both as a 0/1 matrix (one row per codeword) and as
Python integers with bit ``i`` holding digit ``i``; set algebra on the
integers is what the decoders use.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CodeParameterError(ValueError):
    """Raised for parameters that cannot produce a superimposed code."""


class DecodeFailure(ValueError):
    """The observed word is not an OR of at most ``max_order`` codewords."""


class StackSizeError(RuntimeError):
    """Explicit enumeration of the boolean-sum blocks would be too large."""


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q < 4:
        return True
    if q % 2 == 0:
        return False
    return all(q % d for d in range(3, math.isqrt(q) + 1, 2))


def to_mask(bits: Sequence[int] | np.ndarray) -> int:
    """Pack a 0/1 vector into an int (digit i -> bit i)."""
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    return int.from_bytes(np.packbits(arr, bitorder="little").tobytes(), "little")


def from_mask(mask: int, length: int) -> np.ndarray:
    nbytes = max(1, (length + 7) // 8)
    raw = np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length].copy()


@dataclass(frozen=True)
class CodeParams:
    """Field size ``q``, message length ``k``, order ``K`` and cluster count ``G``."""

    q: int
    k: int
    K: int
    G: int = 1

    @property
    def n(self) -> int:
        """Outer (Reed-Solomon) code length."""
        return 1 + self.K * (self.k - 1)

    @property
    def length(self) -> int:
        """Binary codeword length, i.e. the number of TRP subcarriers."""
        return self.q * self.n

    @property
    def cardinality(self) -> int:
        return self.q**self.k

    @property
    def cluster_size(self) -> int:
        return self.cardinality // self.G

    def admissible(self) -> bool:
        """The rate-formula constraint q >= K(k-1) >= 3, K >= 2."""
        return self.q >= self.K * (self.k - 1) >= 3 and self.K >= 2

    def validate(self, strict: bool = False) -> None:
        """Check that the code can actually be constructed.

        ``strict`` additionally enforces :meth:`admissible`.
        """
        if self.k < 2 or self.K < 1:
            raise CodeParameterError(f"need k >= 2 and K >= 1, got k={self.k}, K={self.K}")
        if not is_prime(self.q):
            raise CodeParameterError(f"q={self.q} is not prime")
        if self.q < self.n - 1:
            raise CodeParameterError(
                f"q={self.q} too small for outer length n={self.n} (need q >= n - 1)"
            )
        if not 1 <= self.G <= self.cardinality:
            raise CodeParameterError(f"G={self.G} must lie in [1, {self.cardinality}]")
        if strict and not self.admissible():
            raise CodeParameterError(f"{self} violates q >= K(k-1) >= 3, K >= 2")


def code_rate(params: CodeParams) -> float:
    """log2(C) / B.  Pure arithmetic, so non-prime q is accepted."""
    if params.q < 2 or params.k < 1 or params.K < 1:
        raise CodeParameterError(f"invalid parameters {params}")
    return params.k * math.log2(params.q) / params.length


def min_length(k: int, K: int) -> int:
    """Smallest admissible code length, reached at q = K(k-1)."""
    d = K * (k - 1)
    return d * (1 + d)


def superpose(words: Iterable[np.ndarray]) -> np.ndarray:
    """Boolean sum (bitwise OR) of one or more 0/1 vectors."""
    words = [np.asarray(w, dtype=np.uint8) for w in words]
    if not words:
        raise ValueError("superpose needs at least one word")
    out = words[0].copy()
    for w in words[1:]:
        out |= w
    return out


def _outer_symbols(params: CodeParams) -> np.ndarray:
    q, k, n = params.q, params.k, params.n
    idx = np.arange(q**k)
    # message digits, most significant first: index = sum c_i q^(k-1-i)
    digits = np.stack([(idx // q ** (k - 1 - i)) % q for i in range(k)], axis=1)
    coeffs = digits[:, ::-1]  # coeffs[:, d] multiplies x^d
    n_points = min(n, q)
    points = np.arange(n_points)
    vander = np.stack([points**d % q for d in range(k)], axis=0)  # (k, n_points)
    symbols = (coeffs @ vander) % q
    if n == q + 1:
        symbols = np.concatenate([symbols, coeffs[:, k - 1 : k]], axis=1)
    return symbols.astype(np.int64)


class Codebook:
    """A constructed superimposed code with cluster and phase allocation.

    Treat instances as immutable; they are shared across trials.
    """

    def __init__(self, params: CodeParams, words: np.ndarray):
        self.params = params
        self.words = np.asarray(words, dtype=np.uint8)
        self.words.setflags(write=False)
        self.masks: tuple[int, ...] = tuple(to_mask(w) for w in self.words)

    def __len__(self) -> int:
        return len(self.masks)

    def __repr__(self) -> str:
        return f"Codebook({self.params})"

    @property
    def length(self) -> int:
        return self.words.shape[1]

    @cached_property
    def weights(self) -> np.ndarray:
        return self.words.sum(axis=1)

    # allocation -------------------------------------------------------

    def cluster_members(self, g: int) -> range:
        if not 0 <= g < self.params.G:
            raise IndexError(f"cluster {g} out of range")
        s = self.params.cluster_size
        return range(g * s, (g + 1) * s)

    def cluster_of(self, index: int) -> int | None:
        """Cluster owning codeword ``index``; ``None`` for leftover codewords."""
        self._check_index(index)
        g = index // self.params.cluster_size
        return g if g < self.params.G else None

    def phase_for(self, index: int) -> float:
        self._check_index(index)
        return 2.0 * math.pi * index / len(self)

    def index_for_phase(self, phase: float, atol: float = 1e-9) -> int:
        m = phase * len(self) / (2.0 * math.pi)
        index = round(m)
        if abs(m - index) > atol * len(self):
            raise ValueError(f"phase {phase} is not in the phase set")
        return index % len(self)

    def _check_index(self, index: int) -> None:
        if not 0 <= index < len(self):
            raise IndexError(f"codeword index {index} outside 0..{len(self) - 1}")

    # set algebra ------------------------------------------------------

    def contained(self, mask: int) -> list[int]:
        """Indices of codewords covered by ``mask``."""
        return [i for i, c in enumerate(self.masks) if c & ~mask == 0]

    def decompose(self, observed: np.ndarray | int, max_order: int | None = None) -> tuple[int, ...]:
        """Recover the generating set of an OR of at most ``max_order`` codewords.

        A codeword is a constituent iff it is covered by the observation; this
        is exact while the number of constituents does not exceed K.
        """
        mask = observed if isinstance(observed, int) else to_mask(observed)
        max_order = self.params.K if max_order is None else max_order
        if max_order > self.params.K:
            raise ValueError(f"max_order {max_order} exceeds code order {self.params.K}")
        members = self.contained(mask)
        cover = 0
        for i in members:
            cover |= self.masks[i]
        if mask == 0 or cover != mask or len(members) > max_order:
            raise DecodeFailure(
                f"observation is not an OR of <= {max_order} codewords "
                f"({len(members)} covered, {bin(mask & ~cover).count('1')} stray digits)"
            )
        return tuple(members)

    def is_member(self, mask: int, order: int) -> bool:
        """Whether ``mask`` is the OR of exactly ``order`` distinct codewords."""
        members = self.contained(mask)
        if len(members) < order or mask == 0:
            return False
        cover = 0
        for i in members:
            cover |= self.masks[i]
        if cover != mask:
            return False
        if order <= self.params.K:
            # disjunctness: an OR of <= K codewords covers nothing else
            return len(members) == order
        if len(members) <= self.params.K:
            return False
        return any(
            _or_all(self.masks[i] for i in combo) == mask
            for combo in itertools.combinations(members, order)
        )


def _or_all(masks: Iterable[int]) -> int:
    out = 0
    for m in masks:
        out |= m
    return out


def construct_codebook(params: CodeParams, strict: bool = False) -> Codebook:
    params.validate(strict=strict)
    symbols = _outer_symbols(params)
    C, n, q = symbols.shape[0], params.n, params.q
    words = np.zeros((C, n * q), dtype=np.uint8)
    cols = np.arange(n) * q + symbols
    words[np.arange(C)[:, None], cols] = 1
    return Codebook(params, words)


@dataclass(frozen=True)
class StackedCodebook:
    """Explicit boolean-sum blocks [B, B_2, ..., B_{K+1}].

    ``generators[k-1][c]`` is the lexicographically ordered generating set of
    column ``c`` of block ``k``.
    """

    book: Codebook
    blocks: tuple[np.ndarray, ...]
    generators: tuple[tuple[tuple[int, ...], ...], ...]

    @cached_property
    def _lookup(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(to_mask(row) for row in block) for block in self.blocks)

    @property
    def max_order(self) -> int:
        return len(self.blocks)

    def is_member(self, mask: int, order: int) -> bool:
        if not 1 <= order <= self.max_order:
            raise ValueError(f"order {order} not stacked (1..{self.max_order})")
        return mask in self._lookup[order - 1]

    def generating_sets(self, mask: int, order: int) -> list[tuple[int, ...]]:
        block = self.blocks[order - 1]
        hits = np.flatnonzero([to_mask(row) == mask for row in block])
        return [self.generators[order - 1][h] for h in hits]


def build_stacked(book: Codebook, max_order: int | None = None, max_columns: int = 500_000) -> StackedCodebook:
    """Enumerate every OR of exactly k codewords for k = 1..max_order (default K+1)."""
    max_order = book.params.K + 1 if max_order is None else max_order
    if max_order < 1:
        raise ValueError("need at least one block")
    C = len(book)
    total = sum(math.comb(C, k) for k in range(1, max_order + 1))
    if total > max_columns:
        raise StackSizeError(
            f"{total} stacked columns exceed the cap of {max_columns}; "
            "use Codebook.is_member (containment test) instead"
        )
    blocks, gens = [], []
    for k in range(1, max_order + 1):
        combos = tuple(itertools.combinations(range(C), k))
        rows = np.zeros((len(combos), book.length), dtype=np.uint8)
        for r, combo in enumerate(combos):
            rows[r] = np.bitwise_or.reduce(book.words[list(combo)], axis=0)
        blocks.append(rows)
        gens.append(combos)
    return StackedCodebook(book, tuple(blocks), tuple(gens))


# text export -------------------------------------------------------------


def save_codebook(book: Codebook, path: str | Path) -> None:
    """One codeword per line as '0'/'1' text, preceded by a '#'-prefixed JSON header."""
    p = book.params
    header = {"q": p.q, "k": p.k, "K": p.K, "G": p.G, "length": book.length, "cardinality": len(book)}
    lines = ["# " + json.dumps(header)]
    lines += ["".join("1" if b else "0" for b in row) for row in book.words]
    Path(path).write_text("\n".join(lines) + "\n")


def load_codebook(path: str | Path, verify: bool = True) -> Codebook:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing JSON header line")
    header = json.loads(text[0][1:])
    params = CodeParams(header["q"], header["k"], header["K"], header.get("G", 1))
    rows = [line.strip() for line in text[1:] if line.strip()]
    if any(set(r) - {"0", "1"} for r in rows):
        raise ValueError(f"{path}: non-binary characters in matrix")
    words = np.array([[c == "1" for c in r] for r in rows], dtype=np.uint8)
    if words.shape != (params.cardinality, params.length):
        raise ValueError(f"{path}: matrix shape {words.shape} disagrees with header {params}")
    book = Codebook(params, words)
    if verify and not np.array_equal(words, construct_codebook(params).words):
        raise ValueError(f"{path}: matrix differs from the construction for {params}")
    return book
