"""I.i.d. Bernoulli-shift noise over an alphabet of deterministic matrices.

A realization is the bi-infinite sequence ``(A_z)`` of alphabet symbols.
Symbols are drawn from a counter-based generator (numpy's Philox) keyed on
the seed, with the block number of ``z`` in the counter, so any coordinate
can be produced without generating its predecessors and the value at ``z``
never depends on query order.  Shifting is an O(1) change of offset on a
view that shares the block cache.
"""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConsistencyError, CoordinateOutOfRange, InvalidDimension, KTooLarge, NotAProbability
from .linalg import DetMatrix

MAX_ENUM_K = 8
COORD_BOUND = 2**48
BLOCK = 64
_MASK64 = (1 << 64) - 1


class Alphabet:
    """An ordered set of distinct deterministic ``k x k`` matrices with weights.

    Symbols are held as an ``(n, k)`` integer array of 0-based digits; a
    symbol's *position* indexes that array, its *code* is the canonical index
    ``sum_j t_j k**j`` used in every file format.
    """

    def __init__(self, k: int, digits, weights=None, codes=None, _validate=True):
        digits = np.asarray(digits)
        if digits.ndim != 2 or digits.shape[0] == 0 or digits.shape[1] != k:
            raise InvalidDimension(f"expected a non-empty (n, {k}) digit table, got {digits.shape}")
        if k < 2:
            raise InvalidDimension(f"need k >= 2, got {k}")
        n = digits.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,):
            raise InvalidDimension(f"{n} symbols but {weights.shape[0]} weights")
        if np.any(weights <= 0) or abs(math.fsum(weights) - 1.0) > 1e-9:
            raise NotAProbability("weights must be strictly positive and sum to 1")
        if _validate:
            if digits.min() < 0 or digits.max() >= k:
                raise InvalidDimension(f"digits must lie in 0..{k - 1}")
            codes = [DetMatrix(tuple(row)).code for row in digits.tolist()]
            if len(set(codes)) != n:
                raise InvalidDimension("alphabet symbols must be pairwise distinct")
        self.k = k
        self.digits = digits
        self.weights = weights
        self._codes = codes
        self._uniform = bool(np.all(weights == weights[0]))
        self._cum = np.cumsum(weights)
        self._rows: dict[int, tuple[int, ...]] = {}

    @classmethod
    def from_symbols(cls, symbols: Sequence[DetMatrix], weights=None) -> Alphabet:
        if not symbols:
            raise InvalidDimension("alphabet needs at least one symbol")
        k = symbols[0].k
        if any(s.k != k for s in symbols):
            raise InvalidDimension("all symbols must share the same k")
        return cls(k, np.array([s.digits for s in symbols]), weights)

    def __len__(self) -> int:
        return self.digits.shape[0]

    def __repr__(self) -> str:
        return f"Alphabet(k={self.k}, n={len(self)})"

    @property
    def codes(self) -> list[int]:
        if self._codes is None:
            self._codes = [DetMatrix(tuple(row)).code for row in self.digits.tolist()]
        return self._codes

    def row(self, pos: int) -> tuple[int, ...]:
        """Digits of the symbol at ``pos`` as a tuple (cached)."""
        r = self._rows.get(pos)
        if r is None:
            r = tuple(int(t) for t in self.digits[pos])
            self._rows[pos] = r
        return r

    def symbol(self, pos: int) -> DetMatrix:
        return DetMatrix(self.row(pos))

    def code(self, pos: int) -> int:
        return self.codes[pos]

    def ranks(self) -> np.ndarray:
        s = np.sort(self.digits, axis=1)
        return (np.diff(s, axis=1) != 0).sum(axis=1) + 1

    def mass(self, positions) -> float:
        """nu of a set of symbol positions."""
        return float(math.fsum(self.weights[list(positions)]))

    def rank_one_mass(self) -> float:
        return self.mass(np.flatnonzero(self.ranks() == 1))

    def draw(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to symbol positions by inverse CDF."""
        n = len(self)
        if self._uniform:
            pos = (u * n).astype(np.int64)
        else:
            pos = np.searchsorted(self._cum, u, side="right")
        return np.minimum(pos, n - 1)

    def to_json(self) -> dict:
        # digits are written 1-based, as t_1..t_k
        return {
            "k": self.k,
            "symbols": (self.digits + 1).tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> Alphabet:
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(int(obj["k"]), np.asarray(obj["symbols"], dtype=np.int64) - 1, obj.get("weights"))


def _check_enum_k(k: int) -> None:
    if k < 2:
        raise InvalidDimension(f"need k >= 2, got {k}")
    if k > MAX_ENUM_K:
        raise KTooLarge(f"full enumeration supports k <= {MAX_ENUM_K}, got {k}")


def enumerate_alphabet(k: int) -> Alphabet:
    """All ``k**k`` deterministic matrices in canonical code order, uniform weights."""
    _check_enum_k(k)
    n = k**k
    idx = np.arange(n, dtype=np.int64)
    dtype = np.uint8 if k <= 255 else np.int32
    digits = np.empty((n, k), dtype=dtype)
    for j in range(k):
        digits[:, j] = (idx // k**j) % k
    return Alphabet(k, digits, _validate=False, codes=range(n))


def rank_census_closed_form(k: int) -> dict[int, int]:
    """Number of deterministic ``k x k`` matrices of each rank, by formula."""
    if k < 2:
        raise InvalidDimension(f"need k >= 2, got {k}")
    out = {}
    for rank in range(1, k + 1):
        s = sum((-1) ** (rank - j) * j**k * math.comb(rank, j) for j in range(1, rank + 1))
        out[rank] = math.comb(k, rank) * s
    return out


class RankCensus(NamedTuple):
    closed_form: dict[int, int]
    brute_force: dict[int, int]


def rank_census(k: int) -> RankCensus:
    """Closed form and brute-force rank counts; they are checked to agree."""
    _check_enum_k(k)
    closed = rank_census_closed_form(k)
    counts = Counter(enumerate_alphabet(k).ranks().tolist())
    brute = {rank: counts.get(rank, 0) for rank in range(1, k + 1)}
    if brute != closed:
        raise ConsistencyError(f"rank census mismatch for k={k}: {closed} vs {brute}")
    return RankCensus(closed, brute)


@dataclass
class _BlockStore:
    seed: int
    alphabet: Alphabet
    blocks: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def block(self, b: int) -> np.ndarray:
        arr = self.blocks.get(b)
        if arr is not None:
            return arr
        counter = np.array([0, b & _MASK64, 0, 0], dtype=np.uint64)
        bitgen = np.random.Philox(key=self.seed & _MASK64, counter=counter)
        arr = self.alphabet.draw(np.random.Generator(bitgen).random(BLOCK))
        arr.setflags(write=False)
        with self.lock:
            # a concurrent writer may have won; both computed the same values
            return self.blocks.setdefault(b, arr)


class NoiseRealization:
    """A view ``theta^offset omega`` of a seeded bi-infinite symbol sequence."""

    __slots__ = ("_store", "offset")

    def __init__(self, store: _BlockStore, offset: int = 0):
        self._store = store
        self.offset = offset

    @property
    def seed(self) -> int:
        return self._store.seed

    @property
    def alphabet(self) -> Alphabet:
        return self._store.alphabet

    @property
    def k(self) -> int:
        return self._store.alphabet.k

    def __repr__(self) -> str:
        return f"NoiseRealization(seed={self.seed}, offset={self.offset}, {self.alphabet!r})"

    def _absolute(self, z: int) -> int:
        a = z + self.offset
        if abs(a) > COORD_BOUND:
            raise CoordinateOutOfRange(f"coordinate {a} beyond +-2**48")
        return a

    def position(self, z: int) -> int:
        """Alphabet position of the symbol at coordinate ``z``."""
        b, i = divmod(self._absolute(z), BLOCK)
        return int(self._store.block(b)[i])

    def positions(self, start: int, stop: int) -> np.ndarray:
        """Alphabet positions for coordinates ``start <= z < stop``."""
        if stop <= start:
            return np.empty(0, dtype=np.int64)
        a0, a1 = self._absolute(start), self._absolute(stop - 1) + 1
        b0, b1 = a0 // BLOCK, (a1 - 1) // BLOCK
        chunk = np.concatenate([self._store.block(b) for b in range(b0, b1 + 1)])
        lo = a0 - b0 * BLOCK
        return chunk[lo : lo + (a1 - a0)]

    def digits_at(self, z: int) -> tuple[int, ...]:
        return self.alphabet.row(self.position(z))

    def symbol_at(self, z: int) -> DetMatrix:
        return self.alphabet.symbol(self.position(z))

    def code_at(self, z: int) -> int:
        return self.alphabet.code(self.position(z))

    def shifted(self, n: int) -> NoiseRealization:
        return NoiseRealization(self._store, self.offset + n)

    def same_sequence(self, other: NoiseRealization) -> bool:
        return self._store is other._store


class FixedNoise(NoiseRealization):
    """A realization with prescribed symbols on a window, random elsewhere.

    Handy for constructing specific noise paths (e.g. ``A_0 = identity``)
    while keeping the bi-infinite contract.
    """

    __slots__ = ("_fixed",)

    def __init__(self, alphabet: Alphabet, fixed: dict[int, int], seed: int = 0, offset: int = 0, _store=None):
        super().__init__(_store or _BlockStore(seed, alphabet), offset)
        self._fixed = dict(fixed)

    @classmethod
    def from_symbols(cls, alphabet: Alphabet, symbols: dict[int, DetMatrix], seed: int = 0) -> FixedNoise:
        lookup = {code: pos for pos, code in enumerate(alphabet.codes)}
        fixed = {z: lookup[s.code] for z, s in symbols.items()}
        return cls(alphabet, fixed, seed)

    def position(self, z: int) -> int:
        a = self._absolute(z)
        if a in self._fixed:
            return self._fixed[a]
        return super().position(z)

    def positions(self, start: int, stop: int) -> np.ndarray:
        out = super().positions(start, stop).copy()
        for a, pos in self._fixed.items():
            z = a - self.offset
            if start <= z < stop:
                out[z - start] = pos
        return out

    def shifted(self, n: int) -> FixedNoise:
        return FixedNoise(self.alphabet, self._fixed, offset=self.offset + n, _store=self._store)


def sample_realization(seed: int, alphabet: Alphabet) -> NoiseRealization:
    return NoiseRealization(_BlockStore(int(seed), alphabet))


def shifted(omega: NoiseRealization, n: int) -> NoiseRealization:
    return omega.shifted(n)


def symbol_at(omega: NoiseRealization, z: int) -> DetMatrix:
    return omega.symbol_at(z)
