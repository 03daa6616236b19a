"""Markov perturbations of a deterministic random network.

Two families share one small interface (``k``, ``step_matrix``, ``series``,
``first_order``, ``is_zero``):

* :class:`PerturbationMap`, the affine family ``A + min(eps, 1) f(A)`` with
  ``f(A)`` zero-column-sum and strictly signed against ``A``;
* :class:`PbnModel`, probabilistic Boolean networks whose genes flip
  independently, reparametrized so the one-step deviation is at most eps.

``series(A, m)`` gives the coefficients of the one-step kernel as a
polynomial in eps.  Multiplying those polynomials with truncation
(:class:`PolyMatrix`) yields every derivative of a cocycle product exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Protocol

import numpy as np

from .errors import GenerationFailed, GTooLarge, InvalidDimension, NotStochastic
from .linalg import DetMatrix, l1_norm
from .noise import Alphabet, NoiseRealization

QUANTUM = 2.0**-30
MAX_G = 10
_STOCH_SLACK = 1e-12


class Perturbation(Protocol):
    k: int

    def step_matrix(self, eps: float, a: DetMatrix) -> np.ndarray: ...

    def series(self, a: DetMatrix, order: int) -> np.ndarray: ...

    def first_order(self, a: DetMatrix) -> np.ndarray: ...

    def is_zero(self, a: DetMatrix) -> bool: ...


class Violation(NamedTuple):
    """One failed check; ``i``/``j`` are 0-based and ``None`` when not entry-specific."""

    symbol: int
    i: int | None
    j: int | None
    reason: str


def _check_entry_signs(code: int, a: DetMatrix, fa: np.ndarray) -> list[Violation]:
    out = []
    sign = 1.0 - 2.0 * a.dense()
    for i, j in zip(*np.nonzero(fa * sign <= 0)):
        out.append(Violation(code, int(i), int(j), "sign"))
    return out


def matrix_violations(code: int, k: int, fa) -> list[Violation]:
    fa = np.asarray(fa, dtype=float)
    if fa.shape != (k, k):
        return [Violation(code, None, None, f"shape {fa.shape}, expected ({k}, {k})")]
    out = []
    for j in range(k):
        if math.fsum(fa[:, j]) != 0.0:
            out.append(Violation(code, None, j, "column sum"))
    if l1_norm(fa) > 1.0:
        out.append(Violation(code, None, None, "norm exceeds 1"))
    out.extend(_check_entry_signs(code, DetMatrix.from_code(k, code), fa))
    return out


class PerturbationMap:
    """The table ``A -> f(A)``; absent symbols have ``f(A) = 0``.

    Construction does not validate (see :func:`validate_perturbation`), so a
    deliberately broken table can still be inspected.
    """

    def __init__(self, k: int, table: dict[int, np.ndarray] | None = None):
        if k < 2:
            raise InvalidDimension(f"need k >= 2, got {k}")
        self.k = k
        frozen = {}
        for code, fa in (table or {}).items():
            fa = np.array(fa, dtype=float)
            if fa.shape != (k, k):
                raise InvalidDimension(f"f({code}) has shape {fa.shape}")
            fa.setflags(write=False)
            frozen[int(code)] = fa
        self.table = frozen
        self._zero = np.zeros((k, k))
        self._zero.setflags(write=False)
        self._series: dict[tuple[int, int], np.ndarray] = {}

    def __repr__(self) -> str:
        return f"PerturbationMap(k={self.k}, stored={len(self.table)})"

    def __len__(self) -> int:
        return len(self.table)

    def get(self, a: DetMatrix) -> np.ndarray | None:
        return self.table.get(a.code)

    def is_zero(self, a: DetMatrix) -> bool:
        return a.code not in self.table

    def first_order(self, a: DetMatrix) -> np.ndarray:
        fa = self.table.get(a.code)
        return self._zero if fa is None else fa

    def step_matrix(self, eps: float, a: DetMatrix) -> np.ndarray:
        if eps < 0:
            raise ValueError("eps must be non-negative")
        out = a.dense()
        fa = self.table.get(a.code)
        if fa is not None and eps > 0:
            out = out + min(eps, 1.0) * fa
            if out.min() < -_STOCH_SLACK or out.max() > 1.0 + _STOCH_SLACK:
                raise NotStochastic(f"step matrix for symbol {a.code} leaves [0, 1] at eps={eps}")
        return out

    def series(self, a: DetMatrix, order: int) -> np.ndarray:
        key = (a.code, order)
        s = self._series.get(key)
        if s is None:
            s = np.zeros((order + 1, self.k, self.k))
            s[0] = a.dense()
            if order >= 1:
                s[1] = self.first_order(a)
            s.setflags(write=False)
            self._series[key] = s
        return s

    def to_json(self) -> dict:
        return {"k": self.k, "entries": {str(c): fa.tolist() for c, fa in sorted(self.table.items())}}

    @classmethod
    def from_json(cls, obj) -> PerturbationMap:
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(int(obj["k"]), {int(c): fa for c, fa in obj.get("entries", {}).items()})


def validate_perturbation(f: PerturbationMap, alphabet: Alphabet) -> list[Violation]:
    if f.k != alphabet.k:
        raise InvalidDimension(f"perturbation has k={f.k}, alphabet k={alphabet.k}")
    out = []
    for code, fa in sorted(f.table.items()):
        out.extend(matrix_violations(code, f.k, fa))
    return out


def _quantize(x: np.ndarray) -> np.ndarray:
    # dyadic grid: sums of up to 2**14 entries stay exact in double precision
    return np.maximum(np.floor(x / QUANTUM), 1.0) * QUANTUM


def _signed_matrix(rng: np.random.Generator, a: DetMatrix, c: float) -> np.ndarray:
    k = a.k
    cols = np.arange(k)
    pos = _quantize(rng.uniform(0.0, c, size=(k, k)))
    pos[list(a.digits), cols] = 0.0
    norm = 2.0 * pos.sum(axis=0).max()
    if norm > 1.0:
        pos = _quantize(pos / norm)
        pos[list(a.digits), cols] = 0.0
    fa = pos
    fa[list(a.digits), cols] = -pos.sum(axis=0)
    return fa


def random_perturbation(
    seed: int, alphabet: Alphabet, zero_fraction: float, magnitude: float, retries: int = 100
) -> PerturbationMap:
    """Random ``f`` obeying the strict sign condition, with exact zero column sums.

    Entries live on a dyadic grid so column sums vanish exactly in floating
    point.  Each symbol is kept with probability ``1 - zero_fraction``.
    """
    k = alphabet.k
    if not 0.0 <= zero_fraction <= 1.0:
        raise ValueError("zero_fraction must lie in [0, 1]")
    if not 0.0 < magnitude <= 1.0 / k:
        raise ValueError(f"magnitude must lie in (0, 1/{k}]")
    rng = np.random.default_rng(seed)
    keep = rng.random(len(alphabet)) >= zero_fraction
    table = {}
    for pos in np.flatnonzero(keep):
        a = alphabet.symbol(int(pos))
        for _ in range(retries):
            fa = _signed_matrix(rng, a, magnitude)
            if not matrix_violations(a.code, k, fa):
                break
        else:
            raise GenerationFailed(f"no valid f for symbol {a.code} after {retries} draws")
        table[a.code] = fa
    return PerturbationMap(k, table)


def step_matrix(eps: float, a: DetMatrix, f: Perturbation) -> np.ndarray:
    return f.step_matrix(eps, a)


def perturbed_cocycle(eps: float, omega: NoiseRealization, n: int, pullback: bool, f: Perturbation) -> np.ndarray:
    """Dense ``P_eps(n, omega)``, or ``P_eps(n, theta^{-n} omega)`` when ``pullback``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    out = np.eye(omega.k)
    if pullback:
        for z in range(1, n + 1):
            out = out @ f.step_matrix(eps, omega.symbol_at(-z))
    else:
        for z in range(n):
            out = f.step_matrix(eps, omega.symbol_at(z)) @ out
    return out


@dataclass(frozen=True)
class PolyMatrix:
    """``sum_l coeffs[l] eps**l`` with ``k x k`` coefficients, truncated at ``order``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise InvalidDimension(f"expected (m+1, k, k) coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def identity(cls, k: int, order: int) -> PolyMatrix:
        c = np.zeros((order + 1, k, k))
        c[0] = np.eye(k)
        return cls(c)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def k(self) -> int:
        return self.coeffs.shape[1]

    def __matmul__(self, other: PolyMatrix) -> PolyMatrix:
        if other.order != self.order or other.k != self.k:
            raise InvalidDimension("PolyMatrix order or dimension mismatch")
        a, b = self.coeffs, other.coeffs
        out = np.zeros_like(a)
        for ell in range(self.order + 1):
            for i in range(ell + 1):
                out[ell] += a[i] @ b[ell - i]
        return PolyMatrix(out)

    def evaluate(self, eps: float) -> np.ndarray:
        out = np.zeros(self.coeffs.shape[1:])
        for c in self.coeffs[::-1]:
            out = out * eps + c
        return out

    def derivative(self, ell: int) -> np.ndarray:
        """The ``ell``-th eps-derivative at 0, i.e. ``ell! * coeffs[ell]``."""
        return math.factorial(ell) * self.coeffs[ell]


def _mul_truncated(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = a.shape[0] - 1
    out = np.zeros_like(a)
    for ell in range(m + 1):
        for i in range(ell + 1):
            if b.shape[0] > ell - i:
                out[ell] += a[i] @ b[ell - i]
    return out


def poly_cocycle(omega: NoiseRealization, n: int, order: int, pullback: bool, f: Perturbation) -> PolyMatrix:
    if n < 0:
        raise ValueError("n must be non-negative")
    if order < 1:
        raise ValueError("order must be >= 1")
    acc = PolyMatrix.identity(omega.k, order).coeffs
    for z in range(1, n + 1) if pullback else range(n):
        s = f.series(omega.symbol_at(-z if pullback else z), order)
        acc = _mul_truncated(acc, s) if pullback else _mul_truncated(s, acc)
    return PolyMatrix(acc)


# probabilistic Boolean networks


def _popcount_table(g: int) -> np.ndarray:
    k = 1 << g
    x = np.arange(k)[:, None] ^ np.arange(k)[None, :]
    return np.array([bin(v).count("1") for v in range(k)])[x]


class PbnModel:
    """Boolean network on ``g`` genes whose genes flip independently.

    With flip probability ``p`` a state either follows the network update
    (no gene flipped, probability ``(1-p)**g``) or jumps to the state with
    the drawn flip mask applied.  As a Markov perturbation the parameter is
    ``eps = C p`` with ``C = 2g``, which makes ``|P_eps(1) - P0(1)| <= eps``.
    """

    def __init__(self, g: int, alphabet: Alphabet):
        if not 1 <= g <= MAX_G:
            raise GTooLarge(f"g must lie in 1..{MAX_G}, got {g}")
        if alphabet.k != 1 << g:
            raise InvalidDimension(f"alphabet k={alphabet.k} but 2**g = {1 << g}")
        self.g = g
        self.k = 1 << g
        self.alphabet = alphabet
        self.reparam = 2 * g
        self._pop = _popcount_table(g)
        self._series: dict[tuple[int, int], np.ndarray] = {}

    def __repr__(self) -> str:
        return f"PbnModel(g={self.g}, contexts={len(self.alphabet)})"

    def flip_probability(self, eps: float) -> float:
        return min(eps, 1.0) / self.reparam

    def kernel(self, p, a: DetMatrix, exact: bool = False) -> np.ndarray:
        """One-step kernel at flip probability ``p``; ``exact`` uses Fractions."""
        g = self.g
        if exact:
            p = Fraction(p)
            w = [p**h * (1 - p) ** (g - h) for h in range(g + 1)]
            w[0] = Fraction(0)
            out = np.array(w, dtype=object)[self._pop]
            stay = (1 - p) ** g
        else:
            w = np.array([p**h * (1.0 - p) ** (g - h) for h in range(g + 1)])
            w[0] = 0.0
            out = w[self._pop]
            stay = (1.0 - p) ** g
        out[list(a.digits), np.arange(self.k)] += stay
        return out

    def step_matrix(self, eps: float, a: DetMatrix) -> np.ndarray:
        if eps < 0:
            raise ValueError("eps must be non-negative")
        return self.kernel(self.flip_probability(eps), a)

    def series(self, a: DetMatrix, order: int) -> np.ndarray:
        key = (a.code, order)
        s = self._series.get(key)
        if s is not None:
            return s
        g, c = self.g, self.reparam
        # coefficient of p**r in p**h (1-p)**(g-h), rescaled to powers of eps
        top = min(order, g)
        coef = np.zeros((order + 1, g + 1))
        for h in range(g + 1):
            for r in range(h, top + 1):
                coef[r, h] = math.comb(g - h, r - h) * (-1) ** (r - h) / c**r
        s = np.zeros((order + 1, self.k, self.k))
        cols = np.arange(self.k)
        for r in range(order + 1):
            w = coef[r].copy()
            stay = w[0]
            w[0] = 0.0
            s[r] = w[self._pop]
            s[r][list(a.digits), cols] += stay
        s.setflags(write=False)
        self._series[key] = s
        return s

    def first_order(self, a: DetMatrix) -> np.ndarray:
        return self.series(a, 1)[1]

    def linearization(self, a: DetMatrix) -> np.ndarray:
        """``d/dp`` of the kernel at 0: ``-g e_T`` plus every Hamming-1 neighbor."""
        return self.first_order(a) * self.reparam

    def is_zero(self, a: DetMatrix) -> bool:
        return False

    def to_json(self) -> dict:
        return {"g": self.g, "alphabet": self.alphabet.to_json()}


def random_boolean_maps(g: int, n: int, seed: int) -> Alphabet:
    """``n`` distinct uniformly random update maps on ``{0,1}**g``."""
    if not 1 <= g <= MAX_G:
        raise GTooLarge(f"g must lie in 1..{MAX_G}, got {g}")
    k = 1 << g
    if n < 1 or n > k**k:
        raise ValueError(f"need 1 <= contexts <= {k**k}")
    rng = np.random.default_rng(seed)
    seen: dict[tuple[int, ...], None] = {}
    while len(seen) < n:
        seen.setdefault(tuple(int(t) for t in rng.integers(0, k, size=k)), None)
    return Alphabet(k, np.array(list(seen)))


def pbn_model(g: int, context_seed: int, n_contexts: int) -> PbnModel:
    if not 1 <= g <= MAX_G:
        raise GTooLarge(f"g must lie in 1..{MAX_G}, got {g}")
    return PbnModel(g, random_boolean_maps(g, n_contexts, context_seed))
