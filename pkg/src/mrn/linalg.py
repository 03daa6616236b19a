"""Linear algebra on stochastic vectors and matrices under the l1 norm.

Matrices are column-stochastic throughout: column ``j`` holds the image
distribution of state ``j``.  States are indexed from 0.

Probability vectors, zero-sum vectors and dense matrices are plain numpy
arrays; the ``as_*`` helpers validate them.  Deterministic (0-1)
stochastic matrices get their own compact type, :class:`DetMatrix`, which
stores only the image of every state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConsistencyError, InvalidDimension, NotAProbability

TOL_STOCH = 1e-9


@dataclass(frozen=True)
class DetMatrix:
    """A 0-1 column-stochastic ``k x k`` matrix stored as a map of states.

    ``digits[j]`` is the (0-based) state that state ``j`` is sent to, so the
    dense form has a single 1 in row ``digits[j]`` of column ``j``.
    """

    digits: tuple[int, ...]

    # let numpy defer ``ndarray @ DetMatrix`` to __rmatmul__
    __array_ufunc__ = None

    def __post_init__(self):
        digits = tuple(int(t) for t in self.digits)
        k = len(digits)
        if k < 2:
            raise InvalidDimension(f"need k >= 2 states, got {k}")
        if any(t < 0 or t >= k for t in digits):
            raise InvalidDimension(f"digits must lie in 0..{k - 1}: {digits}")
        object.__setattr__(self, "digits", digits)

    @classmethod
    def identity(cls, k: int) -> DetMatrix:
        return cls(tuple(range(k)))

    @classmethod
    def constant(cls, k: int, target: int = 0) -> DetMatrix:
        """The rank-one matrix sending every state to ``target``."""
        return cls((target,) * k)

    @classmethod
    def from_code(cls, k: int, code: int) -> DetMatrix:
        """Inverse of :attr:`code`."""
        if not 0 <= code < k**k:
            raise InvalidDimension(f"code {code} outside 0..{k**k - 1}")
        digits = []
        for _ in range(k):
            code, t = divmod(code, k)
            digits.append(t)
        return cls(tuple(digits))

    @classmethod
    def from_dense(cls, a, tol: float = TOL_STOCH) -> DetMatrix:
        a = _square(a)
        flags = classify(a, tol)
        if not flags.is_deterministic:
            raise NotAProbability("matrix is not a deterministic stochastic matrix")
        return cls(tuple(int(i) for i in np.argmax(a, axis=0)))

    @property
    def k(self) -> int:
        return len(self.digits)

    @property
    def code(self) -> int:
        """Canonical symbol index ``sum_j digits[j] * k**j``."""
        k = self.k
        return sum(t * k**j for j, t in enumerate(self.digits))

    @property
    def rank(self) -> int:
        return len(set(self.digits))

    def dense(self) -> np.ndarray:
        k = self.k
        out = np.zeros((k, k))
        out[list(self.digits), range(k)] = 1.0
        return out

    def compose(self, other: DetMatrix) -> DetMatrix:
        """Matrix product ``self @ other`` (apply ``other`` first)."""
        if other.k != self.k:
            raise InvalidDimension(f"dimension mismatch {self.k} vs {other.k}")
        d = self.digits
        return DetMatrix(tuple(d[t] for t in other.digits))

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.k,):
            raise InvalidDimension(f"vector of shape {v.shape} for k={self.k}")
        return np.bincount(self.digits, weights=v, minlength=self.k)

    def __matmul__(self, other):
        if isinstance(other, DetMatrix):
            return self.compose(other)
        other = np.asarray(other, dtype=float)
        if other.ndim == 1:
            return self.apply(other)
        if other.shape[0] != self.k:
            raise InvalidDimension(f"shape {other.shape} for k={self.k}")
        return self.dense() @ other

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        if other.ndim != 2 or other.shape[1] != self.k:
            raise InvalidDimension(f"shape {other.shape} for k={self.k}")
        # column j of (M A) is column digits[j] of M
        return other[:, list(self.digits)]


class Classification(NamedTuple):
    is_stochastic: bool
    is_deterministic: bool
    is_zero_col_sum: bool


def _square(a) -> np.ndarray:
    if isinstance(a, DetMatrix):
        return a.dense()
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise InvalidDimension(f"expected a square k x k matrix with k >= 2, got {a.shape}")
    return a


def _dims(x) -> np.ndarray:
    if isinstance(x, DetMatrix):
        return x.dense()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] < 2:
            raise InvalidDimension(f"need k >= 2, got vector of length {x.shape[0]}")
        return x
    return _square(x)


def l1_norm(x) -> float:
    """l1 norm of a vector, or the induced (max column sum) norm of a matrix."""
    x = _dims(x)
    if x.ndim == 1:
        return float(np.abs(x).sum())
    return float(np.abs(x).sum(axis=0).max())


def mat_mul(a, b):
    """Matrix product; two :class:`DetMatrix` operands compose exactly."""
    if isinstance(a, DetMatrix) and isinstance(b, DetMatrix):
        return a.compose(b)
    if isinstance(b, DetMatrix):
        return b.__rmatmul__(_square(a))
    a, b = _square(a), _square(b)
    if a.shape != b.shape:
        raise InvalidDimension(f"dimension mismatch {a.shape} vs {b.shape}")
    return a @ b


def apply(a, v) -> np.ndarray:
    """Image ``A v`` of a vector under a matrix."""
    if isinstance(a, DetMatrix):
        return a.apply(v)
    a = _square(a)
    v = np.asarray(v, dtype=float)
    if v.shape != (a.shape[1],):
        raise InvalidDimension(f"vector of shape {v.shape} for k={a.shape[1]}")
    return a @ v


def classify(a, tol: float = TOL_STOCH) -> Classification:
    a = _square(a)
    col = a.sum(axis=0)
    stochastic = bool(np.all(a >= -tol) and np.all(np.abs(col - 1.0) <= tol))
    deterministic = stochastic and bool(
        np.all((np.abs(a) <= tol) | (np.abs(a - 1.0) <= tol))
    )
    zero_col = bool(np.all(np.abs(col) <= tol))
    return Classification(stochastic, deterministic, zero_col)


def det_rank(a: DetMatrix) -> int:
    return a.rank


def unit(k: int, j: int) -> np.ndarray:
    e = np.zeros(k)
    e[j] = 1.0
    return e


def uniform(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def as_prob_vector(v, tol: float = TOL_STOCH) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 2:
        raise InvalidDimension(f"expected a vector with k >= 2 entries, got shape {v.shape}")
    if np.any(v < -tol) or np.any(v > 1 + tol) or abs(math.fsum(v) - 1.0) > tol:
        raise NotAProbability(f"not a probability vector: {v}")
    return v


def as_zero_sum(v, tol: float = TOL_STOCH) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 2:
        raise InvalidDimension(f"expected a vector with k >= 2 entries, got shape {v.shape}")
    if abs(math.fsum(v)) > tol:
        raise NotAProbability(f"entries do not sum to zero: {v}")
    return v


def coord_from_distance(v, j: int) -> float:
    """Recover ``v[j]`` from the l1 distance to the unit vector ``e_j``."""
    v = as_prob_vector(v)
    if not 0 <= j < v.shape[0]:
        raise InvalidDimension(f"state {j} outside 0..{v.shape[0] - 1}")
    value = 1.0 - l1_norm(v - unit(v.shape[0], j)) / 2.0
    if abs(value - v[j]) > TOL_STOCH:
        raise ConsistencyError(f"coordinate identity failed: {value} != {v[j]}")
    return value


def dense_product(factors: Sequence) -> np.ndarray:
    """Ordered product ``factors[0] @ factors[1] @ ...`` as a dense matrix."""
    if not factors:
        raise InvalidDimension("empty product has no dimension")
    out = _square(factors[0]).copy()
    for f in factors[1:]:
        out = mat_mul(out, f)
    return out
