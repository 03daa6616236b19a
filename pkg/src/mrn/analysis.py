"""Lyapunov exponents, pull-back invariant distributions and Taylor coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .drn import DEFAULT_CAP, cocycle_pullback, exact_apply, pullback_sync
from .errors import CappedSyncTime, ConsistencyError, DepthExceeded, InvalidDimension, ResidualUnderflow
from .linalg import DetMatrix, l1_norm, unit, uniform
from .noise import NoiseRealization
from .perturbation import Perturbation, poly_cocycle

ZERO_TOL = 1e-12
UNDERFLOW = 1e-13


class _NegInf:
    """Marker for an exactly vanishing propagated vector."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NEG_INFINITY"

    def __float__(self) -> float:
        return -math.inf


NEG_INFINITY = _NegInf()


@dataclass
class LyapunovEstimate:
    value: float | _NegInf
    n_used: int
    log_trace: np.ndarray = field(repr=False)

    @property
    def is_neg_infinity(self) -> bool:
        return self.value is NEG_INFINITY


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def _fit_tail(trace: np.ndarray) -> float:
    start = int(len(trace) * 0.2)
    tail = trace[start:]
    return _slope(tail[:, 0], tail[:, 1])


def lyapunov(eps: float, omega: NoiseRealization, v, n_max: int, f: Perturbation) -> LyapunovEstimate:
    """Growth rate of ``|P_eps(n, omega) v|`` from the last 80% of the trace.

    At ``eps = 0`` the image is a regrouping of the entries of ``v`` and is
    evaluated with exactly rounded sums, so a cancellation to zero is seen
    exactly.  Otherwise the vector is renormalized every step.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (omega.k,):
        raise InvalidDimension(f"vector of shape {v.shape} for k={omega.k}")
    if not np.any(v):
        raise ValueError("v must be non-zero")
    if n_max < 100:
        raise ValueError("n_max must be >= 100")
    logs = np.empty(n_max)
    if eps == 0:
        cur = tuple(range(omega.k))
        for n in range(n_max):
            a = omega.digits_at(n)
            cur = tuple(a[t] for t in cur)
            norm = l1_norm(exact_apply(DetMatrix(cur), v))
            if norm == 0.0:
                return LyapunovEstimate(NEG_INFINITY, n + 1, _trace(logs[:n]))
            logs[n] = math.log(norm)
    else:
        # Sigma_0 is invariant; re-projecting stops rounding error from
        # seeding the (non-contracting) direction outside it
        in_sigma0 = math.fsum(v) == 0.0
        w = v / l1_norm(v)
        acc = math.log(l1_norm(v))
        # a run of unperturbed symbols composing to rank one kills Sigma_0 exactly
        run = tuple(range(omega.k))
        for n in range(n_max):
            a = omega.symbol_at(n)
            if in_sigma0:
                run = tuple(a.digits[t] for t in run) if f.is_zero(a) else tuple(range(omega.k))
                if len(set(run)) == 1:
                    return LyapunovEstimate(NEG_INFINITY, n + 1, _trace(logs[:n]))
            w = f.step_matrix(eps, a) @ w
            if in_sigma0:
                w -= w.mean()
            norm = l1_norm(w)
            if norm == 0.0:
                return LyapunovEstimate(NEG_INFINITY, n + 1, _trace(logs[:n]))
            acc += math.log(norm)
            logs[n] = acc
            w = w / norm
    trace = _trace(logs)
    return LyapunovEstimate(_fit_tail(trace), n_max, trace)


def _trace(logs: np.ndarray) -> np.ndarray:
    return np.column_stack([np.arange(1, len(logs) + 1, dtype=float), logs])


@dataclass
class InvariantDistribution:
    p: np.ndarray
    depth: int
    residual: float
    converged: bool
    start_deviation: float


def _pullback_factor(eps: float, omega: NoiseRealization, z: int, f: Perturbation):
    a = omega.symbol_at(z)
    if eps == 0 or f.is_zero(a):
        return a
    return f.step_matrix(eps, a)


def _column_spread(m: np.ndarray) -> float:
    # every convex combination of columns lies within twice this of column 0
    return 2.0 * float(np.abs(m - m[:, :1]).sum(axis=0).max())


def _emit(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def invariant_distribution(
    eps: float,
    omega: NoiseRealization,
    f: Perturbation,
    tol: float = 1e-12,
    depth_cap: int = DEFAULT_CAP,
) -> InvariantDistribution:
    """Pull-back limit ``p_eps(omega)`` of ``P_eps(n, theta^{-n} omega) q``.

    The product is folded with each new deepest factor appended on the
    right.  Iteration stops once all columns agree to within ``tol`` (the
    limit is then known to ``tol`` for every starting vector), which at
    ``eps = 0`` happens exactly at the pull-back sync time.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = omega.k
    m = np.eye(k)
    spread = math.inf
    depth = 0
    for depth in range(1, depth_cap + 1):
        m = m @ _pullback_factor(eps, omega, -depth, f)
        spread = _column_spread(m)
        if spread < tol:
            break
    p = _emit(m @ uniform(k))
    dev = l1_norm(m @ uniform(k) - m[:, 0])
    return InvariantDistribution(p, depth, spread, spread < tol, dev)


def pullback_recompute(eps: float, omega: NoiseRealization, f: Perturbation, n: int, q0=None) -> np.ndarray:
    """Reference evaluation of ``P_eps(n, theta^{-n} omega) q0`` from scratch."""
    k = omega.k
    q = uniform(k) if q0 is None else np.asarray(q0, dtype=float)
    shifted = omega.shifted(-n)
    for z in range(n):
        q = f.step_matrix(eps, shifted.symbol_at(z)) @ q
    return q


def _sync(omega: NoiseRealization, cap: int) -> tuple[int, int]:
    n, j, capped = pullback_sync(omega, cap)
    if capped:
        raise CappedSyncTime(f"no pull-back synchronization within {cap} steps at offset {omega.offset}")
    return n, j


def dissipation(omega: NoiseRealization, f: Perturbation, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``d(omega) = f(A_0) e_J(omega)``, the first-order leak out of the synchronized state."""
    _, j = _sync(omega, cap)
    a0 = omega.symbol_at(0)
    d = np.array(f.first_order(a0)[:, j])
    target = a0.digits[j]  # J(theta omega)
    others = np.delete(d, target)
    if np.any(others < 0):
        raise ConsistencyError(f"dissipation has negative mass off J(theta omega): {d}")
    return d


@dataclass
class TaylorCoefficients:
    j_index: int
    q: list[np.ndarray]
    depth_total: int


def taylor_q(
    omega: NoiseRealization, f: Perturbation, m: int, depth_cap: int = DEFAULT_CAP, cap: int = DEFAULT_CAP
) -> TaylorCoefficients:
    """``q^(1..m)(omega)`` by the pull-back recursion over minimal sync times."""
    if m < 1:
        raise ValueError("m must be >= 1")
    k = omega.k
    base = omega.offset
    memo: dict[tuple[int, int], np.ndarray] = {}
    sync: dict[int, tuple[int, int]] = {}
    polys: dict[int, np.ndarray] = {}
    deepest = 0

    def sync_at(off: int) -> tuple[int, int]:
        if off not in sync:
            sync[off] = _sync(omega.shifted(off - base), cap)
        return sync[off]

    def q(off: int, level: int) -> np.ndarray:
        nonlocal deepest
        key = (off, level)
        if key in memo:
            return memo[key]
        n, j = sync_at(off)
        if level == 0:
            out = unit(k, j)
        else:
            deeper = off - n
            deepest = max(deepest, base - deeper)
            if deepest > depth_cap:
                raise DepthExceeded(f"pull-back depth {deepest} exceeds {depth_cap}")
            if off not in polys:
                polys[off] = poly_cocycle(omega.shifted(off - base), n, m, True, f).coeffs
            c = polys[off]
            out = np.zeros(k)
            for i in range(level):
                r = level - i
                deriv = math.factorial(r) * c[r]
                out += math.comb(level, i) * (deriv @ q(deeper, i))
        memo[key] = out
        return out

    _, j0 = sync_at(base)
    coeffs = [q(base, level) for level in range(1, m + 1)]
    return TaylorCoefficients(j0, coeffs, deepest)


def q1_direct(omega: NoiseRealization, f: Perturbation, extra: int = 0, cap: int = DEFAULT_CAP) -> np.ndarray:
    """First-order coefficient as the finite pull-back sum of dissipations."""
    n, _ = _sync(omega, cap)
    total = np.zeros(omega.k)
    for ell in range(n + extra):
        d = dissipation(omega.shifted(-ell - 1), f, cap)
        if np.any(d):
            total += cocycle_pullback(omega, ell).apply(d)
    return total


def n_minus_independence(omega: NoiseRealization, f: Perturbation, extra: int, cap: int = DEFAULT_CAP) -> float:
    if extra < 1:
        raise ValueError("extra must be >= 1")
    return l1_norm(q1_direct(omega, f, 0, cap) - q1_direct(omega, f, extra, cap))


def s_bullet(omega: NoiseRealization, cap: int = DEFAULT_CAP) -> set[int]:
    """States sent by ``A_0`` straight onto ``J(theta omega)``."""
    _, j_next = _sync(omega.shifted(1), cap)
    return {j for j, t in enumerate(omega.digits_at(0)) if t == j_next}


def in_omega_bullet(omega: NoiseRealization, f: Perturbation, cap: int = DEFAULT_CAP) -> bool:
    """Does first-order dissipation at ``omega`` only feed states that resync in one step?"""
    d = dissipation(omega, f, cap)
    allowed = s_bullet(omega.shifted(1), cap)
    return all(d[j] == 0 for j in range(omega.k) if j not in allowed)


class Degeneracy(NamedTuple):
    d_prev_zero: bool
    in_omega_bullet_window: bool
    q1_zero: bool


def degeneracy_check(omega: NoiseRealization, f: Perturbation, cap: int = DEFAULT_CAP) -> Degeneracy:
    """Evaluate both degeneracy criteria for ``q^(1)`` and assert they hold."""
    n, _ = _sync(omega, cap)
    d_prev_zero = not np.any(dissipation(omega.shifted(-1), f, cap))
    window = all(in_omega_bullet(omega.shifted(-(ell + 1)), f, cap) for ell in range(1, n))
    q1_zero = l1_norm(q1_direct(omega, f, 0, cap)) <= ZERO_TOL
    if not d_prev_zero and q1_zero:
        raise ConsistencyError("non-zero dissipation one step back but q1 vanishes")
    if d_prev_zero and window and not q1_zero:
        raise ConsistencyError("degenerate window but q1 does not vanish")
    return Degeneracy(d_prev_zero, window, q1_zero)


def taylor_residuals(
    omega: NoiseRealization, f: Perturbation, m: int, eps_grid, depth_cap: int = DEFAULT_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """``|p_eps - e_J - sum_l eps^l q^(l) / l!|`` over the grid, largest eps first.

    Each ``p_eps`` is iterated to ``min(eps)**(m + 2)`` so iteration error
    stays below the remainder being measured.
    """
    eps_grid = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    if eps_grid.size < 4 or eps_grid[-1] <= 0 or eps_grid[0] > 0.1:
        raise ValueError("need at least 4 eps values in (0, 0.1]")
    tol = float(eps_grid.min()) ** (m + 2)
    tc = taylor_q(omega, f, m, depth_cap)
    e_j = unit(omega.k, tc.j_index)
    res = []
    for eps in eps_grid:
        inv = invariant_distribution(eps, omega, f, tol=tol, depth_cap=depth_cap)
        if not inv.converged:
            raise DepthExceeded(f"invariant distribution not converged at eps={eps}")
        approx = e_j + sum(eps ** (ell + 1) * q / math.factorial(ell + 1) for ell, q in enumerate(tc.q))
        res.append(l1_norm(inv.p - approx))
    return eps_grid, np.array(res)


def residual_slope(eps: np.ndarray, res: np.ndarray) -> float:
    """Log-log slope of residual against eps.

    Raises :class:`ResidualUnderflow` unless every residual is resolvable;
    the exception carries the slope over the usable (largest-eps) prefix.
    """
    usable = 0
    while usable < res.size and res[usable] >= UNDERFLOW:
        usable += 1
    slope = _slope(np.log(eps[:usable]), np.log(res[:usable])) if usable >= 2 else float("nan")
    if usable < res.size:
        raise ResidualUnderflow(f"{res.size - usable} residuals below {UNDERFLOW}", slope, usable)
    return slope


def taylor_residual_slope(
    omega: NoiseRealization, f: Perturbation, m: int, eps_grid, depth_cap: int = DEFAULT_CAP
) -> float:
    return residual_slope(*taylor_residuals(omega, f, m, eps_grid, depth_cap))
