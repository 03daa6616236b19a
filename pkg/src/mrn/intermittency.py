"""Meeting probabilities of independent copies and intermittent synchronization.

Two chains driven by the same noise realization but independent intrinsic
noise meet at time n with probability ``sum_j (P qx)_j (P qy)_j``.  Times are
split into a high-probability synchronization class E and a
low-probability desynchronization class F by thresholds on that quantity;
the measures of the degeneracy sets ``Omega^(l)`` predict the split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import ZERO_TOL, in_omega_bullet, taylor_q
from .drn import DEFAULT_CAP, pullback_sync
from .errors import CappedSyncTime, DepthExceeded, ThresholdOverlap
from .linalg import as_prob_vector, l1_norm, uniform
from .noise import Alphabet, NoiseRealization, sample_realization
from .perturbation import Perturbation

MIN_HORIZON = 1000
B_FLOOR = 1e-12


def _start(q, k: int) -> np.ndarray:
    return uniform(k) if q is None else as_prob_vector(q)


def meet_curve(eps: float, omega: NoiseRealization, horizon: int, f: Perturbation, qx=None, qy=None) -> np.ndarray:
    """Exact meeting probabilities at ``n = 0..horizon``."""
    k = omega.k
    x, y = _start(qx, k), _start(qy, k)
    out = np.empty(horizon + 1)
    out[0] = float(x @ y)
    for n in range(horizon):
        s = f.step_matrix(eps, omega.symbol_at(n))
        x, y = s @ x, s @ y
        out[n + 1] = float(x @ y)
    return np.clip(out, 0.0, 1.0)


def meet_probability(eps: float, omega: NoiseRealization, n: int, f: Perturbation, qx=None, qy=None) -> float:
    if n < 0:
        raise ValueError("n must be non-negative")
    return float(meet_curve(eps, omega, n, f, qx, qy)[n])


@dataclass
class PairTrajectoryStats:
    horizon: int
    meet_prob: np.ndarray
    mc_meet_freq: np.ndarray | None
    n_samples: int

    def sigma(self) -> np.ndarray:
        p = self.meet_prob
        return np.sqrt(p * (1.0 - p) / self.n_samples)


def _draw(rng: np.random.Generator, cum: np.ndarray, states: np.ndarray) -> np.ndarray:
    u = rng.random(states.size)
    nxt = (cum[:, states] <= u).sum(axis=0)
    return np.minimum(nxt, cum.shape[0] - 1)


def simulate_pair(
    eps: float,
    omega: NoiseRealization,
    horizon: int,
    n_samples: int,
    seed: int,
    f: Perturbation,
    qx=None,
    qy=None,
) -> PairTrajectoryStats:
    """Monte-Carlo meeting frequencies of ``n_samples`` independent chain pairs."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    k = omega.k
    px, py = _start(qx, k), _start(qy, k)
    rng = np.random.default_rng(seed)
    x = np.minimum(np.searchsorted(np.cumsum(px), rng.random(n_samples), side="right"), k - 1)
    y = np.minimum(np.searchsorted(np.cumsum(py), rng.random(n_samples), side="right"), k - 1)
    freq = np.empty(horizon + 1)
    freq[0] = np.mean(x == y)
    for n in range(horizon):
        cum = np.cumsum(f.step_matrix(eps, omega.symbol_at(n)), axis=0)
        x, y = _draw(rng, cum, x), _draw(rng, cum, y)
        freq[n + 1] = np.mean(x == y)
    return PairTrajectoryStats(horizon, meet_curve(eps, omega, horizon, f, px, py), freq, n_samples)


@dataclass
class TimeClassification:
    e_times: np.ndarray
    f_times: np.ndarray
    density_e: float
    density_f: float
    thresholds: tuple[float, float]

    def labels(self, horizon: int) -> list[str]:
        out = ["U"] * (horizon + 1)
        for n in self.e_times:
            out[n] = "E"
        for n in self.f_times:
            out[n] = "F"
        return out


def classify_curve(meet: np.ndarray, eps: float, ell: int, b: float, c: float) -> TimeClassification:
    """Split ``n = 1..horizon`` by the thresholds ``1 - eps^l b`` and ``eps^l c``."""
    horizon = meet.size - 1
    if horizon < MIN_HORIZON:
        raise ValueError(f"horizon must be >= {MIN_HORIZON}")
    if b <= 0 or c <= 0:
        raise ValueError("b and c must be positive")
    scale = eps**ell
    if scale * (b + c) >= 1.0:
        raise ThresholdOverlap(f"eps^l (b + c) = {scale * (b + c)} >= 1")
    gap = 1.0 - meet[1:]
    is_e = gap <= scale * b
    is_f = (gap >= scale * c) & ~is_e
    n = np.arange(1, horizon + 1)
    return TimeClassification(
        n[is_e], n[is_f], is_e.sum() / horizon, is_f.sum() / horizon, (1.0 - scale * b, scale * c)
    )


def classify_times(
    eps: float, omega: NoiseRealization, horizon: int, ell: int, b: float, c: float, f: Perturbation, qx=None, qy=None
) -> TimeClassification:
    if horizon < MIN_HORIZON:
        raise ValueError(f"horizon must be >= {MIN_HORIZON}")
    return classify_curve(meet_curve(eps, omega, horizon, f, qx, qy), eps, ell, b, c)


def omega_membership(
    omega: NoiseRealization, f: Perturbation, ell: int, times, depth_cap: int = DEFAULT_CAP
) -> np.ndarray:
    """``theta^n omega in Omega^(l)`` for each ``n`` in ``times``."""
    out = []
    for n in times:
        tc = taylor_q(omega.shifted(int(n)), f, ell, depth_cap)
        out.append(all(l1_norm(q) <= ZERO_TOL for q in tc.q))
    return np.array(out, dtype=bool)


def fit_thresholds(meet: np.ndarray, eps: float, ell: int, member: np.ndarray) -> tuple[float, float]:
    """Empirical ``(b, c)``: 1.5 x the worst gap on member times, 0.5 x the least gap elsewhere.

    ``member[i]`` refers to time ``n = i + 1``.  ``b`` is floored at
    ``B_FLOOR`` since on exactly degenerate times the gap can vanish.
    """
    scaled = (1.0 - meet[1:]) / eps**ell
    inside, outside = scaled[member], scaled[~member]
    b = max(1.5 * float(inside.max()) if inside.size else 0.0, B_FLOOR)
    c = 0.5 * float(outside.min()) if outside.size else B_FLOOR
    return b, max(c, B_FLOOR)


@dataclass
class OmegaMeasures:
    mu_omega_ell: np.ndarray
    mu_omega_bullet: float
    ell_star: int | None
    a_value: float | None
    n_samples: int
    n_excluded: int = 0
    n_disagree: int = 0

    @property
    def a_user_chosen(self) -> bool:
        return self.ell_star is not None and self.a_value is None


def symbol_test(omega: NoiseRealization, f: Perturbation, cap: int = DEFAULT_CAP) -> bool:
    """``f(A_{-1}) = ... = f(A_{-N0-}) = 0``, the symbolic form of ``q^(1) = 0``."""
    n, _, capped = pullback_sync(omega, cap)
    if capped:
        raise CappedSyncTime(f"no pull-back synchronization within {cap} steps")
    return all(f.is_zero(omega.symbol_at(-z)) for z in range(1, n + 1))


def ell_star_and_a(mu: np.ndarray) -> tuple[int | None, float | None]:
    chain = np.concatenate([[1.0], mu])
    drops = [ell for ell in range(1, chain.size) if chain[ell - 1] - chain[ell] > 0]
    if not drops:
        return None, None
    ell = max(drops)
    a = float(chain[ell])
    return ell, (a if a > 0 else None)


@dataclass
class OmegaCounts:
    """Raw per-sample tallies; merging across seed chunks is plain addition."""

    hits: np.ndarray
    bullet: int = 0
    used: int = 0
    excluded: int = 0
    disagree: int = 0

    def __add__(self, other: OmegaCounts) -> OmegaCounts:
        return OmegaCounts(
            self.hits + other.hits,
            self.bullet + other.bullet,
            self.used + other.used,
            self.excluded + other.excluded,
            self.disagree + other.disagree,
        )

    def measures(self) -> OmegaMeasures:
        m = self.hits.size
        if self.used == 0:
            return OmegaMeasures(np.full(m, np.nan), float("nan"), None, None, 0, self.excluded, self.disagree)
        mu = self.hits / self.used
        ell, a = ell_star_and_a(mu)
        return OmegaMeasures(mu, self.bullet / self.used, ell, a, self.used, self.excluded, self.disagree)


def omega_set_counts(alphabet: Alphabet, f: Perturbation, m: int, seeds, depth_cap: int = DEFAULT_CAP) -> OmegaCounts:
    counts = OmegaCounts(np.zeros(m, dtype=np.int64))
    for s in seeds:
        omega = sample_realization(s, alphabet)
        try:
            tc = taylor_q(omega, f, m, depth_cap)
        except (DepthExceeded, CappedSyncTime):
            counts.excluded += 1
            continue
        counts.used += 1
        zero = [l1_norm(q) <= ZERO_TOL for q in tc.q]
        counts.hits += np.cumprod(zero).astype(np.int64)
        if symbol_test(omega, f) != zero[0]:
            counts.disagree += 1
        counts.bullet += in_omega_bullet(omega, f)
    return counts


def omega_set_measures(
    alphabet: Alphabet, f: Perturbation, m: int, seeds, depth_cap: int = DEFAULT_CAP
) -> OmegaMeasures:
    """Monte-Carlo measures of ``Omega^(1..m)`` and of ``Omega_bullet``.

    Samples whose pull-back depth exceeds ``depth_cap`` are excluded and
    counted.  ``n_disagree`` counts samples where the symbolic test for
    ``Omega^(1)`` and the vanishing of ``q^(1)`` differ.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seeds must be non-empty")
    return omega_set_counts(alphabet, f, m, seeds, depth_cap).measures()
