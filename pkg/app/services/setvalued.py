"""
Order-interval valued maps: the three example families on grid functions and
interval maps on ℝⁿ, plus selections, graph distance and u.s.c. witnesses.

Every value set is represented by a pair of pointwise envelopes (w_lo, w_hi).
"""

import abc
import logging
from collections.abc import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.exceptions import EvaluationError
from app.models.domain import UscReport
from app.services.profiles import BivariateProfile, Profile

logger = logging.getLogger(__name__)

_ZERO_TOL = 1e-14


class SetValuedMap(abc.ABC):
    """x ↦ compact convex set, given by componentwise envelopes."""

    name: str = "set-valued map"

    @abc.abstractmethod
    def extremes(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ...

    def select(self, u: np.ndarray, s) -> np.ndarray:
        lo, hi = self.extremes(u)
        s = np.asarray(s, dtype=float)
        return (1.0 - s) * lo + s * hi

    def contains_zero(self, u: np.ndarray) -> bool:
        """Whether the zero function belongs to the value at u."""
        lo, hi = self.extremes(u)
        return bool(np.all(lo <= _ZERO_TOL) and np.all(hi >= -_ZERO_TOL))

    def vanishing_points(self, u: np.ndarray) -> int:
        return 0


# --- finite-dimensional interval maps ---


class IntervalMap(SetValuedMap):
    """x ↦ Π [lo(x)_i, hi(x)_i] on ℝⁿ."""

    name = "interval"

    def __init__(self, lo: Callable[[np.ndarray], np.ndarray], hi: Callable[[np.ndarray], np.ndarray]):
        self._lo = lo
        self._hi = hi

    def extremes(self, u):
        lo = np.atleast_1d(np.asarray(self._lo(u), dtype=float))
        hi = np.atleast_1d(np.asarray(self._hi(u), dtype=float))
        if np.any(lo > hi):
            raise EvaluationError(f"empty interval value at x={u}")
        return lo, hi


class ConstantIntervalMap(IntervalMap):
    name = "constant interval"

    def __init__(self, lo, hi):
        lo_v = np.atleast_1d(np.asarray(lo, dtype=float))
        hi_v = np.atleast_1d(np.asarray(hi, dtype=float))
        super().__init__(lambda x: np.broadcast_to(lo_v, np.shape(x)), lambda x: np.broadcast_to(hi_v, np.shape(x)))


class SingletonMap(IntervalMap):
    name = "singleton"

    def __init__(self, func: Callable[[np.ndarray], np.ndarray]):
        super().__init__(func, func)


# --- grid-function families ---


class PiecewiseAffineBounds(SetValuedMap):
    """Piecewise-affine w on the node partition with u(t_j) − ρ ≤ w(t_j) ≤ u(t_j) + ρ."""

    name = "piecewise_affine"

    def __init__(self, grid: np.ndarray, nodes: list[float], rho: float):
        nodes_arr = np.asarray(nodes, dtype=float)
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        if nodes_arr[0] != 0.0 or nodes_arr[-1] != 1.0 or np.any(np.diff(nodes_arr) <= 0):
            raise ValueError("nodes must increase strictly from 0 to 1")
        self.grid = np.asarray(grid, dtype=float)
        self.nodes = nodes_arr
        self.rho = float(rho)

    def node_values(self, u: np.ndarray) -> np.ndarray:
        return np.interp(self.nodes, self.grid, u)

    def extremes(self, u):
        at_nodes = self.node_values(u)
        lo = np.interp(self.grid, self.nodes, at_nodes - self.rho)
        hi = np.interp(self.grid, self.nodes, at_nodes + self.rho)
        return lo, hi

    def contains_zero(self, u):
        # w ≡ 0 is affine on every piece, so only the node bounds matter
        return bool(np.all(np.abs(self.node_values(u)) <= self.rho))


class NonlocalInterval(SetValuedMap):
    """φ(u) = f(u)·[α(ū), β(ū)] with ū = ∫₀¹ u."""

    name = "nonlocal"

    def __init__(self, weights: np.ndarray, f: Callable, alpha: Callable, beta: Callable):
        self.weights = np.asarray(weights, dtype=float)
        self.f = f
        self.alpha = alpha
        self.beta = beta

    def mean(self, u: np.ndarray) -> float:
        return float(self.weights @ u)

    def coefficient_range(self, u: np.ndarray) -> tuple[float, float]:
        ubar = self.mean(u)
        a = float(self.alpha(ubar))
        b = float(self.beta(ubar))
        if not (np.isfinite(a) and np.isfinite(b)):
            raise EvaluationError(f"non-finite alpha/beta at mean {ubar}")
        if a > b:
            raise EvaluationError(f"alpha({ubar:.4g}) = {a:.4g} exceeds beta = {b:.4g}")
        return a, b

    def extremes(self, u):
        a, b = self.coefficient_range(u)
        fu = np.asarray(self.f(u), dtype=float)
        if not np.all(np.isfinite(fu)):
            raise EvaluationError("non-finite f(u)")
        return np.minimum(a * fu, b * fu), np.maximum(a * fu, b * fu)

    def select(self, u, s):
        # one scalar coefficient for the whole function; equals the envelope mix where f ≥ 0
        a, b = self.coefficient_range(u)
        c = (1.0 - float(s)) * a + float(s) * b
        return c * np.asarray(self.f(u), dtype=float)

    def contains_zero(self, u):
        a, b = self.coefficient_range(u)
        fu = np.asarray(self.f(u), dtype=float)
        return bool(np.all(np.abs(fu) <= _ZERO_TOL) or a <= 0.0 <= b)

    def vanishing_points(self, u):
        return int(np.count_nonzero(np.abs(np.asarray(self.f(u), dtype=float)) <= _ZERO_TOL))


class AumannInterval(SetValuedMap):
    """φ(u)(t) = ∫₀ᵗ [α(τ, u(τ)), β(τ, u(τ))] dτ."""

    name = "aumann"

    def __init__(self, grid: np.ndarray, alpha: BivariateProfile | Callable, beta: BivariateProfile | Callable):
        self.grid = np.asarray(grid, dtype=float)
        self.alpha = alpha
        self.beta = beta

    def integrand_bounds(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(self.alpha(self.grid, u), dtype=float)
        b = np.asarray(self.beta(self.grid, u), dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise EvaluationError("non-finite integrand bounds")
        return a, b

    def extremes(self, u):
        a, b = self.integrand_bounds(u)
        lo = cumulative_trapezoid(a, self.grid, initial=0.0)
        hi = cumulative_trapezoid(b, self.grid, initial=0.0)
        return lo, hi

    def contains_zero(self, u):
        a, b = self.integrand_bounds(u)
        return bool(np.all(a <= _ZERO_TOL) and np.all(b >= -_ZERO_TOL))


def profile_or_constant(value) -> Callable:
    if callable(value):
        return value
    return Profile.constant(float(value))


# --- operations ---


def eval_extremes(phi: SetValuedMap, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise EvaluationError("u must be finite")
    lo, hi = phi.extremes(u)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise EvaluationError(f"{phi.name}: non-finite envelope")
    return lo, hi


def make_selection(phi: SetValuedMap, u: np.ndarray, s) -> np.ndarray:
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
        raise ValueError(f"selection parameter must lie in [0, 1], got {s}")
    u = np.asarray(u, dtype=float)
    eval_extremes(phi, u)
    return np.asarray(phi.select(u, s), dtype=float)


def hull_distance(w: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Max-norm distance from w to the box [lo, hi]."""
    excess = np.maximum(lo - w, w - hi)
    return float(max(np.max(excess), 0.0))


def _ball_samples(u: np.ndarray, radius: float) -> list[np.ndarray]:
    samples = [u]
    for r in (radius, 0.5 * radius):
        for j in range(u.size):
            for sign in (1.0, -1.0):
                v = u.copy()
                v[j] += sign * r
                samples.append(v)
    for r in np.linspace(-radius, radius, 9):
        if r != 0.0:
            samples.append(u + r)
    return samples


def graph_distance(phi: SetValuedMap, u: np.ndarray, w: np.ndarray, search_radius: float) -> float:
    """
    Upper bound on dist((u, w), graph φ): the smallest max(‖u − u'‖_∞, dist(w, φ(u')))
    over sampled u' in the search ball.
    """
    if search_radius <= 0:
        raise ValueError("search_radius must be positive")
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    best = np.inf
    for v in _ball_samples(u, search_radius):
        shift = float(np.max(np.abs(v - u)))
        if shift >= best:
            continue
        lo, hi = phi.extremes(v)
        best = min(best, max(shift, hull_distance(w, lo, hi)))
        if best == 0.0:
            break
    return best


def _excess(lo0, hi0, lo1, hi1) -> float:
    return float(max(np.max(lo0 - lo1), np.max(hi1 - hi0), 0.0))


def usc_witness(
    phi: SetValuedMap,
    u: np.ndarray,
    delta_seq: list[float],
    samples_per_delta: int = 24,
    seed: int = 0,
) -> UscReport:
    """
    Numeric upper semicontinuity witness at u.

    h(δ) is the largest one-sided excess of φ(u') over φ(u) among sampled u' with
    ‖u' − u‖_∞ ≤ δ. Samples are pooled across all δ, so h is nonincreasing as δ shrinks.
    """
    deltas = [float(d) for d in delta_seq]
    if not deltas or any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_seq must be positive and strictly decreasing")
    u = np.asarray(u, dtype=float)
    rng = np.random.default_rng(seed)
    lo0, hi0 = phi.extremes(u)

    pool: list[tuple[float, float]] = []  # (distance, excess)
    for d in deltas:
        candidates = [u + d, u - d]
        for _ in range(samples_per_delta):
            candidates.append(u + d * rng.uniform(-1.0, 1.0, size=u.size))
        for v in candidates:
            lo1, hi1 = phi.extremes(v)
            pool.append((float(np.max(np.abs(v - u))), _excess(lo0, hi0, lo1, hi1)))

    excess = [max((e for dist, e in pool if dist <= d * (1 + 1e-12)), default=0.0) for d in deltas]
    monotone = all(b <= a + 1e-15 for a, b in zip(excess, excess[1:]))
    vanishing = excess[-1] <= 1e-12 or excess[-1] < excess[0]
    vanish_count = phi.vanishing_points(u)
    if vanish_count:
        logger.warning("%s: f vanishes at %d grid points on the trajectory", phi.name, vanish_count)
    return UscReport(
        deltas=deltas,
        excess=excess,
        monotone=monotone,
        vanishing=vanishing,
        f_vanishes_on_trajectory=vanish_count > 0,
    )


def contains_zero(phi: SetValuedMap, u: np.ndarray) -> bool:
    return phi.contains_zero(np.asarray(u, dtype=float))


def zero_membership(phi: SetValuedMap, n: int) -> dict[int, bool]:
    """Whether 0 ∈ φ(+1) and 0 ∈ φ(−1) for the grid constants."""
    return {sign: contains_zero(phi, np.full(n, float(sign))) for sign in (1, -1)}
