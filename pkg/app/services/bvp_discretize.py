"""
Finite-difference discretization of L u = u'' + u' with Neumann closure, C = I,
the norm constraint ‖u‖ = 1, and numeric checks of kernel, image and transversality.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from app.config import Settings
from app.exceptions import ConstructionError, TransversalityError
from app.models.domain import ConvergenceStudy, Discretization, NormType, TransversalityReport
from app.utils.linalg import det_sign, numerical_rank

logger = logging.getLogger(__name__)

DEFAULT_CONVERGENCE_NS = (16, 32, 64, 128)


def _assemble(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = float(n - 1)  # 1/h, keeps every stencil entry exact
    d2 = m * m
    d1 = m / 2.0
    L = np.zeros((n, n))
    for i in range(1, n - 1):
        L[i, i - 1] = d2 - d1
        L[i, i] = -2.0 * d2
        L[i, i + 1] = d2 + d1
    # ghost points u_{-1} = u_1 and u_n = u_{n-2}; the first-derivative term vanishes there
    L[0, 0], L[0, 1] = -2.0 * d2, 2.0 * d2
    L[n - 1, n - 1], L[n - 1, n - 2] = -2.0 * d2, 2.0 * d2
    grid = np.arange(n) / m
    weights = np.full(n, 1.0 / m)
    weights[0] = weights[-1] = 0.5 / m
    return grid, L, weights


def _verify(disc: Discretization, settings: Settings, expected_kernel: int, kernel_tol: float = 1e-12) -> None:
    kernel_residual = float(np.max(np.abs(disc.L @ disc.ones)))
    if kernel_residual > kernel_tol:
        raise ConstructionError(f"L_h·1 = {kernel_residual:.3e}, constants must be annihilated")
    rank = numerical_rank(disc.L, settings.tol_rank)
    if rank != disc.n - expected_kernel:
        raise ConstructionError(f"rank(L_h) = {rank}, expected {disc.n - expected_kernel}")
    if abs(disc.quad_weights.sum() - 1.0) > 1e-12:
        raise ConstructionError(f"quadrature weights sum to {disc.quad_weights.sum():.15g}")


def build(n: int, settings: Settings | None = None) -> Discretization:
    settings = settings or Settings()
    if n < 8:
        raise ConstructionError(f"grid size must be at least 8, got {n}")
    grid, L, weights = _assemble(n)
    disc = Discretization(n=n, grid=grid, L=L, C=np.eye(n), quad_weights=weights)
    _verify(disc, settings, expected_kernel=1)
    logger.debug("Built discretization n=%d (h=%.4g)", n, disc.h)
    return disc


def build_even_kernel_toy(n: int, settings: Settings | None = None) -> Discretization:
    """
    L_h composed with the projector killing the orthogonalized cosine mode v, so the kernel
    is span{1, v} (dimension two) and the sign of L − λC no longer flips at λ = 0.
    """
    settings = settings or Settings()
    base = build(n, settings)
    v = np.cos(np.pi * base.grid)
    v = v - v.mean()
    v = v / np.linalg.norm(v)
    L = base.L @ (np.eye(n) - np.outer(v, v))
    disc = Discretization(n=n, grid=base.grid, L=L, C=base.C, quad_weights=base.quad_weights, operator="even_kernel_toy")
    _verify(disc, settings, expected_kernel=2, kernel_tol=1e-12 * np.abs(L).sum(axis=1).max())
    return disc


def build_operator(kind: str, n: int, settings: Settings | None = None) -> Discretization:
    if kind == "standard":
        return build(n, settings)
    if kind == "even_kernel_toy":
        return build_even_kernel_toy(n, settings)
    raise ValueError(f"Unknown operator: {kind}")


def image_residual(disc: Discretization, f: np.ndarray) -> float:
    """|∫ f eᵗ| by trapezoid; vanishes on im L and is O(h²) for f = L_h u."""
    return float(abs(np.sum(disc.quad_weights * np.asarray(f, dtype=float) * np.exp(disc.grid))))


def image_residual_convergence(
    ns: tuple[int, ...] = DEFAULT_CONVERGENCE_NS,
    settings: Settings | None = None,
) -> ConvergenceStudy:
    """Observed order of image_residual(L_h u) for u(t) = cos(πt) from a log-log fit."""
    hs, residuals = [], []
    for n in ns:
        disc = build(n, settings)
        u = np.cos(np.pi * disc.grid)
        hs.append(disc.h)
        residuals.append(image_residual(disc, disc.L @ u))
    order = float(np.polyfit(np.log(hs), np.log(residuals), 1)[0])
    logger.info("image residual order %.3f over n=%s", order, list(ns))
    return ConvergenceStudy(ns=list(ns), hs=hs, residuals=residuals, order=order)


def transversality_check(
    disc: Discretization,
    lambda_window: float,
    settings: Settings | None = None,
    C: np.ndarray | None = None,
    raise_on_failure: bool = False,
) -> TransversalityReport:
    """
    (a) rank([L_h | C K]) == n with K a basis of ker L_h;
    (b) L_h − λC invertible on ±(0, lambda_window], returning the largest certified b.
    """
    settings = settings or Settings()
    C = disc.C if C is None else np.asarray(C, dtype=float)
    n = disc.n
    K = sla.null_space(disc.L, rcond=settings.tol_rank)
    augmented = np.hstack([disc.L, C @ K])
    rank = numerical_rank(augmented, settings.tol_rank)
    transversal = rank == n

    singular_at_zero = K.shape[1] > 0
    # an eigenvalue between two samples shows up as a sign change of det(L − λC)
    certified = 0.0
    points = settings.lambda_scan_points
    previous: dict[float, int] = {}
    for k in range(1, points + 1):
        lam = lambda_window * k / points
        ok = True
        for side in (1.0, -1.0):
            sign = det_sign(disc.L - side * lam * C, settings.tol_singular)[0]
            if sign == 0 or previous.get(side, sign) != sign:
                ok = False
            previous[side] = sign
        if not ok:
            break
        certified = lam

    reason = ""
    if not transversal:
        reason = f"rank([L | C ker L]) = {rank} < {n}"
    elif certified == 0.0:
        reason = "L - lambda C singular at the first scanned lambda"

    report = TransversalityReport(
        n=n,
        dim_kernel=K.shape[1],
        rank_augmented=rank,
        transversal=transversal,
        singular_at_zero=singular_at_zero,
        window_certified=certified,
        scanned=points,
        reason=reason,
    )
    if reason:
        logger.warning("Transversality check failed: %s", reason)
        if raise_on_failure:
            raise TransversalityError(reason)
    else:
        logger.info("Transversal: dim ker = %d, window b = %.4g", report.dim_kernel, certified)
    return report


def kernel_corrector(disc: Discretization, scale: float = 1.0, settings: Settings | None = None) -> np.ndarray:
    """A = scale · C K Kᵀ: maps ker L_h onto C(ker L_h) and annihilates its complement."""
    settings = settings or Settings()
    K = sla.null_space(disc.L, rcond=settings.tol_rank)
    return scale * (disc.C @ K @ K.T)


def l1_norm(disc: Discretization, u: np.ndarray) -> float:
    return float(np.sum(disc.quad_weights * np.abs(u)))


def l2_norm(disc: Discretization, u: np.ndarray) -> float:
    return float(np.sqrt(np.sum(disc.quad_weights * np.asarray(u) ** 2)))


def boundary_gap(disc: Discretization, u: np.ndarray) -> float:
    return l1_norm(disc, u) - 1.0


@dataclass(frozen=True)
class ConstraintRegion:
    """Ω = {γ(u) < 1}; ∂Ω is tested with tolerance tol_constraint."""

    disc: Discretization
    norm_type: NormType = NormType.L1
    tol_constraint: float = 1e-9

    def norm(self, u: np.ndarray) -> float:
        if self.norm_type is NormType.L2:
            return l2_norm(self.disc, u)
        return l1_norm(self.disc, u)

    def gap(self, u: np.ndarray) -> float:
        return self.norm(u) - 1.0

    def gradient(self, u: np.ndarray) -> np.ndarray:
        w = self.disc.quad_weights
        if self.norm_type is NormType.L2:
            nrm = l2_norm(self.disc, u)
            return w * u / nrm if nrm > 0 else np.zeros_like(u)
        return w * np.sign(u)

    def on_boundary(self, u: np.ndarray) -> bool:
        return abs(self.gap(u)) <= self.tol_constraint

    @property
    def trivial_solutions(self) -> tuple[np.ndarray, np.ndarray]:
        """S₀ = ∂Ω ∩ ker L: the constants ±1/γ(1)."""
        one = self.disc.ones
        level = 1.0 / self.norm(one)
        return level * one, -level * one
