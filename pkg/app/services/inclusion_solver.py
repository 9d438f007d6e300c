import logging

import numpy as np

from app.config import Settings
from app.exceptions import EvaluationError
from app.models.domain import BranchPoint, Discretization, NormType
from app.services.bvp_discretize import ConstraintRegion
from app.services.setvalued import SetValuedMap, make_selection

logger = logging.getLogger(__name__)

_ARMIJO = 1e-4
_MAX_HALVINGS = 12


class InclusionSolver:
    """
    Damped Newton on the bordered system for (u, λ):

        R_i     = (L_h u)_i − λ u_i + ε w_s(u)_i      i = 1..n
        R_{n+1} = n · (γ(u) − 1)

    where w_s is the s-selection of φ(u). A solution for one selection solves the inclusion.
    """

    def __init__(self, settings: Settings, disc: Discretization, phi: SetValuedMap, norm_type: NormType = NormType.L1):
        self.settings = settings
        self.disc = disc
        self.phi = phi
        self.region = ConstraintRegion(disc, norm_type, settings.tol_constraint)
        self.tol_newton = settings.newton_tol_scale * (1.0 + float(np.abs(disc.L).sum(axis=1).max()))

    def _selection(self, u: np.ndarray, eps: float, s: float) -> np.ndarray:
        if eps == 0.0:
            return np.zeros_like(u)
        return make_selection(self.phi, u, s)

    def _equations(self, u: np.ndarray, lam: float, eps: float, s: float) -> np.ndarray:
        return self.disc.L @ u - lam * u + eps * self._selection(u, eps, s)

    def _system(self, z: np.ndarray, eps: float, s: float) -> np.ndarray:
        u, lam = z[:-1], z[-1]
        return np.append(self._equations(u, lam, eps, s), self.disc.n * self.region.gap(u))

    def _jacobian(self, z: np.ndarray, eps: float, s: float) -> np.ndarray:
        n = self.disc.n
        u, lam = z[:-1], z[-1]
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = self.disc.L - lam * np.eye(n)
        if eps != 0.0:
            # forward differences of the selection, step √eps_machine·(1 + ‖u‖_∞)
            w0 = self._selection(u, eps, s)
            step = np.sqrt(np.finfo(float).eps) * (1.0 + float(np.max(np.abs(u))))
            for j in range(n):
                up = u.copy()
                up[j] += step
                J[:n, j] += eps * (self._selection(up, eps, s) - w0) / step
        J[:n, n] = -u
        J[n, :n] = n * self.region.gradient(u)
        return J

    def _measure(self, z: np.ndarray, eps: float, s: float) -> tuple[float, float]:
        u, lam = z[:-1], z[-1]
        eq = float(np.max(np.abs(self._equations(u, lam, eps, s))))
        return eq, self.region.gap(u)

    def residual(self, point: BranchPoint) -> float:
        """max(‖L_h u − λu + ε w_s(u)‖_∞, |γ(u) − 1|)."""
        eq = float(np.max(np.abs(self._equations(point.u, point.lam, point.eps, point.selection_param))))
        return max(eq, abs(self.region.gap(point.u)))

    def solve(self, eps: float, s: float, guess: tuple[np.ndarray, float]) -> BranchPoint:
        st = self.settings
        u0, lam0 = guess
        u0 = np.broadcast_to(np.asarray(u0, dtype=float), (self.disc.n,)).copy()
        if not (np.all(np.isfinite(u0)) and np.isfinite(lam0)):
            raise ValueError("guess must be finite")
        z = np.append(u0, float(lam0))

        history: list[float] = []
        used_pinv = False
        reason = ""
        best = np.inf
        stagnant = 0
        iters = 0
        try:
            for iters in range(st.solver_max_iters + 1):
                eq, gap = self._measure(z, eps, s)
                res = max(eq, abs(gap))
                history.append(res)
                if eq <= self.tol_newton and abs(gap) <= st.tol_constraint:
                    break
                if iters == st.solver_max_iters:
                    reason = "max iterations"
                    break
                if res < best:
                    best, stagnant = res, 0
                else:
                    stagnant += 1
                    if stagnant >= st.divergence_patience:
                        reason = "diverging"
                        break

                R = self._system(z, eps, s)
                J = self._jacobian(z, eps, s)
                try:
                    step = np.linalg.solve(J, -R)
                    if not np.all(np.isfinite(step)):
                        raise np.linalg.LinAlgError("non-finite step")
                except np.linalg.LinAlgError:
                    step = np.linalg.lstsq(J, -R, rcond=None)[0]
                    used_pinv = True

                merit = float(np.linalg.norm(R))
                t = 1.0
                for _ in range(_MAX_HALVINGS):
                    trial = z + t * step
                    if float(np.linalg.norm(self._system(trial, eps, s))) <= (1.0 - _ARMIJO * t) * merit:
                        break
                    t *= 0.5
                z = trial
        except EvaluationError as exc:
            reason = f"evaluation failed: {exc}"

        u, lam = z[:-1].copy(), float(z[-1])
        try:
            eq, gap = self._measure(z, eps, s)
        except EvaluationError:
            eq, gap = np.inf, np.inf
        converged = not reason and eq <= self.tol_newton and abs(gap) <= st.tol_constraint
        point = BranchPoint(
            u=u,
            eps=float(eps),
            lam=lam,
            selection_param=float(s),
            residual=max(eq, abs(gap)),
            newton_iters=iters,
            converged=converged,
            constraint_gap=float(gap),
            used_pseudo_inverse=used_pinv,
            convergence_order=convergence_order(history),
            reason=reason,
        )
        if converged:
            logger.debug("eps=%.4g s=%.3g: lambda=%.10g after %d iterations", eps, s, lam, iters)
        else:
            logger.warning("eps=%.4g s=%.3g: no convergence (%s, residual %.3e)", eps, s, reason or "tolerance", point.residual)
        return point


def convergence_order(history: list[float]) -> float | None:
    """Observed order from the last three strictly decreasing positive residuals."""
    tail = [r for r in history if r > 0][-3:]
    if len(tail) < 3 or not (tail[0] > tail[1] > tail[2]):
        return None
    r0, r1, r2 = tail
    if r1 >= 1.0 or r0 >= 1.0 or np.isclose(np.log(r1 / r0), 0.0):
        return None
    return float(np.log(r2 / r1) / np.log(r1 / r0))


def solve_branch_point(
    disc: Discretization,
    phi: SetValuedMap,
    eps: float,
    s: float,
    guess: tuple[np.ndarray, float],
    settings: Settings | None = None,
    norm_type: NormType = NormType.L1,
) -> BranchPoint:
    return InclusionSolver(settings or Settings(), disc, phi, norm_type).solve(eps, s, guess)


def residual(
    disc: Discretization,
    phi: SetValuedMap,
    point: BranchPoint,
    settings: Settings | None = None,
    norm_type: NormType = NormType.L1,
) -> float:
    return InclusionSolver(settings or Settings(), disc, phi, norm_type).residual(point)
