"""
Finite-dimensional Brouwer degree by regular-value counting, the corrector/orientation
algebra for square operators, degrees of multitriples through selections, and the
reduction-to-F1 consistency check.
"""

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg as sla
from scipy.stats import qmc

from app.config import Settings
from app.exceptions import (
    AdmissibilityError,
    AnalysisError,
    EpsTooLargeError,
    IncompleteCertificateError,
    NotACorrectorError,
    TransversalityError,
)
from app.models.domain import (
    AdmissibleTriple,
    Box,
    DegreeMethod,
    DegreeResult,
    OrientedOperator,
    PreimagePoint,
    SmoothMap,
    as_smooth_map,
)
from app.services.setvalued import graph_distance, hull_distance, make_selection
from app.utils.linalg import complement_projector, det_sign, numerical_rank

logger = logging.getLogger(__name__)

_ARMIJO = 1e-4
_MIN_STEP = 1e-4


class _IrregularTarget(Exception):
    """The target could not be certified as a regular value."""


# --- orientation algebra ---


def jacobian_sign(g: SmoothMap | Callable, x: np.ndarray, tol_singular: float = 1e-12) -> int:
    g = as_smooth_map(g)
    return det_sign(g.jacobian(np.atleast_1d(np.asarray(x, dtype=float))), tol_singular)[0]


def corrector_det(L: np.ndarray, A: np.ndarray, B: np.ndarray, tol_singular: float = 1e-12) -> float:
    """det((L+B)⁻¹(L+A)) as sign(det(L+A))·sign(det(L+B))·exp(log|det(L+A)| − log|det(L+B)|)."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    sign_a, log_a = det_sign(L + np.atleast_2d(A), tol_singular)
    if sign_a == 0:
        raise NotACorrectorError("L + A is singular")
    sign_b, log_b = det_sign(L + np.atleast_2d(B), tol_singular)
    if sign_b == 0:
        raise NotACorrectorError("L + B is singular")
    return float(sign_a * sign_b * np.exp(log_a - log_b))


def l_equivalent(L: np.ndarray, A: np.ndarray, B: np.ndarray, tol_singular: float = 1e-12) -> bool:
    return corrector_det(L, A, B, tol_singular) > 0


def operator_sign(op: OrientedOperator) -> int:
    """0 if singular, +1 if the zero corrector lies in the stored class, −1 otherwise."""
    if det_sign(op.matrix, op.tol_singular)[0] == 0:
        return 0
    zero = np.zeros_like(op.matrix)
    return 1 if l_equivalent(op.matrix, zero, op.positive_corrector, op.tol_singular) else -1


# --- degree computations ---


class DegreeCalculator:
    """Brouwer and multitriple degrees with certificates; tolerances come from Settings."""

    def __init__(self, settings: Settings):
        self.settings = settings

    def boundary_margin(self, g: SmoothMap, region: Box, y: np.ndarray) -> float:
        s = self.settings
        points = region.boundary_samples(s.boundary_samples_per_dim, s.max_boundary_samples)
        margin = min(float(np.linalg.norm(g(p) - y)) for p in points)
        spacing = region.face_spacing(s.boundary_samples_per_dim, s.max_boundary_samples)
        if g.lipschitz is not None and spacing is not None:
            margin -= g.lipschitz * spacing * np.sqrt(max(region.dim - 1, 0)) / 2.0
        return margin

    def _seed_count(self, region: Box) -> int:
        s = self.settings
        return int(min(max(s.seeds_per_dim ** region.dim, s.min_seeds), s.max_seeds))

    def _seeds(self, region: Box, count: int | None = None, scramble_seed: int | None = None) -> np.ndarray:
        """The center plus a Halton set; scramble_seed gives an independent scrambled set."""
        count = self._seed_count(region) if count is None else count
        if scramble_seed is None:
            unit = qmc.Halton(d=region.dim, scramble=False).random(count)
        else:
            unit = qmc.Halton(d=region.dim, scramble=True, seed=scramble_seed).random(count)
        return np.vstack([region.center, region.lo + unit * region.widths])

    def _newton(self, g: SmoothMap, x0: np.ndarray, y: np.ndarray, region: Box) -> tuple[str, np.ndarray, float]:
        s = self.settings
        x = np.array(x0, dtype=float)
        r = g(x) - y
        nr = float(np.linalg.norm(r))
        far_lo = region.lo - region.widths
        far_hi = region.hi + region.widths
        for _ in range(s.newton_max_iters):
            if nr <= s.tol_root:
                return "root", x, nr
            J = g.jacobian(x)
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            if not np.all(np.isfinite(step)):
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            t = 1.0
            while t >= _MIN_STEP:
                xt = x + t * step
                rt = g(xt) - y
                nt = float(np.linalg.norm(rt))
                if nt <= (1.0 - _ARMIJO * t) * nr:
                    break
                t *= 0.5
            else:
                break
            x, r, nr = xt, rt, nt
            if np.any(x < far_lo) or np.any(x > far_hi):
                return "escaped", x, nr
        if nr <= s.tol_root:
            return "root", x, nr
        if nr <= np.sqrt(s.tol_root) and region.contains(x, strict=False):
            return "stalled", x, nr
        return "failed", x, nr

    def _run_seeds(
        self,
        g: SmoothMap,
        seeds: np.ndarray,
        y: np.ndarray,
        region: Box,
        accept: Callable[[np.ndarray], bool] | None,
    ) -> tuple[list[np.ndarray], int]:
        """In-region roots (not yet deduplicated) and the number of in-region failed runs."""
        s = self.settings
        if s.workers > 1 and len(seeds) >= 256:
            with ThreadPoolExecutor(max_workers=s.workers) as pool:
                outcomes = list(pool.map(lambda x0: self._newton(g, x0, y, region), seeds))
        else:
            outcomes = [self._newton(g, x0, y, region) for x0 in seeds]

        roots, failed = [], 0
        for status, x, _ in outcomes:
            if not region.contains(x, strict=False) or (accept is not None and not accept(x)):
                continue
            if status == "stalled":
                raise _IrregularTarget(f"Newton stalled near x={x}")
            if status == "root":
                roots.append(x)
            elif status == "failed":
                failed += 1
        return roots, failed

    def _enumerate(
        self,
        g: SmoothMap,
        region: Box,
        y: np.ndarray,
        accept: Callable[[np.ndarray], bool] | None,
    ) -> list[np.ndarray]:
        """
        Preimages of y in region. Independent scrambled seed sets are run until one finds no
        root missing from the union; each pass that does find one doubles the density.
        A pass at max_seeds that still finds new roots means the set is incomplete.
        """
        s = self.settings
        dedup_tol = 1e-6 * max(1.0, float(np.max(region.widths)))

        def merge(found: list[np.ndarray]) -> int:
            added = 0
            for x in found:
                if all(np.linalg.norm(x - other) > dedup_tol for other in roots):
                    roots.append(x)
                    added += 1
            return added

        count = self._seed_count(region)
        roots: list[np.ndarray] = []
        found, failed = self._run_seeds(g, self._seeds(region, count), y, region, accept)
        merge(found)
        if failed:
            # in-region runs that neither converged nor escaped may hide preimages
            logger.debug("%d seeds failed inside the region, confirming at double density", failed)
            count = min(2 * count, s.max_seeds)

        for round_ in range(1, 64):
            found, _ = self._run_seeds(
                g, self._seeds(region, count, scramble_seed=s.random_seed + round_), y, region, accept
            )
            added = merge(found)
            if added == 0:
                return roots
            if count >= s.max_seeds:
                raise IncompleteCertificateError(
                    f"{added} new preimages at the seed budget ({s.max_seeds}); {len(roots)} found so far"
                )
            logger.debug("confirmation pass %d found %d new preimages, doubling seeds", round_, added)
            count = min(2 * count, s.max_seeds)
        raise IncompleteCertificateError("preimage enumeration did not stabilize")

    def _count(
        self,
        g: SmoothMap,
        region: Box,
        y: np.ndarray,
        accept: Callable[[np.ndarray], bool] | None = None,
    ) -> tuple[int, tuple[PreimagePoint, ...]]:
        s = self.settings
        roots = self._enumerate(g, region, y, accept)

        certificate = []
        for x in roots:
            if not region.contains(x, strict=True):
                continue
            J = g.jacobian(x)
            sv = sla.svdvals(J)
            if sv[-1] <= s.tol_regular * max(1.0, sv[0]):
                raise _IrregularTarget(f"degenerate preimage at x={x} (sigma_min={sv[-1]:.3e})")
            sign = det_sign(J, s.tol_singular)[0]
            if sign == 0:
                raise _IrregularTarget(f"singular Jacobian at x={x}")
            certificate.append(PreimagePoint(x=x, sign=sign, residual=float(np.linalg.norm(g(x) - y))))
        certificate.sort(key=lambda p: tuple(p.x))
        return sum(p.sign for p in certificate), tuple(certificate)

    def brouwer_degree(
        self,
        g: SmoothMap | Callable,
        region: Box,
        y: np.ndarray | None = None,
        check_boundary: bool = True,
        accept: Callable[[np.ndarray], bool] | None = None,
    ) -> DegreeResult:
        """
        deg(g, region, y) by signed counting of preimages.

        If y is not certified regular, R_p random targets y' with ‖y − y'‖ < tol_boundary/2
        are counted instead; all must be regular and agree.
        """
        s = self.settings
        g = as_smooth_map(g)
        y = np.zeros(region.dim) if y is None else np.atleast_1d(np.asarray(y, dtype=float))
        if y.size != region.dim:
            raise ValueError(f"target has dimension {y.size}, region has {region.dim}")

        if check_boundary:
            margin = self.boundary_margin(g, region, y)
            if margin < s.tol_boundary:
                raise AdmissibilityError(f"target within {margin:.3e} of g(boundary), need {s.tol_boundary:.1e}")

        try:
            value, certificate = self._count(g, region, y, accept)
            return DegreeResult(value=value, method=DegreeMethod.REGULAR_VALUE_COUNT, certificate=certificate)
        except _IrregularTarget as exc:
            logger.info("Target not certified regular (%s), perturbing", exc)

        rng = np.random.default_rng(s.random_seed)
        outcomes = []
        for attempt in range(s.perturbation_retries):
            direction = rng.normal(size=region.dim)
            direction /= np.linalg.norm(direction)
            shift = direction * (0.5 * s.tol_boundary) * rng.uniform(0.5, 1.0)
            try:
                value, certificate = self._count(g, region, y + shift, accept)
            except _IrregularTarget as exc:
                raise IncompleteCertificateError(f"perturbed target {attempt} still irregular: {exc}") from exc
            outcomes.append((value, certificate, shift))

        values = sorted({value for value, _, _ in outcomes})
        if len(values) != 1:
            raise IncompleteCertificateError(f"perturbed targets disagree on the degree: {values}")
        value, certificate, shift = outcomes[0]
        logger.debug("Degree %d certified at perturbed target (|shift|=%.3e)", value, np.linalg.norm(shift))
        return DegreeResult(
            value=value,
            method=DegreeMethod.REGULAR_VALUE_COUNT,
            certificate=certificate,
            perturbation_used=shift,
        )

    def homotopy_degree_profile(
        self,
        h: Callable[[np.ndarray, float], np.ndarray],
        region: Box,
        ts: Sequence[float],
        y: np.ndarray | None = None,
        h_jac: Callable[[np.ndarray, float], np.ndarray] | None = None,
    ) -> list[DegreeResult]:
        """deg(h(·, t), region, y) for every sampled t."""
        results = []
        for t in ts:
            g = SmoothMap(
                func=lambda x, t=t: h(x, t),
                jac=(lambda x, t=t: h_jac(x, t)) if h_jac is not None else None,
            )
            results.append(self.brouwer_degree(g, region, y))
        values = [r.value for r in results]
        if len(set(values)) > 1:
            logger.warning("Degree not constant along the homotopy: %s", values)
        return results

    # --- multitriples ---

    def verify_admissible(self, triple: AdmissibleTriple) -> float:
        """Boundary coincidence margin min dist(g(x), φ(x)) over ∂U samples."""
        s = self.settings
        points = triple.region.boundary_samples(s.boundary_samples_per_dim, s.max_boundary_samples)
        margin = np.inf
        for x in points:
            lo, hi = triple.phi.extremes(x)
            margin = min(margin, hull_distance(triple.g(x), lo, hi))
        if margin < s.tol_boundary:
            raise AdmissibilityError(f"coincidence set within {margin:.3e} of the boundary")
        return float(margin)

    def _approximation(self, triple: AdmissibleTriple, eps: float, rng: np.random.Generator) -> Callable:
        n = triple.region.dim
        a_sel, b_sel = rng.uniform(-1.0, 1.0, (n, n)), rng.uniform(0.0, 2 * np.pi, n)
        a_pert, b_pert = rng.uniform(-1.0, 1.0, (n, n)), rng.uniform(0.0, 2 * np.pi, n)
        phi = triple.phi

        def f(x: np.ndarray) -> np.ndarray:
            s_x = 0.5 + 0.5 * np.sin(a_sel @ x + b_sel)
            return make_selection(phi, x, s_x) + 0.5 * eps * np.sin(a_pert @ x + b_pert)

        return f

    def _certify_approximation(self, triple: AdmissibleTriple, f: Callable, eps: float) -> None:
        s = self.settings
        region = triple.region
        interior = region.lo + qmc.Halton(d=region.dim, scramble=False).random(32) * region.widths
        boundary = region.boundary_samples(s.boundary_samples_per_dim, s.max_boundary_samples)
        for x in np.vstack([boundary, interior]):
            if graph_distance(triple.phi, x, f(x), search_radius=eps) > eps:
                raise EpsTooLargeError(f"approximation leaves the eps-graph neighborhood at x={x}")

    def multitriple_degree(self, triple: AdmissibleTriple, eps_approx: float) -> DegreeResult:
        """deg(g, U, φ) = deg_B(g − f, U, 0) for an ε-approximation f, checked with two independent f."""
        if eps_approx <= 0:
            raise ValueError("eps_approx must be positive")
        self.verify_admissible(triple)
        rng = np.random.default_rng(self.settings.random_seed)
        degrees = []
        for _ in range(2):
            f = self._approximation(triple, eps_approx, rng)
            self._certify_approximation(triple, f, eps_approx)
            diff = SmoothMap(func=lambda x, f=f: triple.g(x) - f(x))
            degrees.append(self.brouwer_degree(diff, triple.region))
        if degrees[0].value != degrees[1].value:
            raise EpsTooLargeError(
                f"selections disagree at eps={eps_approx:.3e}: {degrees[0].value} vs {degrees[1].value}"
            )
        first = degrees[0]
        certificate = tuple(
            PreimagePoint(x=p.x, sign=triple.orientation * p.sign, residual=p.residual) for p in first.certificate
        )
        return DegreeResult(
            value=triple.orientation * first.value,
            method=DegreeMethod.APPROXIMATION,
            certificate=certificate,
            perturbation_used=first.perturbation_used,
            eps_used=eps_approx,
        )

    def multitriple_degree_auto(self, triple: AdmissibleTriple) -> DegreeResult:
        """Start at a quarter of the boundary margin and halve ε until two selections agree."""
        eps = self.verify_admissible(triple) / 4.0
        for _ in range(self.settings.eps_halvings_max + 1):
            try:
                return self.multitriple_degree(triple, eps)
            except EpsTooLargeError as exc:
                logger.info("%s; halving eps", exc)
                eps /= 2.0
        raise EpsTooLargeError(f"no stable degree after {self.settings.eps_halvings_max} halvings")

    # --- reduction property ---

    def reduction_check(
        self,
        L: np.ndarray,
        F1: np.ndarray,
        f: SmoothMap | Callable,
        y: np.ndarray | None,
        region: Box,
    ) -> tuple[DegreeResult, DegreeResult]:
        """
        Degree of f on region and of its restriction to M₁ = L⁻¹(F1), with M₁ oriented so that
        L is orientation preserving from the complement E₀ onto F₀ = L(E₀).
        """
        s = self.settings
        L = np.atleast_2d(np.asarray(L, dtype=float))
        n = L.shape[0]
        B1 = np.asarray(F1, dtype=float).reshape(n, -1)
        k = B1.shape[1]
        f = as_smooth_map(f)
        y = np.zeros(n) if y is None else np.atleast_1d(np.asarray(y, dtype=float))

        if numerical_rank(np.hstack([L, B1]), s.tol_rank) < n:
            raise TransversalityError("im L + F1 does not span the target space")
        proj = complement_projector(B1)
        probes = np.vstack([region.center, region.lo + qmc.Halton(d=n, scramble=False).random(32) * region.widths])
        for x in probes:
            d = f(x) - L @ x
            if np.linalg.norm(proj @ d) > s.tol_subspace * (1.0 + np.linalg.norm(d)):
                raise AdmissibilityError(f"f - L leaves F1 at x={x}")
        if np.linalg.norm(proj @ y) > s.tol_subspace * (1.0 + np.linalg.norm(y)):
            raise AdmissibilityError("target must lie in F1")

        full = self.brouwer_degree(f, region, y)

        Q1 = sla.null_space(proj @ L, rcond=s.tol_rank)
        if Q1.shape[1] != k:
            raise TransversalityError(f"dim L^-1(F1) = {Q1.shape[1]}, expected {k}")
        if k < n:
            P0 = sla.null_space(Q1.T)
            B0 = L @ P0
            if det_sign(np.hstack([B0, B1]), s.tol_singular)[0] < 0:
                P0[:, 0] *= -1.0
                B0[:, 0] *= -1.0
            if det_sign(np.hstack([P0, Q1]), s.tol_singular)[0] < 0:
                Q1[:, 0] *= -1.0
        elif det_sign(Q1, s.tol_singular)[0] != det_sign(B1, s.tol_singular)[0]:
            Q1[:, 0] *= -1.0

        B1_pinv = np.linalg.pinv(B1)
        reduced = SmoothMap(
            func=lambda z: B1_pinv @ f(Q1 @ z),
            jac=lambda z: B1_pinv @ f.jacobian(Q1 @ z) @ Q1,
        )
        z_lo = np.minimum(Q1 * region.lo[:, None], Q1 * region.hi[:, None]).sum(axis=0)
        z_hi = np.maximum(Q1 * region.lo[:, None], Q1 * region.hi[:, None]).sum(axis=0)
        restricted = self.brouwer_degree(
            reduced,
            Box(z_lo, z_hi),
            B1_pinv @ y,
            check_boundary=False,
            accept=lambda z: region.contains(Q1 @ z),
        )
        if full.value != restricted.value:
            raise AnalysisError(f"reduction mismatch: full degree {full.value}, reduced {restricted.value}")
        logger.debug("Reduction consistent: degree %d on dim %d, reduced dim %d", full.value, n, k)
        return full, restricted
