"""
Degree jump across λ = 0, sign profiles of L_h − λC_h, tracing of Γ(ε) and Σ(ε)
near S₀ = {±1}, and bifurcation detection along ε_n → 0.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from app.config import Settings
from app.exceptions import AdmissibilityError, AnalysisError
from app.models.domain import (
    BifurcationReport,
    BranchPoint,
    Box,
    Discretization,
    ExcessRow,
    NormType,
    OrientedOperator,
    ParamRectangle,
    PersistenceResult,
    SignProfile,
    TraceMode,
    distance_to_trivial,
    linear_map,
    nearest_trivial,
)
from app.services.bvp_discretize import kernel_corrector, transversality_check
from app.services.degree_core import DegreeCalculator, operator_sign
from app.services.inclusion_solver import InclusionSolver
from app.services.setvalued import SetValuedMap
from app.utils.linalg import det_sign

logger = logging.getLogger(__name__)


# --- rectangle and degree jump ---


def make_rectangle(
    disc: Discretization,
    a: float,
    b: float | str,
    eps_grid: Sequence[float],
    settings: Settings,
) -> ParamRectangle:
    """ℛ = [−a, a] × [−b, b]; b = "auto" takes half of the certified invertibility window."""
    report = transversality_check(disc, settings.lambda_window, settings)
    window = report.window_certified
    if b == "auto":
        b_val = 0.5 * window if window > 0 else 0.5 * settings.lambda_window
    else:
        b_val = float(b)
    certified = report.transversal and 0.0 < b_val <= window
    if not certified:
        logger.warning("b = %.4g is outside the certified window %.4g", b_val, window)
    return ParamRectangle(a=float(a), b=b_val, eps_grid=tuple(sorted(eps_grid)), lambda_window_certified=certified)


def _corrector_for(disc: Discretization, reach: float, settings: Settings) -> np.ndarray:
    # keeps L − λC + A invertible for |λ| ≤ reach
    return kernel_corrector(disc, scale=1.0 + 2.0 * abs(reach), settings=settings)


def _path_orientation(disc: Discretization, natural_at: float, reach: float, settings: Settings) -> np.ndarray:
    """Positive corrector making L − natural_at·C naturally oriented, shared along the λ-path."""
    A = _corrector_for(disc, reach, settings)
    reference = disc.L - natural_at * disc.C
    if det_sign(reference, settings.tol_singular)[0] == 0:
        raise AdmissibilityError(f"reference operator L - ({natural_at})C is singular")
    return A if operator_sign(OrientedOperator(reference, A, settings.tol_singular)) == 1 else -A


def oriented_operator(
    disc: Discretization,
    lam: float,
    natural_at: float,
    settings: Settings | None = None,
) -> OrientedOperator:
    """L_h − λC_h carrying the corrector class in which L_h − natural_at·C_h is naturally oriented."""
    settings = settings or Settings()
    reach = max(abs(lam), abs(natural_at))
    A_pos = _path_orientation(disc, natural_at, reach, settings)
    return OrientedOperator(disc.L - lam * disc.C, A_pos, settings.tol_singular)


def path_degree(
    disc: Discretization,
    lam: float,
    natural_at: float,
    settings: Settings | None = None,
) -> int:
    """
    Oriented degree of L_h − λC_h on the unit cube around 0, the orientation transported
    along the path from L_h − natural_at·C_h (naturally oriented) by one shared corrector.
    """
    settings = settings or Settings()
    T = disc.L - lam * disc.C
    if det_sign(T, settings.tol_singular)[0] == 0:
        return 0
    reach = max(abs(lam), abs(natural_at))
    A_pos = _path_orientation(disc, natural_at, reach, settings)

    # T is already known invertible; σ_min/σ_max of a stiff L_h sits far below tol_regular
    calculator = DegreeCalculator(settings.model_copy(update={"tol_regular": settings.tol_singular}))
    complement = disc.C @ np.ones((disc.n, 1))
    full, reduced = calculator.reduction_check(T, complement, linear_map(T), None, Box.cube(disc.n))
    if full.value != reduced.value:
        raise AnalysisError(f"reduction gave {reduced.value}, full space {full.value}")
    oriented = reduced.value * det_sign(T + A_pos, settings.tol_singular)[0]
    expected = operator_sign(OrientedOperator(T, A_pos, settings.tol_singular))
    if oriented != expected:
        raise AnalysisError(f"oriented degree {oriented} disagrees with operator sign {expected}")
    logger.debug("deg(L - %.4g C) = %d (natural at %.4g)", lam, oriented, natural_at)
    return oriented


def degree_jump(disc: Discretization, b: float, settings: Settings | None = None) -> tuple[int, int]:
    """(deg(L_h + bC_h), deg(L_h − bC_h)) with L_h + bC_h naturally oriented."""
    settings = settings or Settings()
    if b <= 0:
        raise AdmissibilityError("b must be positive")
    report = transversality_check(disc, b, settings)
    if not report.transversal or report.window_certified < b * (1.0 - 1e-12):
        raise AdmissibilityError(f"b = {b:.4g} is not inside the certified invertibility window")
    plus = path_degree(disc, -b, natural_at=-b, settings=settings)
    minus = path_degree(disc, b, natural_at=-b, settings=settings)
    logger.info("Degree jump at b=%.4g: (%d, %d)", b, plus, minus)
    return plus, minus


def sign_profile(disc: Discretization, b: float, points: int = 21, settings: Settings | None = None) -> SignProfile:
    """sign(L_h − λC_h) on points λ-samples per side of 0, orientation shared with L_h + bC_h."""
    settings = settings or Settings()
    A_pos = _path_orientation(disc, natural_at=-b, reach=b, settings=settings)
    lams = [b * k / points for k in range(1, points + 1)]

    def sign_at(lam: float) -> int:
        T = disc.L - lam * disc.C
        if det_sign(T, settings.tol_singular)[0] == 0:
            return 0
        return operator_sign(OrientedOperator(T, A_pos, settings.tol_singular))

    return SignProfile(
        lambdas_neg=[-lam for lam in lams],
        signs_neg=[sign_at(-lam) for lam in lams],
        lambdas_pos=lams,
        signs_pos=[sign_at(lam) for lam in lams],
    )


# --- persistence tracing ---


@dataclass
class TraceRecord:
    """Every solve attempted per ε, and the accepted witnesses."""

    attempts: dict[float, list[BranchPoint]]
    accepted: dict[float, list[BranchPoint]]
    rect: ParamRectangle
    c: float


class PersistenceTracer:
    def __init__(
        self,
        settings: Settings,
        disc: Discretization,
        phi: SetValuedMap,
        norm_type: NormType = NormType.L1,
        mode: TraceMode = TraceMode.PIPELINED,
    ):
        self.settings = settings
        self.disc = disc
        self.solver = InclusionSolver(settings, disc, phi, norm_type)
        self.mode = mode
        self.trivial = self.solver.region.trivial_solutions

    def _cold_guesses(self) -> list[tuple[np.ndarray, float]]:
        return [(u.copy(), 0.0) for u in self.trivial]

    def _distance_to_s0(self, u: np.ndarray) -> float:
        return float(min(np.max(np.abs(u - v)) for v in self.trivial))

    def _accept(self, p: BranchPoint, rect: ParamRectangle, c: float) -> bool:
        return (
            p.converged
            and self._distance_to_s0(p.u) <= c
            and abs(p.lam) <= rect.b
            and abs(p.constraint_gap) <= self.settings.tol_constraint
        )

    def _dedup(self, points: list[BranchPoint]) -> list[BranchPoint]:
        kept: list[BranchPoint] = []
        for p in points:
            duplicate = any(
                q.selection_param == p.selection_param
                and abs(q.lam - p.lam) <= self.solver.tol_newton
                and np.max(np.abs(q.u - p.u)) <= 1e-8
                for q in kept
            )
            if not duplicate:
                kept.append(p)
        return kept

    def _trace_eps(
        self,
        eps: float,
        s_grid: Sequence[float],
        warm: list[BranchPoint],
        rect: ParamRectangle,
        c: float,
    ) -> tuple[list[BranchPoint], list[BranchPoint]]:
        attempts, accepted = [], []
        for s in s_grid:
            guesses = [(p.u, p.lam) for p in warm if p.selection_param == s] + self._cold_guesses()
            for guess in guesses:
                point = self.solver.solve(eps, s, guess)
                attempts.append(point)
                if self._accept(point, rect, c):
                    accepted.append(point)
        accepted = self._dedup(accepted)
        accepted.sort(key=lambda p: (p.selection_param, p.lam))
        if not accepted:
            logger.warning("Gamma(%.4g) is empty", eps)
        return attempts, accepted

    def trace(self, rect: ParamRectangle, c: float, s_grid: Sequence[float]) -> TraceRecord:
        if c <= 0 or c >= 1:
            raise AdmissibilityError(f"c = {c} must lie in (0, 1) so that B_c(S0) excludes 0")
        # continuation outward from ε = 0
        order = sorted(rect.eps_grid, key=lambda e: (abs(e), e))
        attempts: dict[float, list[BranchPoint]] = {}
        accepted: dict[float, list[BranchPoint]] = {}

        if self.mode is TraceMode.PARALLEL:
            with ThreadPoolExecutor(max_workers=max(1, self.settings.workers)) as pool:
                results = list(pool.map(lambda e: self._trace_eps(e, s_grid, [], rect, c), order))
            for eps, (att, acc) in zip(order, results):
                attempts[eps], accepted[eps] = att, acc
        else:
            for eps in order:
                done = [e for e in accepted if np.sign(e) == np.sign(eps) or e == 0.0]
                nearest = min(done, key=lambda e: abs(e - eps), default=None)
                warm = accepted[nearest] if nearest is not None else []
                attempts[eps], accepted[eps] = self._trace_eps(eps, s_grid, warm, rect, c)

        grid = sorted(rect.eps_grid)
        logger.info(
            "Traced %d eps values, %d nonempty", len(grid), sum(1 for e in grid if accepted[e])
        )
        return TraceRecord(
            attempts={e: attempts[e] for e in grid},
            accepted={e: accepted[e] for e in grid},
            rect=rect,
            c=c,
        )

    # --- u.s.c. excess tables ---

    def _excess_table(self, record: TraceRecord, distance) -> list[ExcessRow]:
        rows = []
        grid = sorted(record.accepted)
        for e0, e1 in zip(grid, grid[1:]):
            bound = self.settings.usc_lipschitz * abs(e1 - e0) + self.settings.usc_slack
            before, after = record.accepted[e0], record.accepted[e1]
            if not before or not after:
                rows.append(ExcessRow(e0, e1, float("inf"), bound, False))
                continue
            excess = max(min(distance(p, q) for q in before) for p in after)
            rows.append(ExcessRow(e0, e1, float(excess), bound, excess <= bound))
        return rows

    def gamma_result(self, record: TraceRecord) -> PersistenceResult:
        table = self._excess_table(record, lambda p, q: abs(p.lam - q.lam))
        return PersistenceResult("gamma", record.accepted, record.attempts, record.c, record.rect.b, table)

    def sigma_result(self, record: TraceRecord) -> PersistenceResult:
        table = self._excess_table(record, lambda p, q: float(np.max(np.abs(p.u - q.u))))
        return PersistenceResult("sigma", record.accepted, record.attempts, record.c, record.rect.b, table)

    # --- bifurcation ---

    def detect_bifurcation(self, eps_seq: Sequence[float], c: float, b: float, s_grid: Sequence[float]) -> BifurcationReport:
        eps_list = [float(e) for e in eps_seq]
        report = BifurcationReport(eps_seq=eps_list, witnesses=[], distances=[], lambdas=[])
        nontrivial = [e for e in eps_list if e != 0.0]
        if not nontrivial:
            report.reason = "only eps = 0 sampled: trivial solutions only"
            return report

        rect = ParamRectangle(a=max(abs(e) for e in eps_list), b=b, eps_grid=tuple(nontrivial), lambda_window_certified=True)
        record = self.trace(rect, c, s_grid)
        # the first witness fixes branch and selection; later ones follow it when possible
        chosen: tuple[int, float] | None = None
        for eps in nontrivial:
            candidates = record.accepted.get(eps, [])
            if chosen is not None:
                same = [p for p in candidates if (nearest_trivial(p.u), p.selection_param) == chosen]
                candidates = same or candidates
            if not candidates:
                report.witnesses.append(None)
                continue
            witness = min(
                candidates,
                key=lambda p: (round(distance_to_trivial(p.u), 12), -nearest_trivial(p.u), p.selection_param, abs(p.lam)),
            )
            if chosen is None:
                chosen = (nearest_trivial(witness.u), witness.selection_param)
            report.witnesses.append(witness)
            report.distances.append(distance_to_trivial(witness.u))
            report.lambdas.append(witness.lam)

        if any(w is None for w in report.witnesses):
            missing = [e for e, w in zip(nontrivial, report.witnesses) if w is None]
            report.reason = f"no witnesses for eps = {missing}"
            return report

        slack = self.settings.usc_slack
        d, lam = report.distances, [abs(v) for v in report.lambdas]
        report.monotone = all(b_ <= a_ + slack for a_, b_ in zip(d, d[1:])) and all(
            b_ <= a_ + slack for a_, b_ in zip(lam, lam[1:])
        )
        branches = {nearest_trivial(w.u) for w in report.witnesses}
        if len(branches) != 1:
            report.reason = f"witnesses switch between branches {sorted(branches)}"
            return report

        eps_arr = np.asarray(nontrivial)
        degree = min(len(eps_arr) - 1, 3)
        if degree >= 1:
            report.lambda_limit = float(np.polyval(np.polyfit(eps_arr, report.lambdas, degree), 0.0))
            report.distance_limit = float(np.polyval(np.polyfit(eps_arr, report.distances, degree), 0.0))
        else:
            report.lambda_limit = report.lambdas[0]
            report.distance_limit = report.distances[0]
        report.branch = branches.pop()
        report.conclusive = report.monotone
        report.reason = "" if report.monotone else "distances or |lambda| not monotone along eps_seq"
        logger.info(
            "Bifurcation witness branch %+d: lambda -> %.3e, distance -> %.3e",
            report.branch, report.lambda_limit, report.distance_limit,
        )
        return report


def trace_gamma(
    disc: Discretization,
    phi: SetValuedMap,
    rect: ParamRectangle,
    c: float,
    s_grid: Sequence[float],
    settings: Settings | None = None,
    mode: TraceMode = TraceMode.PIPELINED,
    norm_type: NormType = NormType.L1,
) -> PersistenceResult:
    tracer = PersistenceTracer(settings or Settings(), disc, phi, norm_type, mode)
    return tracer.gamma_result(tracer.trace(rect, c, s_grid))


def trace_sigma(
    disc: Discretization,
    phi: SetValuedMap,
    rect: ParamRectangle,
    c: float,
    s_grid: Sequence[float],
    settings: Settings | None = None,
    mode: TraceMode = TraceMode.PIPELINED,
    norm_type: NormType = NormType.L1,
) -> PersistenceResult:
    tracer = PersistenceTracer(settings or Settings(), disc, phi, norm_type, mode)
    return tracer.sigma_result(tracer.trace(rect, c, s_grid))


def detect_bifurcation(
    disc: Discretization,
    phi: SetValuedMap,
    eps_seq: Sequence[float],
    c: float,
    b: float = 0.5,
    s_grid: Sequence[float] = (0.0, 0.5, 1.0),
    settings: Settings | None = None,
    norm_type: NormType = NormType.L1,
) -> BifurcationReport:
    tracer = PersistenceTracer(settings or Settings(), disc, phi, norm_type)
    return tracer.detect_bifurcation(eps_seq, c, b, s_grid)
