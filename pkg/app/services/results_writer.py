"""gamma.csv, sigma.csv and summary.json for a traced problem."""

import logging
import math
from pathlib import Path

import pandas as pd

from app.models.domain import BifurcationReport, BranchPoint, ExcessRow, PersistenceResult, distance_to_trivial
from app.models.schemas import ExcessRowOut, TraceSummary

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
GAMMA_COLUMNS = ["eps", "s", "lambda", "residual", "u_dist_to_S0", "converged"]


def _sort(df: pd.DataFrame) -> pd.DataFrame:
    return df.sort_values(["eps", "s", "lambda"], kind="mergesort").reset_index(drop=True)


def _gamma_row(p: BranchPoint) -> dict:
    return {
        "eps": p.eps,
        "s": p.selection_param,
        "lambda": p.lam,
        "residual": p.residual,
        "u_dist_to_S0": distance_to_trivial(p.u),
        "converged": p.converged,
    }


def gamma_frame(result: PersistenceResult) -> pd.DataFrame:
    """Accepted witnesses; an empty Γ(ε) contributes its failed attempts instead."""
    rows = []
    for eps, accepted in result.accepted.items():
        points = accepted or result.attempts.get(eps, [])
        rows.extend(_gamma_row(p) for p in points)
    if not rows:
        return pd.DataFrame(columns=GAMMA_COLUMNS)
    return _sort(pd.DataFrame(rows, columns=GAMMA_COLUMNS))


def sigma_frame(result: PersistenceResult, n: int) -> pd.DataFrame:
    columns = ["eps", "s", "lambda"] + [f"u_{i}" for i in range(n)]
    rows = [
        [p.eps, p.selection_param, p.lam, *p.u.tolist()]
        for points in result.accepted.values()
        for p in points
    ]
    if not rows:
        return pd.DataFrame(columns=columns)
    return _sort(pd.DataFrame(rows, columns=columns))


def _excess_out(rows: list[ExcessRow]) -> list[ExcessRowOut]:
    return [
        ExcessRowOut(
            eps_from=r.eps_from,
            eps_to=r.eps_to,
            excess=r.excess if math.isfinite(r.excess) else None,
            bound=r.bound,
            within_bound=r.within_bound,
        )
        for r in rows
    ]


def build_summary(
    gamma: PersistenceResult,
    sigma: PersistenceResult,
    bifurcation: BifurcationReport,
    degree_jump: tuple[int, int],
    grid_size: int,
    family: str,
    a: float,
) -> TraceSummary:
    hulls = {
        repr(eps): {f"{branch:+d}": [lo, hi] for branch, (lo, hi) in per_branch.items()}
        for eps, per_branch in gamma.hulls().items()
    }
    return TraceSummary(
        grid_size=grid_size,
        family=family,
        a=a,
        b=gamma.b,
        c_radius=gamma.c_neighborhood,
        nonempty={repr(eps): ok for eps, ok in gamma.nonempty.items()},
        gamma_hulls=hulls,
        gamma_usc_excess=_excess_out(gamma.usc_report),
        sigma_usc_excess=_excess_out(sigma.usc_report),
        detected_bifurcation=bifurcation.branch if bifurcation.conclusive else None,
        bifurcation_lambda_limit=bifurcation.lambda_limit,
        bifurcation_distance_limit=bifurcation.distance_limit,
        bifurcation_reason=bifurcation.reason,
        degree_jump=list(degree_jump),
        all_nonempty=gamma.all_nonempty,
    )


def write_results(
    output_dir: str | Path,
    gamma: PersistenceResult,
    sigma: PersistenceResult,
    summary: TraceSummary,
) -> dict[str, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = summary.grid_size
    paths = {
        "gamma": out / "gamma.csv",
        "sigma": out / "sigma.csv",
        "summary": out / "summary.json",
    }
    gamma_frame(gamma).to_csv(paths["gamma"], index=False, float_format=FLOAT_FORMAT)
    sigma_frame(sigma, n).to_csv(paths["sigma"], index=False, float_format=FLOAT_FORMAT)
    paths["summary"].write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Results written to %s", out)
    return paths
