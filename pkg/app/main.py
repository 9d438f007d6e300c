import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import Settings
from app.exceptions import AnalysisError
from app.families import build_family
from app.models.domain import NormType, TraceMode
from app.models.schemas import ProblemConfig
from app.services.bvp_discretize import build_operator, image_residual_convergence, transversality_check
from app.services.continuation import PersistenceTracer, make_rectangle, oriented_operator, path_degree, sign_profile
from app.services.degree_core import operator_sign
from app.services.results_writer import build_summary, write_results
from app.services.setvalued import graph_distance, make_selection, usc_witness, zero_membership
from app.utils.linalg import numerical_rank

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

USC_DELTAS = [0.1, 0.05, 0.025, 0.0125]


class ConfigError(Exception):
    """The problem file is missing, unreadable or invalid."""


def load_config(path: str | None) -> ProblemConfig:
    if path is None:
        return ProblemConfig()
    try:
        return ProblemConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (ValidationError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def _setup(config: ProblemConfig, settings: Settings):
    disc = build_operator(config.operator, config.grid_size, settings)
    rect = make_rectangle(disc, config.rectangle.a, config.rectangle.b, config.eps_grid(), settings)
    return disc, rect


def degree_pair(disc, b: float, settings: Settings) -> tuple[int, int]:
    """(deg at λ = +b, deg at λ = −b) with L_h − bC_h naturally oriented, as cmd_degree reports them."""
    return path_degree(disc, b, natural_at=b, settings=settings), path_degree(disc, -b, natural_at=b, settings=settings)


# --- subcommands ---


def cmd_check(config: ProblemConfig, settings: Settings) -> int:
    rows = []

    def record(name: str, passed: bool, detail: str) -> None:
        rows.append({"check": name, "result": "pass" if passed else "FAIL", "detail": detail})

    try:
        disc, rect = _setup(config, settings)
    except AnalysisError as exc:
        print(f"build failed: {exc}")
        return EXIT_FAILED
    record("build", True, f"n = {disc.n}, operator = {disc.operator}")

    kernel_residual = float(np.max(np.abs(disc.L @ disc.ones)))
    record("L_h 1 = 0", kernel_residual <= 1e-12 * max(1.0, float(np.abs(disc.L).sum(axis=1).max())), f"{kernel_residual:.2e}")

    dim_ker = disc.n - numerical_rank(disc.L, settings.tol_rank)
    record("dim ker L_h = 1", dim_ker == 1, f"dim ker = {dim_ker}")

    study = image_residual_convergence(settings=settings)
    record("image residual order", study.order >= 1.9, f"order = {study.order:.3f}")

    report = transversality_check(disc, settings.lambda_window, settings)
    record("transversality", report.transversal, report.reason or f"rank = {report.rank_augmented}")

    profile = sign_profile(disc, rect.b, settings=settings)
    record(
        "sign jump at 0",
        profile.jump,
        f"neg side {sorted(set(profile.signs_neg))}, pos side {sorted(set(profile.signs_pos))}",
    )

    phi = build_family(config.family, disc)
    membership = zero_membership(phi, disc.n)
    record("0 not in phi(+-1)", not any(membership.values()), f"+1: {membership[1]}, -1: {membership[-1]}")

    table = pd.DataFrame(rows, columns=["check", "result", "detail"])
    print(table.to_string(index=False))
    passed = all(r["result"] == "pass" for r in rows)
    if report.transversal:
        print(f"transversal: yes, dim ker = {report.dim_kernel}, window b >= {report.window_certified:.4g}")
    else:
        print(f"transversal: no ({report.reason})")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_degree(config: ProblemConfig, settings: Settings, lam: float) -> int:
    disc, rect = _setup(config, settings)
    try:
        value = path_degree(disc, lam, natural_at=rect.b, settings=settings)
        sign = operator_sign(oriented_operator(disc, lam, natural_at=rect.b, settings=settings))
    except AnalysisError as exc:
        print(f"degree not certified at lambda = {lam}: {exc}")
        return EXIT_FAILED
    print(f"deg(L_h - {lam:g} C_h) = {value:d}, sign = {sign:d}  (orientation: L_h - {rect.b:g} C_h natural)")
    return EXIT_OK


def cmd_trace(config: ProblemConfig, settings: Settings) -> int:
    disc, rect = _setup(config, settings)
    phi = build_family(config.family, disc)
    tracer = PersistenceTracer(settings, disc, phi, NormType(config.norm), TraceMode(config.trace_mode))

    record = tracer.trace(rect, config.c_radius, config.s_grid())
    gamma = tracer.gamma_result(record)
    sigma = tracer.sigma_result(record)
    bifurcation = tracer.detect_bifurcation(config.bifurcation_eps, config.c_radius, rect.b, config.s_grid())
    jump = degree_pair(disc, rect.b, settings)

    summary = build_summary(gamma, sigma, bifurcation, jump, disc.n, config.family.kind, rect.a)
    paths = write_results(config.output_dir, gamma, sigma, summary)

    for eps in gamma.failures:
        logger.warning("no witness in B_c(S0) x [-b, b] at eps = %g", eps)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    print(f"nonempty for all eps: {'yes' if gamma.all_nonempty else 'no'}; degree jump {jump}")
    if summary.detected_bifurcation is not None:
        print(f"bifurcation from {summary.detected_bifurcation:+d} at (eps, lambda) = (0, 0)")
    else:
        print(f"bifurcation inconclusive: {summary.bifurcation_reason}")
    return EXIT_OK if gamma.all_nonempty else EXIT_FAILED


def cmd_approx(config: ProblemConfig, settings: Settings, eps: float) -> int:
    """Graph-distance certification of sampled selections plus u.s.c. witnesses at u = +-1."""
    if eps < 0:
        raise ConfigError("--eps must be non-negative")
    disc = build_operator(config.operator, config.grid_size, settings)
    phi = build_family(config.family, disc)
    rng = np.random.default_rng(config.seed)

    worst = 0.0
    limit = 1e-10 + eps
    radius = max(eps, 1e-3)
    for _ in range(config.approx_samples):
        u = rng.choice([-1.0, 1.0]) + rng.uniform(-0.5, 0.5, disc.n)
        s = float(rng.uniform(0.0, 1.0))
        w = make_selection(phi, u, s)
        if eps > 0:
            w = w + 0.5 * eps * rng.uniform(-1.0, 1.0, disc.n)
        worst = max(worst, graph_distance(phi, u, w, search_radius=radius))

    usc_ok = True
    for sign in (1.0, -1.0):
        report = usc_witness(phi, np.full(disc.n, sign), USC_DELTAS, seed=config.seed)
        usc_ok = usc_ok and report.monotone
        print(f"u = {sign:+g}: h(delta) = {', '.join(f'{h:.3e}' for h in report.excess)}, monotone = {report.monotone}")

    print(f"{config.approx_samples} selections, worst graph distance {worst:.3e} (limit {limit:.1e})")
    return EXIT_OK if worst <= limit and usc_ok else EXIT_FAILED


# --- entry point ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inclusion-bifurcation",
        description="Degree jump, persistence and bifurcation for u'' + u' - lambda u + eps phi(u) containing 0.",
    )
    parser.add_argument("--config", help="problem file (JSON); defaults apply when omitted")
    parser.add_argument("--output-dir", help="overrides output_dir from the config")
    parser.add_argument("--log-level", help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check", help="structural checks: kernel, image, transversality, sign jump")
    degree = sub.add_parser("degree", help="oriented degree of L_h - lambda C_h")
    degree.add_argument("--lambda", dest="lam", type=float, required=True)
    sub.add_parser("trace", help="trace Gamma(eps), Sigma(eps) and detect the bifurcation")
    approx = sub.add_parser("approx", help="graph-distance certification of selections")
    approx.add_argument("--eps", type=float, default=0.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    settings = Settings()
    if args.log_level:
        settings = settings.model_copy(update={"log_level": args.log_level})
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config)
        if args.output_dir:
            config = config.model_copy(update={"output_dir": args.output_dir})
        settings = config.apply_to(settings)

        if args.command == "check":
            return cmd_check(config, settings)
        if args.command == "degree":
            return cmd_degree(config, settings, args.lam)
        if args.command == "trace":
            return cmd_trace(config, settings)
        return cmd_approx(config, settings, args.eps)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AnalysisError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
