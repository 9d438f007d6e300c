import numpy as np
import pytest

from app.exceptions import AdmissibilityError
from app.models.domain import ParamRectangle, TraceMode
from app.services.bvp_discretize import build, build_even_kernel_toy
from app.services.continuation import (
    PersistenceTracer,
    degree_jump,
    detect_bifurcation,
    make_rectangle,
    oriented_operator,
    path_degree,
    sign_profile,
    trace_gamma,
    trace_sigma,
)
from app.services.degree_core import operator_sign

EPS_GRID = (-0.04, -0.02, -0.01, -0.005, 0.005, 0.01, 0.02, 0.04)
EPS_SEQ = [0.04, 0.02, 0.01, 0.005, 0.0025]
S_GRID = [0.0, 0.5, 1.0]


def _rect(eps_grid=EPS_GRID, b=0.5):
    return ParamRectangle(a=0.04, b=b, eps_grid=tuple(eps_grid), lambda_window_certified=True)


# --- degree jump ---


@pytest.mark.parametrize("n", [16, 64])
def test_degree_jump_standard_problem(settings, n):
    disc = build(n, settings)
    assert degree_jump(disc, 0.5, settings) == (1, -1)


def test_degree_jump_requires_positive_b(settings, disc16):
    with pytest.raises(AdmissibilityError):
        degree_jump(disc16, 0.0, settings)


def test_degree_jump_beyond_certified_window(settings, disc16):
    # L_h − λC_h is singular near λ ≈ −10
    with pytest.raises(AdmissibilityError):
        degree_jump(disc16, 15.0, settings)


def test_path_degree_orientation_convention(settings, disc16):
    b = 0.5
    assert path_degree(disc16, b, natural_at=b, settings=settings) == 1
    assert path_degree(disc16, -b, natural_at=b, settings=settings) == -1
    assert path_degree(disc16, 0.0, natural_at=b, settings=settings) == 0


def test_oriented_operator_sign_matches_path_degree(settings, disc16):
    b = 0.5
    for lam in (b, 0.25, 0.0, -0.25, -b):
        op = oriented_operator(disc16, lam, natural_at=b, settings=settings)
        assert operator_sign(op) == path_degree(disc16, lam, natural_at=b, settings=settings)


def test_sign_profile_constant_on_each_side(settings, disc16):
    profile = sign_profile(disc16, 0.5, points=21, settings=settings)
    assert len(profile.signs_neg) == len(profile.signs_pos) == 21
    assert profile.constant_neg and profile.constant_pos
    assert profile.jump
    # L_h + bC_h is the naturally oriented end
    assert profile.signs_neg[0] == 1


def test_even_kernel_toy_has_no_jump(settings):
    toy = build_even_kernel_toy(16, settings)
    assert not sign_profile(toy, 0.5, settings=settings).jump


def test_make_rectangle_auto(settings, disc16):
    rect = make_rectangle(disc16, 0.04, "auto", [0.04, -0.04, 0.0], settings)
    assert rect.b == pytest.approx(0.5)
    assert rect.eps_grid == (-0.04, 0.0, 0.04)
    assert rect.lambda_window_certified


# --- persistence ---


def test_nonlocal_gamma_closed_form(settings, disc16, nonlocal_phi):
    result = trace_gamma(disc16, nonlocal_phi, _rect(), 0.25, S_GRID, settings)
    assert result.all_nonempty
    for eps, points in result.accepted.items():
        assert {(p.selection_param, round(float(p.u[0]))) for p in points} == {
            (s, sign) for s in S_GRID for sign in (1, -1)
        }
        for p in points:
            sign = 1.0 if p.u[0] > 0 else -1.0
            # λ = ±ε·((1 − s) + 2s)
            assert p.lam == pytest.approx(sign * eps * (1 + p.selection_param), abs=1e-8)
    assert result.usc_ok


def test_piecewise_gamma_in_band(settings, disc16, piecewise_phi):
    result = trace_gamma(disc16, piecewise_phi, _rect(), 0.25, S_GRID, settings)
    assert result.all_nonempty
    for eps, lams in result.gamma.items():
        for lam in lams:
            assert 0.5 * abs(eps) - 1e-8 <= abs(lam) <= 1.5 * abs(eps) + 1e-8


def test_eps_zero_only(settings, disc16, nonlocal_phi):
    result = trace_gamma(disc16, nonlocal_phi, _rect((0.0,)), 0.25, S_GRID, settings)
    assert result.all_nonempty
    assert set(result.gamma[0.0]) == {0.0}


def test_lambda_beyond_b_is_rejected(settings, disc16, nonlocal_phi):
    # λ = ±ε(1 + s) ≥ 0.04 > b
    result = trace_gamma(disc16, nonlocal_phi, _rect((0.04,), b=0.03), 0.25, S_GRID, settings)
    assert not result.all_nonempty
    assert result.failures == [0.04]
    assert result.attempts[0.04]


def test_sigma_contains_constants(settings, disc16, nonlocal_phi):
    result = trace_sigma(disc16, nonlocal_phi, _rect(), 0.25, S_GRID, settings)
    for members in result.sigma.values():
        for u in members:
            assert np.allclose(np.abs(u), 1.0)
    assert all(row.excess == pytest.approx(0.0, abs=1e-12) for row in result.usc_report)


def test_parallel_mode_matches_pipelined(settings, disc16, piecewise_phi):
    rect = _rect((-0.01, 0.01, 0.02))
    pipelined = trace_gamma(disc16, piecewise_phi, rect, 0.25, S_GRID, settings)
    parallel = trace_gamma(
        disc16, piecewise_phi, rect, 0.25, S_GRID, settings.model_copy(update={"workers": 2}), TraceMode.PARALLEL
    )
    for eps in rect.eps_grid:
        assert parallel.gamma[eps] == pytest.approx(pipelined.gamma[eps], abs=1e-10)


def test_radius_must_exclude_zero(settings, disc16, nonlocal_phi):
    tracer = PersistenceTracer(settings, disc16, nonlocal_phi)
    with pytest.raises(AdmissibilityError):
        tracer.trace(_rect(), 1.0, S_GRID)


def test_hulls_per_branch(settings, disc16, nonlocal_phi):
    result = trace_gamma(disc16, nonlocal_phi, _rect((0.02,)), 0.25, S_GRID, settings)
    hulls = result.hulls()[0.02]
    assert hulls[1] == pytest.approx((0.02, 0.04))
    assert hulls[-1] == pytest.approx((-0.04, -0.02))


@pytest.mark.parametrize(
    "family,coarse,fine",
    [
        ("piecewise_phi", (-0.04, -0.02, 0.0, 0.02, 0.04), (-0.04, -0.03, -0.02, -0.01, 0.0, 0.01, 0.02, 0.03, 0.04)),
        ("aumann_phi", (0.0, 0.02, 0.04), (0.0, 0.01, 0.02, 0.03, 0.04)),
    ],
)
def test_halving_eps_step_does_not_increase_excess(request, settings, disc16, family, coarse, fine):
    phi = request.getfixturevalue(family)
    wide = trace_gamma(disc16, phi, _rect(coarse), 0.25, S_GRID, settings)
    narrow = trace_gamma(disc16, phi, _rect(fine), 0.25, S_GRID, settings)
    assert wide.all_nonempty and narrow.all_nonempty
    e_wide = max(row.excess for row in wide.usc_report)
    e_narrow = max(row.excess for row in narrow.usc_report)
    # λ grows linearly in ε on every branch, so half the step gives about half the excess
    assert e_narrow <= e_wide + 1e-12
    assert e_narrow < e_wide


# --- bifurcation ---


@pytest.mark.parametrize("family", ["nonlocal_phi", "piecewise_phi"])
def test_bifurcation_exact_families(request, settings, disc16, family):
    phi = request.getfixturevalue(family)
    report = detect_bifurcation(disc16, phi, EPS_SEQ, 0.25, settings=settings)
    assert report.conclusive
    assert report.branch in (1, -1)
    for eps, dist, lam in zip(EPS_SEQ, report.distances, report.lambdas):
        assert dist <= 10 * eps
        assert abs(lam) <= 3 * eps
    assert abs(report.lambda_limit) <= 1e-6
    assert abs(report.distance_limit) <= 1e-6


def test_bifurcation_aumann(settings, disc16, aumann_phi):
    report = detect_bifurcation(disc16, aumann_phi, EPS_SEQ, 0.25, settings=settings)
    assert report.conclusive
    for eps, dist, lam in zip(EPS_SEQ, report.distances, report.lambdas):
        assert dist <= 10 * eps
        assert abs(lam) <= 3 * eps
    assert abs(report.lambda_limit) <= 1e-4
    assert abs(report.distance_limit) <= 1e-4
    branches = {int(np.sign(w.u[0])) for w in report.witnesses}
    assert branches == {report.branch}


def test_bifurcation_trivial_sequence(settings, disc16, nonlocal_phi):
    report = detect_bifurcation(disc16, nonlocal_phi, [0.0, 0.0], 0.25, settings=settings)
    assert not report.conclusive
    assert "trivial" in report.reason
