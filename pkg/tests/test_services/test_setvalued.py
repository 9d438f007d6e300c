import numpy as np
import pytest

from app.exceptions import EvaluationError
from app.services.profiles import BivariateProfile, Profile
from app.services.setvalued import (
    AumannInterval,
    ConstantIntervalMap,
    IntervalMap,
    NonlocalInterval,
    PiecewiseAffineBounds,
    SingletonMap,
    contains_zero,
    graph_distance,
    hull_distance,
    make_selection,
    usc_witness,
    zero_membership,
)

USC_DELTAS = [0.1, 0.05, 0.025, 0.0125]


# --- profiles ---


def test_profile_piecewise_evaluation():
    # 1 + x on [0, 1], then 2 − (x − 1)² on [1, 2]
    p = Profile([0.0, 1.0, 2.0], [[1.0, 1.0], [-1.0, 0.0, 2.0]])
    assert p(0.5) == pytest.approx(1.5)
    assert p(1.5) == pytest.approx(1.75)
    # end pieces extend past the breakpoints
    assert p(-1.0) == pytest.approx(0.0)


def test_profile_rejects_bad_descriptor():
    with pytest.raises(ValueError, match="pieces"):
        Profile([0.0, 1.0, 2.0], [[1.0]])
    with pytest.raises(ValueError, match="increasing"):
        Profile([1.0, 0.0], [[1.0]])


def test_bivariate_profile_sum_of_terms():
    t_part = Profile([0.0, 1.0], [[1.0, 0.0]])  # t
    prof = BivariateProfile([(t_part, Profile.constant(3.0)), (Profile.constant(1.0), Profile.constant(1.0))])
    assert prof(0.5, 7.0) == pytest.approx(2.5)


# --- interval maps on ℝⁿ ---


def test_interval_map_rejects_empty_value():
    phi = IntervalMap(lambda x: x + 1.0, lambda x: x)
    with pytest.raises(EvaluationError):
        phi.extremes(np.zeros(2))


def test_singleton_selection_ignores_s():
    phi = SingletonMap(lambda x: 2 * x)
    x = np.array([1.0, -1.0])
    assert np.allclose(make_selection(phi, x, 0.3), [2.0, -2.0])


def test_selection_parameter_out_of_range():
    phi = ConstantIntervalMap([0.0], [1.0])
    with pytest.raises(ValueError):
        make_selection(phi, np.zeros(1), 1.5)


def test_hull_distance():
    assert hull_distance(np.array([0.5, 3.0]), np.zeros(2), np.ones(2)) == pytest.approx(2.0)
    assert hull_distance(np.array([0.5, 0.5]), np.zeros(2), np.ones(2)) == 0.0


def test_graph_distance_positive_radius_required():
    with pytest.raises(ValueError):
        graph_distance(ConstantIntervalMap([0.0], [1.0]), np.zeros(1), np.zeros(1), 0.0)


def test_graph_distance_finds_nearby_graph_point():
    # (0, 0.25) is 0.25 from φ(0) = {0}; the graph point (0.125, 0.125) is 0.125 away
    phi = SingletonMap(lambda x: x)
    d = graph_distance(phi, np.array([0.0]), np.array([0.25]), search_radius=0.25)
    assert d == pytest.approx(0.125)


# --- families ---


def test_piecewise_affine_constant_selection(disc16, piecewise_phi):
    u = disc16.ones
    for s in (0.0, 0.5, 1.0):
        w = make_selection(piecewise_phi, u, s)
        # 1 + (2s − 1)·ρ
        assert np.allclose(w, 1.0 + (2 * s - 1) * 0.5)


def test_piecewise_affine_zero_membership(disc16, piecewise_phi):
    assert zero_membership(piecewise_phi, 16) == {1: False, -1: False}
    assert contains_zero(piecewise_phi, 0.3 * disc16.ones)


def test_piecewise_affine_validation(disc16):
    with pytest.raises(ValueError):
        PiecewiseAffineBounds(disc16.grid, [0.0, 0.5, 1.0], 1.0)
    with pytest.raises(ValueError):
        PiecewiseAffineBounds(disc16.grid, [0.0, 0.5, 0.9], 0.5)


def test_nonlocal_coefficient_selection(disc16, nonlocal_phi):
    for sign in (1.0, -1.0):
        u = sign * disc16.ones
        # f ≡ 1, so w_s = (1 − s)·1 + s·2 = 1 + s whatever the sign of u
        assert np.allclose(make_selection(nonlocal_phi, u, 0.25), 1.25)
    assert zero_membership(nonlocal_phi, 16) == {1: False, -1: False}


def test_nonlocal_selection_is_in_graph(disc16):
    f = Profile([-1.0, 1.0], [[1.0, 0.0]])  # f(u) = u, changes sign
    phi = NonlocalInterval(disc16.quad_weights, f, Profile.constant(-1.0), Profile.constant(2.0))
    u = np.linspace(-1.0, 1.0, 16)
    lo, hi = phi.extremes(u)
    w = make_selection(phi, u, 0.7)
    assert hull_distance(w, lo, hi) == 0.0
    # α ≤ 0 ≤ β, so 0 ∈ φ(u)
    assert phi.contains_zero(u)


def test_nonlocal_alpha_above_beta_raises(disc16):
    phi = NonlocalInterval(disc16.quad_weights, Profile.constant(1.0), Profile.constant(3.0), Profile.constant(2.0))
    with pytest.raises(EvaluationError):
        phi.extremes(disc16.ones)


def test_nonlocal_vanishing_f_is_flagged(disc16):
    f = Profile([-1.0, 1.0], [[1.0, 0.0]])
    phi = NonlocalInterval(disc16.quad_weights, f, Profile.constant(1.0), Profile.constant(2.0))
    u = np.where(disc16.grid < 0.5, 0.0, 1.0)
    report = usc_witness(phi, u, USC_DELTAS)
    assert report.f_vanishes_on_trajectory


def test_aumann_envelopes(disc16, aumann_phi):
    lo, hi = aumann_phi.extremes(disc16.ones)
    # ∫₀ᵗ 1 = t and ∫₀ᵗ 2 = 2t, exact for the trapezoid rule
    assert np.allclose(lo, disc16.grid)
    assert np.allclose(hi, 2 * disc16.grid)
    assert np.allclose(make_selection(aumann_phi, disc16.ones, 0.5), 1.5 * disc16.grid)
    assert zero_membership(aumann_phi, 16) == {1: False, -1: False}


def test_aumann_zero_membership_with_sign_changing_bounds(disc16):
    phi = AumannInterval(disc16.grid, BivariateProfile.constant(-1.0), BivariateProfile.constant(1.0))
    assert phi.contains_zero(disc16.ones)


# --- envelope monotonicity ---


def _nested(wide, narrow) -> bool:
    return bool(np.all(wide[0] <= narrow[0] + 1e-12) and np.all(wide[1] >= narrow[1] - 1e-12))


def test_piecewise_affine_envelope_grows_with_rho(disc16, rng):
    nodes = [0.0, 0.25, 0.5, 0.75, 1.0]
    for _ in range(20):
        u = rng.uniform(-1.5, 1.5, 16)
        narrow = PiecewiseAffineBounds(disc16.grid, nodes, 0.2).extremes(u)
        wide = PiecewiseAffineBounds(disc16.grid, nodes, 0.6).extremes(u)
        assert _nested(wide, narrow)
        # widths are exactly 2ρ everywhere
        assert np.allclose(wide[1] - wide[0], 1.2)


def test_nonlocal_envelope_grows_with_coefficient_range(disc16, rng):
    f = Profile([-2.0, 2.0], [[1.0, -2.0]])  # f(u) = u, takes both signs
    narrow_phi = NonlocalInterval(disc16.quad_weights, f, Profile.constant(1.0), Profile.constant(2.0))
    wide_phi = NonlocalInterval(disc16.quad_weights, f, Profile.constant(0.5), Profile.constant(3.0))
    for _ in range(20):
        u = rng.uniform(-1.5, 1.5, 16)
        assert _nested(wide_phi.extremes(u), narrow_phi.extremes(u))


def _aumann_bounds(shift: float) -> tuple[BivariateProfile, BivariateProfile]:
    t = Profile([0.0, 1.0], [[1.0, 0.0]])
    half_s = Profile([-1.0, 1.0], [[0.5, -0.5]])  # s/2
    one = Profile.constant(1.0)
    # α = 1 + ts/2 − shift, β = 2 + ts/2 + shift
    alpha = BivariateProfile([(one, Profile.constant(1.0 - shift)), (t, half_s)])
    beta = BivariateProfile([(one, Profile.constant(2.0 + shift)), (t, half_s)])
    return alpha, beta


def test_aumann_envelope_grows_with_band(disc16, rng):
    narrow_phi = AumannInterval(disc16.grid, *_aumann_bounds(0.0))
    wide_phi = AumannInterval(disc16.grid, *_aumann_bounds(0.5))
    for _ in range(20):
        u = rng.uniform(-1.5, 1.5, 16)
        assert _nested(wide_phi.extremes(u), narrow_phi.extremes(u))


def test_aumann_envelope_derivative_stays_in_band(disc16):
    alpha, beta = _aumann_bounds(0.0)
    phi = AumannInterval(disc16.grid, alpha, beta)
    t = disc16.grid
    u = 1.0 + 0.5 * np.cos(np.pi * t)
    lo, hi = phi.extremes(u)
    assert lo[0] == 0.0 and hi[0] == 0.0
    a, b = alpha(t, u), beta(t, u)
    dlo = np.diff(lo) / np.diff(t)
    dhi = np.diff(hi) / np.diff(t)
    # trapezoid slopes are node averages, so they sit between neighbouring integrand values
    assert np.all(dlo >= np.minimum(a[:-1], a[1:]) - 1e-12)
    assert np.all(dlo <= np.maximum(a[:-1], a[1:]) + 1e-12)
    assert np.all(dhi >= np.minimum(b[:-1], b[1:]) - 1e-12)
    assert np.all(dhi <= np.maximum(b[:-1], b[1:]) + 1e-12)
    assert np.all(dlo <= dhi)


# --- certification ---


@pytest.mark.parametrize("family", ["nonlocal_phi", "piecewise_phi", "aumann_phi"])
def test_random_selections_lie_on_graph(request, rng, family):
    phi = request.getfixturevalue(family)
    for _ in range(50):
        u = rng.choice([-1.0, 1.0]) + rng.uniform(-0.5, 0.5, 16)
        s = rng.uniform(0.0, 1.0)
        w = make_selection(phi, u, s)
        assert graph_distance(phi, u, w, search_radius=1e-3) <= 1e-10


@pytest.mark.parametrize("family", ["nonlocal_phi", "piecewise_phi", "aumann_phi"])
def test_usc_excess_monotone(request, disc16, family):
    phi = request.getfixturevalue(family)
    for sign in (1.0, -1.0):
        report = usc_witness(phi, sign * disc16.ones, USC_DELTAS)
        assert report.monotone
        assert all(b <= a for a, b in zip(report.excess, report.excess[1:]))
        assert not report.f_vanishes_on_trajectory


def test_usc_excess_shrinks_for_continuous_family(disc16, piecewise_phi):
    report = usc_witness(piecewise_phi, disc16.ones, USC_DELTAS)
    # node values move by at most δ, so h(δ) ≤ δ
    assert all(h <= d + 1e-12 for h, d in zip(report.excess, report.deltas))
    assert report.witness_ok


def test_usc_delta_sequence_validated(disc16, piecewise_phi):
    with pytest.raises(ValueError):
        usc_witness(piecewise_phi, disc16.ones, [0.1, 0.2])
