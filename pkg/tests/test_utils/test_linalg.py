import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis.strategies import integers

from app.exceptions import EvaluationError
from app.utils.linalg import (
    complement_projector,
    det_sign,
    finite_difference_jacobian,
    is_invertible,
    numerical_rank,
)


def _well_conditioned(seed: int, n: int) -> np.ndarray:
    # Q·diag(±[1, 2])·Rᵀ: singular values in [1, 2]
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    r, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q @ np.diag(rng.choice([-1.0, 1.0], n) * rng.uniform(1.0, 2.0, n)) @ r.T


# --- det_sign ---


def test_identity_is_positive():
    assert det_sign(np.eye(4)) == (1, 0.0)


def test_single_swap_flips_sign():
    p = np.eye(3)[[1, 0, 2]]
    assert det_sign(p)[0] == -1


def test_diagonal_log_det():
    sign, logdet = det_sign(np.diag([2.0, -3.0, 0.5]))
    # 2 · (−3) · 0.5 = −3
    assert sign == -1
    assert logdet == pytest.approx(np.log(3.0))


def test_singular_matrix_returns_zero():
    m = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert det_sign(m) == (0, -np.inf)
    assert not is_invertible(m)


def test_non_finite_raises():
    with pytest.raises(EvaluationError):
        det_sign(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_non_square_raises():
    with pytest.raises(ValueError, match="square"):
        det_sign(np.ones((2, 3)))


@hyp_settings(max_examples=60, deadline=None)
@given(integers(min_value=0, max_value=2**32 - 1), integers(min_value=1, max_value=6))
def test_sign_matches_numpy_det(seed, n):
    m = _well_conditioned(seed, n)
    assert det_sign(m)[0] == int(np.sign(np.linalg.det(m)))


@hyp_settings(max_examples=60, deadline=None)
@given(integers(min_value=0, max_value=2**32 - 1), integers(min_value=1, max_value=5))
def test_sign_is_multiplicative(seed, n):
    a = _well_conditioned(seed, n)
    b = _well_conditioned(seed + 1, n)
    assert det_sign(a @ b)[0] == det_sign(a)[0] * det_sign(b)[0]


# --- rank / projectors / Jacobians ---


def test_numerical_rank_of_rank_deficient_product():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(5, 2)) @ rng.normal(size=(2, 5))
    assert numerical_rank(m, 1e-10) == 2


def test_numerical_rank_of_zero_matrix():
    assert numerical_rank(np.zeros((3, 3)), 1e-10) == 0


def test_complement_projector_kills_basis():
    b = np.array([[1.0], [1.0], [0.0]])
    p = complement_projector(b)
    assert np.allclose(p @ b, 0.0)
    assert np.allclose(p @ p, p)
    assert np.allclose(p @ np.array([0.0, 0.0, 1.0]), [0.0, 0.0, 1.0])


def test_finite_difference_jacobian_of_cubic():
    def f(x):
        return np.array([x[0] ** 3 - x[1], x[0] * x[1]])

    x = np.array([0.5, -2.0])
    expected = np.array([[0.75, -1.0], [-2.0, 0.5]])
    assert np.allclose(finite_difference_jacobian(f, x), expected, atol=1e-8)
    assert np.allclose(finite_difference_jacobian(f, x, central=False), expected, atol=1e-6)


def test_finite_difference_jacobian_non_finite_raises():
    with pytest.raises(EvaluationError):
        finite_difference_jacobian(lambda x: np.array([np.inf if x[0] > 0 else 0.0]), np.array([0.0]))
