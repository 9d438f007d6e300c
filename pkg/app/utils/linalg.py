import warnings
from collections.abc import Callable

import numpy as np
from scipy import linalg as sla

from app.exceptions import EvaluationError

_TINY = np.finfo(float).tiny


def det_sign(matrix: np.ndarray, tol: float = 1e-12) -> tuple[int, float]:
    """
    Sign and log|det| of a square matrix from an LU factorization with partial pivoting.

    sign = parity(permutation) · Π sign(u_ii). A pivot with |u_ii| ≤ tol·max(‖M‖_∞, tiny)
    makes the matrix numerically singular: (0, -inf) is returned.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"det_sign needs a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise EvaluationError("non-finite entries in matrix")
    if m.size == 0:
        return 1, 0.0

    scale = max(np.abs(m).sum(axis=1).max(), _TINY)
    with warnings.catch_warnings():
        # exactly singular matrices trigger LinAlgWarning; the pivot test below covers them
        warnings.simplefilter("ignore")
        lu, piv = sla.lu_factor(m, check_finite=False)

    diag = np.diag(lu)
    if np.min(np.abs(diag)) <= tol * scale:
        return 0, -np.inf

    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    sign = -1 if swaps % 2 else 1
    if np.count_nonzero(diag < 0) % 2:
        sign = -sign
    return sign, float(np.sum(np.log(np.abs(diag))))


def is_invertible(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    return det_sign(matrix, tol)[0] != 0


def finite_difference_jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    f0: np.ndarray | None = None,
    central: bool = True,
) -> np.ndarray:
    """Jacobian of func at x by central (default) or forward differences."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = np.atleast_1d(np.asarray(func(x), dtype=float))
    eps = np.finfo(float).eps
    base = eps ** (1.0 / 3.0) if central else np.sqrt(eps)
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        step = base * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += step
        fp = np.atleast_1d(np.asarray(func(xp), dtype=float))
        if central:
            xm = x.copy()
            xm[j] -= step
            fm = np.atleast_1d(np.asarray(func(xm), dtype=float))
            jac[:, j] = (fp - fm) / (2.0 * step)
        else:
            jac[:, j] = (fp - f0) / step
    if not np.all(np.isfinite(jac)):
        raise EvaluationError(f"non-finite finite-difference Jacobian at x={x}")
    return jac


def numerical_rank(matrix: np.ndarray, rtol: float) -> int:
    """Number of singular values above rtol·σ_max."""
    sv = sla.svdvals(np.atleast_2d(matrix))
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rtol * sv[0]))


def orthonormal_basis(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) for the span of the given columns."""
    return sla.orth(np.atleast_2d(np.asarray(vectors, dtype=float)))


def complement_projector(basis: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of span(basis)."""
    q = orthonormal_basis(basis)
    return np.eye(q.shape[0]) - q @ q.T
