"""Piecewise-polynomial profile functions for the set-valued families."""

import numpy as np
from scipy.interpolate import PPoly

from app.exceptions import EvaluationError


class Profile:
    """
    Univariate piecewise polynomial.

    coefficients[j] holds piece j from the highest degree down, in powers of
    (x - breakpoints[j]). Outside [breakpoints[0], breakpoints[-1]] the end pieces
    are extended.
    """

    def __init__(self, breakpoints: list[float], coefficients: list[list[float]]):
        if len(breakpoints) < 2:
            raise ValueError("a profile needs at least two breakpoints")
        if len(coefficients) != len(breakpoints) - 1:
            raise ValueError(
                f"{len(breakpoints) - 1} pieces need as many coefficient lists, got {len(coefficients)}"
            )
        if any(len(piece) == 0 for piece in coefficients):
            raise ValueError("empty coefficient list")
        x = np.asarray(breakpoints, dtype=float)
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        k = max(len(piece) for piece in coefficients)
        c = np.zeros((k, len(coefficients)))
        for j, piece in enumerate(coefficients):
            c[k - len(piece):, j] = piece
        self._poly = PPoly(c, x, extrapolate=True)

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls([-1.0, 1.0], [[value]])

    def __call__(self, x) -> np.ndarray:
        value = np.asarray(self._poly(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(value)):
            raise EvaluationError("non-finite profile value")
        return value


class BivariateProfile:
    """Sum of separable terms Σ p_k(t)·q_k(s)."""

    def __init__(self, terms: list[tuple[Profile, Profile]]):
        if not terms:
            raise ValueError("a bivariate profile needs at least one term")
        self._terms = terms

    @classmethod
    def constant(cls, value: float) -> "BivariateProfile":
        return cls([(Profile.constant(1.0), Profile.constant(value))])

    def __call__(self, t, s) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        total = np.zeros(np.broadcast(t, s).shape)
        for p, q in self._terms:
            total = total + p(t) * q(s)
        return total
