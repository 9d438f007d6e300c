"""Value objects shared by the degree, discretization and continuation services."""

import enum
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import qmc

from app.exceptions import AdmissibilityError, EvaluationError, NotACorrectorError
from app.utils.linalg import det_sign, finite_difference_jacobian


class DegreeMethod(str, enum.Enum):
    REGULAR_VALUE_COUNT = "regular-value-count"
    APPROXIMATION = "approximation+regular-value-count"


class NormType(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"


class TraceMode(str, enum.Enum):
    PIPELINED = "pipelined"
    PARALLEL = "parallel"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box U = Π [lo_i, hi_i]; zero-volume boxes are rejected."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise AdmissibilityError(f"box bounds must be matching vectors, got {lo.shape} and {hi.shape}")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise AdmissibilityError("box bounds must be finite")
        if np.any(hi <= lo):
            raise AdmissibilityError(f"degenerate region: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, radius: float = 1.0, center: float = 0.0) -> "Box":
        return cls(np.full(dim, center - radius), np.full(dim, center + radius))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x: np.ndarray, strict: bool = True) -> bool:
        x = np.asarray(x, dtype=float)
        if strict:
            return bool(np.all(x > self.lo) and np.all(x < self.hi))
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def _face_resolution(self, per_dim: int, max_samples: int) -> int | None:
        """Points per axis on each face grid, or None when even 2 per axis exceeds the budget."""
        n = self.dim
        faces = 2 * n
        if faces * 2 ** (n - 1) > max_samples:
            return None
        k = max(2, per_dim)
        while k > 2 and faces * k ** (n - 1) > max_samples:
            k -= 1
        return k

    def boundary_samples(self, per_dim: int, max_samples: int) -> np.ndarray:
        """Tensor grids on every face; high-dimensional faces get Halton points plus the face center."""
        n = self.dim
        if n == 1:
            return np.array([[self.lo[0]], [self.hi[0]]])
        k = self._face_resolution(per_dim, max_samples)
        samples = []
        for i in range(n):
            keep = [j for j in range(n) if j != i]
            if k is None:
                per_face = max(1, max_samples // (2 * n) - 1)
                unit = np.vstack([np.full(n - 1, 0.5), qmc.Halton(d=n - 1, scramble=False).random(per_face)])
                mesh = self.lo[keep] + unit * self.widths[keep]
            else:
                axes = [np.linspace(self.lo[j], self.hi[j], k) for j in keep]
                mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
            for value in (self.lo[i], self.hi[i]):
                samples.append(np.insert(mesh, i, value, axis=1))
        return np.vstack(samples)

    def face_spacing(self, per_dim: int, max_samples: int) -> float | None:
        """Grid spacing on the faces, None when faces are sampled rather than gridded."""
        if self.dim == 1:
            return 0.0
        k = self._face_resolution(per_dim, max_samples)
        if k is None:
            return None
        return float(np.max(self.widths) / (k - 1))


@dataclass(frozen=True)
class SmoothMap:
    """A C¹ map ℝⁿ → ℝⁿ with an optional analytic Jacobian and Lipschitz bound."""

    func: Callable[[np.ndarray], Any]
    jac: Callable[[np.ndarray], Any] | None = None
    lipschitz: float | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        value = np.atleast_1d(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float))
        if not np.all(np.isfinite(value)):
            raise EvaluationError(f"non-finite map value at x={x}")
        return value

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jac is None:
            return finite_difference_jacobian(self, x)
        value = np.atleast_2d(np.asarray(self.jac(x), dtype=float))
        if not np.all(np.isfinite(value)):
            raise EvaluationError(f"non-finite Jacobian at x={x}")
        return value


def as_smooth_map(g: "SmoothMap | Callable") -> SmoothMap:
    return g if isinstance(g, SmoothMap) else SmoothMap(func=g)


def linear_map(matrix: np.ndarray) -> SmoothMap:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    return SmoothMap(func=lambda x: m @ x, jac=lambda x: m)


@dataclass(frozen=True)
class OrientedOperator:
    """
    Square matrix with its orientation stored as a positive corrector A.

    matrix + A must be invertible; a zero corrector means the natural orientation
    of an invertible matrix.
    """

    matrix: np.ndarray
    positive_corrector: np.ndarray | None = None
    tol_singular: float = 1e-12

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        a = (
            np.zeros_like(m)
            if self.positive_corrector is None
            else np.atleast_2d(np.asarray(self.positive_corrector, dtype=float))
        )
        if a.shape != m.shape:
            raise NotACorrectorError(f"corrector shape {a.shape} does not match operator {m.shape}")
        if det_sign(m + a, self.tol_singular)[0] == 0:
            raise NotACorrectorError("matrix + positive corrector is singular")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "positive_corrector", a)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PreimagePoint:
    x: np.ndarray
    sign: int
    residual: float


@dataclass(frozen=True)
class DegreeResult:
    value: int
    method: DegreeMethod
    certificate: tuple[PreimagePoint, ...] = ()
    perturbation_used: np.ndarray | None = None
    eps_used: float | None = None

    @property
    def certificate_sum(self) -> int:
        return sum(p.sign for p in self.certificate)


@dataclass(frozen=True)
class AdmissibleTriple:
    """(g, U, φ) with the coincidence set kept away from ∂U; orientation ±1 scales the degree."""

    g: SmoothMap
    region: Box
    phi: Any  # setvalued.SetValuedMap on ℝⁿ
    orientation: int = 1

    def __post_init__(self):
        if self.orientation not in (-1, 1):
            raise AdmissibilityError(f"orientation must be ±1, got {self.orientation}")
        object.__setattr__(self, "g", as_smooth_map(self.g))


@dataclass(frozen=True)
class Discretization:
    """Uniform grid on [0,1] with L_h (u'' + u', Neumann ghost points), C_h and trapezoid weights."""

    n: int
    grid: np.ndarray
    L: np.ndarray
    C: np.ndarray
    quad_weights: np.ndarray
    operator: str = "standard"

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def ones(self) -> np.ndarray:
        return np.ones(self.n)


@dataclass
class ConvergenceStudy:
    ns: list[int]
    hs: list[float]
    residuals: list[float]
    order: float


@dataclass
class TransversalityReport:
    n: int
    dim_kernel: int
    rank_augmented: int
    transversal: bool
    singular_at_zero: bool
    window_certified: float
    scanned: int
    reason: str = ""


@dataclass
class BranchPoint:
    u: np.ndarray
    eps: float
    lam: float
    selection_param: float
    residual: float
    newton_iters: int
    converged: bool
    constraint_gap: float = 0.0
    used_pseudo_inverse: bool = False
    convergence_order: float | None = None
    reason: str = ""


@dataclass(frozen=True)
class ParamRectangle:
    a: float
    b: float
    eps_grid: tuple[float, ...]
    lambda_window_certified: bool


@dataclass
class ExcessRow:
    eps_from: float
    eps_to: float
    excess: float
    bound: float
    within_bound: bool


@dataclass
class PersistenceResult:
    """Sampled Γ(ε) or Σ(ε) with the witnesses behind every entry."""

    kind: str  # "gamma" or "sigma"
    accepted: dict[float, list[BranchPoint]]
    attempts: dict[float, list[BranchPoint]]
    c_neighborhood: float
    b: float
    usc_report: list[ExcessRow] = field(default_factory=list)

    @property
    def gamma(self) -> dict[float, list[float]]:
        return {eps: sorted(p.lam for p in pts) for eps, pts in self.accepted.items()}

    @property
    def sigma(self) -> dict[float, list[np.ndarray]]:
        return {eps: [p.u for p in pts] for eps, pts in self.accepted.items()}

    @property
    def nonempty(self) -> dict[float, bool]:
        return {eps: bool(pts) for eps, pts in self.accepted.items()}

    @property
    def all_nonempty(self) -> bool:
        return all(self.nonempty.values())

    @property
    def failures(self) -> list[float]:
        return [eps for eps, ok in self.nonempty.items() if not ok]

    @property
    def usc_ok(self) -> bool:
        return all(row.within_bound for row in self.usc_report)

    def hulls(self) -> dict[float, dict[int, tuple[float, float]]]:
        """Interval hull of λ per branch (+1 / -1 = nearest member of S₀)."""
        out: dict[float, dict[int, tuple[float, float]]] = {}
        for eps, pts in self.accepted.items():
            per_branch: dict[int, list[float]] = {}
            for p in pts:
                per_branch.setdefault(nearest_trivial(p.u), []).append(p.lam)
            out[eps] = {br: (min(lams), max(lams)) for br, lams in sorted(per_branch.items())}
        return out


def nearest_trivial(u: np.ndarray) -> int:
    """+1 or -1, whichever constant is closer to u in the max norm (ties go to +1)."""
    return 1 if np.max(np.abs(u - 1.0)) <= np.max(np.abs(u + 1.0)) else -1


def distance_to_trivial(u: np.ndarray) -> float:
    return float(min(np.max(np.abs(u - 1.0)), np.max(np.abs(u + 1.0))))


@dataclass
class UscReport:
    deltas: list[float]
    excess: list[float]
    monotone: bool
    vanishing: bool
    f_vanishes_on_trajectory: bool = False

    @property
    def witness_ok(self) -> bool:
        return self.monotone and self.vanishing


@dataclass
class SignProfile:
    lambdas_neg: list[float]
    signs_neg: list[int]
    lambdas_pos: list[float]
    signs_pos: list[int]

    @property
    def constant_neg(self) -> bool:
        return len(set(self.signs_neg)) == 1 and 0 not in self.signs_neg

    @property
    def constant_pos(self) -> bool:
        return len(set(self.signs_pos)) == 1 and 0 not in self.signs_pos

    @property
    def jump(self) -> bool:
        return self.constant_neg and self.constant_pos and self.signs_neg[0] != self.signs_pos[0]


@dataclass
class BifurcationReport:
    eps_seq: list[float]
    witnesses: list[BranchPoint | None]
    distances: list[float]
    lambdas: list[float]
    monotone: bool = False
    conclusive: bool = False
    branch: int | None = None
    lambda_limit: float | None = None
    distance_limit: float | None = None
    reason: str = ""
