from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import Settings
from app.services.profiles import BivariateProfile, Profile

# Sample ranges for the α ≤ β checks at load time
_S_SAMPLES = np.linspace(-4.0, 4.0, 401)
_T_SAMPLES = np.linspace(0.0, 1.0, 41)


class ProfileConfig(BaseModel):
    """Piecewise polynomial; each piece lists coefficients highest degree first in (x − left breakpoint)."""

    breakpoints: list[float] = Field(default_factory=lambda: [-1.0, 1.0])
    coefficients: list[list[float]] = Field(default_factory=lambda: [[0.0]])

    @model_validator(mode="after")
    def _check_shape(self):
        Profile(self.breakpoints, self.coefficients)  # raises ValueError on a bad descriptor
        return self

    @classmethod
    def constant(cls, value: float) -> "ProfileConfig":
        return cls(breakpoints=[-1.0, 1.0], coefficients=[[value]])

    def build(self) -> Profile:
        return Profile(self.breakpoints, self.coefficients)


class ProfileTerm(BaseModel):
    t: ProfileConfig
    s: ProfileConfig


class BivariateProfileConfig(BaseModel):
    """Σ t_k(t)·s_k(s)."""

    terms: list[ProfileTerm] = Field(min_length=1)

    @classmethod
    def constant(cls, value: float) -> "BivariateProfileConfig":
        return cls(terms=[ProfileTerm(t=ProfileConfig.constant(1.0), s=ProfileConfig.constant(value))])

    def build(self) -> BivariateProfile:
        return BivariateProfile([(term.t.build(), term.s.build()) for term in self.terms])


class PiecewiseAffineFamily(BaseModel):
    kind: Literal["piecewise_affine"] = "piecewise_affine"
    nodes: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    rho: float = 0.5

    @field_validator("rho")
    @classmethod
    def _rho_in_unit_interval(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {v}")
        return v

    @field_validator("nodes")
    @classmethod
    def _nodes_partition(cls, v: list[float]) -> list[float]:
        if len(v) < 2:
            raise ValueError("need at least two nodes")
        if v[0] != 0.0 or v[-1] != 1.0:
            raise ValueError("nodes must start at 0 and end at 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("nodes must be strictly increasing")
        return v


class NonlocalFamily(BaseModel):
    kind: Literal["nonlocal"] = "nonlocal"
    f: ProfileConfig = Field(default_factory=lambda: ProfileConfig.constant(1.0))
    alpha: ProfileConfig = Field(default_factory=lambda: ProfileConfig.constant(1.0))
    beta: ProfileConfig = Field(default_factory=lambda: ProfileConfig.constant(2.0))

    @model_validator(mode="after")
    def _alpha_below_beta(self):
        gap = self.beta.build()(_S_SAMPLES) - self.alpha.build()(_S_SAMPLES)
        if np.any(gap < 0):
            bad = _S_SAMPLES[np.argmin(gap)]
            raise ValueError(f"alpha(s) > beta(s) at s={bad:.4g}")
        return self


class AumannFamily(BaseModel):
    kind: Literal["aumann"] = "aumann"
    alpha: BivariateProfileConfig = Field(default_factory=lambda: BivariateProfileConfig.constant(1.0))
    beta: BivariateProfileConfig = Field(default_factory=lambda: BivariateProfileConfig.constant(2.0))

    @model_validator(mode="after")
    def _alpha_below_beta(self):
        t, s = np.meshgrid(_T_SAMPLES, _S_SAMPLES[::5], indexing="ij")
        gap = self.beta.build()(t, s) - self.alpha.build()(t, s)
        if np.any(gap < 0):
            i, j = np.unravel_index(np.argmin(gap), gap.shape)
            raise ValueError(f"alpha(t,s) > beta(t,s) at (t,s)=({t[i, j]:.4g}, {s[i, j]:.4g})")
        return self


FamilyConfig = Annotated[
    PiecewiseAffineFamily | NonlocalFamily | AumannFamily,
    Field(discriminator="kind"),
]


class RectangleConfig(BaseModel):
    a: float = Field(0.05, ge=0.0)
    b: float | Literal["auto"] = "auto"
    eps_points: int = Field(9, ge=1)
    eps_grid: list[float] | None = None  # explicit grid overrides eps_points

    @model_validator(mode="after")
    def _grid_inside(self):
        if isinstance(self.b, float) and self.b <= 0:
            raise ValueError("b must be positive or 'auto'")
        if self.eps_grid is not None:
            if not self.eps_grid:
                raise ValueError("eps_grid must not be empty")
            if any(abs(e) > self.a + 1e-15 for e in self.eps_grid):
                raise ValueError(f"eps_grid must lie in [-a, a] = [-{self.a}, {self.a}]")
        return self

    def grid(self) -> list[float]:
        if self.eps_grid is not None:
            return sorted(float(e) for e in self.eps_grid)
        if self.eps_points == 1 or self.a == 0.0:
            return [0.0]
        return [float(e) for e in np.linspace(-self.a, self.a, self.eps_points)]


class ToleranceOverrides(BaseModel):
    tol_singular: float | None = None
    tol_boundary: float | None = None
    tol_root: float | None = None
    tol_regular: float | None = None
    tol_subspace: float | None = None
    tol_constraint: float | None = None
    tol_rank: float | None = None
    newton_tol_scale: float | None = None
    solver_max_iters: int | None = None
    lambda_window: float | None = None
    lambda_scan_points: int | None = None
    usc_lipschitz: float | None = None


class ProblemConfig(BaseModel):
    grid_size: int = Field(32, ge=8)
    operator: Literal["standard", "even_kernel_toy"] = "standard"
    norm: Literal["l1", "l2"] = "l1"
    family: FamilyConfig = Field(default_factory=NonlocalFamily)
    rectangle: RectangleConfig = Field(default_factory=RectangleConfig)
    c_radius: float = Field(0.25, gt=0.0, lt=1.0)  # B_c(S₀) must exclude 0
    s_grid_size: int = Field(3, ge=1)
    bifurcation_eps: list[float] = Field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005, 0.0025])
    tolerances: ToleranceOverrides = Field(default_factory=ToleranceOverrides)
    seed: int = 20240601
    output_dir: str = "output"
    approx_samples: int = Field(50, ge=1)
    trace_mode: Literal["pipelined", "parallel"] = "pipelined"

    @field_validator("bifurcation_eps")
    @classmethod
    def _decreasing(cls, v: list[float]) -> list[float]:
        if any(b > a for a, b in zip(v, v[1:])):
            raise ValueError("bifurcation_eps must be non-increasing")
        return v

    def s_grid(self) -> list[float]:
        if self.s_grid_size == 1:
            return [0.5]
        return [float(s) for s in np.linspace(0.0, 1.0, self.s_grid_size)]

    def eps_grid(self) -> list[float]:
        return self.rectangle.grid()

    def apply_to(self, settings: Settings) -> Settings:
        update = {k: v for k, v in self.tolerances.model_dump().items() if v is not None}
        update["random_seed"] = self.seed
        return settings.model_copy(update=update)


class ExcessRowOut(BaseModel):
    eps_from: float
    eps_to: float
    excess: float | None
    bound: float
    within_bound: bool


class TraceSummary(BaseModel):
    grid_size: int
    family: str
    a: float
    b: float
    c_radius: float
    nonempty: dict[str, bool]
    gamma_hulls: dict[str, dict[str, list[float]]]
    gamma_usc_excess: list[ExcessRowOut]
    sigma_usc_excess: list[ExcessRowOut]
    detected_bifurcation: int | None
    bifurcation_lambda_limit: float | None
    bifurcation_distance_limit: float | None
    bifurcation_reason: str
    degree_jump: list[int]
    all_nonempty: bool
