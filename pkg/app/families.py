from dataclasses import dataclass

from app.models.domain import Discretization
from app.models.schemas import (
    AumannFamily,
    BivariateProfileConfig,
    FamilyConfig,
    NonlocalFamily,
    PiecewiseAffineFamily,
    ProfileConfig,
)
from app.services.setvalued import AumannInterval, NonlocalInterval, PiecewiseAffineBounds, SetValuedMap


@dataclass(frozen=True)
class FamilyPreset:
    key: str
    display_name: str
    descriptor: PiecewiseAffineFamily | NonlocalFamily | AumannFamily
    zero_free: bool  # 0 ∉ φ(±1), so constant witnesses with ε ≠ 0 are nontrivial
    constant_branches: bool  # u ≡ ±1 solve the inclusion for every ε


FAMILY_PRESETS: dict[str, FamilyPreset] = {
    "piecewise_affine": FamilyPreset(
        key="piecewise_affine",
        display_name="Piecewise-affine bounds (rho = 0.5)",
        descriptor=PiecewiseAffineFamily(nodes=[0.0, 0.25, 0.5, 0.75, 1.0], rho=0.5),
        zero_free=True,
        constant_branches=True,
    ),
    "nonlocal": FamilyPreset(
        key="nonlocal",
        display_name="Nonlocal interval (f = 1, alpha = 1, beta = 2)",
        descriptor=NonlocalFamily(
            f=ProfileConfig.constant(1.0),
            alpha=ProfileConfig.constant(1.0),
            beta=ProfileConfig.constant(2.0),
        ),
        zero_free=True,
        constant_branches=True,
    ),
    "aumann": FamilyPreset(
        key="aumann",
        display_name="Aumann integral (alpha = 1, beta = 2)",
        descriptor=AumannFamily(
            alpha=BivariateProfileConfig.constant(1.0),
            beta=BivariateProfileConfig.constant(2.0),
        ),
        zero_free=True,
        constant_branches=False,
    ),
}


def get_family_preset(key: str) -> FamilyPreset:
    key = key.strip().lower()
    if key not in FAMILY_PRESETS:
        raise ValueError(f"Unknown family preset: {key}. Available: {list(FAMILY_PRESETS.keys())}")
    return FAMILY_PRESETS[key]


def build_family(descriptor: FamilyConfig, disc: Discretization) -> SetValuedMap:
    """Instantiate the set-valued map a family descriptor names on the grid of disc."""
    if isinstance(descriptor, PiecewiseAffineFamily):
        return PiecewiseAffineBounds(disc.grid, descriptor.nodes, descriptor.rho)
    if isinstance(descriptor, NonlocalFamily):
        return NonlocalInterval(
            disc.quad_weights,
            f=descriptor.f.build(),
            alpha=descriptor.alpha.build(),
            beta=descriptor.beta.build(),
        )
    if isinstance(descriptor, AumannFamily):
        return AumannInterval(disc.grid, descriptor.alpha.build(), descriptor.beta.build())
    raise ValueError(f"Unsupported family descriptor: {type(descriptor).__name__}")
