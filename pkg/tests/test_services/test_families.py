import pytest

from app.families import FAMILY_PRESETS, build_family, get_family_preset
from app.services.setvalued import AumannInterval, NonlocalInterval, PiecewiseAffineBounds, zero_membership


def test_all_families_registered():
    assert set(FAMILY_PRESETS.keys()) == {"piecewise_affine", "nonlocal", "aumann"}


def test_get_family_preset_by_key():
    preset = get_family_preset("nonlocal")
    assert preset.key == "nonlocal"
    assert preset.constant_branches


def test_get_family_preset_case_insensitive():
    assert get_family_preset("  Aumann ").key == "aumann"


def test_get_family_preset_unknown_raises():
    with pytest.raises(ValueError, match="Unknown family preset"):
        get_family_preset("clarke")


def test_build_family_types(disc16):
    expected = {
        "piecewise_affine": PiecewiseAffineBounds,
        "nonlocal": NonlocalInterval,
        "aumann": AumannInterval,
    }
    for key, cls in expected.items():
        assert isinstance(build_family(FAMILY_PRESETS[key].descriptor, disc16), cls)


def test_presets_are_zero_free(disc16):
    for preset in FAMILY_PRESETS.values():
        phi = build_family(preset.descriptor, disc16)
        assert preset.zero_free == (not any(zero_membership(phi, disc16.n).values()))
