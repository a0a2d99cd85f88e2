import numpy as np
import pytest

from app.core.errors import PositivityError
from app.schemas.run_config import MaterialMap, MaterialRegion
from app.services.physics import face_diffusion_E, face_diffusion_T, material_z, sigma_a
from app.services.presets import MARSHAK_REGIONS, marshak_two_material


@pytest.mark.parametrize(
    ("temperature", "z", "expected"),
    [
        (1.0, 1.0, 1.0),
        (1.0, 10.0, 1000.0),
        (2.0, 1.0, 0.125),
    ],
)
def test_sigma_a(temperature: float, z: float, expected: float) -> None:
    """sigma_a = z^3 / T^3."""
    assert sigma_a(temperature, z) == pytest.approx(expected)


def test_sigma_a_rejects_non_positive_temperature() -> None:
    """Zero or negative temperature is a positivity error."""
    with pytest.raises(PositivityError):
        sigma_a(np.array([1.0, 0.0]), 1.0)


def test_face_diffusion_E_without_gradient_is_unlimited() -> None:
    """Equal E on both sides gives D_E = 2 D_r = T^3 / (3 z^3)."""
    assert face_diffusion_E(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1) == pytest.approx(1.0 / 3.0)
    t_face = 1.5
    expected = t_face**3 / (3.0 * 2.0**3)
    assert face_diffusion_E(0.3, 0.3, 1.0, 2.0, 2.0, 2.0, 0.1) == pytest.approx(expected)


def test_face_diffusion_E_limits_steep_fronts() -> None:
    """Across a steep front the limited coefficient bounds the effective flux."""
    e_left, e_right, h = 1.0, 1.0e-5, 1.0 / 128.0
    d_r = 1.0 / 6.0
    expected = 2.0 * d_r / (1.0 + d_r * abs(e_right - e_left) / (0.5 * h * (e_left + e_right)))
    d_e = face_diffusion_E(e_left, e_right, 1.0, 1.0, 1.0, 1.0, h)
    assert d_e == pytest.approx(expected, rel=1e-14)
    assert d_e < 2.0 * d_r
    assert d_e * abs(e_right - e_left) / h <= e_left + e_right


def test_face_diffusion_E_unlimited_switch() -> None:
    """With the limiter off the gradient does not matter."""
    assert face_diffusion_E(1.0, 1.0e-5, 1.0, 1.0, 1.0, 1.0, 0.01, limited=False) == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize(
    ("t_left", "t_right", "expected"),
    [
        (1.0, 1.0, 0.01),
        (4.0, 4.0, 0.32),
        (1.0, 3.0, 0.01 * 2.0**2.5),
    ],
)
def test_face_diffusion_T(t_left: float, t_right: float, expected: float) -> None:
    """D_T = k T_face^(5/2) with k = 0.01."""
    assert face_diffusion_T(t_left, t_right, 0.01) == pytest.approx(expected)


@pytest.mark.parametrize("region", MARSHAK_REGIONS)
def test_marshak_regions_are_high_z(region: MaterialRegion) -> None:
    """Three interior points of every obstacle have z = 10."""
    material = marshak_two_material().material
    lower = np.asarray(region.lower)
    upper = np.asarray(region.upper)
    points = [lower + f * (upper - lower) for f in (0.25, 0.5, 0.75)]
    x, y, z = np.asarray(points).T
    assert np.all(material_z(material, x, y, z) == 10.0)


def test_marshak_background_is_unit_z() -> None:
    """The domain centre lies in the z = 1 medium."""
    material = marshak_two_material().material
    assert material_z(material, np.array(0.5), np.array(0.5), np.array(0.5)) == 1.0


def test_marshak_geometry_is_symmetric(rng: np.random.Generator) -> None:
    """The material map is symmetric under y -> 1 - y and z -> 1 - z."""
    material = marshak_two_material().material
    x, y, z = rng.uniform(size=(3, 500))
    base = material_z(material, x, y, z)
    assert np.array_equal(base, material_z(material, x, 1.0 - y, z))
    assert np.array_equal(base, material_z(material, x, y, 1.0 - z))


def test_material_first_region_wins() -> None:
    """Overlapping regions resolve to the first listed."""
    material = MaterialMap.model_validate(
        {
            "regions": [
                {"lower": [0, 0, 0], "upper": [0.5, 1, 1], "z": 4.0},
                {"lower": [0.25, 0, 0], "upper": [1, 1, 1], "z": 7.0},
            ],
            "background_z": 1.0,
        }
    )
    values = material_z(material, np.array([0.3, 0.8]), np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert values.tolist() == [4.0, 7.0]
