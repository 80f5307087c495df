import numpy as np
import pytest

from rgbps.common import InvalidInputError, SynthesisError
from rgbps.local import invert_pixels
from rgbps.model import LightingRig
from rgbps.synth import (
    Region,
    SynthConfig,
    albedo_regions,
    gen_albedo,
    gen_instance,
    gen_surface,
    region_boundaries,
    unshadowed_fraction,
)


def test_regions_split_along_diagonals():
    regions = albedo_regions(5)
    assert regions[0, 2] == Region.TOP
    assert regions[2, 0] == Region.LEFT
    assert regions[2, 4] == Region.RIGHT
    assert regions[4, 2] == Region.BOTTOM
    # diagonal pixels go to the upper or left neighbour
    assert regions[0, 0] == Region.TOP
    assert regions[2, 2] == Region.TOP
    assert regions[4, 0] == Region.LEFT
    assert regions[4, 4] == Region.RIGHT
    assert sorted(np.unique(regions)) == [0, 1, 2, 3]


def test_region_boundaries_follow_diagonals():
    edge = region_boundaries(albedo_regions(32))
    assert edge[5, 5] or edge[5, 6] or edge[6, 5]
    assert not edge[0, 16]
    assert not edge[16, 1]


def test_gen_albedo_is_piecewise_constant():
    albedo = gen_albedo(32, seed=5)
    colors = np.unique(albedo.data.reshape(-1, 3), axis=0)
    assert len(colors) == 4
    assert np.all((colors >= 0.2) & (colors <= 1.0))
    regions = albedo_regions(32)
    for r in Region:
        assert len(np.unique(albedo.data[regions == r], axis=0)) == 1


def test_zero_amplitude_gives_a_plane(rig):
    surface = gen_surface(SynthConfig(image_size=32, coarse_size=8, amplitude=0.0), rig, seed=1)
    np.testing.assert_allclose(surface.normals.data, np.broadcast_to(surface.plane_normal, (32, 32, 3)), atol=1e-12)


def test_untilted_plane_is_accepted_at_once(rig):
    surface = gen_surface(SynthConfig(image_size=16, coarse_size=4, tilt_max_deg=0.0), rig, seed=2)
    np.testing.assert_allclose(surface.plane_normal, (0.0, 0.0, 1.0))


def test_unlit_rig_exhausts_attempts():
    # the identity rig leaves two channels dark on a frontal plane
    config = SynthConfig(image_size=16, coarse_size=4, tilt_max_deg=0.0, max_attempts=5)
    with pytest.raises(SynthesisError):
        gen_surface(config, LightingRig(np.eye(3)), seed=0)


def test_normals_are_unit_and_facing_the_camera(rig):
    surface = gen_surface(SynthConfig(image_size=64), rig, seed=3)
    np.testing.assert_allclose(np.linalg.norm(surface.normals.data, axis=-1), 1.0)
    assert np.all(surface.normals.data[..., 2] > 0)


def test_normals_match_depth_slopes(rig):
    surface = gen_surface(SynthConfig(image_size=128, coarse_size=8), rig, seed=4)
    n = surface.normals.data
    gx = n[..., 0] / n[..., 2]
    gy = n[..., 1] / n[..., 2]
    dz_dx = np.diff(surface.depth, axis=1)
    dz_dy = np.diff(surface.depth, axis=0)
    np.testing.assert_allclose(dz_dx, 0.5 * (gx[:, 1:] + gx[:, :-1]), atol=5e-3)
    np.testing.assert_allclose(dz_dy, 0.5 * (gy[1:, :] + gy[:-1, :]), atol=5e-3)


@pytest.mark.slow
def test_default_surfaces_are_mostly_unshadowed(rig):
    config = SynthConfig()
    fractions = [unshadowed_fraction(gen_surface(config, rig, seed=s).normals, rig) for s in range(100)]
    assert np.mean(fractions) >= 0.99


def test_instances_are_deterministic(rig):
    config = SynthConfig(image_size=32, coarse_size=8, seed=11)
    a = gen_instance(config, rig, 3)
    b = gen_instance(config, rig, 3)
    np.testing.assert_array_equal(a.image.data, b.image.data)
    np.testing.assert_array_equal(a.normals.data, b.normals.data)
    c = gen_instance(config, rig, 4)
    assert not np.array_equal(a.image.data, c.image.data)


def test_noiseless_instance_inverts_exactly(rig):
    inst = gen_instance(SynthConfig(image_size=32, coarse_size=8, noise_sigma=0.0), rig)
    regions = albedo_regions(32)
    for r in Region:
        kappa = inst.albedo.data[regions == r][0]
        inv = invert_pixels(inst.image, rig, kappa / np.linalg.norm(kappa))
        lit = (regions == r) & np.all(inst.normals.data @ rig.matrix > 0, axis=-1)
        np.testing.assert_allclose(inv.normals[lit], inst.normals.data[lit], atol=1e-9)


@pytest.mark.parametrize('kwargs', [
    {'image_size': 1},
    {'coarse_size': 3},
    {'image_size': 16, 'coarse_size': 32},
    {'amplitude': -1.0},
    {'albedo_low': 0.8, 'albedo_high': 0.2},
])
def test_config_validation(kwargs):
    with pytest.raises(InvalidInputError):
        SynthConfig(**kwargs)
