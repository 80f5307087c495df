import numpy as np
import pytest

from rgbps.common import HorizontalNormalError, InvalidInputError
from rgbps.model import AlbedoMap, GradientField, LightingRig, NormalField
from rgbps.shading import gradients_to_normals, normals_to_gradients, render


def _field(*normals) -> NormalField:
    return NormalField(np.array(normals, dtype=np.float64).reshape(1, -1, 3))


def test_frontal_normal_under_identity_rig():
    image = render(_field((0, 0, 1)), AlbedoMap.constant((1, 1), (0.5, 0.6, 0.7)), LightingRig(np.eye(3)))
    np.testing.assert_allclose(image.data[0, 0], (0.0, 0.0, 0.7))


def test_attached_shadow_clips_before_albedo():
    image = render(_field((0, 0, -1)), AlbedoMap.constant((1, 1), (1, 1, 1)), LightingRig(np.eye(3)))
    assert np.all(image.data == 0.0)


def test_render_matches_lambertian_model(rig, rng):
    grad = rng.uniform(-0.3, 0.3, size=(6, 7, 2))
    normals = gradients_to_normals(GradientField(grad))
    kappa = rng.uniform(0.2, 1.0, size=(6, 7, 3))
    image = render(normals, AlbedoMap(kappa), rig)
    expected = kappa * np.maximum(normals.data @ rig.matrix, 0.0)
    np.testing.assert_allclose(image.data, expected, atol=1e-15)


def test_noise_is_seeded_and_unclipped(rig):
    normals = _field(*[(0, 0, 1)] * 64)
    albedo = AlbedoMap.constant(normals.shape, (1e-4, 1e-4, 1e-4))
    a = render(normals, albedo, rig, noise_sigma=0.01, seed=7)
    b = render(normals, albedo, rig, noise_sigma=0.01, seed=7)
    np.testing.assert_array_equal(a.data, b.data)
    assert np.any(a.data < 0)


def test_render_rejects_mismatched_sizes(rig):
    with pytest.raises(InvalidInputError):
        render(_field((0, 0, 1)), AlbedoMap.constant((2, 2), (1, 1, 1)), rig)


def test_normals_to_gradients():
    grad = normals_to_gradients(_field((0.6, 0.0, 0.8), (0.0, -0.6, 0.8)))
    np.testing.assert_allclose(grad.data[0], [[0.75, 0.0], [0.0, -0.75]])


def test_horizontal_normal_is_reported():
    with pytest.raises(HorizontalNormalError) as e:
        normals_to_gradients(_field((0, 0, 1), (1, 0, 0)))
    assert e.value.offenders == [(0, 1)]


def test_horizontal_normal_can_be_dropped(capsys):
    grad = normals_to_gradients(_field((0, 0, 1), (1, 0, 0)), drop_horizontal=True)
    assert grad.mask.tolist() == [[True, False]]
    assert 'Warning' in capsys.readouterr().err


def test_gradients_to_normals_inverts(rng):
    grad = rng.normal(0.0, 0.5, size=(4, 5, 2))
    back = normals_to_gradients(gradients_to_normals(GradientField(grad)))
    np.testing.assert_allclose(back.data, grad, atol=1e-12)
