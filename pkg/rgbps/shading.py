import numpy as np

from rgbps.common import EPS_HORIZONTAL, HorizontalNormalError, InvalidInputError, warn
from rgbps.model import AlbedoMap, GradientField, LightingRig, NormalField, RgbImage


def render(normals: NormalField,
           albedo: AlbedoMap,
           rig: LightingRig,
           noise_sigma: float = 0.0,
           seed: int | np.random.SeedSequence = 0) -> RgbImage:
    """Lambertian RGB photometric-stereo image formation.

    Shading is clipped at zero (attached shadows) before the albedo is
    applied; Gaussian noise is added afterwards and is not clipped. Pixels
    outside the normal mask are rendered black.
    """
    if normals.shape != albedo.shape:
        raise InvalidInputError(
            f'normals {normals.shape} and albedo {albedo.shape} differ in size'
        )
    if noise_sigma < 0:
        raise InvalidInputError(f'noise_sigma must be >= 0, got {noise_sigma}')

    shading = np.maximum(rig.shading(normals.data), 0.0)
    data = albedo.data * shading
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        data = data + rng.normal(0.0, noise_sigma, size=data.shape)
    data[~normals.mask] = 0.0
    return RgbImage(data, normals.mask.copy())


def normals_to_gradients(normals: NormalField,
                         eps: float = EPS_HORIZONTAL,
                         drop_horizontal: bool = False) -> GradientField:
    """Map unit normals to depth gradients ``n_xy / n_z``.

    Normals with ``n_z <= eps`` inside the mask have no gradient. They raise
    :class:`HorizontalNormalError` unless ``drop_horizontal`` is set, in which
    case they are removed from the output mask.
    """
    nz = normals.data[..., 2]
    bad = normals.mask & (nz <= eps)
    mask = normals.mask.copy()
    if np.any(bad):
        offenders = [(int(r), int(c)) for r, c in np.argwhere(bad)]
        if not drop_horizontal:
            raise HorizontalNormalError(offenders, eps)
        warn(f'dropping {len(offenders)} near-horizontal normal(s) from the mask')
        mask &= ~bad

    grad = np.zeros(normals.shape + (2,))
    grad[mask] = normals.data[mask, :2] / nz[mask, None]
    return GradientField(grad, mask)


def gradients_to_unit(grad: np.ndarray) -> np.ndarray:
    """``[g, 1] / ||[g, 1]||`` along the last axis of a raw array."""
    full = np.concatenate([grad, np.ones(grad.shape[:-1] + (1,))], axis=-1)
    return full / np.linalg.norm(full, axis=-1, keepdims=True)


def gradients_to_normals(gradients: GradientField) -> NormalField:
    data = gradients_to_unit(gradients.data)
    data[~gradients.mask] = (0.0, 0.0, 1.0)
    return NormalField(data, gradients.mask.copy())
