"""
Synthetic benchmark instances.

Each instance is a square image split by its two diagonals into four
constant-albedo triangles, over a smooth random surface: a tilted base
plane plus a zero-mean Gaussian field drawn on a coarse grid and upsampled
with an interpolating bicubic spline. Normals come from the spline's
analytic derivatives.
"""

import dataclasses
import enum
import math

import numpy as np
from scipy.interpolate import RectBivariateSpline

from rgbps.common import InvalidInputError, SynthesisError
from rgbps.model import AlbedoMap, LightingRig, NormalField, RgbImage
from rgbps.shading import gradients_to_unit, render


class Region(enum.IntEnum):
    TOP = 0
    LEFT = 1
    RIGHT = 2
    BOTTOM = 3


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    image_size: int = 256
    coarse_size: int = 16
    noise_sigma: float = 0.001
    seed: int = 0
    n_surfaces: int = 1
    tilt_max_deg: float = 20.0
    # std of the coarse field, in units of the coarse node spacing
    amplitude: float = 0.2
    albedo_low: float = 0.2
    albedo_high: float = 1.0
    min_plane_shading: float = 0.1
    max_attempts: int = 1000

    def __post_init__(self):
        if self.image_size < 2:
            raise InvalidInputError(f'image_size must be >= 2, got {self.image_size}')
        if not 4 <= self.coarse_size <= self.image_size:
            raise InvalidInputError(
                f'coarse_size must lie in [4, image_size], got {self.coarse_size}'
            )
        if self.amplitude < 0 or self.noise_sigma < 0:
            raise InvalidInputError('amplitude and noise_sigma must be >= 0')
        if not 0 <= self.albedo_low <= self.albedo_high:
            raise InvalidInputError('need 0 <= albedo_low <= albedo_high')
        if self.n_surfaces < 1 or self.max_attempts < 1:
            raise InvalidInputError('n_surfaces and max_attempts must be >= 1')

    @property
    def node_spacing(self) -> float:
        return (self.image_size - 1) / (self.coarse_size - 1)


@dataclasses.dataclass(frozen=True, eq=False)
class SyntheticSurface:
    depth: np.ndarray
    normals: NormalField
    plane_normal: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class SyntheticInstance:
    index: int
    image: RgbImage
    normals: NormalField
    albedo: AlbedoMap
    depth: np.ndarray
    regions: np.ndarray


def albedo_regions(size: int) -> np.ndarray:
    """Label each pixel with its diagonal triangle.

    Pixels on a diagonal go to the first of their neighbouring regions in
    the order top, left, right, bottom.
    """
    r, c = np.mgrid[0:size, 0:size]
    d_main = c - r
    d_anti = (size - 1 - c) - r
    labels = np.full((size, size), int(Region.BOTTOM))
    labels[(d_main >= 0) & (d_anti < 0)] = Region.RIGHT
    labels[(d_main <= 0) & (d_anti >= 0)] = Region.LEFT
    labels[(d_main >= 0) & (d_anti >= 0)] = Region.TOP
    return labels


def region_boundaries(regions: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour in a different region."""
    edge = np.zeros(regions.shape, dtype=bool)
    dv = regions[1:, :] != regions[:-1, :]
    dh = regions[:, 1:] != regions[:, :-1]
    edge[1:, :] |= dv
    edge[:-1, :] |= dv
    edge[:, 1:] |= dh
    edge[:, :-1] |= dh
    return edge


def gen_albedo(size: int,
               seed: int | np.random.SeedSequence,
               low: float = 0.2,
               high: float = 1.0) -> AlbedoMap:
    if size < 2:
        raise InvalidInputError(f'albedo map size must be >= 2, got {size}')
    rng = np.random.default_rng(seed)
    values = rng.uniform(low, high, size=(len(Region), 3))
    return AlbedoMap(values[albedo_regions(size)])


def _random_plane(config: SynthConfig, rig: LightingRig, rng: np.random.Generator) -> np.ndarray:
    tilt_max = math.radians(config.tilt_max_deg)
    for _ in range(config.max_attempts):
        tilt = rng.uniform(0.0, tilt_max)
        azim = rng.uniform(0.0, 2.0 * math.pi)
        plane = np.array([
            math.sin(tilt) * math.cos(azim),
            math.sin(tilt) * math.sin(azim),
            math.cos(tilt),
        ])
        if np.min(rig.shading(plane)) > config.min_plane_shading:
            return plane
    raise SynthesisError(
        f'no lit base plane found in {config.max_attempts} attempts'
    )


def gen_surface(config: SynthConfig,
                rig: LightingRig,
                seed: int | np.random.SeedSequence) -> SyntheticSurface:
    rng = np.random.default_rng(seed)
    plane = _random_plane(config, rig, rng)
    size = config.image_size
    spacing = config.node_spacing
    coarse = rng.normal(0.0, config.amplitude * spacing, size=(config.coarse_size, config.coarse_size))

    nodes = np.linspace(0.0, size - 1.0, config.coarse_size)
    spline = RectBivariateSpline(nodes, nodes, coarse, kx=3, ky=3, s=0)
    pix = np.arange(size, dtype=np.float64)
    # first spline coordinate is the row (y), second the column (x)
    relief = spline(pix, pix)
    d_dy = spline(pix, pix, dx=1)
    d_dx = spline(pix, pix, dy=1)

    gx, gy = plane[0] / plane[2], plane[1] / plane[2]
    centre = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size] - centre
    depth = gx * x + gy * y + relief
    grad = np.stack([gx + d_dx, gy + d_dy], axis=-1)
    return SyntheticSurface(depth, NormalField(gradients_to_unit(grad)), plane)


def instance_seeds(master: int, index: int) -> list[np.random.SeedSequence]:
    """Independent albedo, surface and noise streams for one instance."""
    return np.random.SeedSequence([master, index]).spawn(3)


def gen_instance(config: SynthConfig, rig: LightingRig, index: int = 0) -> SyntheticInstance:
    albedo_seed, surface_seed, noise_seed = instance_seeds(config.seed, index)
    albedo = gen_albedo(config.image_size, albedo_seed, config.albedo_low, config.albedo_high)
    surface = gen_surface(config, rig, surface_seed)
    image = render(surface.normals, albedo, rig, config.noise_sigma, noise_seed)
    return SyntheticInstance(
        index, image, surface.normals, albedo, surface.depth,
        albedo_regions(config.image_size),
    )


def unshadowed_fraction(normals: NormalField, rig: LightingRig) -> float:
    lit = np.all(rig.shading(normals.data) > 0, axis=-1) & normals.mask
    return float(np.sum(lit) / max(np.sum(normals.mask), 1))
