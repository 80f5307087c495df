"""
Preparation of real captures.

A linear Bayer mosaic is blurred with a 1 px Gaussian for anti-aliasing and
collapsed to one RGB pixel per 2x2 block (the two greens averaged). The
object is separated from the dark background by thresholding luminance,
and each channel is divided by its mean inside the mask so the albedo grid
covers the data uniformly.
"""

import dataclasses

import numpy as np
from scipy import ndimage

from rgbps.common import EmptyMaskError, InvalidInputError
from rgbps.model import RgbImage

# (row, col) of R, first G, second G, B inside a 2x2 block
BAYER_PATTERNS: dict[str, tuple[tuple[int, int], ...]] = {
    'RGGB': ((0, 0), (0, 1), (1, 0), (1, 1)),
    'BGGR': ((1, 1), (0, 1), (1, 0), (0, 0)),
    'GRBG': ((0, 1), (0, 0), (1, 1), (1, 0)),
    'GBRG': ((1, 0), (0, 0), (1, 1), (0, 1)),
}


@dataclasses.dataclass(frozen=True, eq=False)
class Preprocessed:
    image: RgbImage
    gains: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return self.image.mask


def unbalance(kappa: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Map albedos estimated on the balanced image back to sensor units."""
    gains = np.asarray(gains, dtype=np.float64)
    if gains.shape != (3,) or not np.all(gains > 0):
        raise InvalidInputError(f'white-balance gains must be three positive numbers, got {gains.tolist()}')
    return np.asarray(kappa, dtype=np.float64) / gains


def demosaic_blocks(mosaic: np.ndarray, pattern: str = 'RGGB', blur_sigma: float = 1.0) -> np.ndarray:
    try:
        r, g1, g2, b = BAYER_PATTERNS[pattern.upper()]
    except KeyError:
        raise InvalidInputError(
            f"unknown Bayer pattern {pattern!r}; expected one of {', '.join(BAYER_PATTERNS)}"
        )
    mosaic = np.asarray(mosaic, dtype=np.float64)
    if mosaic.ndim != 2:
        raise InvalidInputError(f'a Bayer mosaic must be 2-D, got shape {mosaic.shape}')
    h, w = (mosaic.shape[0] // 2) * 2, (mosaic.shape[1] // 2) * 2
    if h == 0 or w == 0:
        raise InvalidInputError('Bayer mosaic smaller than one 2x2 block')
    blurred = ndimage.gaussian_filter(mosaic[:h, :w], blur_sigma) if blur_sigma > 0 else mosaic[:h, :w]

    def plane(at):
        return blurred[at[0]::2, at[1]::2]

    return np.stack([plane(r), 0.5 * (plane(g1) + plane(g2)), plane(b)], axis=-1)


def object_mask(rgb: np.ndarray, threshold: float = 0.02) -> np.ndarray:
    """Pixels whose mean channel intensity exceeds ``threshold`` of the maximum."""
    lum = rgb.mean(axis=-1)
    peak = lum.max() if lum.size else 0.0
    if not peak > 0:
        raise EmptyMaskError('image is entirely dark; no object to mask')
    mask = lum > threshold * peak
    if not np.any(mask):
        raise EmptyMaskError('threshold leaves no pixel in the object mask')
    return mask


def white_balance(rgb: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = rgb[mask].mean(axis=0)
    if np.any(means <= 0):
        raise EmptyMaskError(f'a channel has no signal inside the mask (means {means})')
    gains = 1.0 / means
    return rgb * gains, gains


def preprocess_real(raw: np.ndarray,
                    demosaic: bool = True,
                    pattern: str = 'RGGB',
                    threshold: float = 0.02) -> Preprocessed:
    """Turn a linear capture into a masked, white-balanced RGB image.

    With ``demosaic=False`` the input must already be ``(height, width, 3)``
    and only masking and white balance are applied.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if demosaic:
        if raw.ndim == 3 and raw.shape[2] == 1:
            raw = raw[..., 0]
        rgb = demosaic_blocks(raw, pattern)
    else:
        if raw.ndim != 3 or raw.shape[2] != 3:
            raise InvalidInputError(f'expected an RGB image, got shape {raw.shape}')
        rgb = raw
    if not np.all(np.isfinite(rgb)):
        raise InvalidInputError('capture contains non-finite values')

    mask = object_mask(rgb, threshold)
    balanced, gains = white_balance(rgb, mask)
    balanced[~mask] = 0.0
    return Preprocessed(RgbImage(balanced, mask), gains)
