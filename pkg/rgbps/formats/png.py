import pathlib

import numpy as np
from PIL import Image

from rgbps.model import NormalField


def normals_to_rgb8(normals: NormalField) -> np.ndarray:
    """``(n + 1) / 2`` per channel, scaled to 8 bits; masked-out pixels are black."""
    rgb = np.clip(np.rint((normals.data + 1.0) * 0.5 * 255.0), 0, 255).astype(np.uint8)
    rgb[~normals.mask] = 0
    return rgb


def write_normals_png(path: pathlib.Path | str, normals: NormalField):
    Image.fromarray(normals_to_rgb8(normals)).save(path)


def write_mask_png(path: pathlib.Path | str, mask: np.ndarray):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path)


def write_fraction_png(path: pathlib.Path | str, fraction: np.ndarray):
    """Values in [0, 1] as 8-bit gray."""
    gray = np.clip(np.rint(np.asarray(fraction, dtype=np.float64) * 255.0), 0, 255)
    Image.fromarray(gray.astype(np.uint8)).save(path)
