"""
Portable float map I/O.

Header: ``PF`` (3 channels) or ``Pf`` (1 channel), then ``width height``,
then the scale, whose sign gives the byte order (negative: little-endian).
Pixel rows are stored bottom-to-top, channels interleaved; in memory arrays
are ``(height, width, channels)`` with row 0 at the top. We always write
little-endian float32 with scale -1.0.
"""

import pathlib
import re

import numpy as np

from rgbps.common import InvalidInputError
from rgbps.formats import require_file
from rgbps.model import NormalField, RgbImage

_DIMS = re.compile(rb'^\s*(\d+)\s+(\d+)\s*$')


def _read_line(f) -> bytes:
    line = f.readline()
    if not line:
        raise InvalidInputError('unexpected end of PFM header')
    return line.rstrip(b'\r\n')


def read_pfm(path: pathlib.Path | str) -> np.ndarray:
    """Read a PFM file as a float32 ``(height, width, channels)`` array."""
    path = require_file(path)
    with open(path, 'rb') as f:
        kind = _read_line(f).strip()
        if kind == b'PF':
            channels = 3
        elif kind == b'Pf':
            channels = 1
        else:
            raise InvalidInputError(f'{path}: not a PFM file (identifier {kind!r})')

        dims = _DIMS.match(_read_line(f))
        if not dims:
            raise InvalidInputError(f'{path}: malformed PFM dimensions line')
        width, height = int(dims.group(1)), int(dims.group(2))

        try:
            scale = float(_read_line(f))
        except ValueError:
            raise InvalidInputError(f'{path}: malformed PFM scale line')
        dtype = np.dtype('<f4') if scale < 0 else np.dtype('>f4')

        count = width * height * channels
        body = f.read(count * 4)
        if len(body) != count * 4:
            raise InvalidInputError(f'{path}: expected {count} samples, found {len(body) // 4}')
        data = np.frombuffer(body, dtype=dtype)

    return np.flipud(data.reshape(height, width, channels)).astype(np.float32)


def write_pfm(path: pathlib.Path | str, data: np.ndarray):
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[..., None]
    if data.ndim != 3 or data.shape[2] not in (1, 3):
        raise InvalidInputError(f'PFM holds 1 or 3 channels, got shape {data.shape}')
    height, width, channels = data.shape
    header = f"{'PF' if channels == 3 else 'Pf'}\n{width} {height}\n-1.0\n".encode('ascii')
    body = np.ascontiguousarray(np.flipud(data), dtype='<f4').tobytes()
    with open(path, 'wb') as f:
        f.write(header)
        f.write(body)


def _masked(data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.array(data, dtype=np.float32)
    out[~mask] = np.nan
    return out


def write_image(path: pathlib.Path | str, image: RgbImage):
    write_pfm(path, _masked(image.data, image.mask))


def read_image(path: pathlib.Path | str) -> RgbImage:
    """Read an RGB image; pixels with any non-finite channel are masked out."""
    data = read_pfm(path)
    if data.shape[2] != 3:
        raise InvalidInputError(f'{path}: expected a 3-channel PFM')
    mask = np.all(np.isfinite(data), axis=-1)
    return RgbImage(np.where(mask[..., None], data, 0.0), mask)


def write_normals(path: pathlib.Path | str, normals: NormalField):
    write_pfm(path, _masked(normals.data, normals.mask))


def read_normals(path: pathlib.Path | str) -> NormalField:
    """Read a normal map, renormalising float32 storage to unit length."""
    data = read_pfm(path).astype(np.float64)
    if data.shape[2] != 3:
        raise InvalidInputError(f'{path}: expected a 3-channel PFM')
    mask = np.all(np.isfinite(data), axis=-1)
    norm = np.linalg.norm(np.where(mask[..., None], data, 0.0), axis=-1)
    mask &= norm > 0
    out = np.zeros_like(data)
    out[..., 2] = 1.0
    out[mask] = data[mask] / norm[mask, None]
    return NormalField(out, mask)


def write_scalar(path: pathlib.Path | str, values: np.ndarray):
    """Single-channel map (depth, error); NaN marks missing pixels."""
    write_pfm(path, np.asarray(values, dtype=np.float32))
