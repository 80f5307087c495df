"""
Domain types shared by every stage.

Images are stored as ``(height, width, channels)`` float64 arrays with a
``(height, width)`` boolean validity mask. Row index grows downward, column
index grows rightward; depth gradients are ``[dz/dx, dz/dy]`` with x along
columns and y along rows, and the camera looks down the -z axis so visible
normals have a positive z component.
"""

import dataclasses
import enum

import numpy as np

from rgbps.common import (
    RIG_DET_TOL,
    UNIT_TOL,
    InvalidInputError,
    SingularRigError,
)


class SelectionRule(enum.Enum):
    objective = enum.auto()
    literal = enum.auto()

    def __str__(self) -> str:
        return self.name


def _full_mask(data: np.ndarray) -> np.ndarray:
    return np.ones(data.shape[:2], dtype=bool)


def _check_grid(data: np.ndarray, mask: np.ndarray, channels: int, what: str):
    if data.ndim != 3 or data.shape[2] != channels:
        raise InvalidInputError(
            f'{what} must have shape (height, width, {channels}), got {data.shape}'
        )
    if data.shape[0] < 1 or data.shape[1] < 1:
        raise InvalidInputError(f'{what} must have positive dimensions')
    if mask.shape != data.shape[:2]:
        raise InvalidInputError(
            f'{what} mask shape {mask.shape} does not match data {data.shape[:2]}'
        )
    if not np.all(np.isfinite(data[mask])):
        raise InvalidInputError(f'{what} has non-finite values inside its mask')


@dataclasses.dataclass(frozen=True, eq=False)
class RgbImage:
    """Observed linear RGB intensities.

    Noise-free renders are non-negative; additive observation noise may push
    values slightly below zero and those are kept as-is.
    """
    data: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        mask = _full_mask(data) if self.mask is None else np.asarray(self.mask, dtype=bool)
        _check_grid(data, mask, 3, 'RgbImage')
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, 'mask', mask)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclasses.dataclass(frozen=True, eq=False)
class LightingRig:
    """Columns are the red, green and blue lights (direction times intensity)."""
    matrix: np.ndarray
    inv_t: np.ndarray = dataclasses.field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
            raise InvalidInputError(f'lighting rig must be a finite 3x3 matrix, got {matrix.shape}')
        scale = np.abs(matrix).max()
        det = np.linalg.det(matrix)
        if scale == 0 or abs(det) <= RIG_DET_TOL * scale ** 3:
            raise SingularRigError(f'lighting rig is singular (det={det:.3e})')
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, 'inv_t', np.linalg.inv(matrix).T)

    def shading(self, normals: np.ndarray) -> np.ndarray:
        """Unclipped ``L^T n`` for normals stacked along the last axis."""
        return normals @ self.matrix


@dataclasses.dataclass(frozen=True, eq=False)
class NormalField:
    """Unit surface normals.

    Unit length is enforced inside the mask; the camera-facing condition
    (positive z) is checked where gradients are derived.
    """
    data: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        mask = _full_mask(data) if self.mask is None else np.asarray(self.mask, dtype=bool)
        _check_grid(data, mask, 3, 'NormalField')
        norms = np.linalg.norm(data[mask], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > UNIT_TOL:
            raise InvalidInputError('NormalField has non-unit normals inside its mask')
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, 'mask', mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclasses.dataclass(frozen=True, eq=False)
class GradientField:
    data: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        mask = _full_mask(data) if self.mask is None else np.asarray(self.mask, dtype=bool)
        _check_grid(data, mask, 2, 'GradientField')
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, 'mask', mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclasses.dataclass(frozen=True, eq=False)
class AlbedoMap:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        _check_grid(data, _full_mask(data), 3, 'AlbedoMap')
        if np.any(data < 0):
            raise InvalidInputError('AlbedoMap must be non-negative')
        object.__setattr__(self, 'data', data)

    @classmethod
    def constant(cls, shape: tuple[int, int], kappa) -> 'AlbedoMap':
        return cls(np.broadcast_to(np.asarray(kappa, dtype=np.float64), (*shape, 3)).copy())

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]
