"""
Discrete albedo space.

An albedo is factored as ``kappa = tau * chroma`` with scalar luminance
``tau`` and a unit, non-negative chromaticity. Chromaticities are binned
uniformly in elevation ``theta`` and azimuth ``phi`` over the positive
octant, using bin centres so that no grid chromaticity has a zero
component. Luminance is binned uniformly over ``(0, tau_max]``.

A chromaticity bin is addressed either by ``(elev_idx, azim_idx)`` or by the
flat index ``c = elev_idx * n_chroma_azim + azim_idx``.
"""

import dataclasses
import functools
import math

import numpy as np
import numpy.typing as npt

from rgbps.common import InvalidInputError


@dataclasses.dataclass(frozen=True)
class AlbedoCandidate:
    tau: float
    chroma: tuple[float, float, float]

    def __post_init__(self):
        chroma = np.asarray(self.chroma, dtype=np.float64)
        if chroma.shape != (3,) or np.any(chroma < 0) or abs(np.linalg.norm(chroma) - 1.0) > 1e-9:
            raise InvalidInputError(f'chromaticity must be a non-negative unit 3-vector, got {self.chroma}')
        if not math.isfinite(self.tau) or self.tau < 0:
            raise InvalidInputError(f'luminance must be finite and >= 0, got {self.tau}')
        object.__setattr__(self, 'chroma', tuple(float(v) for v in chroma))
        object.__setattr__(self, 'tau', float(self.tau))

    @property
    def kappa(self) -> np.ndarray:
        return self.tau * np.asarray(self.chroma)

    @classmethod
    def from_kappa(cls, kappa: npt.ArrayLike) -> 'AlbedoCandidate':
        kappa = np.asarray(kappa, dtype=np.float64)
        tau = float(np.linalg.norm(kappa))
        if tau == 0:
            raise InvalidInputError('cannot factor a zero albedo')
        return cls(tau, tuple(kappa / tau))


@dataclasses.dataclass(frozen=True)
class AlbedoGrid:
    n_chroma_elev: int = 64
    n_chroma_azim: int = 64
    n_lum: int = 100
    tau_max: float = 3.0

    def __post_init__(self):
        for name in ('n_chroma_elev', 'n_chroma_azim', 'n_lum'):
            if getattr(self, name) < 1:
                raise InvalidInputError(f'{name} must be >= 1')
        if not self.tau_max > 0:
            raise InvalidInputError(f'tau_max must be > 0, got {self.tau_max}')

    @property
    def n_chroma(self) -> int:
        return self.n_chroma_elev * self.n_chroma_azim

    @property
    def lum_width(self) -> float:
        return self.tau_max / self.n_lum

    def flat_index(self, elev_idx: int, azim_idx: int) -> int:
        return elev_idx * self.n_chroma_azim + azim_idx

    def split_index(self, c: int) -> tuple[int, int]:
        return divmod(c, self.n_chroma_azim)

    @functools.cached_property
    def chroma_centers(self) -> np.ndarray:
        """All chromaticity bin centres, shape ``(n_chroma, 3)``, flat order."""
        theta = (np.arange(self.n_chroma_elev) + 0.5) * (math.pi / 2) / self.n_chroma_elev
        phi = (np.arange(self.n_chroma_azim) + 0.5) * (math.pi / 2) / self.n_chroma_azim
        t, p = np.meshgrid(theta, phi, indexing='ij')
        return np.stack(
            [np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1
        ).reshape(-1, 3)

    @functools.cached_property
    def tau_centers(self) -> np.ndarray:
        return (np.arange(self.n_lum) + 0.5) * self.lum_width


def chroma_center(elev_idx: int, azim_idx: int, grid: AlbedoGrid) -> np.ndarray:
    if not (0 <= elev_idx < grid.n_chroma_elev and 0 <= azim_idx < grid.n_chroma_azim):
        raise IndexError(
            f'chromaticity bin ({elev_idx}, {azim_idx}) outside '
            f'{grid.n_chroma_elev}x{grid.n_chroma_azim} grid'
        )
    return grid.chroma_centers[grid.flat_index(elev_idx, azim_idx)].copy()


def tau_center(lum_idx: int, grid: AlbedoGrid) -> float:
    if not 0 <= lum_idx < grid.n_lum:
        raise IndexError(f'luminance bin {lum_idx} outside [0, {grid.n_lum})')
    return float(grid.tau_centers[lum_idx])


def quantize_tau(tau: npt.ArrayLike, grid: AlbedoGrid) -> np.ndarray | int:
    """Nearest luminance bin, clamped to the grid.

    A value exactly between two centres (a bin boundary) goes to the lower
    bin. Works elementwise on arrays.
    """
    tau = np.asarray(tau, dtype=np.float64)
    w = grid.lum_width
    idx = np.ceil(tau / w).astype(np.int64) - 1
    # bin k is (k w, (k + 1) w]; settle values the division put one bin off
    idx = np.where(tau <= idx * w, idx - 1, idx)
    idx = np.where(tau > (idx + 1) * w, idx + 1, idx)
    idx = np.clip(idx, 0, grid.n_lum - 1)
    return int(idx) if idx.ndim == 0 else idx


def candidate(lum_idx: int, chroma_idx: int, grid: AlbedoGrid) -> AlbedoCandidate:
    return AlbedoCandidate(
        tau_center(lum_idx, grid),
        tuple(grid.chroma_centers[chroma_idx]),
    )
