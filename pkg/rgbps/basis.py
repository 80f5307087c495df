"""
Polynomial local shape model.

Depth inside a patch is ``z(x, y) = sum a[dx, dy] x**dx y**dy`` over
``1 <= dx + dy <= degree`` in patch-centred pixel offsets (for side 8 the
offsets run -3.5 ... +3.5). The constant term is dropped since it has no
gradient. Coefficients are ordered by total degree, then by ascending
``dx``:

    (0,1) (1,0) (0,2) (1,1) (2,0) (0,3) ...

Pixels inside a patch are taken in row-major order and each contributes a
row pair ``(dz/dx, dz/dy)`` to the basis matrix, so a flattened patch
gradient vector is ``[gx(p0), gy(p0), gx(p1), gy(p1), ...]``.
"""

import dataclasses
import functools

import numpy as np
import numpy.typing as npt
from scipy.linalg import qr, solve_triangular

from rgbps.common import InvalidInputError, RankDeficientError
from rgbps.shading import gradients_to_unit

RANK_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class PatchGeometry:
    patch_side: int = 8
    degree: int = 5

    def __post_init__(self):
        if self.patch_side < 2:
            raise InvalidInputError(f'patch_side must be >= 2, got {self.patch_side}')
        if self.degree < 1:
            raise InvalidInputError(f'degree must be >= 1, got {self.degree}')
        if 2 * self.n_pixels < self.n_coeff:
            raise InvalidInputError(
                f'a {self.patch_side}x{self.patch_side} patch cannot support '
                f'{self.n_coeff} coefficients'
            )

    @property
    def n_pixels(self) -> int:
        return self.patch_side * self.patch_side

    @property
    def n_coeff(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2 - 1

    @functools.cached_property
    def exponents(self) -> list[tuple[int, int]]:
        return [
            (dx, total - dx)
            for total in range(1, self.degree + 1)
            for dx in range(total + 1)
        ]

    @functools.cached_property
    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Patch-centred ``(x, y)`` offsets of every pixel in row-major order."""
        centre = (self.patch_side - 1) / 2.0
        rows, cols = np.mgrid[0:self.patch_side, 0:self.patch_side]
        return (cols.ravel() - centre).astype(np.float64), (rows.ravel() - centre).astype(np.float64)


@dataclasses.dataclass(frozen=True, eq=False)
class BasisMatrix:
    geometry: PatchGeometry
    G: np.ndarray
    P: np.ndarray
    gram: np.ndarray

    @property
    def n_coeff(self) -> int:
        return self.G.shape[1]

    @property
    def n_pixels(self) -> int:
        return self.G.shape[0] // 2


def _monomial(x: np.ndarray, y: np.ndarray, dx: int, dy: int) -> np.ndarray:
    if dx < 0 or dy < 0:
        return np.zeros_like(x)
    return x ** dx * y ** dy


def build_basis(geom: PatchGeometry) -> BasisMatrix:
    x, y = geom.offsets
    G = np.zeros((2 * geom.n_pixels, geom.n_coeff))
    for j, (dx, dy) in enumerate(geom.exponents):
        G[0::2, j] = dx * _monomial(x, y, dx - 1, dy)
        G[1::2, j] = dy * _monomial(x, y, dx, dy - 1)

    # column-pivoted QR: G[:, piv] = Q R, so P = perm(R^-1 Q^T)
    Q, R, piv = qr(G, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= RANK_TOL * diag.max():
        raise RankDeficientError(
            f'basis for {geom} is rank deficient '
            f'(smallest pivot {diag.min():.3e}, largest {diag.max():.3e})'
        )
    P = np.empty((geom.n_coeff, G.shape[0]))
    P[piv] = solve_triangular(R, Q.T)
    return BasisMatrix(geom, G, P, G.T @ G)


def project(g_patch: npt.ArrayLike, basis: BasisMatrix) -> np.ndarray:
    """Least-squares polynomial fit of flattened patch gradients.

    Accepts a single ``(2 * n_pixels,)`` vector or a ``(..., 2 * n_pixels)``
    stack and returns coefficients with the same leading shape.
    """
    g = np.asarray(g_patch, dtype=np.float64)
    if g.shape[-1] != basis.G.shape[0]:
        raise InvalidInputError(
            f'patch gradient length {g.shape[-1]} != {basis.G.shape[0]}'
        )
    if not np.all(np.isfinite(g)):
        raise InvalidInputError('patch gradients contain non-finite values')
    return g @ basis.P.T


def evaluate_gradients(a: npt.ArrayLike, basis: BasisMatrix) -> np.ndarray:
    """``G a`` reshaped to ``(..., n_pixels, 2)``."""
    a = np.asarray(a, dtype=np.float64)
    return (a @ basis.G.T).reshape(a.shape[:-1] + (basis.n_pixels, 2))


def evaluate(a: npt.ArrayLike, basis: BasisMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Model gradients and unit normals for coefficient vector(s) ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError('shape coefficients contain non-finite values')
    grad = evaluate_gradients(a, basis)
    return grad, gradients_to_unit(grad)


def depth(a: npt.ArrayLike, geom: PatchGeometry) -> np.ndarray:
    """Polynomial depth at every patch pixel (constant term omitted)."""
    a = np.asarray(a, dtype=np.float64)
    x, y = geom.offsets
    terms = np.stack([_monomial(x, y, dx, dy) for dx, dy in geom.exponents], axis=-1)
    return a @ terms.T
