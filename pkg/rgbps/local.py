"""
Local inference.

For every candidate chromaticity the image is inverted pixel-wise, the
resulting gradients are projected onto the polynomial model in every patch,
and the fit is scored by its normalised rendering error. Scores vote into a
luminance x chromaticity histogram whose peaks form the global albedo set;
the per-patch candidate shapes are then recomputed for that set only.
"""

import concurrent.futures
import contextlib
import dataclasses
import typing

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import label, maximum_filter
from yaspin import yaspin

from rgbps.albedo import AlbedoCandidate, AlbedoGrid, candidate, quantize_tau
from rgbps.basis import BasisMatrix, evaluate, project
from rgbps.common import (
    EPS_CHROMA,
    EPS_HORIZONTAL,
    EPS_TAU,
    EmptyHistogramError,
    InvalidInputError,
    warn,
)
from rgbps.model import LightingRig, RgbImage

DEGENERACY_TOL = 1e-8


def _spinner(text: str, verbose: bool):
    return yaspin(text=text, color='cyan') if verbose else contextlib.nullcontext()


@dataclasses.dataclass(frozen=True, eq=False)
class PatchGrid:
    """Top-left ``(row, col)`` anchors of fully masked-in square windows."""
    anchors: np.ndarray
    patch_side: int
    shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.anchors)

    @property
    def coverage(self) -> np.ndarray:
        """Number of patches covering each pixel."""
        return scatter_windows(
            np.ones((len(self), self.patch_side ** 2)), self, self.shape
        )


def build_patch_grid(mask: np.ndarray, patch_side: int) -> PatchGrid:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if h < patch_side or w < patch_side:
        return PatchGrid(np.zeros((0, 2), dtype=np.int64), patch_side, (h, w))
    full = sliding_window_view(mask, (patch_side, patch_side)).all(axis=(-2, -1))
    return PatchGrid(np.argwhere(full).astype(np.int64), patch_side, (h, w))


def gather_windows(arr: np.ndarray, patches: PatchGrid) -> np.ndarray:
    """Stack every patch window of ``arr`` as ``(M, side*side, ...)``, row-major."""
    s = patches.patch_side
    if len(patches) == 0:
        return np.zeros((0, s * s) + arr.shape[2:], dtype=arr.dtype)
    rows, cols = patches.anchors[:, 0], patches.anchors[:, 1]
    win = sliding_window_view(arr, (s, s), axis=(0, 1))[rows, cols]
    win = np.moveaxis(win, (-2, -1), (1, 2))
    return win.reshape((len(patches), s * s) + arr.shape[2:])


def scatter_windows(values: np.ndarray, patches: PatchGrid, shape: tuple[int, int]) -> np.ndarray:
    """Sum per-patch window values back onto the image grid.

    Offsets are visited in a fixed order so the reduction is deterministic.
    """
    s = patches.patch_side
    out = np.zeros(tuple(shape) + values.shape[2:])
    rows, cols = patches.anchors[:, 0], patches.anchors[:, 1]
    for i in range(s * s):
        dr, dc = divmod(i, s)
        # anchors are unique, so each offset touches every pixel at most once
        out[rows + dr, cols + dc] += values[:, i]
    return out


@dataclasses.dataclass(frozen=True, eq=False)
class PatchObservations:
    patches: PatchGrid
    intensities: np.ndarray
    energy: np.ndarray


def observe_patches(image: RgbImage, patches: PatchGrid) -> PatchObservations:
    v = gather_windows(image.data, patches)
    return PatchObservations(patches, v, np.sum(v * v, axis=(1, 2)))


@dataclasses.dataclass(frozen=True, eq=False)
class PixelInversion:
    tau: np.ndarray
    normals: np.ndarray
    valid: np.ndarray

    def gradients(self) -> np.ndarray:
        grad = np.zeros(self.normals.shape[:2] + (2,))
        ok = self.valid
        grad[ok] = self.normals[ok, :2] / self.normals[ok, 2:3]
        return grad


def _check_chroma(chroma: npt.ArrayLike) -> np.ndarray:
    chroma = np.asarray(chroma, dtype=np.float64)
    if chroma.shape != (3,) or np.any(chroma < EPS_CHROMA):
        raise InvalidInputError(
            f'chromaticity needs every component >= {EPS_CHROMA}, got {chroma}'
        )
    return chroma


def invert_pixels(image: RgbImage,
                  rig: LightingRig,
                  chroma: npt.ArrayLike,
                  eps_tau: float = EPS_TAU) -> PixelInversion:
    """Per-pixel luminance and normal assuming chromaticity ``chroma``.

    ``tau * n = L^-T diag(chroma)^-1 v``. A pixel is valid when it is inside
    the image mask, ``tau >= eps_tau`` and the normal faces the camera.
    """
    chroma = _check_chroma(chroma)
    w = (image.data / chroma) @ rig.inv_t.T
    tau = np.linalg.norm(w, axis=-1)
    safe = np.where(tau > 0, tau, 1.0)
    normals = w / safe[..., None]
    valid = image.mask & (tau >= eps_tau) & (normals[..., 2] > EPS_HORIZONTAL)
    normals[~valid] = (0.0, 0.0, 1.0)
    return PixelInversion(np.where(valid, tau, 0.0), normals, valid)


def score_patches(observations: PatchObservations,
                  rig: LightingRig,
                  basis: BasisMatrix,
                  chroma: npt.ArrayLike,
                  tau: np.ndarray,
                  coeffs: np.ndarray) -> np.ndarray:
    """Normalised rendering error of each patch, without shadow clipping."""
    _, normals = evaluate(coeffs, basis)
    pred = (np.asarray(tau)[:, None, None] * np.asarray(chroma)) * rig.shading(normals)
    num = np.sum((observations.intensities - pred) ** 2, axis=(1, 2))
    energy = observations.energy
    return np.divide(num, energy, out=np.zeros_like(num), where=energy > 0)


@dataclasses.dataclass(frozen=True, eq=False)
class PatchFit:
    tau: np.ndarray
    coeffs: np.ndarray
    scores: np.ndarray
    valid: np.ndarray


def patch_fit(inversion: PixelInversion,
              observations: PatchObservations,
              rig: LightingRig,
              basis: BasisMatrix,
              chroma: npt.ArrayLike,
              tau: float | None = None) -> PatchFit:
    """Constant-albedo, polynomial-shape fit of every patch for one chromaticity.

    Patch luminance is the mean pixel luminance unless ``tau`` pins it.
    Patches with an invalid pixel or zero energy are marked invalid and carry
    zero coefficients and scores.
    """
    patches = observations.patches
    m = len(patches)
    valid = gather_windows(inversion.valid, patches).all(axis=1) & (observations.energy > 0)
    g = gather_windows(inversion.gradients(), patches).reshape(m, -1)
    coeffs = project(g, basis)
    if tau is None:
        tau_m = gather_windows(inversion.tau, patches).mean(axis=1)
    else:
        tau_m = np.full(m, float(tau))
    scores = score_patches(observations, rig, basis, chroma, tau_m, coeffs)
    coeffs[~valid] = 0.0
    scores[~valid] = 0.0
    return PatchFit(tau_m, coeffs, scores, valid)


@dataclasses.dataclass(frozen=True, eq=False)
class AlbedoHistogram:
    values: np.ndarray
    grid: AlbedoGrid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_lum, self.grid.n_chroma):
            raise InvalidInputError(
                f'histogram shape {values.shape} does not match the albedo grid'
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidInputError('histogram entries must be finite and >= 0')
        object.__setattr__(self, 'values', values)

    @property
    def cube(self) -> np.ndarray:
        """Values indexed by ``(lum, elev, azim)``."""
        return self.values.reshape(
            self.grid.n_lum, self.grid.n_chroma_elev, self.grid.n_chroma_azim
        )


def histogram_column(fit: PatchFit, grid: AlbedoGrid, h_max: float) -> np.ndarray:
    """One chromaticity's contribution: every valid patch votes into one luminance bin."""
    lum = np.atleast_1d(quantize_tau(fit.tau[fit.valid], grid))
    weight = np.maximum(0.0, h_max - fit.scores[fit.valid])
    return np.bincount(lum, weights=weight, minlength=grid.n_lum)


def build_histogram(fits: typing.Iterable[tuple[int, PatchFit]],
                    grid: AlbedoGrid,
                    h_max: float) -> AlbedoHistogram:
    if not h_max > 0:
        raise InvalidInputError(f'h_max must be > 0, got {h_max}')
    values = np.zeros((grid.n_lum, grid.n_chroma))
    for c, fit in fits:
        values[:, c] += histogram_column(fit, grid, h_max)
    return AlbedoHistogram(values, grid)


def scan_histogram(image: RgbImage,
                   rig: LightingRig,
                   patches: PatchGrid,
                   basis: BasisMatrix,
                   grid: AlbedoGrid,
                   h_max: float,
                   eps_tau: float = EPS_TAU,
                   threads: int = 1,
                   verbose: bool = False) -> AlbedoHistogram:
    """Fit every patch under every grid chromaticity and accumulate votes.

    Columns are independent and written by chromaticity index, so the result
    does not depend on ``threads``.
    """
    if not h_max > 0:
        raise InvalidInputError(f'h_max must be > 0, got {h_max}')
    observations = observe_patches(image, patches)
    chromas = grid.chroma_centers

    def column(c: int) -> np.ndarray:
        inversion = invert_pixels(image, rig, chromas[c], eps_tau)
        fit = patch_fit(inversion, observations, rig, basis, chromas[c])
        return histogram_column(fit, grid, h_max)

    values = np.zeros((grid.n_lum, grid.n_chroma))
    with _spinner(f'Scanning {grid.n_chroma} chromaticities', verbose) as spinner:
        if threads > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
                for c, col in enumerate(pool.map(column, range(grid.n_chroma))):
                    values[:, c] = col
        else:
            for c in range(grid.n_chroma):
                values[:, c] = column(c)
                if verbose and c % 64 == 0:
                    spinner.text = f'Scanning chromaticities: {c}/{grid.n_chroma}'
        if verbose:
            spinner.text = f'Scanned {grid.n_chroma} chromaticities over {len(patches)} patches'
            spinner.ok('✅')
    return AlbedoHistogram(values, grid)


@dataclasses.dataclass(frozen=True, eq=False)
class GlobalAlbedoSet:
    candidates: list[AlbedoCandidate]
    lum_idx: np.ndarray
    chroma_idx: np.ndarray
    peak_values: np.ndarray

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([c.kappa for c in self.candidates]).reshape(-1, 3)

    @classmethod
    def from_candidates(cls, candidates: list[AlbedoCandidate], grid: AlbedoGrid | None = None) -> 'GlobalAlbedoSet':
        """Explicit set (diagnostics); off-grid chromaticities get index -1."""
        lum = np.full(len(candidates), -1, dtype=np.int64)
        chroma = np.full(len(candidates), -1, dtype=np.int64)
        if grid is not None:
            for k, cand in enumerate(candidates):
                lum[k] = quantize_tau(cand.tau, grid)
                hit = np.flatnonzero(np.all(np.isclose(grid.chroma_centers, cand.chroma), axis=1))
                if hit.size:
                    chroma[k] = hit[0]
        return cls(list(candidates), lum, chroma, np.zeros(len(candidates)))


def select_albedo_set(hist: AlbedoHistogram, k: int) -> GlobalAlbedoSet:
    """The ``k`` highest local maxima of the histogram.

    Maxima are taken over 3x3x3 neighbourhoods in ``(lum, elev, azim)`` index
    space without wrap-around. Adjacent maxima are necessarily equal, so each
    connected plateau of maxima collapses to its lowest flat index. Peaks are
    then accepted greedily by value (ties to the lower flat index) and
    suppress their neighbours.
    """
    if k < 1:
        raise InvalidInputError(f'albedo set size must be >= 1, got {k}')
    cube = hist.cube
    if not np.any(cube > 0):
        raise EmptyHistogramError('albedo histogram is empty; no patch scored below h_max')

    local_max = cube == maximum_filter(cube, size=3, mode='constant', cval=-np.inf)
    plateaus, _ = label(local_max & (cube > 0), structure=np.ones((3, 3, 3)))
    cells = np.flatnonzero(plateaus)
    _, first = np.unique(plateaus.ravel()[cells], return_index=True)
    flat = cells[first]
    values = cube.ravel()[flat]
    order = flat[np.lexsort((flat, -values))]

    suppressed = np.zeros(cube.shape, dtype=bool)
    chosen = []
    for idx in order:
        l, e, a = np.unravel_index(idx, cube.shape)
        if suppressed[l, e, a]:
            continue
        chosen.append((int(l), int(e), int(a)))
        suppressed[max(l - 1, 0):l + 2, max(e - 1, 0):e + 2, max(a - 1, 0):a + 2] = True
        if len(chosen) == k:
            break

    if len(chosen) < k:
        warn(f'histogram has only {len(chosen)} peak(s); requested {k}')

    grid = hist.grid
    lum = np.array([l for l, _, _ in chosen], dtype=np.int64)
    chroma = np.array([grid.flat_index(e, a) for _, e, a in chosen], dtype=np.int64)
    return GlobalAlbedoSet(
        [candidate(l, c, grid) for l, c in zip(lum, chroma)],
        lum,
        chroma,
        np.array([cube[p] for p in chosen]),
    )


@dataclasses.dataclass(frozen=True, eq=False)
class LocalDistribution:
    """Per-patch candidate shapes ``(M, K, n_coeff)`` and scores ``(M, K)``.

    Entries with ``valid == False`` are zero and must be ignored; a patch
    with no valid entry has an empty distribution.
    """
    coeffs: np.ndarray
    scores: np.ndarray
    valid: np.ndarray
    albedo_set: GlobalAlbedoSet

    @property
    def n_patches(self) -> int:
        return self.scores.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.scores.shape[1]

    def best(self) -> np.ndarray:
        """Index of the lowest valid score per patch, -1 for empty distributions."""
        masked = np.where(self.valid, self.scores, np.inf)
        best = np.argmin(masked, axis=1) if self.n_candidates else np.zeros(self.n_patches, dtype=np.int64)
        return np.where(self.valid.any(axis=1), best, -1)


def local_distributions(image: RgbImage,
                        rig: LightingRig,
                        albedo_set: GlobalAlbedoSet,
                        patches: PatchGrid,
                        basis: BasisMatrix,
                        eps_tau: float = EPS_TAU,
                        verbose: bool = False) -> LocalDistribution:
    """Candidate shapes and scores of every patch for each albedo in the set.

    The patch luminance is pinned to the candidate's luminance.
    """
    if len(albedo_set) == 0:
        raise InvalidInputError('albedo set is empty')
    observations = observe_patches(image, patches)
    m, n = len(patches), basis.n_coeff
    coeffs = np.zeros((m, len(albedo_set), n))
    scores = np.zeros((m, len(albedo_set)))
    valid = np.zeros((m, len(albedo_set)), dtype=bool)
    inversions: dict[tuple[float, ...], PixelInversion] = {}

    with _spinner(f'Scoring {len(albedo_set)} albedo candidates', verbose) as spinner:
        for k, cand in enumerate(albedo_set.candidates):
            if cand.chroma not in inversions:
                inversions[cand.chroma] = invert_pixels(image, rig, cand.chroma, eps_tau)
            fit = patch_fit(inversions[cand.chroma], observations, rig, basis, cand.chroma, tau=cand.tau)
            coeffs[:, k] = fit.coeffs
            scores[:, k] = fit.scores
            valid[:, k] = fit.valid
        if verbose:
            spinner.ok('✅')

    return LocalDistribution(coeffs, scores, valid, albedo_set)


def degeneracy_rank(normals: npt.ArrayLike) -> int:
    """Numerical rank of the span of the normals' outer products (1 to 6)."""
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if len(n) < 6:
        raise InvalidInputError(f'need at least 6 normals, got {len(n)}')
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    rows = np.stack([x * x, y * y, z * z, x * y, x * z, y * z], axis=1)
    sv = np.linalg.svd(rows, compute_uv=False)
    return max(1, int(np.sum(sv > DEGENERACY_TOL * sv[0])))


def ambiguous_candidates(dist: LocalDistribution, tol: float = 1e-6) -> np.ndarray:
    """Per patch, how many candidates explain it with a score below ``tol``."""
    return np.sum(dist.valid & (dist.scores < tol), axis=1)
