import dataclasses
import functools

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from scipy import ndimage

from rgbps.common import EPS_HORIZONTAL, EmptyMaskError, InvalidInputError
from rgbps.model import AlbedoMap, LightingRig, NormalField, RgbImage

CDF_THRESHOLDS = np.arange(0.0, 180.5, 0.5)


@dataclasses.dataclass(frozen=True, eq=False)
class ErrorReport:
    """Angular errors in degrees; ``errors`` is NaN outside ``mask``."""
    errors: np.ndarray
    mask: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.errors[self.mask]

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    def cdf(self, thresholds: np.ndarray = CDF_THRESHOLDS) -> np.ndarray:
        """Fraction of pixels with error <= each threshold."""
        ordered = np.sort(self.values)
        return np.searchsorted(ordered, thresholds, side='right') / ordered.size


def angular_error(est: NormalField, gt: NormalField) -> ErrorReport:
    if est.shape != gt.shape:
        raise InvalidInputError(f'normal maps differ in size: {est.shape} vs {gt.shape}')
    mask = est.mask & gt.mask
    if not np.any(mask):
        raise EmptyMaskError('estimated and ground-truth masks do not intersect')
    dots = np.clip(np.sum(est.data * gt.data, axis=-1), -1.0, 1.0)
    errors = np.full(mask.shape, np.nan)
    errors[mask] = np.degrees(np.arccos(dots[mask]))
    return ErrorReport(errors, mask)


def pooled_cdf(reports: list[ErrorReport], thresholds: np.ndarray = CDF_THRESHOLDS) -> np.ndarray:
    """CDF over all pixels of all reports."""
    ordered = np.sort(np.concatenate([r.values for r in reports]))
    return np.searchsorted(ordered, thresholds, side='right') / ordered.size


def location_median(reports: list[ErrorReport]) -> np.ndarray:
    """Median error at every pixel location across reports (NaN where never valid)."""
    stack = np.stack([r.errors for r in reports])
    out = np.full(stack.shape[1:], np.nan)
    seen = np.any(np.isfinite(stack), axis=0)
    out[seen] = np.nanmedian(stack[:, seen], axis=0)
    return out


def boundary_medians(error_map: np.ndarray, boundaries: np.ndarray, width: float = 4.0) -> tuple[float, float]:
    """Median of ``error_map`` within ``width`` px of a boundary, and elsewhere."""
    dist = ndimage.distance_transform_edt(~boundaries)
    near = (dist <= width) & np.isfinite(error_map)
    far = (dist > width) & np.isfinite(error_map)
    med = lambda sel: float(np.median(error_map[sel])) if np.any(sel) else float('nan')
    return med(near), med(far)


def simulate_white_captures(image: RgbImage, albedo: AlbedoMap) -> np.ndarray:
    """Three white-light captures from one RGB image and its known albedo.

    Capture ``i`` channel ``c`` is ``kappa_c * v_i / kappa_i``; result shape
    ``(height, width, light, channel)``.
    """
    if image.shape != albedo.shape:
        raise InvalidInputError('image and albedo differ in size')
    kappa = albedo.data
    shading = np.divide(image.data, kappa, out=np.zeros_like(kappa), where=kappa > 0)
    return shading[..., :, None] * kappa[..., None, :]


@dataclasses.dataclass(frozen=True, eq=False)
class ClassicalResult:
    normals: NormalField
    flagged: np.ndarray
    residual: np.ndarray


def classical_ps(captures: np.ndarray,
                 albedo: AlbedoMap,
                 rig: LightingRig,
                 mask: np.ndarray | None = None,
                 kappa_min: float = 1e-3,
                 residual_tol: float = 1e-2) -> ClassicalResult:
    """Least-squares three-light photometric stereo with known albedo.

    ``captures[p, i, c]`` is channel ``c`` under light ``i``; each channel with
    ``kappa_c > kappa_min`` contributes three equations
    ``kappa_c l_i^T n = captures[p, i, c]``. The normal equations reduce to
    ``n ~ L^-T sum_c kappa_c captures[p, :, c] / sum_c kappa_c^2``. Pixels
    with fewer than three equations, a non camera-facing solution or a
    relative residual above ``residual_tol`` are flagged and left out of the
    output mask.
    """
    captures = np.asarray(captures, dtype=np.float64)
    shape = albedo.shape
    if captures.shape != (*shape, 3, 3):
        raise InvalidInputError(f'captures must have shape {(*shape, 3, 3)}, got {captures.shape}')
    mask = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    kappa = np.where(albedo.data > kappa_min, albedo.data, 0.0)
    weight = np.sum(kappa * kappa, axis=-1)
    usable = weight > 0

    rhs = np.einsum('hwic,hwc->hwi', captures, kappa)
    raw = (rhs @ rig.inv_t.T) / np.where(usable, weight, 1.0)[..., None]
    norm = np.linalg.norm(raw, axis=-1)
    normals = raw / np.where(norm > 0, norm, 1.0)[..., None]

    # residual of the normalised solution, relative to the measurements
    pred = rig.shading(normals)[..., :, None] * kappa[..., None, :]
    used = (kappa > 0)[..., None, :]
    err = np.sum(np.where(used, captures - pred, 0.0) ** 2, axis=(-2, -1))
    energy = np.sum(np.where(used, captures, 0.0) ** 2, axis=(-2, -1))
    residual = np.sqrt(np.divide(err, energy, out=np.zeros_like(err), where=energy > 0))

    flagged = mask & (~usable | (norm <= 0) | (normals[..., 2] <= EPS_HORIZONTAL) | (residual > residual_tol))
    good = mask & ~flagged
    normals[~good] = (0.0, 0.0, 1.0)
    return ClassicalResult(NormalField(normals, good), flagged, residual)


@dataclasses.dataclass(frozen=True, eq=False)
class DepthResult:
    """Depth (NaN outside the mask) and RMS gradient mismatch."""
    depth: np.ndarray
    mask: np.ndarray
    residual: float


# stencil of gradient samples behind each neighbour equation
EDGE_STENCIL = 6


@functools.lru_cache(maxsize=None)
def _edge_weights(size: int, offset: int) -> np.ndarray:
    """Quadrature weights for ``z(c + 1) - z(c)`` from ``size`` gradient samples.

    The samples sit at ``c + offset + j``; the weights integrate their
    interpolating polynomial over ``[c, c + 1]``, so the relation is exact
    for depth of degree ``size``.
    """
    t = np.arange(offset, offset + size, dtype=np.float64)
    powers = np.arange(size)
    return np.linalg.solve(t[None, :] ** powers[:, None], 1.0 / (powers + 1))


def _row_targets(inside: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Depth step between horizontal neighbours, shape ``(h, w - 1)``.

    Each step uses up to ``EDGE_STENCIL`` consecutive samples of ``g`` from
    the run of mask pixels holding the pair, centred on the pair where the
    run allows it.
    """
    h, w = inside.shape
    out = np.zeros((h, w - 1))
    runs, n_runs = ndimage.label(inside, structure=np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]]))
    r, c = np.nonzero(inside[:, :-1] & inside[:, 1:])
    if r.size == 0:
        return out
    cols = np.broadcast_to(np.arange(w), inside.shape)
    ids = np.arange(1, n_runs + 1)
    first = np.asarray(ndimage.minimum(cols, runs, ids), dtype=np.int64)
    last = np.asarray(ndimage.maximum(cols, runs, ids), dtype=np.int64)

    run = runs[r, c] - 1
    s, e = first[run], last[run]
    size = np.minimum(EDGE_STENCIL, e - s + 1)
    lo = np.maximum(s, np.minimum(c - (EDGE_STENCIL - 1) // 2, e - size + 1))

    keys, which = np.unique(np.stack([size, lo - c], axis=1), axis=0, return_inverse=True)
    which = which.ravel()
    target = np.empty(r.size)
    for i, (n, off) in enumerate(keys):
        sel = which == i
        taps = c[sel, None] + off + np.arange(n)
        target[sel] = g[r[sel, None], taps] @ _edge_weights(int(n), int(off))
    out[r, c] = target
    return out


def _component_system(labels: np.ndarray, comp: int, gx: np.ndarray, gy: np.ndarray):
    inside = labels == comp
    index = np.full(labels.shape, -1, dtype=np.int64)
    index[inside] = np.arange(np.sum(inside))

    rows, cols, vals, rhs = [], [], [], []
    eq = 0
    for (a, b, steps) in (
        # horizontal neighbours: z(r, c+1) - z(r, c)
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None)), _row_targets(inside, gx)),
        # vertical neighbours: z(r+1, c) - z(r, c)
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None)), _row_targets(inside.T, gy.T).T),
    ):
        pair = inside[a] & inside[b]
        i0 = index[a][pair]
        i1 = index[b][pair]
        k = np.arange(eq, eq + i0.size)
        rows += [k, k]
        cols += [i0, i1]
        vals += [-np.ones(i0.size), np.ones(i0.size)]
        rhs.append(steps[pair])
        eq += i0.size

    A = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(eq, int(np.sum(inside))),
    )
    return inside, A, np.concatenate(rhs)


def integrate_normals(normals: NormalField, mask: np.ndarray | None = None) -> DepthResult:
    """Least-squares depth from normals, one zero-mean solve per 4-connected component.

    Each neighbour pair inside the mask asks the depth difference to match
    the integral of an interpolating polynomial through up to six gradient
    samples along its row or column, which is exact for polynomial depth up
    to degree six when the run of mask pixels is long enough. One pixel per
    component is pinned so the normal equations are non-singular; the
    solution is then shifted to zero mean.
    """
    mask = normals.mask if mask is None else np.asarray(mask, dtype=bool) & normals.mask
    if not np.any(mask):
        raise EmptyMaskError('nothing to integrate: the mask is empty')
    nz = normals.data[..., 2]
    if np.any(nz[mask] <= EPS_HORIZONTAL):
        raise InvalidInputError('cannot integrate normals that do not face the camera')
    safe = np.where(mask, nz, 1.0)
    gx = normals.data[..., 0] / safe
    gy = normals.data[..., 1] / safe

    labels, n_comp = ndimage.label(mask)
    depth = np.full(mask.shape, np.nan)
    sq_err, n_eq = 0.0, 0
    for comp in range(1, n_comp + 1):
        inside, A, b = _component_system(labels, comp, gx, gy)
        n = A.shape[1]
        if n == 1 or A.shape[0] == 0:
            depth[inside] = 0.0
            continue
        # pin the first pixel at zero
        A_free = A[:, 1:]
        z = np.zeros(n)
        z[1:] = scipy.sparse.linalg.spsolve((A_free.T @ A_free).tocsc(), A_free.T @ b)
        sq_err += float(np.sum((A @ z - b) ** 2))
        n_eq += A.shape[0]
        depth[inside] = z - z.mean()

    residual = float(np.sqrt(sq_err / n_eq)) if n_eq else 0.0
    return DepthResult(depth, mask, residual)
