"""
End-to-end orchestration: reconstruction of one image, synthetic benchmark
runs, and the file layouts written by the command-line tools.
"""

import concurrent.futures
import contextlib
import dataclasses
import math
import pathlib

import numpy as np
from yaspin import yaspin

from rgbps.basis import PatchGeometry, build_basis
from rgbps.common import EmptyMaskError, warn
from rgbps.config import PipelineConfig
from rgbps.evaluate import (
    CDF_THRESHOLDS,
    ErrorReport,
    angular_error,
    boundary_medians,
    classical_ps,
    location_median,
    pooled_cdf,
    simulate_white_captures,
)
from rgbps.formats import ensure_dir
from rgbps.formats import pfm, png, tables
from rgbps.formats.rig import write_rig
from rgbps.local import (
    AlbedoHistogram,
    GlobalAlbedoSet,
    LocalDistribution,
    PatchGrid,
    build_patch_grid,
    local_distributions,
    scan_histogram,
    scatter_windows,
    select_albedo_set,
)
from rgbps.model import AlbedoMap, LightingRig, NormalField, RgbImage
from rgbps.solver import SolveResult, solve
from rgbps.synth import (
    SynthConfig,
    SyntheticInstance,
    albedo_regions,
    gen_instance,
    region_boundaries,
)


@dataclasses.dataclass(frozen=True, eq=False)
class Reconstruction:
    normals: NormalField
    outlier_fraction: np.ndarray
    patches: PatchGrid
    histogram: AlbedoHistogram
    albedo_set: GlobalAlbedoSet
    distributions: LocalDistribution
    solution: SolveResult
    geometry: PatchGeometry


def reconstruct(image: RgbImage,
                rig: LightingRig,
                cfg: PipelineConfig = PipelineConfig(),
                threads: int | None = None,
                verbose: bool = False,
                trace: bool = False) -> Reconstruction:
    """Local inference followed by global consensus on one image.

    With ``trace`` the solver records the objective after every block update.
    """
    geom = cfg.geometry()
    grid = cfg.grid()
    basis = build_basis(geom)
    patches = build_patch_grid(image.mask, geom.patch_side)
    if len(patches) == 0:
        raise EmptyMaskError(
            f'no {geom.patch_side}x{geom.patch_side} patch fits inside the image mask'
        )
    if verbose:
        print(f'Image {image.width}x{image.height}, {len(patches)} patches, '
              f'{grid.n_chroma} chromaticities x {grid.n_lum} luminances')

    histogram = scan_histogram(
        image, rig, patches, basis, grid, cfg.h_max,
        eps_tau=cfg.eps_tau,
        threads=cfg.workers if threads is None else threads,
        verbose=verbose,
    )
    albedo_set = select_albedo_set(histogram, cfg.albedo_set_size)
    dists = local_distributions(image, rig, albedo_set, patches, basis, cfg.eps_tau, verbose)
    solution = solve(dists, patches, basis, cfg.solver(), verbose, trace)

    per_patch = solution.state.outliers.astype(np.float64)
    votes = scatter_windows(np.repeat(per_patch[:, None], geom.n_pixels, axis=1), patches, image.shape)
    coverage = patches.coverage
    outlier_fraction = np.divide(votes, coverage, out=np.zeros_like(votes), where=coverage > 0)

    return Reconstruction(
        solution.normals, outlier_fraction, patches, histogram, albedo_set, dists, solution, geom
    )


def write_reconstruction(out_dir: pathlib.Path,
                         rec: Reconstruction,
                         gains: np.ndarray | None = None,
                         dump_histogram: bool = False,
                         dump_trace: bool = False,
                         dump_coefficients: bool = False) -> list[pathlib.Path]:
    out_dir = ensure_dir(out_dir)
    written = {
        'normals.pfm': lambda p: pfm.write_normals(p, rec.normals),
        'normals_vis.png': lambda p: png.write_normals_png(p, rec.normals),
        'outliers.png': lambda p: png.write_fraction_png(p, rec.outlier_fraction),
        'albedos.csv': lambda p: tables.write_albedo_set(p, rec.albedo_set, gains),
    }
    if dump_histogram:
        written['histogram.csv'] = lambda p: tables.write_histogram(p, rec.histogram)
    if dump_trace:
        written['objective.csv'] = lambda p: tables.write_trace(p, rec.solution.trace)
    if dump_coefficients:
        written['coefficients.csv'] = lambda p: tables.write_coefficients(p, rec.solution.state.a, rec.geometry)

    paths = []
    for name, write in written.items():
        write(out_dir / name)
        paths.append(out_dir / name)
    return paths


def write_error_report(out_dir: pathlib.Path, report: ErrorReport) -> list[pathlib.Path]:
    out_dir = ensure_dir(out_dir)
    tables.write_rows(
        out_dir / 'report.csv',
        ['pixels', 'median_deg', 'mean_deg'],
        [(int(report.values.size), report.median, report.mean)],
    )
    pfm.write_scalar(out_dir / 'error_map.pfm', report.errors)
    tables.write_cdf(out_dir / 'cdf.csv', CDF_THRESHOLDS, report.cdf())
    return [out_dir / n for n in ('report.csv', 'error_map.pfm', 'cdf.csv')]


def write_instance(out_dir: pathlib.Path, inst: SyntheticInstance, rig: LightingRig) -> pathlib.Path:
    target = ensure_dir(out_dir / f'{inst.index:04d}')
    pfm.write_image(target / 'image.pfm', inst.image)
    pfm.write_normals(target / 'gt_normals.pfm', inst.normals)
    pfm.write_pfm(target / 'gt_albedo.pfm', inst.albedo.data)
    pfm.write_scalar(target / 'gt_depth.pfm', inst.depth)
    write_rig(target / 'rig.txt', rig)
    return target


def read_albedo(path: pathlib.Path) -> AlbedoMap:
    data = pfm.read_pfm(path).astype(np.float64)
    return AlbedoMap(np.where(np.isfinite(data), data, 0.0))


@dataclasses.dataclass(frozen=True)
class InstanceSummary:
    index: int
    median_deg: float
    mean_deg: float
    baseline_median_deg: float
    boundary_median_deg: float
    interior_median_deg: float
    outlier_patches: float


@dataclasses.dataclass(frozen=True)
class InstanceFailure:
    index: int
    error: str
    message: str


@dataclasses.dataclass(frozen=True, eq=False)
class BenchReport:
    instances: list[InstanceSummary]
    failures: list[InstanceFailure]
    reports: list[ErrorReport]
    baseline_reports: list[ErrorReport]
    boundaries: np.ndarray

    @property
    def median(self) -> float:
        return float(np.median(np.concatenate([r.values for r in self.reports])))

    @property
    def location_median(self) -> np.ndarray:
        return location_median(self.reports)

    def boundary_split(self, width: float = 4.0) -> tuple[float, float]:
        return boundary_medians(self.location_median, self.boundaries, width)

    @property
    def baseline_wins(self) -> int:
        """Instances where the classical baseline is at least as accurate."""
        return sum(1 for s in self.instances if s.baseline_median_deg <= s.median_deg)


@dataclasses.dataclass(frozen=True, eq=False)
class _InstanceRun:
    summary: InstanceSummary | None
    failure: InstanceFailure | None
    report: ErrorReport | None
    baseline: ErrorReport | None


def _run_instance(index: int, cfg: PipelineConfig, synth: SynthConfig, rig: LightingRig) -> _InstanceRun:
    try:
        inst = gen_instance(synth, rig, index)
        rec = reconstruct(inst.image, rig, cfg, threads=1)
        report = angular_error(rec.normals, inst.normals)

        captures = simulate_white_captures(inst.image, inst.albedo)
        baseline = angular_error(classical_ps(captures, inst.albedo, rig, residual_tol=math.inf).normals, inst.normals)

        near, far = boundary_medians(report.errors, region_boundaries(inst.regions))
        summary = InstanceSummary(
            index, report.median, report.mean, baseline.median, near, far,
            float(np.mean(rec.solution.state.outliers)),
        )
        return _InstanceRun(summary, None, report, baseline)
    except Exception as e:
        return _InstanceRun(None, InstanceFailure(index, type(e).__name__, str(e)), None, None)


def bench(cfg: PipelineConfig,
          synth: SynthConfig,
          rig: LightingRig,
          verbose: bool = False) -> BenchReport:
    """Generate, reconstruct and score ``synth.n_surfaces`` instances.

    Instances run concurrently on ``cfg.workers`` threads; results are
    collected in index order so reports do not depend on the thread count.
    A failing instance is recorded and the run continues.
    """
    indices = range(synth.n_surfaces)
    run = lambda i: _run_instance(i, cfg, synth, rig)
    workers = cfg.workers

    spin = yaspin(text=f'Benchmarking {synth.n_surfaces} instances', color='cyan') if verbose else contextlib.nullcontext()
    runs: list[_InstanceRun] = []
    with spin as spinner:
        if workers > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                for r in pool.map(run, indices):
                    runs.append(r)
                    if verbose:
                        spinner.text = f'Benchmarking: {len(runs)}/{synth.n_surfaces} done'
        else:
            for i in indices:
                runs.append(run(i))
                if verbose:
                    spinner.text = f'Benchmarking: {len(runs)}/{synth.n_surfaces} done'
        if verbose:
            spinner.ok('✅')

    failures = [r.failure for r in runs if r.failure]
    for f in failures:
        warn(f'instance {f.index} failed: {f.error}: {f.message}')
    ok = [r for r in runs if r.summary]
    return BenchReport(
        [r.summary for r in ok],
        failures,
        [r.report for r in ok],
        [r.baseline for r in ok],
        region_boundaries(albedo_regions(synth.image_size)),
    )


def write_bench(out_dir: pathlib.Path, report: BenchReport) -> list[pathlib.Path]:
    out_dir = ensure_dir(out_dir)
    paths = [out_dir / n for n in ('report.csv', 'failures.csv', 'summary.csv')]
    tables.write_records(paths[0], report.instances, InstanceSummary)
    tables.write_records(paths[1], report.failures, InstanceFailure)
    if not report.reports:
        tables.write_rows(paths[2], ['instances', 'failed'], [(0, len(report.failures))])
        return paths

    near, far = report.boundary_split()
    tables.write_rows(
        paths[2],
        ['instances', 'failed', 'median_deg', 'baseline_median_deg',
         'boundary_median_deg', 'interior_median_deg', 'baseline_wins'],
        [(
            len(report.instances), len(report.failures), report.median,
            float(np.median(np.concatenate([r.values for r in report.baseline_reports]))),
            near, far, report.baseline_wins,
        )],
    )
    tables.write_cdf(out_dir / 'cdf.csv', CDF_THRESHOLDS, pooled_cdf(report.reports))
    pfm.write_scalar(out_dir / 'location_median.pfm', report.location_median)
    return paths + [out_dir / 'cdf.csv', out_dir / 'location_median.pfm']
