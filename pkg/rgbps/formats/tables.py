"""CSV outputs. Every file has a header row; floats are written with repr()."""

import csv
import dataclasses
import pathlib
import typing

import numpy as np

from rgbps.basis import PatchGeometry
from rgbps.preprocess import unbalance


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_rows(path: pathlib.Path | str, header: list[str], rows: typing.Iterable[typing.Sequence]):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_rows(path: pathlib.Path | str) -> list[dict[str, str]]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


def write_histogram(path, hist):
    """Non-zero bins only, as ``l, elev, azim, value``."""
    cube = hist.cube
    write_rows(
        path,
        ['l', 'elev', 'azim', 'value'],
        ((l, e, a, cube[l, e, a]) for l, e, a in np.argwhere(cube > 0)),
    )


def write_albedo_set(path, albedo_set, gains: np.ndarray | None = None):
    """One row per candidate; with gains, also the albedo before white balance."""
    header = ['tau', 'chroma_r', 'chroma_g', 'chroma_b']
    if gains is not None:
        header += ['kappa_r', 'kappa_g', 'kappa_b']
    rows = [[cand.tau, *cand.chroma] for cand in albedo_set.candidates]
    if gains is not None and rows:
        sensor = unbalance(np.stack([cand.kappa for cand in albedo_set.candidates]), gains)
        rows = [row + list(k) for row, k in zip(rows, sensor)]
    write_rows(path, header, rows)


def write_coefficients(path, coeffs: np.ndarray, geom: PatchGeometry):
    """Shape coefficients, one row per patch, columns named ``a[dx,dy]``."""
    coeffs = np.atleast_2d(coeffs)
    write_rows(
        path,
        ['patch'] + [f'a[{dx},{dy}]' for dx, dy in geom.exponents],
        ([m, *row] for m, row in enumerate(coeffs)),
    )


def write_trace(path, trace):
    write_rows(
        path,
        ['iteration', 'lambda', 'objective', 'objective_after_n', 'outliers'],
        ((r.iteration, r.lam, r.after_a, r.after_n, r.outliers) for r in trace),
    )


def write_cdf(path, thresholds: np.ndarray, fractions: np.ndarray):
    write_rows(path, ['error_deg', 'fraction'], zip(thresholds, fractions))


def write_records(path, records: list, record_type: type):
    """Dataclass instances as rows, fields as columns."""
    fields = [f.name for f in dataclasses.fields(record_type)]
    write_rows(path, fields, ([getattr(r, name) for name in fields] for r in records))
