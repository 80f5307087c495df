import importlib.util
import pathlib

import numpy as np
import pytest

from rgbps.basis import PatchGeometry, build_basis, evaluate
from rgbps.common import BENCHMARK_RIG, THREADS_ENV
from rgbps.formats.rig import read_rig
from rgbps.model import LightingRig, NormalField

ROOT = pathlib.Path(__file__).resolve().parent.parent


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end checks on reduced benchmark grids')


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


@pytest.fixture(scope='session')
def rig() -> LightingRig:
    return read_rig(BENCHMARK_RIG)


@pytest.fixture(scope='session')
def geom() -> PatchGeometry:
    return PatchGeometry(8, 5)


@pytest.fixture(scope='session')
def basis(geom):
    return build_basis(geom)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def cli():
    """The root launcher script, loaded under a name that does not shadow the package."""
    spec = importlib.util.spec_from_file_location('rgbps_cli', ROOT / 'rgbps.py')
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def random_coeffs(geom: PatchGeometry, rng: np.random.Generator, scale: float = 0.05) -> np.ndarray:
    """Polynomial coefficients whose gradients stay around ``scale`` per term."""
    half = (geom.patch_side - 1) / 2.0
    return np.array([
        rng.normal(0.0, scale / ((dx + dy) * half ** (dx + dy - 1)))
        for dx, dy in geom.exponents
    ])


def patch_normals(a: np.ndarray, basis) -> NormalField:
    """Unit normals of polynomial coefficients ``a`` laid out as one square patch."""
    side = basis.geometry.patch_side
    _, normals = evaluate(a, basis)
    return NormalField(normals.reshape(side, side, 3))


def polynomial_field(size: int, terms: dict[tuple[int, int], float]) -> tuple[np.ndarray, np.ndarray]:
    """Depth and gradients of ``sum c x**dx y**dy`` over image-centred pixel coordinates."""
    centre = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size] - centre
    depth = np.zeros((size, size))
    grad = np.zeros((size, size, 2))
    for (dx, dy), c in terms.items():
        depth += c * x ** dx * y ** dy
        if dx:
            grad[..., 0] += c * dx * x ** (dx - 1) * y ** dy
        if dy:
            grad[..., 1] += c * dy * x ** dx * y ** (dy - 1)
    return depth, grad


# a curved surface whose 8x8 patches all have full degeneracy rank
CURVED = {
    (1, 0): 0.08, (0, 1): -0.05,
    (2, 0): 0.012, (1, 1): -0.009, (0, 2): 0.015,
    (3, 0): 4e-4, (1, 2): -3e-4, (0, 3): 2e-4,
}
