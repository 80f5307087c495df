import math

import numpy as np
import pytest

from rgbps.albedo import (
    AlbedoCandidate,
    AlbedoGrid,
    candidate,
    chroma_center,
    quantize_tau,
    tau_center,
)
from rgbps.common import InvalidInputError


@pytest.fixture
def grid():
    return AlbedoGrid()


def test_chroma_centers_are_positive_unit_vectors(grid):
    centers = grid.chroma_centers
    assert centers.shape == (64 * 64, 3)
    np.testing.assert_allclose(np.linalg.norm(centers, axis=1), 1.0)
    assert np.all(centers > 0)


def test_chroma_center_formula(grid):
    theta = 10.5 * (math.pi / 2) / 64
    phi = 3.5 * (math.pi / 2) / 64
    expected = [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    np.testing.assert_allclose(chroma_center(10, 3, grid), expected)
    np.testing.assert_array_equal(chroma_center(10, 3, grid), grid.chroma_centers[grid.flat_index(10, 3)])
    assert grid.split_index(grid.flat_index(10, 3)) == (10, 3)


def test_chroma_center_out_of_range(grid):
    with pytest.raises(IndexError):
        chroma_center(64, 0, grid)


def test_tau_centers(grid):
    assert tau_center(0, grid) == pytest.approx(0.015)
    assert tau_center(99, grid) == pytest.approx(2.985)
    with pytest.raises(IndexError):
        tau_center(100, grid)


def test_quantize_tau(grid):
    assert quantize_tau(0.015, grid) == 0
    assert quantize_tau(tau_center(42, grid), grid) == 42
    # a bin boundary belongs to the lower bin
    assert quantize_tau(grid.lum_width, grid) == 0
    assert quantize_tau(0.0, grid) == 0
    assert quantize_tau(10.0, grid) == 99
    np.testing.assert_array_equal(quantize_tau(np.array([0.02, 0.05, 0.31]), grid), [0, 1, 10])


@pytest.mark.parametrize('n_lum, tau_max', [(100, 3.0), (7, 1.0), (30, 0.7)])
def test_quantize_tau_bin_edges(n_lum, tau_max):
    grid = AlbedoGrid(n_lum=n_lum, tau_max=tau_max)
    edges = np.array([k * grid.lum_width for k in range(1, n_lum)])
    np.testing.assert_array_equal(quantize_tau(edges, grid), np.arange(n_lum - 1))
    np.testing.assert_array_equal(quantize_tau(np.nextafter(edges, np.inf), grid), np.arange(1, n_lum))
    np.testing.assert_array_equal(quantize_tau(np.nextafter(edges, -np.inf), grid), np.arange(n_lum - 1))


def test_candidate(grid):
    cand = candidate(5, grid.flat_index(1, 2), grid)
    assert cand.tau == pytest.approx(0.165)
    np.testing.assert_allclose(cand.chroma, chroma_center(1, 2, grid))
    np.testing.assert_allclose(cand.kappa, 0.165 * chroma_center(1, 2, grid))


def test_candidate_from_kappa():
    cand = AlbedoCandidate.from_kappa((0.3, 0.4, 0.0))
    assert cand.tau == pytest.approx(0.5)
    np.testing.assert_allclose(cand.chroma, (0.6, 0.8, 0.0))
    np.testing.assert_allclose(cand.kappa, (0.3, 0.4, 0.0))


@pytest.mark.parametrize('tau, chroma', [
    (1.0, (-0.6, 0.8, 0.0)),
    (1.0, (1.0, 1.0, 0.0)),
    (-1.0, (1.0, 0.0, 0.0)),
])
def test_candidate_validation(tau, chroma):
    with pytest.raises(InvalidInputError):
        AlbedoCandidate(tau, chroma)


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        AlbedoGrid(n_lum=0)
    with pytest.raises(InvalidInputError):
        AlbedoGrid(tau_max=0.0)
