"""
Consensus-based global shape estimation.

The objective couples a per-pixel gradient map ``n`` with per-patch shape
coefficients ``a_m``:

    L = sum_m [ lam * ||n_m - G a_m||^2
                + min(gamma, min_k (s_mk + ||G (a_m - a_mk)||^2)) ]

and is minimised by alternating exact block updates over ``n`` (average of
patch predictions) and over each ``a_m`` (closed-form per-branch minimiser,
lowest-cost branch wins), while ``lam`` follows a geometric schedule.
"""

import contextlib
import dataclasses
import math

import numpy as np
from yaspin import yaspin

from rgbps.basis import BasisMatrix, evaluate_gradients
from rgbps.common import (
    DEFAULT_GAMMA,
    DEFAULT_ITERATIONS,
    DEFAULT_LAMBDA_FACTOR,
    DEFAULT_LAMBDA_FINAL,
    DEFAULT_LAMBDA_INIT,
    InvalidInputError,
)
from rgbps.local import LocalDistribution, PatchGrid, gather_windows, scatter_windows
from rgbps.model import GradientField, NormalField, SelectionRule
from rgbps.shading import gradients_to_normals

OUTLIER = 0


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    gamma: float = DEFAULT_GAMMA
    lambda_init: float = DEFAULT_LAMBDA_INIT
    lambda_factor: float = DEFAULT_LAMBDA_FACTOR
    lambda_final: float = DEFAULT_LAMBDA_FINAL
    iterations: int = DEFAULT_ITERATIONS
    selection: SelectionRule = SelectionRule.objective
    rel_tol: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidInputError(f'gamma must be > 0, got {self.gamma}')
        if not 0 < self.lambda_init <= self.lambda_final:
            raise InvalidInputError('need 0 < lambda_init <= lambda_final')
        if not self.lambda_factor >= 1:
            raise InvalidInputError(f'lambda_factor must be >= 1, got {self.lambda_factor}')
        if self.iterations < 1:
            raise InvalidInputError(f'iterations must be >= 1, got {self.iterations}')
        if self.rel_tol < 0:
            raise InvalidInputError(f'rel_tol must be >= 0, got {self.rel_tol}')

    def schedule(self) -> np.ndarray:
        """``lambda`` for every iteration: geometric growth, held at the final value."""
        steps = self.lambda_init * self.lambda_factor ** np.arange(self.iterations, dtype=np.float64)
        return np.minimum(steps, self.lambda_final)

    @property
    def reaches_final(self) -> bool:
        """Whether the schedule gets to ``lambda_final`` (up to rounding)."""
        last = self.lambda_init * self.lambda_factor ** (self.iterations - 1)
        return last >= self.lambda_final * (1 - 1e-12)


@dataclasses.dataclass(eq=False)
class SolverState:
    n: np.ndarray
    covered: np.ndarray
    a: np.ndarray
    selection: np.ndarray
    objective: float = math.nan

    @property
    def outliers(self) -> np.ndarray:
        return self.selection == OUTLIER


@dataclasses.dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lam: float
    before: float
    after_n: float
    after_a: float
    outliers: int


@dataclasses.dataclass(frozen=True, eq=False)
class SolveResult:
    normals: NormalField
    gradients: GradientField
    state: SolverState
    trace: list[IterationRecord]


def _candidate_gaps(a: np.ndarray, dists: LocalDistribution, basis: BasisMatrix) -> np.ndarray:
    """``||G (a_m - a_mk)||^2`` for every patch and candidate."""
    d = a[:, None, :] - dists.coeffs
    return np.sum((d @ basis.gram) * d, axis=-1)


def _fit_residuals(n: np.ndarray, a: np.ndarray, patches: PatchGrid, basis: BasisMatrix) -> np.ndarray:
    """``||n_m - G a_m||^2`` for every patch."""
    n_m = gather_windows(n, patches)
    return np.sum((n_m - evaluate_gradients(a, basis)) ** 2, axis=(1, 2))


def objective(state: SolverState,
              dists: LocalDistribution,
              patches: PatchGrid,
              basis: BasisMatrix,
              lam: float,
              gamma: float) -> float:
    """Direct evaluation of the consensus objective."""
    first = lam * _fit_residuals(state.n, state.a, patches, basis)
    fidelity = np.where(dists.valid, dists.scores + _candidate_gaps(state.a, dists, basis), np.inf)
    best = fidelity.min(axis=1) if dists.n_candidates else np.full(len(patches), np.inf)
    second = np.minimum(gamma, best)
    return float(np.sum(first) + np.sum(second))


def n_step(state: SolverState, patches: PatchGrid, basis: BasisMatrix) -> SolverState:
    """Set each covered pixel's gradient to the mean of its patch predictions."""
    preds = evaluate_gradients(state.a, basis)
    total = scatter_windows(preds, patches, state.n.shape[:2])
    count = patches.coverage
    n = np.zeros_like(state.n)
    covered = count > 0
    n[covered] = total[covered] / count[covered, None]
    return dataclasses.replace(state, n=n, covered=covered)


def a_step(state: SolverState,
           dists: LocalDistribution,
           patches: PatchGrid,
           basis: BasisMatrix,
           lam: float,
           gamma: float,
           selection: SelectionRule = SelectionRule.objective) -> SolverState:
    """Per-patch update of the shape coefficients.

    Every branch has a closed-form minimiser: the projection ``a0`` of the
    current gradients for the outlier branch and ``(a_k + lam a0) / (1 + lam)``
    for candidate ``k``. With ``SelectionRule.objective`` the branch with the
    lowest full objective contribution wins, which makes the step an exact
    block minimisation. ``SelectionRule.literal`` compares the candidate
    costs without the data term against ``gamma``.
    """
    if not lam > 0:
        raise InvalidInputError(f'lambda must be > 0, got {lam}')
    n_m = gather_windows(state.n, patches).reshape(len(patches), -1)
    a0 = n_m @ basis.P.T
    r0 = np.sum((n_m - a0 @ basis.G.T) ** 2, axis=1)

    # ||G(a0 - a_k)||^2; the residual n_m - G a0 is orthogonal to range(G)
    q = _candidate_gaps(a0, dists, basis)
    if selection is SelectionRule.objective:
        cand_cost = dists.scores + q * (lam / (1.0 + lam)) + lam * r0[:, None]
        outlier_cost = gamma + lam * r0
    else:
        cand_cost = dists.scores + q * (lam / (1.0 + lam)) ** 2
        outlier_cost = np.full(len(patches), gamma)
    cand_cost = np.where(dists.valid, cand_cost, np.inf)

    costs = np.concatenate([outlier_cost[:, None], cand_cost], axis=1)
    choice = np.argmin(costs, axis=1)

    a = a0.copy()
    picked = choice > OUTLIER
    m_idx = np.flatnonzero(picked)
    if m_idx.size:
        a_k = dists.coeffs[m_idx, choice[m_idx] - 1]
        a[m_idx] = (a_k + lam * a0[m_idx]) / (1.0 + lam)
    return dataclasses.replace(state, a=a, selection=choice)


def initialize(dists: LocalDistribution, patches: PatchGrid, basis: BasisMatrix) -> SolverState:
    """Start every patch at its lowest-score candidate.

    Patches with empty distributions start at zero coefficients as outliers.
    """
    best = dists.best()
    a = np.zeros((len(patches), basis.n_coeff))
    has = best >= 0
    a[has] = dists.coeffs[np.flatnonzero(has), best[has]]
    selection = np.where(has, best + 1, OUTLIER)
    h, w = patches.shape
    state = SolverState(np.zeros((h, w, 2)), np.zeros((h, w), dtype=bool), a, selection)
    return n_step(state, patches, basis)


def solve(dists: LocalDistribution,
          patches: PatchGrid,
          basis: BasisMatrix,
          config: SolverConfig = SolverConfig(),
          verbose: bool = False,
          trace: bool = False) -> SolveResult:
    """Run the alternating minimisation over the full ``lambda`` schedule.

    The objective is evaluated around every block update only when ``trace``
    is set or early stopping is enabled (``rel_tol > 0``); otherwise it is
    evaluated once, after the last iteration.
    """
    if dists.n_patches != len(patches):
        raise InvalidInputError(
            f'{dists.n_patches} distributions for {len(patches)} patches'
        )
    state = initialize(dists, patches, basis)
    records: list[IterationRecord] = []
    schedule = config.schedule()
    tracking = trace or config.rel_tol > 0
    cost = lambda s, lam: objective(s, dists, patches, basis, lam, config.gamma)

    spin = yaspin(text='Solving for a consistent normal map', color='cyan') if verbose else contextlib.nullcontext()
    with spin as spinner:
        for it, lam in enumerate(schedule):
            if not tracking:
                state = n_step(state, patches, basis)
                state = a_step(state, dists, patches, basis, lam, config.gamma, config.selection)
                if verbose:
                    spinner.text = f'Iteration {it + 1}/{len(schedule)}'
                continue

            before = cost(state, lam)
            state = n_step(state, patches, basis)
            after_n = cost(state, lam)
            state = a_step(state, dists, patches, basis, lam, config.gamma, config.selection)
            after_a = cost(state, lam)
            state.objective = after_a
            records.append(IterationRecord(it, float(lam), before, after_n, after_a, int(np.sum(state.outliers))))
            if verbose:
                spinner.text = f'Iteration {it + 1}/{len(schedule)}: objective {after_a:.6g}'
            if (config.rel_tol > 0 and lam >= config.lambda_final
                    and abs(before - after_a) <= config.rel_tol * max(abs(before), 1e-300)):
                break
        if not tracking:
            state.objective = cost(state, schedule[-1])
        state = n_step(state, patches, basis)
        if verbose:
            spinner.ok('✅')

    gradients = GradientField(state.n, state.covered)
    return SolveResult(gradients_to_normals(gradients), gradients, state, records)
