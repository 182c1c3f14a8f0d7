"""Model selection over a parameter grid: k-fold cross-validation and train/validate/test."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import Dataset, resolve_size
from .errors import ConfigError, DataError
from .grid import GridResult, ParameterGrid, enumerate_grid, grid_tasks, run_tasks
from .loss import ErrorKind, ModelKind, error_metric
from .penalty import PenaltyKind
from .solver import SolveControls
from .weights import WeightSpec, compute_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CvSpec:
    nfolds: int = 5
    error: ErrorKind = ErrorKind.MSE
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "error", ErrorKind.parse(self.error))
        if self.nfolds < 2:
            raise ConfigError(f"nfolds must be at least 2, got {self.nfolds}")


@dataclass(frozen=True)
class TvtSpec:
    train_size: Optional[int] = None
    validate_size: Optional[int] = None
    train_pct: float = 0.05
    validate_pct: float = 0.05
    error: ErrorKind = ErrorKind.MSE
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "error", ErrorKind.parse(self.error))


@dataclass
class TvtResult:
    optimal_betas: np.ndarray
    optimal_parameters: dict
    test_error: float
    index: int
    validation_errors: np.ndarray = field(repr=False)
    split: dict = field(repr=False, default_factory=dict)


@dataclass
class FoldFit:
    """Everything fitted on the training part of one fold."""

    train: np.ndarray
    validate: np.ndarray
    grid: ParameterGrid
    result: GridResult


def kfold_indices(n: int, nfolds: int, seed: Optional[int] = None) -> list:
    """Random partition of ``range(n)`` into ``nfolds`` parts whose sizes differ by at most one."""
    if not 2 <= nfolds <= n:
        raise ConfigError(f"nfolds must satisfy 2 <= nfolds <= n={n}, got {nfolds}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, nfolds)]


def _error_tau(kind: ErrorKind, model: ModelKind) -> Optional[float]:
    # least-squares models carry tau=0.5 by default, which QRE then uses
    return model.tau if kind is ErrorKind.QRE else None


def _train_grid(kind: PenaltyKind, grid: ParameterGrid, weight_spec: Optional[WeightSpec],
                train: Dataset) -> ParameterGrid:
    """The grid to solve on ``train``, with adaptive weights computed there if needed."""
    need_l = kind.adaptive_lasso_part and not grid.lasso_weights
    need_g = kind.adaptive_group_part and not grid.gl_weights
    if not (need_l or need_g):
        return grid
    if weight_spec is None:
        raise ConfigError(f"penalization {kind.value} needs explicit weights or a weight specification")
    ws = compute_weights(weight_spec, train, penalization=kind)
    return ParameterGrid(
        lambda1=grid.lambda1,
        alpha=grid.alpha,
        lasso_weights=tuple(ws.lasso_weights) if need_l else grid.lasso_weights,
        gl_weights=tuple(ws.gl_weights) if need_g else grid.gl_weights,
    )


def _fit_parts(model, kind, parts, grid, weight_spec, data, controls, intercept, parallel, num_cores):
    """Solve the grid on the training rows of every (train, validate) pair."""
    prepared, all_tasks, layout = [], [], []
    for train, validate in parts:
        tr = data.subset(train)
        g = _train_grid(kind, grid, weight_spec, tr)
        g.validate(kind)
        tasks, slots = grid_tasks(model, kind, g, tr.x, tr.y, data.group_index, controls, intercept)
        layout.append((len(all_tasks), len(tasks), slots))
        all_tasks.extend(tasks)
        prepared.append((train, validate, g))
    results = run_tasks(all_tasks, parallel, num_cores)
    fits = []
    for (train, validate, g), (start, count, slots) in zip(prepared, layout):
        coefs = [None] * g.size
        combos = enumerate_grid(g)
        for path, out in zip(slots, results[start:start + count]):
            for i, c in zip(path, out):
                c.parameters = combos[i]
                coefs[i] = c
        fits.append(FoldFit(train, validate, g, GridResult(coefs, g, model, kind, intercept, controls)))
    return fits


def cross_validation(model: ModelKind, penalization, grid: ParameterGrid, data: Dataset,
                     cv: CvSpec = CvSpec(), weight_spec: Optional[WeightSpec] = None,
                     controls: Optional[SolveControls] = None, intercept: bool = True,
                     parallel: bool = False, num_cores: Optional[int] = None,
                     return_fits: bool = False):
    """Error matrix of shape (grid size, nfolds); entry (i, j) is model i's error on fold j.

    Adaptive weights, when not given in ``grid``, are recomputed on each
    fold's training rows.
    """
    kind = PenaltyKind.parse(penalization)
    controls = controls or SolveControls()
    folds = kfold_indices(data.n, cv.nfolds, cv.seed)
    all_rows = np.arange(data.n)
    parts = [(np.setdiff1d(all_rows, f), f) for f in folds]
    fits = _fit_parts(model, kind, parts, grid, weight_spec, data, controls, intercept, parallel, num_cores)
    tau = _error_tau(cv.error, model)
    errors = np.empty((fits[0].grid.size, cv.nfolds))
    for j, fit in enumerate(fits):
        xv, yv = data.x[fit.validate], data.y[fit.validate]
        for i, c in enumerate(fit.result.coefficients):
            if not c.converged:
                logger.warning("model %d in fold %d did not converge; using its last iterate", i, j)
            errors[i, j] = error_metric(cv.error, yv, c.predict(xv), tau)
    return (errors, fits) if return_fits else errors


def select_best(errors) -> int:
    """Index of the smallest fold-mean error; ties go to the lowest index."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("empty error matrix")
    means = errors.mean(axis=1) if errors.ndim == 2 else errors
    means = np.where(np.isnan(means), np.inf, means)
    return int(np.argmin(means))


def tvt_split(n: int, tvt: TvtSpec):
    train_n = resolve_size(n, tvt.train_size, tvt.train_pct, "train")
    val_n = resolve_size(n, tvt.validate_size, tvt.validate_pct, "validate")
    if train_n + val_n >= n:
        raise DataError(f"train ({train_n}) + validate ({val_n}) leaves no test rows out of {n}")
    perm = np.random.default_rng(tvt.seed).permutation(n)
    return perm[:train_n], perm[train_n:train_n + val_n], perm[train_n + val_n:]


def train_validate_test(model: ModelKind, penalization, grid: ParameterGrid, data: Dataset,
                        tvt: TvtSpec = TvtSpec(), weight_spec: Optional[WeightSpec] = None,
                        controls: Optional[SolveControls] = None, intercept: bool = True,
                        parallel: bool = False, num_cores: Optional[int] = None) -> TvtResult:
    """Fit on train, pick the grid point with the lowest validation error, report its test error.

    The winner is not refitted; its training-set coefficients are scored once
    on the test rows.
    """
    kind = PenaltyKind.parse(penalization)
    controls = controls or SolveControls()
    train, validate, test = tvt_split(data.n, tvt)
    fit = _fit_parts(model, kind, [(train, validate)], grid, weight_spec, data, controls,
                     intercept, parallel, num_cores)[0]
    tau = _error_tau(tvt.error, model)
    xv, yv = data.x[validate], data.y[validate]
    val_errors = np.array([error_metric(tvt.error, yv, c.predict(xv), tau)
                           for c in fit.result.coefficients])
    best = select_best(val_errors)
    winner = fit.result.coefficients[best]
    test_error = error_metric(tvt.error, data.y[test], winner.predict(data.x[test]), tau)
    return TvtResult(
        optimal_betas=winner.as_vector(),
        optimal_parameters=fit.grid.combination(best),
        test_error=test_error,
        index=best,
        validation_errors=val_errors,
        split={"train": train, "validate": validate, "test": test},
    )
