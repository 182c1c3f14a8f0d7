"""Cartesian parameter grids and solving every grid point.

Grid points are enumerated with ``lambda1`` outermost, then ``alpha``, then
the lasso weight variants, then the group weight variants (innermost, varies
fastest). For ``lambda1=(0.001, 0.01, 0.1)`` and ``alpha=(0.2, 0.5, 0.7)``
index 5 is ``lambda1=0.01, alpha=0.7``. Model indices everywhere else
(cross-validation rows, CLI output) follow this order.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .loss import ModelKind
from .penalty import PenaltyKind, PenaltySpec, as_groups
from .solver import Coefficients, SolveControls, fit_path, predict

AXES = ("lambda1", "alpha", "lasso_weights", "gl_weights")


def _values(value) -> tuple:
    if value is None:
        return None
    if np.isscalar(value):
        return (float(value),)
    return tuple(float(v) for v in value)


def _weight_variants(value) -> Optional[tuple]:
    """A single weight vector or a sequence of them, as a tuple of arrays."""
    if value is None:
        return None
    if isinstance(value, np.ndarray) and value.ndim == 1:
        return (value.astype(float),)
    items = list(value)
    if items and np.isscalar(items[0]):
        return (np.asarray(items, dtype=float),)
    return tuple(np.asarray(v, dtype=float).ravel() for v in items)


@dataclass(frozen=True)
class ParameterGrid:
    lambda1: Optional[tuple] = None
    alpha: Optional[tuple] = None
    lasso_weights: Optional[tuple] = None
    gl_weights: Optional[tuple] = None

    @classmethod
    def for_penalty(cls, penalization, lambda1=1.0, alpha=0.5, lasso_weights=None, gl_weights=None):
        """Grid with only the axes ``penalization`` uses; the others are dropped."""
        kind = PenaltyKind.parse(penalization)
        grid = cls(
            lambda1=_values(lambda1) if kind.uses_lambda else None,
            alpha=_values(alpha) if kind.uses_alpha else None,
            lasso_weights=_weight_variants(lasso_weights) if kind.adaptive_lasso_part else None,
            gl_weights=_weight_variants(gl_weights) if kind.adaptive_group_part else None,
        )
        grid.validate(kind)
        return grid

    def validate(self, kind: PenaltyKind) -> None:
        required = {
            "lambda1": kind.uses_lambda,
            "alpha": kind.uses_alpha,
            "lasso_weights": kind.adaptive_lasso_part,
            "gl_weights": kind.adaptive_group_part,
        }
        for name, needed in required.items():
            axis = getattr(self, name)
            if needed and not axis:
                raise ConfigError(f"penalization {kind.value} needs a nonempty {name} axis")
        if self.lambda1 and min(self.lambda1) < 0:
            raise ConfigError("lambda1 values must be nonnegative")
        if self.alpha and not all(0.0 <= a <= 1.0 for a in self.alpha):
            raise ConfigError("alpha values must lie in [0, 1]")

    def axis_lengths(self) -> tuple:
        return tuple(len(getattr(self, a)) if getattr(self, a) is not None else 1 for a in AXES)

    @property
    def size(self) -> int:
        return int(np.prod(self.axis_lengths()))

    def __len__(self):
        return self.size

    def multi_index(self, index: int) -> tuple:
        """Position on every axis of flat index ``index`` (row-major)."""
        if not 0 <= index < self.size:
            raise IndexError(f"grid index {index} out of range for grid of size {self.size}")
        return tuple(int(i) for i in np.unravel_index(index, self.axis_lengths()))

    def combination(self, index: int) -> dict:
        pos = self.multi_index(index)
        out = {}
        for name, i in zip(AXES, pos):
            axis = getattr(self, name)
            out[name] = None if axis is None else axis[i]
        return out


def enumerate_grid(grid: ParameterGrid) -> list:
    """All combinations in index order."""
    axes = [getattr(grid, a) if getattr(grid, a) is not None else (None,) for a in AXES]
    return [dict(zip(AXES, combo)) for combo in itertools.product(*axes)]


def spec_for(kind: PenaltyKind, combo: dict) -> PenaltySpec:
    return PenaltySpec(
        kind,
        lambda1=0.0 if combo["lambda1"] is None else combo["lambda1"],
        alpha=combo["alpha"],
        lasso_weights=combo["lasso_weights"],
        gl_weights=combo["gl_weights"],
    )


def path_order(grid: ParameterGrid) -> list:
    """Grid indices grouped into warm-start paths.

    One path per setting of the non-lambda axes, lambda1 descending within
    a path (ties keep index order).
    """
    lengths = grid.axis_lengths()
    n_lam, rest = lengths[0], int(np.prod(lengths[1:]))
    lam = grid.lambda1 or (0.0,)
    order = sorted(range(n_lam), key=lambda i: -lam[i])
    return [[i * rest + j for i in order] for j in range(rest)]


@dataclass
class PathTask:
    model: ModelKind
    specs: list
    x: np.ndarray
    y: np.ndarray
    group_index: Optional[np.ndarray]
    controls: SolveControls
    intercept: bool


def _run_task(task: PathTask) -> list:
    coefs = fit_path(task.model, task.specs, (task.x, task.y), task.controls, task.intercept,
                     groups=task.group_index)
    for c in coefs:
        c.state = None
    return coefs


def default_cores() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def run_tasks(tasks: Sequence[PathTask], parallel: bool = False, num_cores: Optional[int] = None) -> list:
    """Run path tasks, sequentially or on a process pool; results keep task order."""
    if not parallel or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    workers = min(num_cores or default_cores(), len(tasks))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def grid_tasks(model, kind, grid, x, y, group_index, controls, intercept):
    """Path tasks for one dataset plus the grid index each result slot belongs to."""
    combos = enumerate_grid(grid)
    tasks, slots = [], []
    for path in path_order(grid):
        tasks.append(PathTask(model, [spec_for(kind, combos[i]) for i in path], x, y,
                              group_index, controls, intercept))
        slots.append(path)
    return tasks, slots


@dataclass
class GridResult:
    coefficients: list
    grid: ParameterGrid
    model: ModelKind
    penalization: PenaltyKind
    intercept: bool = True
    controls: SolveControls = field(default_factory=SolveControls)

    def retrieve_parameters_value(self, index: int) -> dict:
        return retrieve_parameters_value(self, index)

    def predict(self, x_new) -> list:
        return predict(self.coefficients, x_new)

    @property
    def coef_(self) -> list:
        """Coefficient vectors, intercept first when fitted."""
        return [c.as_vector() for c in self.coefficients]


def solve_grid(model: ModelKind, penalization, grid: ParameterGrid, data, controls: Optional[SolveControls] = None,
               intercept: bool = True, parallel: bool = False, num_cores: Optional[int] = None,
               groups=None) -> GridResult:
    """Fit every grid point. Output order is the enumeration order."""
    kind = PenaltyKind.parse(penalization)
    grid.validate(kind)
    controls = controls or SolveControls()
    gi = groups if groups is not None else data.group_index
    if kind.uses_groups and gi is None:
        raise ConfigError(f"penalization {kind.value} requires a group index")
    tasks, slots = grid_tasks(model, kind, grid, data.x, data.y, gi, controls, intercept)
    results = run_tasks(tasks, parallel, num_cores)
    coefs = [None] * grid.size
    combos = enumerate_grid(grid)
    for path, out in zip(slots, results):
        for i, c in zip(path, out):
            c.parameters = combos[i]
            coefs[i] = c
    return GridResult(coefs, grid, model, kind, intercept, controls)


def retrieve_parameters_value(result: GridResult, index: int) -> dict:
    """Parameter values of grid point ``index``; unused parameters are None."""
    return result.grid.combination(int(index))
