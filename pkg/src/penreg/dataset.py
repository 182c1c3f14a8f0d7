"""Data model, CSV ingestion, random splits and synthetic data generators.

All randomness goes through :func:`numpy.random.default_rng`, i.e. the PCG64
bit generator seeded with the user supplied integer. Same seed, same numbers,
on every platform numpy supports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Predictor matrix ``x`` (n x p), response ``y`` (n,) and optional group labels (p,)."""

    x: np.ndarray
    y: np.ndarray
    group_index: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.array(self.y, dtype=float).ravel()
        if x.ndim != 2:
            raise DataError(f"x must be a 2-d matrix, got {x.ndim} dimensions")
        n, p = x.shape
        if n < 1:
            raise DataError("dataset needs at least one observation")
        if y.shape[0] != n:
            raise DataError(f"y has length {y.shape[0]} but x has {n} rows")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise DataError("x and y must only contain finite values")
        gi = self.group_index
        if gi is not None:
            gi = np.asarray(gi).ravel()
            if gi.shape[0] != p:
                raise DataError(f"group_index has length {gi.shape[0]} but x has {p} columns")
            if not np.all(np.equal(np.mod(gi, 1), 0)):
                raise DataError("group labels must be integers")
            gi = gi.astype(int)
            gi.setflags(write=False)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "group_index", gi)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        """Row subset; group labels and names carry over."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.x[rows], self.y[rows], self.group_index, self.feature_names)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    validate: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SyntheticTruth:
    beta_true: np.ndarray
    params: dict


@dataclass(frozen=True)
class Standardizer:
    """Column centering and scaling learned on one matrix and reused on others."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


# ---------------------------------------------------------------------------
# CSV io
# ---------------------------------------------------------------------------

def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at row {row}, column {col!r}") from None
    if not np.isfinite(value):
        raise DataError(f"value {text!r} at row {row}, column {col!r} is not finite")
    return value


def read_group_file(path) -> np.ndarray:
    """Read a one-row comma separated sidecar file of integer group labels."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"group file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if len(rows) != 1:
        raise DataError(f"group file {path} must contain exactly one row, found {len(rows)}")
    labels = []
    for j, cell in enumerate(rows[0]):
        value = _parse_float(cell.strip(), 1, str(j))
        if value != int(value):
            raise DataError(f"group label {cell!r} in column {j} is not an integer")
        labels.append(int(value))
    return np.array(labels, dtype=int)


def load_csv(
    path,
    response_column: Union[str, int] = -1,
    group_row: Optional[str] = None,
    group_file=None,
) -> Dataset:
    """Load a dataset from a CSV file with a header row.

    Parameters
    ----------
    path : path-like
        CSV file, RFC-4180, ``.`` as decimal separator.
    response_column : str or int
        Header name or 0-based position of the response. Negative positions
        count from the end.
    group_row : str, optional
        If given, the first data row whose response cell equals this string is
        read as group labels for the predictors instead of as an observation.
    group_file : path-like, optional
        Sidecar file holding one row of group labels.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    if isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not found in header {header}")
        resp = header.index(response_column)
    else:
        resp = int(response_column)
        if not -len(header) <= resp < len(header):
            raise DataError(f"response column index {resp} out of range for {len(header)} columns")
        resp %= len(header)

    predictors = [j for j in range(len(header)) if j != resp]
    group_index = None
    values = []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} cells, header has {len(header)}")
        if group_row is not None and row[resp].strip() == group_row:
            group_index = np.array(
                [int(_parse_float(row[j].strip(), i, header[j])) for j in predictors], dtype=int
            )
            continue
        values.append([_parse_float(c.strip(), i, header[j]) for j, c in enumerate(row)])
    if not values:
        raise DataError(f"{path} contains no observations")
    if not predictors:
        raise DataError(f"{path} has no predictor columns")
    table = np.array(values, dtype=float)

    if group_file is not None:
        group_index = read_group_file(group_file)
    if group_index is not None and group_index.shape[0] != len(predictors):
        raise DataError(
            f"group vector has length {group_index.shape[0]} but there are {len(predictors)} predictors"
        )
    return Dataset(
        table[:, predictors],
        table[:, resp],
        group_index,
        feature_names=tuple(header[j] for j in predictors),
    )


def fmt(value: float) -> str:
    """Float text with 17 significant digits, the round-trip format used for every output."""
    return f"{float(value):.17g}"


def write_csv(data: Dataset, path, response_name: str = "y", group_file=None) -> None:
    """Write ``data`` as CSV (response last). Group labels go to ``group_file`` if given."""
    names = list(data.feature_names) if data.feature_names else [f"x{j}" for j in range(data.p)]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + [response_name])
        for xi, yi in zip(data.x, data.y):
            writer.writerow([fmt(v) for v in xi] + [fmt(yi)])
    if group_file is not None:
        if data.group_index is None:
            raise DataError("dataset has no group index to write")
        with Path(group_file).open("w", newline="") as fh:
            fh.write(",".join(str(int(g)) for g in data.group_index) + "\n")


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def resolve_size(nrows: int, size: Optional[int], pct: Optional[float], what: str) -> int:
    """An explicit ``size`` takes preference over ``pct``."""
    if size is not None:
        size = int(size)
        if not 0 < size < nrows:
            raise ValueError(f"{what}_size must satisfy 0 < {what}_size < {nrows}, got {size}")
        return size
    if pct is None or not 0 < pct < 1:
        raise ValueError(f"{what}_pct must lie in (0, 1), got {pct}")
    size = int(round(pct * nrows))
    if not 0 < size < nrows:
        raise ValueError(f"{what}_pct={pct} gives {size} rows out of {nrows}")
    return size


def train_test_split(
    nrows: int,
    train_size: Optional[int] = None,
    train_pct: float = 0.7,
    seed: Optional[int] = None,
) -> SplitIndices:
    """Random train/test partition of ``range(nrows)``."""
    if nrows < 2:
        raise ValueError("need at least two rows to split")
    size = resolve_size(nrows, train_size, train_pct, "train")
    perm = np.random.default_rng(seed).permutation(nrows)
    return SplitIndices(train=perm[:size], test=perm[size:])


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def _signal(rng, size):
    # magnitude in [5, 10], random sign
    return rng.uniform(5.0, 10.0, size) * rng.choice([-1.0, 1.0], size)


def generate_grouped(
    n_obs: int,
    group_size: int,
    num_groups: int,
    non_zero_groups: int,
    non_zero_coef: int,
    seed: Optional[int] = None,
    noise: float = 1.0,
):
    """Grouped design with equal-size contiguous groups.

    The first ``non_zero_groups`` groups each carry ``non_zero_coef`` nonzero
    coefficients (the leading ones of the group). Predictors and noise are
    standard normal.
    """
    if min(n_obs, group_size, num_groups) < 1:
        raise ValueError("n_obs, group_size and num_groups must be positive")
    if not 0 <= non_zero_groups <= num_groups:
        raise ValueError("non_zero_groups must lie in [0, num_groups]")
    if not 0 <= non_zero_coef <= group_size:
        raise ValueError("non_zero_coef must lie in [0, group_size]")
    rng = np.random.default_rng(seed)
    p = group_size * num_groups
    x = rng.standard_normal((n_obs, p))
    beta = np.zeros(p)
    for g in range(non_zero_groups):
        start = g * group_size
        beta[start:start + non_zero_coef] = _signal(rng, non_zero_coef)
    y = x @ beta + noise * rng.standard_normal(n_obs)
    group_index = np.repeat(np.arange(1, num_groups + 1), group_size)
    params = dict(n_obs=n_obs, group_size=group_size, num_groups=num_groups,
                  non_zero_groups=non_zero_groups, non_zero_coef=non_zero_coef,
                  noise=noise, seed=seed)
    return Dataset(x, y, group_index), SyntheticTruth(beta, params)


def generate_sparse(
    n_samples: int,
    n_features: int,
    n_informative: int,
    bias: float = 0.0,
    noise: float = 1.0,
    seed: Optional[int] = None,
):
    """Ungrouped sparse design; informative predictors are placed at random positions."""
    if n_samples < 1 or n_features < 1:
        raise ValueError("n_samples and n_features must be positive")
    if not 0 <= n_informative <= n_features:
        raise ValueError("n_informative must lie in [0, n_features]")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, n_features))
    beta = np.zeros(n_features)
    support = np.sort(rng.choice(n_features, n_informative, replace=False))
    beta[support] = _signal(rng, n_informative)
    y = bias + x @ beta + noise * rng.standard_normal(n_samples)
    params = dict(n_samples=n_samples, n_features=n_features, n_informative=n_informative,
                  bias=bias, noise=noise, seed=seed)
    return Dataset(x, y), SyntheticTruth(beta, params)
