"""Penalized linear and quantile regression: lasso, group lasso, sparse group lasso and adaptive variants."""

from .dataset import (Dataset, SplitIndices, Standardizer, SyntheticTruth, generate_grouped,
                      generate_sparse, load_csv, train_test_split, write_csv)
from .errors import ConfigError, DataError, NumericError, PenregError
from .grid import GridResult, ParameterGrid, enumerate_grid, retrieve_parameters_value, solve_grid
from .loss import (LEAST_SQUARES, ErrorKind, ModelKind, check_loss, error_calculator, error_metric,
                   quantile, risk)
from .penalty import (GroupStructure, PenaltyKind, PenaltySpec, penalty_value, prox_group, prox_l1,
                      prox_penalty)
from .solver import Coefficients, SolveControls, active_set, fit_path, fit_single, predict
from .tuning import (CvSpec, TvtResult, TvtSpec, cross_validation, kfold_indices, select_best,
                     train_validate_test)
from .weights import WeightSet, WeightSpec, compute_weights, pilot_estimate, weights_from_estimate

__version__ = "0.1.0"
