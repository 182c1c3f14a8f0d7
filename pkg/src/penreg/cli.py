"""Command line front end: ``penreg {fit,cv,tvt,predict,generate}``.

Settings come from an optional TOML file (``--config``) and are overridden by
flags. Every output file carries the resolved settings and seed. Floats are
written with 17 significant digits so repeated runs are byte-identical.

Exit codes: 0 success, 2 bad configuration, 3 bad data, 4 numerical failure.
On failure a single line ``penreg: error[CODE]: message`` goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .dataset import Dataset, Standardizer, fmt, generate_grouped, generate_sparse, load_csv, write_csv
from .errors import ConfigError, DataError, NumericError, PenregError
from .grid import ParameterGrid, solve_grid
from .loss import ErrorKind, ModelKind
from .penalty import PenaltyKind
from .solver import SolveControls
from .tuning import CvSpec, TvtSpec, cross_validation, select_best, train_validate_test
from .weights import TECHNIQUES, WeightSpec, compute_weights

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

logger = logging.getLogger("penreg")

DEFAULTS = {
    "data": None,
    "response": "-1",
    "groups": None,
    "model": "lm",
    "penalization": "lasso",
    "lambda1": [1.0],
    "alpha": [0.5],
    "tau": 0.5,
    "intercept": True,
    "standardize": False,
    "weight_technique": "pca_pct",
    "lasso_power_weight": [1.0],
    "gl_power_weight": [1.0],
    "variability_pct": 0.9,
    "lambda1_weights": 0.1,
    "spca_alpha": 1e-5,
    "spca_ridge_alpha": 1e-2,
    "weight_tol": 1e-4,
    "error_type": "MSE",
    "nfolds": 5,
    "train_size": None,
    "validate_size": None,
    "train_pct": 0.05,
    "validate_pct": 0.05,
    "max_iters": 2000,
    "tol": 1e-6,
    "seed": None,
    "parallel": False,
    "num_cores": None,
    "out": ".",
    "coefficients": None,
    # generate
    "kind": "grouped",
    "n_obs": 1000,
    "group_size": 10,
    "num_groups": 10,
    "non_zero_groups": 5,
    "non_zero_coef": 6,
    "n_features": 200,
    "n_informative": 10,
    "bias": 0.0,
    "noise": 1.0,
}

LIST_KEYS = ("lambda1", "alpha", "lasso_power_weight", "gl_power_weight")
# settings that change how a run executes but not what it computes
EXECUTION_KEYS = ("parallel", "num_cores", "out")


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------

def float_list(text) -> list:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from None


def _flatten(table: dict, out: dict) -> dict:
    # nested tables only group keys; their names are dropped
    for key, value in table.items():
        if isinstance(value, dict):
            _flatten(value, out)
        else:
            out[key.replace("-", "_")] = value
    return out


def read_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            table = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    values = _flatten(table, {})
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return values


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key in LIST_KEYS:
        cfg[key] = float_list(cfg[key])
    cfg["command"] = args.command
    if cfg["seed"] is None:
        cfg["seed"] = int(np.random.SeedSequence().entropy % 2 ** 32)
    cfg["seed"] = int(cfg["seed"])
    return cfg


def _model(cfg) -> ModelKind:
    return ModelKind(str(cfg["model"]), float(cfg["tau"]))


def _controls(cfg) -> SolveControls:
    return SolveControls(max_iters=int(cfg["max_iters"]), kkt_tol=float(cfg["tol"]))


def _weight_spec(cfg, model) -> WeightSpec:
    return WeightSpec(
        technique=str(cfg["weight_technique"]),
        model=model,
        lasso_power_weight=cfg["lasso_power_weight"],
        gl_power_weight=cfg["gl_power_weight"],
        variability_pct=float(cfg["variability_pct"]),
        lambda1_weights=float(cfg["lambda1_weights"]),
        spca_alpha=float(cfg["spca_alpha"]),
        spca_ridge_alpha=float(cfg["spca_ridge_alpha"]),
        weight_tol=float(cfg["weight_tol"]),
        max_iters=int(cfg["max_iters"]),
    )


def _load(cfg) -> Dataset:
    if not cfg["data"]:
        raise ConfigError("--data is required")
    return load_csv(cfg["data"], response_column=cfg["response"], group_file=cfg["groups"])


def _check_groups(kind: PenaltyKind, data: Dataset):
    if kind.uses_groups and data.group_index is None:
        raise ConfigError(f"penalization {kind.value} needs a group index; pass --groups FILE")


def _base_grid(cfg, kind) -> ParameterGrid:
    """lambda1/alpha axes only; adaptive weights are filled in per training set."""
    return ParameterGrid(
        lambda1=tuple(cfg["lambda1"]) if kind.uses_lambda else None,
        alpha=tuple(cfg["alpha"]) if kind.uses_alpha else None,
    )


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def to_json(obj, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits; non-finite floats become null."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + to_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(obj)


def write_json(path: Path, obj) -> None:
    path.write_text(to_json(_plain(obj)) + "\n")


def _record(cfg) -> dict:
    settings = {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS}
    return {"config": settings, "seed": cfg["seed"],
            "execution": {k: cfg[k] for k in EXECUTION_KEYS}}


def _fit_entry(index, coef) -> dict:
    return {
        "index": index,
        "intercept": coef.intercept,
        "beta": coef.beta,
        "parameters": coef.parameters,
        "objective": coef.objective,
        "converged": coef.converged,
        "iterations": coef.iterations,
    }


def _structure(cfg, data: Dataset, kind: PenaltyKind, scaler=None) -> dict:
    return {
        "model": {"name": cfg["model"], "tau": float(cfg["tau"])},
        "penalization": kind.value,
        "fit_intercept": bool(cfg["intercept"]),
        "feature_names": list(data.feature_names or []),
        "standardize": None if scaler is None else {"mean": scaler.mean, "scale": scaler.scale},
    }


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_matrix(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _check_finite(values, what):
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise NumericError(f"{what} contains non-finite values")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _adaptive_grid(cfg, kind, model, data) -> ParameterGrid:
    if not kind.is_adaptive:
        return ParameterGrid.for_penalty(kind, cfg["lambda1"], cfg["alpha"])
    ws = compute_weights(_weight_spec(cfg, model), data, penalization=kind)
    return ParameterGrid.for_penalty(kind, cfg["lambda1"], cfg["alpha"],
                                     ws.lasso_weights, ws.gl_weights)


def cmd_fit(cfg) -> None:
    model, kind = _model(cfg), PenaltyKind.parse(cfg["penalization"])
    data = _load(cfg)
    _check_groups(kind, data)
    scaler = None
    if cfg["standardize"]:
        scaler = Standardizer.fit(data.x)
        data = Dataset(scaler.transform(data.x), data.y, data.group_index, data.feature_names)
    grid = _adaptive_grid(cfg, kind, model, data)
    result = solve_grid(model, kind, grid, data, _controls(cfg), bool(cfg["intercept"]),
                        bool(cfg["parallel"]), cfg["num_cores"])
    for c in result.coefficients:
        _check_finite(c.beta, "fitted coefficients")
    out = _out_dir(cfg)
    doc = _record(cfg)
    doc.update(_structure(cfg, data, kind, scaler))
    doc["fits"] = [_fit_entry(i, c) for i, c in enumerate(result.coefficients)]
    write_json(out / "coefficients.json", doc)
    print(f"fit {len(result.coefficients)} models -> {out / 'coefficients.json'}")


def cmd_cv(cfg) -> None:
    model, kind = _model(cfg), PenaltyKind.parse(cfg["penalization"])
    data = _load(cfg)
    _check_groups(kind, data)
    cv = CvSpec(int(cfg["nfolds"]), cfg["error_type"], cfg["seed"])
    errors, fits = cross_validation(model, kind, _base_grid(cfg, kind), data, cv,
                                    _weight_spec(cfg, model), _controls(cfg), bool(cfg["intercept"]),
                                    bool(cfg["parallel"]), cfg["num_cores"], return_fits=True)
    best = select_best(errors)
    out = _out_dir(cfg)
    _write_matrix(out / "cv_errors.csv", [f"fold_{j + 1}" for j in range(errors.shape[1])], errors)
    doc = _record(cfg)
    doc["shape"] = list(errors.shape)
    doc["fold_means"] = errors.mean(axis=1)
    doc["best_index"] = best
    # weight vectors differ per fold, so only the shared axes are reported
    params = fits[0].grid.combination(best)
    doc["best_parameters"] = {k: params[k] for k in ("lambda1", "alpha")}
    write_json(out / "cv_summary.json", doc)
    print(f"cv error matrix {errors.shape[0]}x{errors.shape[1]}, best index {best} -> {out}")


def cmd_tvt(cfg) -> None:
    model, kind = _model(cfg), PenaltyKind.parse(cfg["penalization"])
    data = _load(cfg)
    _check_groups(kind, data)
    tvt = TvtSpec(cfg["train_size"], cfg["validate_size"], float(cfg["train_pct"]),
                  float(cfg["validate_pct"]), cfg["error_type"], cfg["seed"])
    res = train_validate_test(model, kind, _base_grid(cfg, kind), data, tvt, _weight_spec(cfg, model),
                              _controls(cfg), bool(cfg["intercept"]), bool(cfg["parallel"]),
                              cfg["num_cores"])
    out = _out_dir(cfg)
    doc = _record(cfg)
    doc.update(_structure(cfg, data, kind))
    b = res.optimal_betas
    intercept, beta = (b[0], b[1:]) if cfg["intercept"] else (0.0, b)
    doc["optimal_betas"] = b
    doc["optimal_parameters"] = res.optimal_parameters
    doc["test_error"] = res.test_error
    doc["index"] = res.index
    doc["validation_errors"] = res.validation_errors
    doc["split"] = res.split
    doc["fits"] = [{"index": res.index, "intercept": intercept, "beta": beta,
                    "parameters": res.optimal_parameters}]
    write_json(out / "tvt.json", doc)
    print(f"tvt test {cfg['error_type']} {fmt(res.test_error)} at index {res.index} -> {out / 'tvt.json'}")


def cmd_predict(cfg) -> None:
    if not cfg["coefficients"]:
        raise ConfigError("--coefficients is required")
    path = Path(cfg["coefficients"])
    if not path.exists():
        raise ConfigError(f"coefficient file not found: {path}")
    try:
        doc = json.loads(path.read_text())
        fits = doc["fits"]
    except (ValueError, KeyError):
        raise DataError(f"{path} is not a coefficient file") from None
    x = _predict_matrix(cfg, doc)
    std = doc.get("standardize")
    if std:
        x = (x - np.asarray(std["mean"])) / np.asarray(std["scale"])
    columns = []
    for f in fits:
        beta = np.asarray(f["beta"], dtype=float)
        if beta.shape[0] != x.shape[1]:
            raise DataError(f"coefficient file has {beta.shape[0]} predictors, data has {x.shape[1]}")
        columns.append(float(f["intercept"]) + x @ beta)
    out = _out_dir(cfg)
    _write_matrix(out / "predictions.csv", [f"model_{f['index']}" for f in fits],
                  np.column_stack(columns) if columns else np.empty((x.shape[0], 0)))
    print(f"predicted {x.shape[0]} rows for {len(fits)} models -> {out / 'predictions.csv'}")


def _predict_matrix(cfg, doc) -> np.ndarray:
    """Predictor columns of ``--data``: named columns when the header matches, else all but the response."""
    if not cfg["data"]:
        raise ConfigError("--data is required")
    path = Path(cfg["data"])
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    names = doc.get("feature_names") or []
    with path.open(newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if names and all(n in header for n in names):
        extra = [h for h in header if h not in names]
        if not extra:
            # predictors only: add a dummy response column
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            cols = [header.index(n) for n in names]
            return table[:, cols]
        data = load_csv(path, response_column=extra[-1])
        order = [data.feature_names.index(n) for n in names]
        return data.x[:, order]
    return _load(cfg).x


def cmd_generate(cfg) -> None:
    out = _out_dir(cfg)
    kind = cfg["kind"]
    if kind == "grouped":
        data, truth = generate_grouped(int(cfg["n_obs"]), int(cfg["group_size"]), int(cfg["num_groups"]),
                                       int(cfg["non_zero_groups"]), int(cfg["non_zero_coef"]),
                                       seed=cfg["seed"], noise=float(cfg["noise"]))
        write_csv(data, out / "data.csv", group_file=out / "groups.csv")
    elif kind == "sparse":
        data, truth = generate_sparse(int(cfg["n_obs"]), int(cfg["n_features"]), int(cfg["n_informative"]),
                                      bias=float(cfg["bias"]), noise=float(cfg["noise"]), seed=cfg["seed"])
        write_csv(data, out / "data.csv")
    else:
        raise ConfigError(f"unknown generator {kind!r}; valid: grouped, sparse")
    _write_matrix(out / "beta_true.csv", ["beta"], truth.beta_true[:, None])
    doc = _record(cfg)
    doc["params"] = truth.params
    doc["beta_true"] = truth.beta_true
    write_json(out / "generate.json", doc)
    print(f"generated {data.n} x {data.p} -> {out / 'data.csv'}")


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "tvt": cmd_tvt, "predict": cmd_predict, "generate": cmd_generate}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _shared(parser) -> None:
    # defaults are None so unset flags do not mask config-file values
    a = parser.add_argument
    a("--config", help="TOML settings file; flags override it")
    a("--data", help="CSV file with a header row")
    a("--response", help="response column name or 0-based index (default: last)")
    a("--groups", help="one-row CSV of integer group labels, one per predictor")
    a("--model", choices=("lm", "qr"))
    a("--penalization", choices=[k.value for k in PenaltyKind])
    a("--lambda1", type=float_list, help="comma separated values")
    a("--alpha", type=float_list, help="comma separated values")
    a("--tau", type=float)
    a("--intercept", dest="intercept", action="store_const", const=True)
    a("--no-intercept", dest="intercept", action="store_const", const=False)
    a("--weight-technique", dest="weight_technique", choices=TECHNIQUES)
    a("--lasso-power-weight", dest="lasso_power_weight", type=float_list)
    a("--gl-power-weight", dest="gl_power_weight", type=float_list)
    a("--variability-pct", dest="variability_pct", type=float)
    a("--lambda1-weights", dest="lambda1_weights", type=float)
    a("--error-type", dest="error_type", choices=[e.value for e in ErrorKind])
    a("--max-iters", dest="max_iters", type=int)
    a("--tol", type=float, help="optimality tolerance of the solvers")
    a("--seed", type=int)
    a("--parallel", dest="parallel", action="store_const", const=True)
    a("--num-cores", dest="num_cores", type=int)
    a("--out", help="output directory")
    a("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="penreg", description="Penalized linear and quantile regression.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="fit every grid point on the full data")
    _shared(p)
    p.add_argument("--standardize", action="store_const", const=True,
                   help="center and scale predictors; the transform is saved with the coefficients")

    p = sub.add_parser("cv", help="k-fold cross-validation error matrix")
    _shared(p)
    p.add_argument("--nfolds", type=int)

    p = sub.add_parser("tvt", help="train / validate / test selection")
    _shared(p)
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--validate-size", dest="validate_size", type=int)
    p.add_argument("--train-pct", dest="train_pct", type=float)
    p.add_argument("--validate-pct", dest="validate_pct", type=float)

    p = sub.add_parser("predict", help="apply a coefficient file to new data")
    _shared(p)
    p.add_argument("--coefficients", help="coefficients.json or tvt.json")

    p = sub.add_parser("generate", help="write a synthetic dataset and its true coefficients")
    _shared(p)
    p.add_argument("--kind", choices=("grouped", "sparse"))
    for name in ("n_obs", "group_size", "num_groups", "non_zero_groups", "non_zero_coef",
                 "n_features", "n_informative"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    p.add_argument("--bias", type=float)
    p.add_argument("--noise", type=float)
    return parser


def _error_line(exc: PenregError) -> str:
    message = " ".join(str(exc).split())
    return f"penreg: error[{exc.code}]: {message}"


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(_error_line(exc), file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        COMMANDS[args.command](cfg)
    except PenregError as exc:
        print(_error_line(exc), file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        err = NumericError(str(exc))
        print(_error_line(err), file=sys.stderr)
        return err.exit_code
    except (ValueError, TypeError) as exc:
        err = ConfigError(str(exc))
        print(_error_line(err), file=sys.stderr)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
