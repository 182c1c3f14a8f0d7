"""Risk functions for least squares and quantile regression, and prediction error metrics."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError


def _check_tau(tau) -> float:
    if tau is None or not 0.0 < float(tau) < 1.0:
        raise ConfigError(f"tau must lie in (0, 1), got {tau}")
    return float(tau)


@dataclass(frozen=True)
class ModelKind:
    """``lm`` (least squares) or ``qr`` (quantile regression at level ``tau``)."""

    name: str = "lm"
    tau: float = 0.5

    def __post_init__(self):
        if self.name not in ("lm", "qr"):
            raise ConfigError(f"unknown model {self.name!r}; valid models: lm, qr")
        if self.name == "qr":
            _check_tau(self.tau)

    @property
    def is_quantile(self) -> bool:
        return self.name == "qr"

    def loss(self, residual) -> np.ndarray:
        residual = np.asarray(residual, dtype=float)
        if self.is_quantile:
            return check_loss(residual, self.tau)
        return residual ** 2


LEAST_SQUARES = ModelKind("lm")


def quantile(tau: float) -> ModelKind:
    return ModelKind("qr", tau)


class ErrorKind(str, enum.Enum):
    MSE = "MSE"
    MAE = "MAE"
    MDAE = "MDAE"
    QRE = "QRE"

    @classmethod
    def parse(cls, value) -> "ErrorKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(
                f"unknown error type {value!r}; valid: {', '.join(e.value for e in cls)}"
            ) from None


def check_loss(u, tau: float):
    """Pinball loss ``u * (tau - 1{u < 0})``, elementwise."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def prox_check(u, tau: float, t: float) -> np.ndarray:
    """Proximal map of ``t * check_loss(., tau)``, elementwise."""
    u = np.asarray(u, dtype=float)
    hi, lo = t * tau, t * (1.0 - tau)
    return np.where(u > hi, u - hi, np.where(u < -lo, u + lo, 0.0))


def risk(model: ModelKind, x, y, beta, intercept: float = 0.0) -> float:
    """Average loss of the linear predictor ``intercept + x @ beta``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[1] != beta.shape[0]:
        raise ValueError(f"dimension mismatch: x {x.shape}, y {y.shape}, beta {beta.shape}")
    r = y - intercept - x @ beta
    return float(np.mean(model.loss(r)))


def error_metric(kind, y_true, y_pred, tau: Optional[float] = None) -> float:
    kind = ErrorKind.parse(kind)
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: y_true {y_true.shape[0]}, y_pred {y_pred.shape[0]}")
    r = y_true - y_pred
    if kind is ErrorKind.MSE:
        return float(np.mean(r ** 2))
    if kind is ErrorKind.MAE:
        return float(np.mean(np.abs(r)))
    if kind is ErrorKind.MDAE:
        return float(np.median(np.abs(r)))
    if tau is None:
        raise ConfigError("QRE error needs a tau value")
    return float(np.mean(check_loss(r, tau)))


def error_calculator(y_true, predictions: Sequence, kind="MSE", tau: Optional[float] = None) -> list:
    """Error of each prediction vector in ``predictions`` against ``y_true``, in order."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    out = []
    for i, pred in enumerate(predictions):
        pred = np.asarray(pred, dtype=float).ravel()
        if pred.shape != y_true.shape:
            raise ValueError(
                f"prediction {i} has length {pred.shape[0]}, expected {y_true.shape[0]}"
            )
        out.append(error_metric(kind, y_true, pred, tau))
    return out
