"""Adaptive penalty weights from a pilot estimate of the coefficients.

A pilot ``b`` gives lasso weights ``1 / |b_j|**g1`` and group weights
``1 / ||b^l||**g2``. Magnitudes below ``weight_tol`` are clamped to
``weight_tol`` first so that weights stay finite.

Pilot techniques
----------------
unpenalized  unpenalized fit on all predictors (needs n > p)
pca_pct      unpenalized fit on the leading principal component scores,
             mapped back through the loadings
pca_1        the first principal loading itself
pls_pct      as pca_pct with PLS components (NIPALS)
pls_1        the first PLS X-loading
spca         as pca_pct with sparse principal components
lasso        a lasso fit at ``lambda1_weights``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError
from .loss import LEAST_SQUARES, ModelKind
from .penalty import PenaltyKind, PenaltySpec, as_groups
from .solver import SolveControls, fit_single

TECHNIQUES = ("unpenalized", "pca_pct", "pca_1", "pls_pct", "pls_1", "spca", "lasso")


def _as_tuple(value) -> tuple:
    if np.isscalar(value):
        return (float(value),)
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class WeightSpec:
    technique: str = "pca_pct"
    model: ModelKind = LEAST_SQUARES
    lasso_power_weight: Union[float, Sequence[float]] = 1.0
    gl_power_weight: Union[float, Sequence[float]] = 1.0
    variability_pct: float = 0.9
    lambda1_weights: float = 0.1
    spca_alpha: float = 1e-5
    spca_ridge_alpha: float = 1e-2
    weight_tol: float = 1e-4
    max_iters: int = 2000

    def __post_init__(self):
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown weight technique {self.technique!r}; valid: {', '.join(TECHNIQUES)}")
        if not 0.0 < self.variability_pct <= 1.0:
            raise ConfigError(f"variability_pct must lie in (0, 1], got {self.variability_pct}")
        if not self.weight_tol > 0:
            raise ConfigError("weight_tol must be positive")
        object.__setattr__(self, "lasso_power_weight", _as_tuple(self.lasso_power_weight))
        object.__setattr__(self, "gl_power_weight", _as_tuple(self.gl_power_weight))


@dataclass(frozen=True)
class WeightSet:
    lasso_weights: Optional[list]
    gl_weights: Optional[list]


def _unpenalized(model, z, y, max_iters) -> np.ndarray:
    """Slopes of the unpenalized fit (with intercept) of ``y`` on ``z``."""
    coef = fit_single(model, PenaltySpec(PenaltyKind.NONE), (z, y), SolveControls(max_iters=max_iters))
    return coef.beta


def _n_components(explained_ratio: np.ndarray, pct: float) -> int:
    cum = np.cumsum(explained_ratio)
    # round-off guard so pct=1 can be met by the full set
    hits = np.flatnonzero(cum >= pct - 1e-10)
    return int(hits[0]) + 1 if hits.size else int(cum.size)


def _pca(xc):
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    var = s ** 2
    total = var.sum()
    rank = int(np.sum(s > s[0] * max(xc.shape) * np.finfo(float).eps)) if s.size else 0
    return vt[:rank].T, var[:rank] / total if total > 0 else var[:rank]


def nipals_pls(xc, yc, max_components: Optional[int] = None, variability_pct: float = 1.0,
               stall_tol: float = 1e-12):
    """PLS1 by NIPALS with deflation on centered data.

    Stops when the explained X variance reaches ``variability_pct``, when the
    explained variance stops changing, or after ``max_components``.

    Returns
    -------
    W, P, T : weights (p x d), X-loadings (p x d), scores (n x d)
    explained : explained X-variance ratio per component
    """
    n, p = xc.shape
    max_components = min(n - 1, p) if max_components is None else max_components
    total = float(np.sum(xc * xc))
    xa, ya = xc.copy(), yc.copy()
    W, P, T, explained = [], [], [], []
    for _ in range(max(max_components, 1)):
        w = xa.T @ ya
        nw = np.linalg.norm(w)
        if nw <= 1e-14 * max(1.0, np.linalg.norm(yc)):
            break
        w /= nw
        t = xa @ w
        tt = float(t @ t)
        if tt <= 1e-300:
            break
        pl = xa.T @ t / tt
        xa = xa - np.outer(t, pl)
        ya = ya - (float(ya @ t) / tt) * t
        gain = tt * float(pl @ pl) / total if total > 0 else 0.0
        W.append(w)
        P.append(pl)
        T.append(t)
        explained.append(gain)
        if sum(explained) >= variability_pct - 1e-10 or gain < stall_tol:
            break
    if not W:
        raise DataError("PLS extracted no components: the response is orthogonal to the predictors")
    return np.array(W).T, np.array(P).T, np.array(T).T, np.array(explained)


def sparse_pca(xc, n_components: int, alpha: float, ridge_alpha: float,
               max_outer: int = 100, tol: float = 1e-6):
    """Sparse loadings by alternating elastic-net regression and Procrustes rotation.

    Loading update: for each component ``j`` solve
    ``min_b (1/n)||X a_j - X b||^2 + ridge_alpha ||b||^2 + alpha ||b||_1``.
    Rotation update: ``A = U V'`` from the SVD of ``X'X B``.
    Returned loadings are normalised to unit length (zero columns kept at zero).
    """
    n, p = xc.shape
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    A = vt[:n_components].T.copy()
    # the ridge term enters as extra rows of the design
    aug = np.vstack([xc, np.sqrt(n * ridge_alpha) * np.eye(p)])
    spec = PenaltySpec(PenaltyKind.LASSO, alpha)
    controls = SolveControls(max_iters=3000)
    gram = xc.T @ xc
    B = A.copy()
    for _ in range(max_outer):
        B_old = B
        B = np.empty_like(A)
        for j in range(n_components):
            target = np.concatenate([xc @ A[:, j], np.zeros(p)])
            B[:, j] = fit_single(LEAST_SQUARES, spec, (aug, target), controls, intercept=False).beta
        u, _, vt2 = np.linalg.svd(gram @ B, full_matrices=False)
        A = u @ vt2
        if np.max(np.abs(B - B_old)) < tol * max(1.0, np.max(np.abs(B))):
            break
    norms = np.linalg.norm(B, axis=0)
    norms[norms == 0] = 1.0
    return B / norms


def _adjusted_variance(scores, total) -> np.ndarray:
    """Variance explained by correlated components, from the QR of the scores."""
    _, R = np.linalg.qr(scores)
    return np.diag(R) ** 2 / total


def pilot_estimate(technique: str, model: ModelKind, data, spec: Optional[WeightSpec] = None) -> np.ndarray:
    """Pilot coefficient vector (length p) used to build adaptive weights."""
    spec = spec or WeightSpec(technique=technique, model=model)
    x, y = (data.x, data.y) if hasattr(data, "x") else (np.asarray(data[0], float), np.asarray(data[1], float))
    n, p = x.shape
    if technique == "unpenalized":
        if n <= p:
            raise DataError(f"unpenalized weights need more observations than predictors (n={n}, p={p})")
        return _unpenalized(model, x, y, spec.max_iters)
    if technique == "lasso":
        coef = fit_single(model, PenaltySpec(PenaltyKind.LASSO, spec.lambda1_weights), (x, y),
                          SolveControls(max_iters=max(spec.max_iters, 500)))
        return coef.beta

    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    if technique in ("pca_pct", "pca_1"):
        Q, ratio = _pca(xc)
        if Q.shape[1] == 0:
            raise DataError("predictor matrix has rank 0")
        if technique == "pca_1":
            return Q[:, 0].copy()
        d = _n_components(ratio, spec.variability_pct)
        Qd = Q[:, :d]
        return Qd @ _unpenalized(model, xc @ Qd, y, spec.max_iters)
    if technique in ("pls_pct", "pls_1"):
        if technique == "pls_1":
            _, P, _, _ = nipals_pls(xc, yc, max_components=1)
            return P[:, 0].copy()
        W, P, T, _ = nipals_pls(xc, yc, variability_pct=spec.variability_pct)
        # rotation R with T = Xc R
        R = W @ np.linalg.inv(P.T @ W)
        return R @ _unpenalized(model, T, y, spec.max_iters)
    # spca
    Q, ratio = _pca(xc)
    if Q.shape[1] == 0:
        raise DataError("predictor matrix has rank 0")
    k = _n_components(ratio, spec.variability_pct)
    B = sparse_pca(xc, k, spec.spca_alpha, spec.spca_ridge_alpha)
    B = B[:, np.linalg.norm(B, axis=0) > 0]
    if B.shape[1] == 0:
        raise DataError("sparse PCA produced only zero loadings; lower spca_alpha")
    scores = xc @ B
    d = _n_components(_adjusted_variance(scores, float(np.sum(xc * xc))), spec.variability_pct)
    return B[:, :d] @ _unpenalized(model, scores[:, :d], y, spec.max_iters)


def weights_from_estimate(beta_hat, groups=None, gamma1_values=(1.0,), gamma2_values=(1.0,),
                          weight_tol: float = 1e-4, lasso: bool = True, group: bool = True) -> WeightSet:
    """Invert and power a pilot estimate into lasso and group weights."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    groups = as_groups(groups)
    lw = gw = None
    if lasso:
        mag = np.maximum(np.abs(beta_hat), weight_tol)
        lw = [1.0 / mag ** g for g in _as_tuple(gamma1_values)]
    if group:
        if groups is None:
            raise ConfigError("group weights need a group index")
        mag = np.maximum(groups.block_norms(beta_hat), weight_tol)
        gw = [1.0 / mag ** g for g in _as_tuple(gamma2_values)]
    return WeightSet(lw, gw)


def compute_weights(spec: WeightSpec, data, groups=None, penalization=None) -> WeightSet:
    """Pilot estimate followed by weight inversion.

    ``penalization`` decides which weight families are produced. Without it,
    lasso weights are always computed and group weights whenever groups exist.
    """
    groups = as_groups(groups if groups is not None else getattr(data, "group_index", None))
    if penalization is None:
        want_l, want_g = True, groups is not None
    else:
        kind = PenaltyKind.parse(penalization)
        want_l, want_g = kind.adaptive_lasso_part, kind.adaptive_group_part
    if want_g and groups is None:
        raise ConfigError("group weights requested but no group index given")
    beta_hat = pilot_estimate(spec.technique, spec.model, data, spec)
    return weights_from_estimate(beta_hat, groups, spec.lasso_power_weight, spec.gl_power_weight,
                                 spec.weight_tol, lasso=want_l, group=want_g)
