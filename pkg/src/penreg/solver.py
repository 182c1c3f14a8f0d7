"""Solvers for one penalized regression problem.

Least squares uses monotone FISTA with adaptive restart; the intercept is
profiled out by centering, which gives the same optimum as an extra
unpenalized column of ones. Quantile regression uses ADMM on the split::

    minimize  sum_i check(r_i) + n * penalty(z)
    s.t.      r = y - A x,   z = x,          A = [X, 1]

where the check-loss and penalty proxes are closed form and the ``x`` update
is a linear solve with the fixed matrix ``A'A + sigma I``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy import linalg

from .dataset import Dataset
from .errors import ConfigError
from .loss import ModelKind, prox_check, risk
from .penalty import GroupStructure, PenaltyKind, PenaltySpec, as_groups, penalty_value

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveControls:
    """Convergence controls.

    ``coef_tol`` only affects reporting (active sets, selection); iterations
    always run on exact values. Quantile problems usually need more than the
    default 500 iterations; 2000 is a good setting there.
    """

    max_iters: int = 500
    objective_tol: float = 1e-8
    coef_tol: float = 1e-5
    kkt_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")
        for name in ("objective_tol", "coef_tol", "kkt_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class Coefficients:
    intercept: Optional[float]
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    parameters: dict = field(default_factory=dict)
    # solver state for warm starts; not part of the result proper
    state: Any = field(default=None, repr=False, compare=False)

    def as_vector(self) -> np.ndarray:
        """Coefficients with the intercept first when one was fitted."""
        if self.intercept is None:
            return self.beta.copy()
        return np.concatenate([[self.intercept], self.beta])

    def predict(self, x_new) -> np.ndarray:
        x_new = np.asarray(x_new, dtype=float)
        out = x_new @ self.beta
        return out + self.intercept if self.intercept is not None else out


def _arrays(data):
    if isinstance(data, Dataset):
        return data.x, data.y, data.group_index
    x, y, *rest = data
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return x, np.asarray(y, dtype=float).ravel(), (rest[0] if rest else None)


def _power_iteration(matvec, dim: int, iters: int = 1000, tol: float = 1e-12) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite operator."""
    if dim == 0:
        return 0.0
    v = 1.0 + np.linspace(0.0, 0.5, dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = matvec(v)
        new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new - est) <= tol * max(new, 1e-300):
            est = new
            break
        est = new
    # the Rayleigh quotient approaches from below
    return max(est, float(np.linalg.norm(matvec(v)))) * (1.0 + 1e-6)


class _LeastSquares:
    """Centered least-squares data shared across a path of problems."""

    def __init__(self, x, y, intercept: bool):
        n, p = x.shape
        self.n, self.p = n, p
        self.intercept = intercept
        if intercept:
            self.x_mean = x.mean(axis=0)
            self.y_mean = float(y.mean())
            xc, yc = x - self.x_mean, y - self.y_mean
        else:
            self.x_mean, self.y_mean = np.zeros(p), 0.0
            xc, yc = x, y
        self.xc, self.yc = xc, yc
        self.gram = p <= n
        if self.gram:
            self.G = (2.0 / n) * (xc.T @ xc)
            self.c = (2.0 / n) * (xc.T @ yc)
            self.yy = float(yc @ yc) / n
            self.L = _power_iteration(lambda v: self.G @ v, p)
        else:
            self.L = _power_iteration(lambda v: (2.0 / n) * (xc @ (xc.T @ v)), n)

    # u = A v where A is G (gram form) or xc
    def apply(self, v):
        return self.G @ v if self.gram else self.xc @ v

    def smooth(self, v, u) -> float:
        if self.gram:
            return self.yy - float(self.c @ v) + 0.5 * float(v @ u)
        r = self.yc - u
        return float(r @ r) / self.n

    def grad(self, u):
        if self.gram:
            return u - self.c
        return (-2.0 / self.n) * (self.xc.T @ (self.yc - u))

    def intercept_for(self, beta) -> Optional[float]:
        return self.y_mean - float(self.x_mean @ beta) if self.intercept else None


class _Prox:
    """``prox_penalty`` with the spec-dependent levels computed once."""

    def __init__(self, spec: PenaltySpec, groups: Optional[GroupStructure], p: int):
        self.none = spec.kind is PenaltyKind.NONE
        self.l1 = None if self.none else spec.l1_levels(p)
        self.gl = None if self.none else spec.group_levels(groups)
        self.groups = groups

    def __call__(self, v, step):
        if self.none:
            return v.copy()
        if self.l1 is not None:
            v = np.sign(v) * np.maximum(np.abs(v) - step * self.l1, 0.0)
        if self.gl is not None:
            g = self.groups
            norms = np.sqrt(np.bincount(g.membership, weights=v * v, minlength=g.K))
            t = step * self.gl
            with np.errstate(divide="ignore", invalid="ignore"):
                factor = np.where(norms > t, 1.0 - t / norms, 0.0)
            v = v * factor[g.membership]
        return v

    def value(self, v) -> float:
        if self.none:
            return 0.0
        total = 0.0
        if self.l1 is not None:
            total += float(self.l1 @ np.abs(v))
        if self.gl is not None:
            total += float(self.gl @ self.groups.block_norms(v))
        return total


def _fista(ls: _LeastSquares, spec: PenaltySpec, groups, controls: SolveControls, beta0):
    p = ls.p
    if p == 0:
        return np.zeros(0), 0, True, []
    prox = _Prox(spec, groups, p)
    L = ls.L if ls.L > 0 else 1.0
    step = 1.0 / L

    x = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    ux = ls.apply(x)
    fx = ls.smooth(x, ux) + prox.value(x)
    yk, uy = x.copy(), ux.copy()
    t = 1.0
    history = [fx]
    converged = False
    # a plain proximal step from x always descends, so it is accepted even when
    # round-off in the objective says otherwise
    plain = True
    it = 0
    for it in range(1, controls.max_iters + 1):
        z = prox(yk - step * ls.grad(uy), step)
        uz = ls.apply(z)
        fz = ls.smooth(z, uz) + prox.value(z)
        # gradient mapping at the extrapolated point
        kkt = L * float(np.max(np.abs(yk - z)))
        if fz <= fx or plain:
            plain = False
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            b = (t - 1.0) / t_new
            yk = z + b * (z - x)
            uy = uz + b * (uz - ux)
            x, ux, fx, t = z, uz, fz, t_new
        else:
            # non-descent step: keep x, drop the momentum
            t = 1.0
            yk, uy = x.copy(), ux.copy()
            plain = True
        history.append(fx)
        if kkt < controls.kkt_tol:
            converged = True
            break
    return x, it, converged, history


class _QuantileOperator:
    """Cached pieces of the ADMM ``x`` update for one design matrix.

    The consensus constraint ``x = z`` is weighted by ``sigma``, the mean
    eigenvalue of ``A'A``, so both constraint blocks are on the same scale.
    """

    def __init__(self, x, y, intercept: bool):
        n, p = x.shape
        self.n, self.p = n, p
        self.intercept = intercept
        self.A = np.hstack([x, np.ones((n, 1))]) if intercept else x
        self.y = y
        m = self.A.shape[1]
        self.sigma = max(float(np.sum(self.A * self.A)) / max(m, 1), 1e-12)
        if m <= n:
            self.chol = linalg.cho_factor(self.A.T @ self.A + self.sigma * np.eye(m))
            self.woodbury = False
        else:
            self.chol = linalg.cho_factor(self.sigma * np.eye(n) + self.A @ self.A.T)
            self.woodbury = True

    def solve(self, h):
        """Apply ``(A'A + sigma I)^-1``."""
        if not self.woodbury:
            return linalg.cho_solve(self.chol, h)
        return (h - self.A.T @ linalg.cho_solve(self.chol, self.A @ h)) / self.sigma


_RELAX = 1.6
_CHECK_EVERY = 10
_POLISH_EVERY = 50
# rho is frozen after this many changes; unbounded balancing can cycle
_MAX_RHO_UPDATES = 20


def _admm(op: _QuantileOperator, model: ModelKind, spec: PenaltySpec, groups,
          controls: SolveControls, state):
    n, p = op.n, op.p
    A, y, sigma = op.A, op.y, op.sigma
    m = A.shape[1]
    tau = model.tau
    prox = _Prox(spec, groups, p)
    if state is None:
        x = np.zeros(m)
        if op.intercept:
            x[-1] = float(np.quantile(y, tau))
        z = x.copy()
        r = y - A @ x
        u = np.zeros(n)
        w = np.zeros(m)
        rho = 1.0
    else:
        x, z, r, u, w, rho = (np.array(s, copy=True) if isinstance(s, np.ndarray) else s for s in state)

    def objective(zv):
        res = y - A @ zv
        return float(np.sum(res * (tau - (res < 0)))) / n + prox.value(zv[:p])

    sqrt_prim, sqrt_dual = np.sqrt(n + m), np.sqrt(m)
    loose = np.sqrt(controls.kkt_tol)
    converged = False
    updates = 0
    f_old = objective(z)
    # best polished point seen so far
    best, best_f = z.copy(), f_old
    it = 0
    for it in range(1, controls.max_iters + 1):
        x = op.solve(A.T @ (y - r - u) + sigma * (z - w))
        Ax = A @ x
        r_old, z_old = r, z
        # over-relaxed iterates
        Axh = _RELAX * Ax + (1.0 - _RELAX) * (y - r)
        xh = _RELAX * x + (1.0 - _RELAX) * z
        r = prox_check(y - Axh - u, tau, 1.0 / rho)
        z = xh + w
        if p:
            z[:p] = prox(z[:p], n / (rho * sigma))
        u = u + (Axh + r - y)
        w = w + (xh - z)
        if it % _CHECK_EVERY and it != controls.max_iters:
            continue
        pa, pb = Ax + r - y, x - z
        prim = np.sqrt(pa @ pa + sigma * (pb @ pb))
        dual = rho * np.linalg.norm(A.T @ (r - r_old) - sigma * (z - z_old))
        prim_rms, dual_rms = prim / sqrt_prim, dual / sqrt_dual
        if it % _POLISH_EVERY == 0:
            cand = _polish(op, tau, z, objective)
            f_cand = objective(cand)
            if f_cand < best_f:
                best, best_f = cand, f_cand
            if _certify(op, tau, prox, cand) <= controls.kkt_tol:
                best, converged = cand, True
                break
        if prim_rms < controls.kkt_tol and dual_rms < controls.kkt_tol:
            converged = True
            break
        f_new = objective(z)
        rel = abs(f_old - f_new) / max(abs(f_new), 1e-300)
        f_old = f_new
        if rel < controls.objective_tol and prim_rms < loose and dual_rms < loose:
            converged = True
            break
        if updates >= _MAX_RHO_UPDATES:
            continue
        if prim > 10.0 * dual:
            rho *= 2.0
            u, w = u / 2.0, w / 2.0
            updates += 1
        elif dual > 10.0 * prim:
            rho /= 2.0
            u, w = u * 2.0, w * 2.0
            updates += 1
    if not converged:
        final = _polish(op, tau, z, objective)
        if objective(final) <= best_f:
            best = final
    return best, it, converged, (x, z, r, u, w, rho)


def _polish(op: _QuantileOperator, tau, z, objective):
    """Snap an ADMM iterate onto the nearby interpolating solution.

    A quantile fit with ``k`` free coefficients (nonzero slopes plus the
    intercept) passes exactly through ``k`` observations when the penalty is
    polyhedral. The ``k`` observations with the smallest residuals are made
    exact by a ``k x k`` solve; the candidate is kept only if it does not
    raise the objective.
    """
    p, A, y = op.p, op.A, op.y
    free = np.flatnonzero(z[:p] != 0.0)
    if op.intercept:
        free = np.append(free, p)
    k = free.size
    if k == 0 or k > op.n:
        return z
    res = y - A @ z
    rows = np.argsort(np.abs(res), kind="stable")[:k]
    sub = A[np.ix_(rows, free)]
    try:
        theta = np.linalg.solve(sub, y[rows])
    except np.linalg.LinAlgError:
        return z
    cand = z.copy()
    cand[free] = theta
    if not np.all(np.isfinite(cand)):
        return z
    # sign flips would change the penalty's active face
    if np.any(np.sign(cand[free[free < p]]) != np.sign(z[free[free < p]])):
        return z
    return cand if objective(cand) <= objective(z) else z


def _certify(op: _QuantileOperator, tau, prox: _Prox, theta) -> float:
    """Largest violation of the optimality conditions at ``theta``; 0 means optimal.

    Rows with nonzero residual have a fixed check-loss subgradient. On rows
    fitted exactly the subgradient is solved for from the stationarity
    equations of the free coefficients, then checked against its interval
    ``[tau - 1, tau]`` and against the penalty subdifferential of the zero
    coefficients.
    """
    A, y, n, p = op.A, op.y, op.n, op.p
    res = y - A @ theta
    exact = np.abs(res) <= 1e-9 * (1.0 + float(np.max(np.abs(y))))
    beta = theta[:p]
    free = np.flatnonzero(beta != 0)
    cols = np.append(free, p) if op.intercept else free
    if cols.size == 0 or not exact.any():
        return np.inf
    l1 = prox.l1 if prox.l1 is not None else np.zeros(p)
    grad = l1 * np.sign(beta)
    if prox.gl is not None:
        mem = prox.groups.membership
        norms = prox.groups.block_norms(beta)[mem]
        on = norms > 0
        grad[on] += prox.gl[mem[on]] * beta[on] / norms[on]
    target = np.append(grad[free], 0.0) if op.intercept else grad[free]
    v = np.where(res > 0, tau, tau - 1.0)
    rhs = n * target - A[np.ix_(~exact, cols)].T @ v[~exact]
    a_exact = A[np.ix_(exact, cols)]
    vb = np.linalg.lstsq(a_exact.T, rhs, rcond=None)[0]
    worst = float(np.max(np.abs(a_exact.T @ vb - rhs))) / n
    worst = max(worst, float(np.max(vb - tau, initial=0.0)), float(np.max(tau - 1.0 - vb, initial=0.0)))
    v[exact] = vb
    h = A[:, :p].T @ v / n
    zero = beta == 0
    if not zero.any():
        return worst
    slack = np.maximum(np.abs(h) - l1, 0.0)
    if prox.gl is None:
        return max(worst, float(np.max(slack[zero])))
    mem = prox.groups.membership
    group_norms = prox.groups.block_norms(beta)
    inside = zero & (group_norms[mem] > 0)
    if inside.any():
        worst = max(worst, float(np.max(slack[inside])))
    dead = group_norms == 0
    if dead.any():
        soft = np.sqrt(np.bincount(mem, weights=slack * slack, minlength=prox.groups.K))
        worst = max(worst, float(np.max(soft[dead] - prox.gl[dead])))
    return worst


def _check(model, spec, x, y, groups):
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"x has shape {x.shape} but y has length {y.shape[0]}")
    if spec.kind.uses_groups and groups is None:
        raise ConfigError(f"penalization {spec.kind.value} requires a group index")
    if groups is not None and groups.p != x.shape[1]:
        raise ConfigError(f"group index covers {groups.p} predictors, data has {x.shape[1]}")
    if spec.lasso_weights is not None and spec.kind.adaptive_lasso_part \
            and spec.lasso_weights.shape[0] != x.shape[1]:
        raise ConfigError(f"lasso_weights has length {spec.lasso_weights.shape[0]}, expected {x.shape[1]}")
    if spec.gl_weights is not None and spec.kind.adaptive_group_part \
            and spec.gl_weights.shape[0] != groups.K:
        raise ConfigError(f"gl_weights has length {spec.gl_weights.shape[0]}, expected {groups.K}")


def fit_path(model: ModelKind, specs: Sequence[PenaltySpec], data, controls: Optional[SolveControls] = None,
             intercept: bool = True, groups=None, warm_start: bool = True) -> list:
    """Solve a sequence of problems on the same data, in the given order.

    With ``warm_start`` each problem starts from the previous solution. The
    optimum does not depend on it, only the iterate path does.
    """
    controls = controls or SolveControls()
    x, y, gi = _arrays(data)
    groups = as_groups(groups if groups is not None else gi)
    for spec in specs:
        _check(model, spec, x, y, groups)
    out = []
    if model.is_quantile:
        op = _QuantileOperator(x, y, intercept)
        state = None
        for spec in specs:
            z, it, conv, new_state = _admm(op, model, spec, groups, controls, state)
            beta = z[:op.p].copy()
            b = float(z[-1]) if intercept else None
            out.append(_finish(model, spec, x, y, groups, beta, b, it, conv, new_state))
            state = new_state if warm_start else None
        return out

    ls = _LeastSquares(x, y, intercept)
    beta0 = None
    for spec in specs:
        if spec.kind is PenaltyKind.NONE or spec.lambda1 == 0:
            # zero penalty: solve the least-squares problem directly
            beta = np.linalg.lstsq(ls.xc, ls.yc, rcond=None)[0] if ls.p else np.zeros(0)
            it, conv = 1, True
        else:
            beta, it, conv, _ = _fista(ls, spec, groups, controls, beta0)
        out.append(_finish(model, spec, x, y, groups, beta, ls.intercept_for(beta), it, conv, beta))
        beta0 = beta if warm_start else None
    return out


def _finish(model, spec, x, y, groups, beta, b, it, conv, state) -> Coefficients:
    obj = risk(model, x, y, beta, 0.0 if b is None else b) + penalty_value(spec, beta, groups)
    if not conv:
        logger.warning("solver stopped after %d iterations without converging (%s, lambda1=%g)",
                       it, spec.kind.value, spec.lambda1)
    return Coefficients(b, beta, obj, it, conv, state=state)


def fit_single(model: ModelKind, spec: PenaltySpec, data, controls: Optional[SolveControls] = None,
               intercept: bool = True, groups=None) -> Coefficients:
    """Minimize risk + penalty for one parameter combination."""
    return fit_path(model, [spec], data, controls, intercept, groups)[0]


def predict(coefs, x_new) -> list:
    """One prediction vector per coefficient set, in input order."""
    if isinstance(coefs, Coefficients):
        coefs = [coefs]
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new.reshape(-1, 1)
    preds = []
    for c in coefs:
        if x_new.shape[1] != c.beta.shape[0]:
            raise ConfigError(f"x_new has {x_new.shape[1]} columns, model has {c.beta.shape[0]} predictors")
        preds.append(c.predict(x_new))
    return preds


def active_set(coefs: Coefficients, coef_tol: float = 1e-5) -> np.ndarray:
    return np.flatnonzero(np.abs(coefs.beta) > coef_tol)
