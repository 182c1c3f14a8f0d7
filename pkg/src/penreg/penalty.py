"""Penalty values and their proximal operators.

Every penalty handled here is a (possibly weighted) combination of an
elementwise l1 term and a blockwise l2 term over non-overlapping groups::

    a * lambda1 * sum_j w_j |b_j|  +  (1 - a) * lambda1 * sum_l sqrt(p_l) v_l ||b^l||_2

with ``a = 1`` for lasso kinds, ``a = 0`` for group lasso kinds, and unit
weights for the non-adaptive kinds. The proximal operator of such a sum is
soft-thresholding followed by block soft-thresholding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError


class PenaltyKind(str, enum.Enum):
    NONE = "none"
    LASSO = "lasso"
    GROUP_LASSO = "gl"
    SGL = "sgl"
    ADAPTIVE_LASSO = "alasso"
    ADAPTIVE_GROUP_LASSO = "agl"
    ADAPTIVE_SGL = "asgl"
    ADAPTIVE_SGL_LASSO = "asgl_lasso"
    ADAPTIVE_SGL_GL = "asgl_gl"

    @classmethod
    def parse(cls, value) -> "PenaltyKind":
        if value is None or isinstance(value, cls):
            return cls.NONE if value is None else value
        try:
            return cls(str(value).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown penalization {value!r}; valid: {valid}") from None

    @property
    def uses_alpha(self) -> bool:
        return self in (PenaltyKind.SGL, PenaltyKind.ADAPTIVE_SGL,
                        PenaltyKind.ADAPTIVE_SGL_LASSO, PenaltyKind.ADAPTIVE_SGL_GL)

    @property
    def uses_groups(self) -> bool:
        return self.uses_alpha or self in (PenaltyKind.GROUP_LASSO, PenaltyKind.ADAPTIVE_GROUP_LASSO)

    @property
    def adaptive_lasso_part(self) -> bool:
        return self in (PenaltyKind.ADAPTIVE_LASSO, PenaltyKind.ADAPTIVE_SGL,
                        PenaltyKind.ADAPTIVE_SGL_LASSO)

    @property
    def adaptive_group_part(self) -> bool:
        return self in (PenaltyKind.ADAPTIVE_GROUP_LASSO, PenaltyKind.ADAPTIVE_SGL,
                        PenaltyKind.ADAPTIVE_SGL_GL)

    @property
    def is_adaptive(self) -> bool:
        return self.adaptive_lasso_part or self.adaptive_group_part

    @property
    def uses_lambda(self) -> bool:
        return self is not PenaltyKind.NONE


class GroupStructure:
    """Non-overlapping groups given by one label per predictor.

    Labels are arbitrary integers; internally they become ``0..K-1`` in order
    of first appearance.
    """

    def __init__(self, group_index):
        labels = np.asarray(group_index).ravel()
        if labels.size == 0:
            raise ConfigError("group index is empty")
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        self.original_labels = labels[np.sort(first)]
        self.membership = rank[inverse.ravel()]
        self.K = int(order.size)
        self.sizes = np.bincount(self.membership, minlength=self.K)
        self.sqrt_sizes = np.sqrt(self.sizes)

    @property
    def p(self) -> int:
        return self.membership.shape[0]

    def block_norms(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.sqrt(np.bincount(self.membership, weights=v * v, minlength=self.K))

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.membership == group)

    def __repr__(self):
        return f"GroupStructure(K={self.K}, sizes={self.sizes.tolist()})"


def as_groups(groups) -> Optional[GroupStructure]:
    if groups is None or isinstance(groups, GroupStructure):
        return groups
    return GroupStructure(groups)


@dataclass(frozen=True)
class PenaltySpec:
    kind: PenaltyKind = PenaltyKind.NONE
    lambda1: float = 1.0
    alpha: Optional[float] = None
    lasso_weights: Optional[np.ndarray] = None
    gl_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = PenaltyKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.lambda1 is None or self.lambda1 < 0 or not np.isfinite(self.lambda1):
            raise ConfigError(f"lambda1 must be a finite nonnegative number, got {self.lambda1}")
        if kind.uses_alpha:
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ConfigError(f"alpha must lie in [0, 1] for {kind.value}, got {self.alpha}")
        for name, needed in (("lasso_weights", kind.adaptive_lasso_part),
                             ("gl_weights", kind.adaptive_group_part)):
            w = getattr(self, name)
            if needed and w is None:
                raise ConfigError(f"penalization {kind.value} requires {name}")
            if w is not None:
                w = np.asarray(w, dtype=float).ravel()
                if np.any(w < 0) or not np.all(np.isfinite(w)):
                    raise ConfigError(f"{name} must be finite and nonnegative")
                object.__setattr__(self, name, w)

    @property
    def l1_share(self) -> float:
        """Fraction of ``lambda1`` given to the l1 part."""
        k = self.kind
        if k in (PenaltyKind.LASSO, PenaltyKind.ADAPTIVE_LASSO):
            return 1.0
        if k.uses_alpha:
            return float(self.alpha)
        return 0.0

    def l1_levels(self, p: int) -> Optional[np.ndarray]:
        """Per-coordinate l1 multipliers (``lambda1 * share * w``) or None if no l1 part."""
        share = self.l1_share
        if self.kind is PenaltyKind.NONE or share == 0.0:
            return None
        level = np.full(p, self.lambda1 * share)
        if self.kind.adaptive_lasso_part:
            if self.lasso_weights.shape[0] != p:
                raise ConfigError(f"lasso_weights has length {self.lasso_weights.shape[0]}, expected {p}")
            level = level * self.lasso_weights
        return level

    def group_levels(self, groups: Optional[GroupStructure]) -> Optional[np.ndarray]:
        """Per-group multipliers (``lambda1 * (1 - share) * sqrt(p_l) * v_l``) or None."""
        k = self.kind
        if not k.uses_groups or (k.uses_alpha and self.alpha == 1.0):
            return None
        if groups is None:
            raise ConfigError(f"penalization {k.value} requires a group index")
        level = self.lambda1 * (1.0 - self.l1_share) * groups.sqrt_sizes
        if k.adaptive_group_part:
            if self.gl_weights.shape[0] != groups.K:
                raise ConfigError(f"gl_weights has length {self.gl_weights.shape[0]}, expected {groups.K} groups")
            level = level * self.gl_weights
        return level


def penalty_value(spec: PenaltySpec, beta, groups=None) -> float:
    beta = np.asarray(beta, dtype=float)
    groups = as_groups(groups)
    if spec.kind is PenaltyKind.NONE:
        return 0.0
    if spec.kind.uses_groups and groups is None:
        raise ConfigError(f"penalization {spec.kind.value} requires a group index")
    total = 0.0
    l1 = spec.l1_levels(beta.shape[0])
    if l1 is not None:
        total += float(np.sum(l1 * np.abs(beta)))
    gl = spec.group_levels(groups)
    if gl is not None:
        total += float(np.sum(gl * groups.block_norms(beta)))
    return total


def prox_l1(v, threshold) -> np.ndarray:
    """Soft-thresholding ``sign(v) * max(|v| - t, 0)``."""
    v = np.asarray(v, dtype=float)
    threshold = np.broadcast_to(np.asarray(threshold, dtype=float), v.shape)
    if np.any(threshold < 0):
        raise ValueError("soft-threshold levels must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def prox_group(v, groups, group_threshold) -> np.ndarray:
    """Block soft-thresholding: each block is scaled by ``max(1 - t_l / ||v^l||, 0)``."""
    groups = as_groups(groups)
    v = np.asarray(v, dtype=float)
    t = np.broadcast_to(np.asarray(group_threshold, dtype=float), (groups.K,))
    if np.any(t < 0):
        raise ValueError("group threshold levels must be nonnegative")
    norms = groups.block_norms(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > t, 1.0 - t / norms, 0.0)
    return v * factor[groups.membership]


def prox_penalty(spec: PenaltySpec, v, step: float, groups=None) -> np.ndarray:
    """Proximal point of ``step * penalty`` at ``v``."""
    if step <= 0:
        raise ValueError("step must be positive")
    v = np.asarray(v, dtype=float)
    if spec.kind is PenaltyKind.NONE:
        return v.copy()
    groups = as_groups(groups)
    l1 = spec.l1_levels(v.shape[0])
    z = v if l1 is None else prox_l1(v, step * l1)
    gl = spec.group_levels(groups)
    if gl is not None:
        z = prox_group(z, groups, step * gl)
    return z
