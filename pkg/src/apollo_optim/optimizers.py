"""Step functions for APOLLO, APOLLO-Mini and the reference optimizers.

Every ``*_step`` function takes the current weights ``W`` and gradient ``G``
(the ascent direction of the loss), returns new weights, and updates its state
object in place (the same object is returned for convenience).

APOLLO tracks Adam moments of a random projection ``R = P G`` of the gradient
and only uses them to derive one learning-rate scale per channel (or one per
tensor for APOLLO-Mini). That scale multiplies the *raw* full-rank gradient.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError
from .linalg import col_norms, fro_norm
from .projection import (
    ProjectorKind,
    ProjectorState,
    apply_scaling,
    back_project,
    oriented,
    orientation_of,
    project,
    refresh_if_due,
)

MINI_ALPHA = math.sqrt(128.0)
DEFAULT_RANK = 128


class Variant(str, enum.Enum):
    ADAMW = "adamw"
    SGD = "sgd"
    APOLLO = "apollo"
    APOLLO_MINI = "apollo-mini"
    GALORE_RP = "galore-rp"


LOW_RANK_VARIANTS = (Variant.APOLLO, Variant.APOLLO_MINI, Variant.GALORE_RP)


@dataclass
class OptimizerConfig:
    """Hyperparameters for one optimizer.

    ``alpha`` and ``rank`` default per variant: APOLLO uses ``alpha=1``,
    APOLLO-Mini ``alpha=sqrt(128)`` and always ``rank=1``. ``gamma=None``
    disables the norm-growth limiter.
    """

    variant: Variant = Variant.APOLLO
    lr: float = 1e-3
    alpha: Optional[float] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    gamma: Optional[float] = 1.01
    rank: Optional[int] = None
    period: int = 200
    bias_correction: bool = True
    projector: ProjectorKind = ProjectorKind.RANDOM_GAUSSIAN
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.projector = ProjectorKind(self.projector)
        if self.variant is Variant.APOLLO_MINI:
            if self.rank not in (None, 1):
                warnings.warn(f"apollo-mini forces rank 1 (got rank={self.rank})", stacklevel=3)
            self.rank = 1
        elif self.rank is None:
            self.rank = DEFAULT_RANK
        if self.alpha is None:
            self.alpha = MINI_ALPHA if self.variant is Variant.APOLLO_MINI else 1.0
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {b}")
        if self.eps < 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.gamma is not None and not self.gamma > 1.0:
            raise ConfigError(f"gamma must exceed 1 (or be None), got {self.gamma}")
        if self.rank < 1:
            raise ConfigError(f"rank must be positive, got {self.rank}")
        if self.period < 1:
            raise ConfigError(f"period must be positive, got {self.period}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "lr": self.lr,
            "alpha": self.alpha,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "gamma": self.gamma,
            "rank": self.rank,
            "period": self.period,
            "bias_correction": self.bias_correction,
            "projector": self.projector.value,
            "seed": self.seed,
        }


@dataclass
class AdamWState:
    M: np.ndarray
    V: np.ndarray
    step: int = 0
    prev_scaled_norm: Optional[float] = None
    last_scale: Optional[np.ndarray] = field(default=None, repr=False)
    limited: bool = False

    @classmethod
    def zeros(cls, shape) -> "AdamWState":
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class ApolloState:
    M_R: np.ndarray
    V_R: np.ndarray
    projector: ProjectorState
    step: int = 0
    prev_scaled_norm: Optional[float] = None
    last_scale: Optional[np.ndarray] = field(default=None, repr=False)
    limited: bool = False


@dataclass
class GaLoreState:
    M_R: np.ndarray
    V_R: np.ndarray
    projector: ProjectorState
    step: int = 0


def make_projector(shape, cfg: OptimizerConfig, param_id: int = 0, rank: Optional[int] = None) -> ProjectorState:
    r = cfg.rank if rank is None else rank
    return ProjectorState(cfg.projector, r, cfg.period, tuple(shape), base_seed=cfg.seed, param_id=param_id)


def init_apollo_state(shape, cfg: OptimizerConfig, param_id: int = 0, rank: Optional[int] = None) -> ApolloState:
    proj = make_projector(shape, cfg, param_id, rank)
    r = proj.rank
    return ApolloState(np.zeros((r, proj.d_large)), np.zeros((r, proj.d_large)), proj)


def init_galore_state(shape, cfg: OptimizerConfig, param_id: int = 0, rank: Optional[int] = None) -> GaLoreState:
    proj = make_projector(shape, cfg, param_id, rank)
    r = proj.rank
    return GaLoreState(np.zeros((r, proj.d_large)), np.zeros((r, proj.d_large)), proj)


def _bias_terms(cfg: OptimizerConfig, t: int):
    if not cfg.bias_correction:
        return 1.0, 1.0
    return 1.0 - cfg.beta1**t, 1.0 - cfg.beta2**t


def _check(W: np.ndarray, G: np.ndarray) -> None:
    if W.shape != G.shape:
        raise DimensionError(f"weight shape {W.shape} != gradient shape {G.shape}")


def _apply(W: np.ndarray, update: np.ndarray, cfg: OptimizerConfig) -> np.ndarray:
    # decoupled decay acts on the pre-step weights
    return W - cfg.lr * update - cfg.lr * cfg.weight_decay * W


def _limit(scaled: np.ndarray, prev_norm: Optional[float], gamma: Optional[float]):
    norm = fro_norm(scaled)
    if gamma is None or prev_norm is None or prev_norm <= 0.0 or norm <= gamma * prev_norm:
        return scaled, norm, False
    target = gamma * prev_norm
    return scaled * (target / norm), target, True


def norm_growth_limiter(scaled: np.ndarray, prev_norm: Optional[float], gamma: float):
    """Cap the growth of the update norm at ``gamma`` times the previous one.

    Returns the (possibly rescaled) update and its Frobenius norm. Without a
    previous norm (first step) the update passes through untouched.
    """
    out, norm, _ = _limit(scaled, prev_norm, gamma)
    return out, norm


def sgd_step(W: np.ndarray, G: np.ndarray, cfg: OptimizerConfig) -> np.ndarray:
    _check(W, G)
    return _apply(W, G, cfg)


def adamw_step(W: np.ndarray, G: np.ndarray, state: AdamWState, cfg: OptimizerConfig):
    _check(W, G)
    if state.M.shape != G.shape:
        raise DimensionError(f"state shape {state.M.shape} != gradient shape {G.shape}")
    t = state.step + 1
    bc1, bc2 = _bias_terms(cfg, t)
    state.M = cfg.beta1 * state.M + (1.0 - cfg.beta1) * G
    state.V = cfg.beta2 * state.V + (1.0 - cfg.beta2) * G * G
    update = (state.M / bc1) / (np.sqrt(state.V / bc2) + cfg.eps)
    state.step = t
    return _apply(W, update, cfg), state


def structured_adamw_reference(W: np.ndarray, G: np.ndarray, state: AdamWState, cfg: OptimizerConfig):
    """Channel-wise AdamW in the full space.

    Keeps full moments, forms the element-wise Adam direction, and collapses it
    to one scale per channel: ``s_j = |adapted[:, j]| / (|G[:, j]| + eps)``
    along the larger dimension. Used as the oracle for APOLLO with an identity
    projection.
    """
    _check(W, G)
    t = state.step + 1
    bc1, bc2 = _bias_terms(cfg, t)
    state.M = cfg.beta1 * state.M + (1.0 - cfg.beta1) * G
    state.V = cfg.beta2 * state.V + (1.0 - cfg.beta2) * G * G
    adapted = (state.M / bc1) / (np.sqrt(state.V / bc2) + cfg.eps)
    orient = orientation_of(G.shape)
    s = col_norms(oriented(adapted, orient)) / (col_norms(oriented(G, orient)) + cfg.eps)
    scaled = cfg.alpha * apply_scaling(G, s, orient)
    scaled, state.prev_scaled_norm, state.limited = _limit(scaled, state.prev_scaled_norm, cfg.gamma)
    state.last_scale = s
    state.step = t
    return _apply(W, scaled, cfg), state


def apollo_step(W: np.ndarray, G: np.ndarray, state: ApolloState, cfg: OptimizerConfig):
    if cfg.variant not in (Variant.APOLLO, Variant.APOLLO_MINI):
        raise ConfigError(f"apollo_step called with variant {cfg.variant.value}")
    _check(W, G)
    proj = state.projector
    refresh_if_due(proj, state.step, G)
    R = project(proj, G)
    t = state.step + 1
    bc1, bc2 = _bias_terms(cfg, t)
    adapted_norms, raw_norms = kernels.update_moments(
        R, state.M_R, state.V_R, cfg.beta1, cfg.beta2, bc1, bc2, cfg.eps
    )
    if cfg.variant is Variant.APOLLO:
        s = adapted_norms / (raw_norms + cfg.eps)
    else:
        s = math.sqrt(float(adapted_norms @ adapted_norms)) / (math.sqrt(float(raw_norms @ raw_norms)) + cfg.eps)
    scaled = cfg.alpha * apply_scaling(G, s, proj.orientation)
    scaled, state.prev_scaled_norm, state.limited = _limit(scaled, state.prev_scaled_norm, cfg.gamma)
    state.last_scale = np.atleast_1d(s)
    state.step = t
    return _apply(W, scaled, cfg), state


def galore_rp_step(W: np.ndarray, G: np.ndarray, state: GaLoreState, cfg: OptimizerConfig):
    """GaLore-style baseline: Adam entirely inside the projected space, then
    the low-rank update is mapped back with ``P.T``."""
    _check(W, G)
    proj = state.projector
    refresh_if_due(proj, state.step, G)
    R = project(proj, G)
    t = state.step + 1
    bc1, bc2 = _bias_terms(cfg, t)
    state.M_R = cfg.beta1 * state.M_R + (1.0 - cfg.beta1) * R
    state.V_R = cfg.beta2 * state.V_R + (1.0 - cfg.beta2) * R * R
    N = (state.M_R / bc1) / (np.sqrt(state.V_R / bc2) + cfg.eps)
    state.step = t
    return _apply(W, cfg.alpha * back_project(proj, N), cfg), state


def state_element_count(variant, m: int, n: int, r: int = 1) -> int:
    """Optimizer-state scalars for one ``m x n`` matrix (``m <= n``).

    The APOLLO constants cover the stored seed and the limiter's norm.
    """
    variant = Variant(variant)
    m, n = min(m, n), max(m, n)
    if variant is Variant.ADAMW:
        return 2 * m * n
    if variant is Variant.APOLLO:
        return 2 * n * r + 2
    if variant is Variant.APOLLO_MINI:
        return 2 * n + 2
    if variant is Variant.GALORE_RP:
        return m * r + 2 * n * r
    return 0


@dataclass
class StepInfo:
    mean_scale: float
    limited: bool
    update_norm: float


class Optimizer:
    """Applies one configured variant to a list of parameters.

    Matrices use the configured variant (low-rank ranks are clipped to each
    matrix's smaller dimension); vectors and scalars always use AdamW.
    """

    def __init__(self, cfg: OptimizerConfig, shapes):
        self.cfg = cfg
        self.shapes = [tuple(s) for s in shapes]
        self.states = [self._init_state(i, s) for i, s in enumerate(self.shapes)]

    def _is_matrix(self, shape) -> bool:
        return len(shape) == 2 and min(shape) > 1

    def _init_state(self, idx: int, shape):
        cfg = self.cfg
        if not self._is_matrix(shape):
            return AdamWState.zeros((1, int(np.prod(shape))))
        if cfg.variant is Variant.SGD:
            return None
        if cfg.variant is Variant.ADAMW:
            return AdamWState.zeros(shape)
        rank = min(cfg.rank, min(shape))
        if cfg.variant is Variant.GALORE_RP:
            return init_galore_state(shape, cfg, idx, rank)
        return init_apollo_state(shape, cfg, idx, rank)

    def step(self, params, grads, lr: Optional[float] = None):
        cfg = self.cfg
        if lr is not None and lr != cfg.lr:
            cfg = replace(cfg, lr=lr)
        out = []
        scales = []
        limited = False
        sq_update = 0.0
        for W, G, state, shape in zip(params, grads, self.states, self.shapes):
            if not self._is_matrix(shape):
                fallback = cfg if cfg.variant is Variant.ADAMW else _fallback_cfg(cfg)
                W2, _ = adamw_step(W.reshape(1, -1), G.reshape(1, -1), state, fallback)
                W2 = W2.reshape(shape)
            elif cfg.variant is Variant.SGD:
                W2 = sgd_step(W, G, cfg)
                scales.append(1.0)
            elif cfg.variant is Variant.ADAMW:
                W2, _ = adamw_step(W, G, state, cfg)
                scales.append(_effective_scale(W, W2, G, cfg))
            elif cfg.variant is Variant.GALORE_RP:
                W2, _ = galore_rp_step(W, G, state, cfg)
                scales.append(_effective_scale(W, W2, G, cfg))
            else:
                W2, _ = apollo_step(W, G, state, cfg)
                scales.append(float(np.mean(state.last_scale)))
                limited = limited or state.limited
            step_vec = (W - W2) / cfg.lr - cfg.weight_decay * W
            sq_update += float(np.sum(step_vec * step_vec))
            out.append(W2)
        mean_scale = float(np.mean(scales)) if scales else float("nan")
        return out, StepInfo(mean_scale, limited, math.sqrt(sq_update))


def _fallback_cfg(cfg: OptimizerConfig) -> OptimizerConfig:
    return OptimizerConfig(
        Variant.ADAMW,
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
        bias_correction=cfg.bias_correction,
    )


def _effective_scale(W, W2, G, cfg) -> float:
    # |update| / |G| with lr and decay stripped out
    g = fro_norm(G)
    if g == 0.0:
        return 0.0
    step_vec = (W - W2) / cfg.lr - cfg.weight_decay * W
    return fro_norm(step_vec) / g
