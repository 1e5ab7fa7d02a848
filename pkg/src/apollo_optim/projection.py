"""Low-rank projections of weight gradients.

The smaller matrix dimension is always the one compressed. For a parameter of
shape ``(rows, cols)`` with ``rows <= cols`` the projection is ``R = P @ G``;
with ``rows > cols`` it is ``R = P @ G.T``. Either way ``R`` has shape
``(rank, d_large)`` and its columns are the *channels* that receive one scaling
factor each.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError
from .linalg import gaussian_matrix
from .rng import derive_seed

ROWS_SMALL = "rows_small"
COLS_SMALL = "cols_small"


class ProjectorKind(str, enum.Enum):
    RANDOM_GAUSSIAN = "random"
    TOP_SINGULAR = "svd"
    IDENTITY = "identity"


def orientation_of(shape) -> str:
    rows, cols = shape
    return ROWS_SMALL if rows <= cols else COLS_SMALL


def oriented(G: np.ndarray, orientation: str) -> np.ndarray:
    """View ``G`` with the compressed axis first (``d_small x d_large``)."""
    return G if orientation == ROWS_SMALL else G.T


@dataclass
class ProjectorState:
    kind: ProjectorKind
    rank: int
    period: int
    shape: tuple
    base_seed: int = 0
    param_id: int = 0
    refresh_count: int = 0
    P: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.kind = ProjectorKind(self.kind)
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise ConfigError(f"projector needs a 2-D parameter shape, got {self.shape}")
        if self.rank < 1 or self.rank > self.d_small:
            raise ConfigError(
                f"rank {self.rank} not in [1, {self.d_small}] for parameter {self.param_id} "
                f"of shape {self.shape}"
            )
        if self.kind is ProjectorKind.IDENTITY and self.rank != self.d_small:
            raise ConfigError(f"identity projector needs rank == {self.d_small}, got {self.rank}")
        if self.period < 1:
            raise ConfigError(f"refresh period must be positive, got {self.period}")

    @property
    def orientation(self) -> str:
        return orientation_of(self.shape)

    @property
    def d_small(self) -> int:
        return min(self.shape)

    @property
    def d_large(self) -> int:
        return max(self.shape)

    def current_seed(self) -> int:
        return derive_seed(self.base_seed, self.refresh_count, self.param_id)


def _top_singular(G: np.ndarray, rank: int, param_id: int) -> np.ndarray:
    try:
        U, _, _ = np.linalg.svd(G, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for parameter {param_id}: {exc}") from exc
    P = U[:, :rank].T.copy()
    # sign convention: largest-magnitude entry of each row is positive
    idx = np.argmax(np.abs(P), axis=1)
    signs = np.sign(P[np.arange(rank), idx])
    signs[signs == 0] = 1.0
    return P * signs[:, None]


def refresh_if_due(state: ProjectorState, step: int, current_grad: np.ndarray) -> ProjectorState:
    """Regenerate ``state.P`` when ``step % period == 0`` (step 0 included).

    The state is updated in place and returned.
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if step % state.period != 0:
        return state
    kind = state.kind
    if kind is ProjectorKind.RANDOM_GAUSSIAN:
        state.P = gaussian_matrix(state.current_seed(), state.rank, state.d_small, 1.0 / state.rank)
    elif kind is ProjectorKind.TOP_SINGULAR:
        _check_shape(state, current_grad)
        state.P = _top_singular(oriented(current_grad, state.orientation), state.rank, state.param_id)
    else:
        if state.P is None:
            state.P = np.eye(state.d_small)
    state.refresh_count += 1
    return state


def _check_shape(state: ProjectorState, G: np.ndarray) -> None:
    if tuple(G.shape) != state.shape:
        raise DimensionError(f"gradient shape {G.shape} does not match parameter shape {state.shape}")


def project(state: ProjectorState, G: np.ndarray) -> np.ndarray:
    """Compress the small axis: returns ``R`` of shape ``(rank, d_large)``."""
    _check_shape(state, G)
    if state.P is None:
        raise ConfigError(f"projector for parameter {state.param_id} used before its first refresh")
    if state.P.shape[0] > state.d_small:
        raise ConfigError(f"rank {state.P.shape[0]} exceeds d_small {state.d_small}")
    return state.P @ oriented(G, state.orientation)


def back_project(state: ProjectorState, N: np.ndarray) -> np.ndarray:
    """Map a ``(rank, d_large)`` update back to the parameter's shape."""
    full = state.P.T @ N
    return full if state.orientation == ROWS_SMALL else full.T


def apply_scaling(G: np.ndarray, s, orientation: str) -> np.ndarray:
    """Scale every channel of ``G`` by its factor; a scalar scales uniformly."""
    if np.ndim(s) == 0:
        return float(s) * G
    s = np.asarray(s, dtype=np.float64)
    axis_len = G.shape[1] if orientation == ROWS_SMALL else G.shape[0]
    if s.ndim != 1 or s.shape[0] != axis_len:
        raise DimensionError(f"{s.shape[0] if s.ndim else s.shape} scales for {axis_len} channels")
    if orientation == ROWS_SMALL:
        return G * s[None, :]
    return G * s[:, None]
