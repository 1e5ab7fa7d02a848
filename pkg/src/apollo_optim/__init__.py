"""APOLLO / APOLLO-Mini: memory-efficient optimizers that estimate channel-wise
(or tensor-wise) learning-rate scales from Adam moments kept in a randomly
projected low-rank space."""

from ._accel import backend
from .errors import ConfigError, DimensionError, DivergenceError, NumericalError
from .optimizers import (
    AdamWState,
    ApolloState,
    GaLoreState,
    Optimizer,
    OptimizerConfig,
    Variant,
    adamw_step,
    apollo_step,
    galore_rp_step,
    init_apollo_state,
    init_galore_state,
    norm_growth_limiter,
    sgd_step,
    state_element_count,
    structured_adamw_reference,
)
from .projection import ProjectorKind, ProjectorState, apply_scaling, project, refresh_if_due

__version__ = "0.1.0"
