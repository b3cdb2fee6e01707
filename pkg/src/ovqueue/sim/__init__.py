from .backend import USING_NUMBA
from .config import FlowRecord, SimConfig, SimResult, batch_means_ci, replication_streams
from .engine import (
    endogenous_pgf_at_geometric_time,
    endogenous_scaled_marginals,
    mc_flow_counts,
    rbm_stationary_samples,
    rbm_transform_mc,
    simulate_endogenous,
    simulate_general_resampled,
    simulate_modulated,
    simulate_rbm,
)

__all__ = [
    "USING_NUMBA",
    "FlowRecord",
    "SimConfig",
    "SimResult",
    "batch_means_ci",
    "replication_streams",
    "endogenous_pgf_at_geometric_time",
    "endogenous_scaled_marginals",
    "mc_flow_counts",
    "rbm_stationary_samples",
    "rbm_transform_mc",
    "simulate_endogenous",
    "simulate_general_resampled",
    "simulate_modulated",
    "simulate_rbm",
]
