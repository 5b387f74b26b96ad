"""REFOL: resource-efficient federated online learning simulator.

Thin wrapper over the C++ core. The heavy lifting (GRU forecasters, the
KLD drift gate, graph-convolution aggregation, the round loop) lives in
the compiled `_core` extension.
"""

from ._core import (  # noqa: F401
    CostModel,
    ModelParams,
    RunError,
    TrafficDataset,
    ValidationError,
    aggregation_weights,
    backward_flops,
    comm_bytes,
    default_config_text,
    deserialize,
    fedostc_comm_bytes,
    fedostc_extra_params,
    forward,
    forward_flops,
    init_params,
    kld,
    kld_flops,
    load_csv,
    make_window,
    mse_loss,
    ogd_update,
    parameter_count,
    participant_indegrees,
    payload_bytes,
    run_experiment,
    run_to_directory,
    serialize,
    synthesize_drift,
    to_distribution,
)

__all__ = [
    "CostModel",
    "ModelParams",
    "RunError",
    "TrafficDataset",
    "ValidationError",
    "aggregation_weights",
    "backward_flops",
    "comm_bytes",
    "default_config_text",
    "deserialize",
    "fedostc_comm_bytes",
    "fedostc_extra_params",
    "forward",
    "forward_flops",
    "init_params",
    "kld",
    "kld_flops",
    "load_csv",
    "make_window",
    "mse_loss",
    "ogd_update",
    "parameter_count",
    "participant_indegrees",
    "payload_bytes",
    "run_experiment",
    "run_to_directory",
    "serialize",
    "synthesize_drift",
    "to_distribution",
]
