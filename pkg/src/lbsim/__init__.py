"""Cycle-driven simulator for a stateful L4 load balancer.

Two variants of the same single-core balancer are modeled: a pure
software build that polls one receive queue, and a hybrid build that
offloads established connections to an exact-match dispatch table on the
NIC so their packets arrive pre-classified on per-backend queues.
"""

from .core import (
    ConnectionTable,
    Dip,
    FiveTuple,
    Packet,
    Protocol,
    Vip,
    VipTable,
    conn_install,
    conn_lookup,
    hash_five_tuple,
    rewrite_packet,
    select_dip,
)
from .costs import CostModel, CycleClock
from .errors import (
    ConfigError,
    ConsistencyViolation,
    InvalidOp,
    InvalidQueue,
    InvalidSpec,
    LbSimError,
    ParseError,
    SearchRangeError,
    TraceOrderError,
    UndefinedWindow,
    UnknownVip,
)
from .metrics import UtilConfig, UtilCounters, compute_util, compute_util_plus
from .nic import BufferBudget, HardwareMatchTable, InstallResult, NicQueues, nic_latency_us
from .pipeline import LoopState, Mode, PipelineConfig, RunStats, run_receiving_loop
from .traffic import WorkloadSpec, generate, load_trace, save_trace
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    MaxRateResult,
    find_max_lossless_rate,
    load_config_file,
    run_experiment,
    sweep,
    write_reports_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BufferBudget",
    "ConfigError",
    "ConnectionTable",
    "ConsistencyViolation",
    "CostModel",
    "CycleClock",
    "Dip",
    "ExperimentConfig",
    "ExperimentReport",
    "FiveTuple",
    "HardwareMatchTable",
    "InstallResult",
    "InvalidOp",
    "InvalidQueue",
    "InvalidSpec",
    "LbSimError",
    "LoopState",
    "MaxRateResult",
    "Mode",
    "NicQueues",
    "Packet",
    "ParseError",
    "PipelineConfig",
    "Protocol",
    "RunStats",
    "SearchRangeError",
    "TraceOrderError",
    "UndefinedWindow",
    "UnknownVip",
    "UtilConfig",
    "UtilCounters",
    "Vip",
    "VipTable",
    "WorkloadSpec",
    "compute_util",
    "compute_util_plus",
    "conn_install",
    "conn_lookup",
    "find_max_lossless_rate",
    "generate",
    "hash_five_tuple",
    "load_config_file",
    "load_trace",
    "nic_latency_us",
    "rewrite_packet",
    "run_experiment",
    "run_receiving_loop",
    "save_trace",
    "select_dip",
    "sweep",
    "write_reports_csv",
]
