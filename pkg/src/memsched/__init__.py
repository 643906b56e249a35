"""Deterministic simulator of dynamic GPU-memory scheduling for CNN training.

The package models one training iteration of a layer-wise network and
predicts device-memory behaviour under a configurable set of scheduling
mechanisms: liveness-based freeing, host offload with prefetch, lazy
caching of offloaded copies, segment recomputation, and workspace-aware
convolution algorithm selection.
"""

from .costmodel import (
    CostConfig,
    CostError,
    LayerCost,
    baseline_peak_bytes,
    build_costs,
    grad_owner,
    mib,
    propagate_shapes,
)
from .errors import ConfigError, MemschedError, SchedulingError
from .liveness import (
    GradBuffer,
    TensorLife,
    grad_buffers,
    liveness_peak,
    liveness_table,
    resident_curve,
    working_set_bytes,
)
from .netgen import gen_resnet, make_uniform_chain, random_fanjoin
from .netgraph import (
    Layer,
    LayerKind,
    NetError,
    NetParseError,
    NetworkDef,
    Phase,
    Schedule,
    build_schedule,
    forward_order,
    load_network,
    parse_network,
)
from .offload import AllLockedError, LruCache, OffloadPlan, build_offload_plan
from .poolalloc import BLOCK_BYTES, BlockPool, PoolError, PoolExhausted
from .recompute import (
    POLICIES,
    RecomputePlan,
    Segment,
    demand_peak,
    min_pool_bytes,
    plan,
    step_demands,
)
from .convselect import ALGORITHMS, ConvAlgo, Selection, select_algorithm
from .simulator import (
    Features,
    SimConfig,
    SimReport,
    StepRow,
    SweepPoint,
    parse_features,
    run_simulation,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AllLockedError",
    "BLOCK_BYTES",
    "BlockPool",
    "ConfigError",
    "ConvAlgo",
    "CostConfig",
    "CostError",
    "Features",
    "GradBuffer",
    "Layer",
    "LayerCost",
    "LayerKind",
    "LruCache",
    "MemschedError",
    "NetError",
    "NetParseError",
    "NetworkDef",
    "OffloadPlan",
    "POLICIES",
    "Phase",
    "PoolError",
    "PoolExhausted",
    "RecomputePlan",
    "Schedule",
    "SchedulingError",
    "Segment",
    "Selection",
    "SimConfig",
    "SimReport",
    "StepRow",
    "SweepPoint",
    "TensorLife",
    "baseline_peak_bytes",
    "build_costs",
    "build_offload_plan",
    "build_schedule",
    "demand_peak",
    "forward_order",
    "gen_resnet",
    "grad_buffers",
    "grad_owner",
    "liveness_peak",
    "liveness_table",
    "load_network",
    "make_uniform_chain",
    "mib",
    "min_pool_bytes",
    "parse_features",
    "parse_network",
    "plan",
    "propagate_shapes",
    "random_fanjoin",
    "resident_curve",
    "run_simulation",
    "run_sweep",
    "select_algorithm",
    "step_demands",
    "working_set_bytes",
    "__version__",
]
