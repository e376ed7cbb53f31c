"""Joint forwarding, caching, and computation placement for dispersed
computing networks: fluid-flow cost model, offline Frank-Wolfe and online
gradient-projection optimizers, comparison baselines, and a packet-level
simulator."""

from .errors import (
    CapacityExceeded,
    DimensionMismatch,
    Disconnected,
    InvalidParams,
    LoopDetected,
    NetplaceError,
    ParseError,
    Unreachable,
)
from .model import (
    Catalogs,
    CostModel,
    Scenario,
    SizeModel,
    Strategy,
    Task,
    TaskSet,
    Topology,
    TrafficState,
    check_loop_free,
    solve_traffic,
    total_cost,
    validate_strategy,
)
from .marginals import (
    MarginalState,
    bounded_gap_rhs,
    broadcast_marginals,
    check_kkt,
    check_modified_condition,
    strategy_gradient,
)
from .routing import BlockedSets, build_static_blocked_sets, sep_route
from .gcfw import GainEvaluator, GcfwConfig, gain_parts, gcfw_run, grad_gain, lp_step
from .gp import (
    CacheDecision,
    GpConfig,
    gp_run_fluid,
    gp_run_measured,
    gp_slot_update,
    randomized_round,
    round_node,
)
from .scenarios import (
    ScenarioSpec,
    chain_scenario,
    expand,
    gen_topology,
    load_topology,
    preset,
    sample_workload,
)

__version__ = "0.1.0"
