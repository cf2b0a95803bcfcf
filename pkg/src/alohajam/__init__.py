"""Covert jamming capacity of slotted ALOHA: bounds, a truncated-chain oracle and a simulator."""

from .bounds import (
    BoundResult,
    lb_n_strategy1,
    lb_n_strategy2,
    lb_n_strategy3,
    lb_strategy1,
    lb_strategy2,
    lb_strategy3,
    rate_sideinfo,
    ub_n_user,
    ub_two_user,
)
from .queue_model import (
    NO_JAMMING,
    OccupancyDist,
    SideInfo,
    SystemParams,
    TruncationSpec,
    Uniform,
    Vector,
    baseline_no_jamming,
    dtmc_stationary_truncated,
    jam_budget,
    pi_n0_lower_bound,
    steady_state_sideinfo,
    steady_state_uniform,
)
from .sim import SimConfig, channel_stats, coupled_run, simulate, stability_probe
from .zchannel import (
    attempt_from_crossover,
    binary_entropy,
    crossover_k,
    optimal_weight,
    z_capacity_constrained,
    z_rate,
)

__version__ = "0.1.0"
