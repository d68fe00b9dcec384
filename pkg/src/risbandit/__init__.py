"""Discrete-time simulator and bandit library for RIS/SF allocation in IoT uplinks."""

from .geometry import Position3D, RisGeometry, compute_element_positions, compute_ris_orientation, oriented_ris
from .scenario import (
    AlgoParams,
    RadioConstants,
    Scenario,
    SfTable,
    builtin_scenario_path,
    load_scenario,
    scenario_physics_hash,
    validate_scenario,
)
from .channel import (
    PhaseShiftMatrix,
    SuccessProbTable,
    data_rate,
    estimate_success_probs,
    los_component,
    nlos_pathloss_uma,
    received_sinr,
    reflection_factor,
    sample_direct_channel,
    sample_ris_channel,
)
from .bandit import E2BoostPlayerState, EpochSchedule, adapt_epsilon, w1_distance
from .policies import (
    AssignmentMatrix,
    PolicySpec,
    hungarian_assign,
    occupancy_aware_value,
    parse_policy,
)
from .engine import (
    AggregateResult,
    TrialConfig,
    TrialResult,
    aggregate_trials,
    prepare_table,
    run_monte_carlo,
    run_trial,
)
from .backend import active_backend
from .reporting import (
    read_aggregate_csv,
    write_aggregate_csv,
    write_summary_json,
    write_trace_csv,
)

__version__ = "0.1.0"
