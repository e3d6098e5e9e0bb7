"""Random-access mesh networks with successive interference cancelation:
closed-form Rayleigh link success probabilities, an interferer-enumeration
throughput model, throughput-optimal flow-rate allocation with a
bounded-delay constraint, baseline allocators, and a slotted-ALOHA
simulator that cross-validates the analytic model.
"""

from .allocation import (
    AllocationResult,
    AnnealingConfig,
    OptimizationProblem,
    allocate_best_path,
    allocate_fmp,
    constraint_report,
    grid_search_oracle,
    solve_tofra,
)
from .calibration import CalibrationResult, calibrate_topology1, solve_pair_distances
from .channel import (
    ChannelParams,
    ReceptionPolicy,
    TransmitterState,
    success_prob_ian,
    success_prob_ian_multi,
    success_prob_mc,
    success_prob_sic,
    success_prob_solo,
)
from .experiments import ComparisonReport, ExperimentPlan, run_plan
from .network import (
    Node,
    Path,
    Scenario,
    ScenarioError,
    builtin_topology,
    end_to_end_success_prob,
    interferer_set,
    load_scenario,
    load_scenario_file,
)
from .simulator import ReplicationSummary, SimConfig, SimMetrics, replicate, run_sim, sic_receive
from .throughput import (
    FlowAllocation,
    LinkThroughputModel,
    ThroughputModel,
    aggregate_throughput,
    link_throughput,
    model_for,
    pair_prob,
    path_throughput,
)

__version__ = "0.1.0"
