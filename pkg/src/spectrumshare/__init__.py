"""Mediator-coordinated spectrum sharing: Lotka-Volterra share allocation and
foraging-style channel selection."""

from .allocation import (
    AllocationTrace,
    DisturbanceEvent,
    DisturbanceKind,
    allocated_channel_count,
    clamp_channel_budgets,
    run_allocation,
)
from .foraging import (
    ChannelAssignment,
    Strategy,
    StrategyAssignment,
    ess_deviation_check,
    greedy_pick,
    random_pick,
    run_selection,
    system_fitness,
)
from .mediator import UNOCCUPIED, Mediator, MediatorError, replay
from .metrics import (
    ExperimentStats,
    collision_occurred,
    collision_probability,
    measured_convergence_rounds,
    selection_stats,
)
from .model import (
    CompetitionParams,
    EquilibriumReport,
    NetworkAllocState,
    closed_form_equilibrium,
    fairness_index,
    growth_delta,
    interior_fixed_point,
    predicted_convergence_time,
    stability_eigenvalues,
    step_network,
)
from .scenario import Scenario, load_scenario, run_pipeline

__version__ = "0.1.0"
