"""Simulation and resource allocation for RIS-assisted cellular networks."""

from .channel import (
    ChannelSet,
    RisConfig,
    Scenario,
    SystemConstants,
    composite_channel,
    generate_scenario,
    noise_power,
    path_loss,
    reflected_path_loss,
    sample_fading,
)
from .estimation import (
    EstimateSet,
    PilotBook,
    PriorCovariance,
    StackedSystem,
    TrainingObservation,
    build_prior_covariance,
    build_stacked_system,
    estimate_ls,
    estimate_ls_orthogonal,
    estimate_mmse,
    estimate_mmse_orthogonal,
    generate_pilot_book,
    generate_training_configs,
    nmse,
    simulate_training,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    compute_cdf,
    read_config,
    read_results,
    run_experiment,
    write_config,
    write_results,
)
from .multi_user import (
    AllocationResult,
    CouplingCoefficients,
    PowerAllocation,
    a_coefficients,
    allocate,
    associate_users,
    cm_beamformer,
    cm_beamformers,
    coupling_f,
    evaluate_sinr,
    geometric_mean_sinr,
    grad_g,
    objective_g,
    optimize_phases,
    optimize_powers,
    sum_rate,
    uniform_powers,
)
from .single_user import (
    SingleUserSolution,
    align_phases,
    optimize_am,
    optimize_lb,
    optimize_ub,
    snr,
)

__all__ = [name for name in dir() if not name.startswith("_")]
