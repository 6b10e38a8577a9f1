"""Partial-information linear-quadratic control with general initial laws.

The library covers the full chain from problem definition to validated
optimal control: offline Riccati paths, the sufficient-statistics filter
(exact for linear dynamics with *any* square-integrable initial law),
finite-difference and particle solvers of the unnormalized filtering SPDE
used as oracles, the certainty-equivalence controller, value-function
fields, and a seeded simulation harness with a CLI.
"""

from .errors import (
    CFLViolation,
    ConfigError,
    DegenerateWeights,
    DomainTooNarrow,
    IdentityViolation,
    LqPartialError,
    NegativeDensity,
    NonpositiveHorizon,
    NotPositiveDefinite,
    NotPSD,
    RiccatiBlowup,
    ShapeMismatch,
    SingularTilt,
    Underflow,
    ZeroMass,
)
from .model import (
    GaussianDensity,
    InitialDensity,
    LinearModel,
    MixtureDensity,
    TabulatedDensity,
    TimeGrid,
    density_moments,
    validate_model,
)
from .offline import GaussianOffline, OfflineSolution, solve_gaussian_offline, solve_offline
from .tilted import TiltedMoments, gamma_mat, tilted_log_normalizer, tilted_moments
from .filtering import (
    FilterState,
    characteristic_function,
    filter_gamma,
    init_filter,
    conditional_moments,
    step_filter,
    theta_weight,
)
from .oracles import (
    GridDensity,
    ParticleCloud,
    effective_sample_size,
    grid_moments,
    init_grid,
    init_particles,
    max_stable_dt,
    particle_moments,
    particle_standard_errors,
    resample_particles,
    step_particles,
    step_zakai_grid,
)
from .control import (
    K_field,
    MuField,
    ZField,
    default_rho_halfwidth,
    hjb_residual,
    lq_feedback,
    rho_path_coverage,
    solve_mu_1d,
    solve_Z_1d,
    value_function,
    value_q_derivative,
    value_t_derivative,
    value_t_derivative_gaussian,
)
from .harness import (
    GridOracleSettings,
    Policy,
    Scenario,
    TrajectoryRecord,
    estimate_cost_physical,
    estimate_cost_reference,
    physical_cost_samples,
    policy_control,
    reference_cost_samples,
    replication_rng,
    simulate_closed_loop,
)
from .config import load_scenario, scenario_from_dict

__version__ = "0.1.0"
