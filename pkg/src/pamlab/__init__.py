"""Simulation laboratory for the lattice heat equation with heavy-tailed
random potential: sampling, Dirichlet spectra, solution mass transport,
the localization construction, its limiting point-process laws, and the
variational constant governing the leading eigenvalue correction."""

from .errors import (
    PamlabError,
    InvalidParameterError,
    ConfigError,
    FormatError,
    WindowError,
    ResourceError,
    ConvergenceError,
    AccuracyError,
    StiffnessError,
    DegenerateInputError,
    DivergentIntegralError,
    InsufficientDataError,
    InsufficientTruncationError,
    TruncationCapError,
    StatisticalPowerError,
    InternalConsistencyError,
)
from ._rng import make_generator
from .potential import (
    Window,
    PotentialField,
    ScaleSet,
    box,
    sample_field,
    constant_field,
    field_from_values,
    save_field,
    load_field,
    tail_sf,
    tail_cdf,
    quantile,
    hat_a,
    scales,
    ln2,
    ln3,
    ln2_plus,
    ln3_plus,
)
from .spectral import (
    LatticeDomain,
    EigenPair,
    apply_hamiltonian,
    dense_matrix,
    dense_oracle,
    principal_eig,
    top_k_eigs,
)
from .pam import (
    SolutionField,
    StepControl,
    solve_spectral,
    solve_ode,
    fk_estimate,
    path_weight,
    expm_propagator,
    expm_oracle,
    mass_out_exact,
    heat_kernel_1d,
    concentration_profile,
    tv_profile_distance,
)
from .localization import (
    Capital,
    CapitalList,
    Island,
    OrderEntry,
    OrderStats,
    ZTrajectory,
    default_kappa,
    capital_radius,
    find_capitals,
    psi,
    order_stats,
    z_jump_times,
    z_trajectory,
    island_radius,
    islands,
    curly_L,
    eigfun_decay_fit,
)
from .variational import (
    ChiSolution,
    solve_chi,
    chi_monotonicity_scan,
    chi_plateau,
    profile_distance,
)
from .limits import (
    PointSample,
    MaximizerTrajectory,
    TruncationControl,
    ThetaSamples,
    LimitMaxima,
    RescaledPoints,
    QuadControl,
    QuantileControl,
    sample_ppp,
    psi_theta,
    argmax_order,
    trajectory,
    count_jump_candidates,
    theta_sampler,
    sample_limit_maxima,
    mu_jump_region,
    aging_tail_oracle,
    aging_tail_exact_1d,
    theta_tail_asymptote,
    limit_cdf_gumbel,
    limit_cdf_laplace,
    quantile_level,
    matching_box_radius,
    rescale_capitals,
)
from .experiments import (
    ExperimentConfig,
    EXPERIMENT_IDS,
    validate_config,
    parse_config_text,
    serialize_config,
    run,
)

__version__ = "1.0.0"
