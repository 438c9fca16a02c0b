"""Finite-time least-squares identification of linear dynamical systems
across stable, explosive, and mixed spectral regimes."""

from .bounds import (
    BoundReport,
    MonteCarloOpts,
    PhiEstimate,
    PsiSearchOpts,
    azuma_bound,
    bernstein_bound,
    compute_bound_report,
    eta_const,
    explosive_sample_size,
    general_constants,
    general_sample_size,
    lyap_solve,
    phi_quantile,
    psi_const,
    stable_constants,
    stable_sample_size,
)
from .dynamics import (
    ControlSystem,
    SensitivityCurve,
    SystemSpec,
    Trajectory,
    closed_loop,
    design_lqr,
    make_system_from_jordan,
    philox,
    sensitivity_scan,
    simulate,
    trajectory_to_csv,
)
from .errors import (
    IllConditionedJordanError,
    InputError,
    NumericalError,
    OverflowHorizonError,
    RegimeError,
    SetupError,
    SingularGramError,
    SysIdError,
    UnitRootError,
    UnreachableError,
)
from .estimator import EstimateReport, error_norm, gram, normalized_gram_explosive, ols
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    fit_decay_rate,
    find_fragile_instance,
    run_montecarlo,
    sensitivity_report,
)
from .noise import (
    NoiseModel,
    TailParams,
    TailReport,
    gaussian_noise,
    noise_sup_bound,
    sample_noise,
    uniform_bounded_noise,
    verify_tail,
    weibull_symmetric_noise,
)
from .spectral import (
    JordanForm,
    SpectralSplit,
    companion_embed,
    eig_extremes,
    jordan_infer,
    mincoor,
    reachability_gramian,
    regularity_check,
    stable_explosive_split,
)

__version__ = "0.1.0"
