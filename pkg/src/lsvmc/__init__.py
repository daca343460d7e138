"""Monte Carlo engine for local stochastic volatility particle methods.

Simulates the half-step interacting particle system with its exact
Gaussian-mixture conditional expectation, the kernel-regression (Nadaraya-
Watson) Euler alternative, and measures weak errors against closed-form or
high-accuracy references.
"""

from .engine import (
    ExperimentConfig,
    SweepResult,
    fit_rate,
    load_config,
    mc_stats,
    payoff_eval,
    reference_fake_bm,
    reference_tanh,
    run_sweep,
    write_csv,
)
from .estimators import (
    KernelSpec,
    SingularEstimatorError,
    WeightedSample,
    cond_exp_oracle,
    lipschitz_probe,
    nw_estimate,
    psi_inverse_sqrt,
    psi_value,
)
from .models import (
    LocalVolSpec,
    SchemeParams,
    StochVolSpec,
    c_min_from_bounds,
    lambda_of,
    sigma_eval,
    two_state_vol,
    xi_path,
)
from .schemes import (
    BoundViolationError,
    ParticleState,
    PathStats,
    RunSpec,
    half_step_advance,
    nw_euler_advance,
    quad_var_variance,
    run_system,
    simulate_target,
)
from .stochastic import (
    IncrementBlock,
    NoiseLabel,
    RandomStreamSpec,
    TimeGrid,
    correlate,
    draw_increments,
    gaussian_pdf,
    rl_fbm_path,
)

__version__ = "0.1.0"
