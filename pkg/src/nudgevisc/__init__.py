"""Recovery of the 2D Navier-Stokes viscosity from spectral observations.

A reference flow and a feedback-nudged observer are integrated side by side
on the periodic box; the observer error at the observed modes drives a
recursive correction of the observer's viscosity. The package provides the
spectral operators, the coupled integrator, the update loop, runtime
verifiers for the analytical functionals and bounds, and a CLI for twin
experiments.
"""

from .config import ExperimentConfig, RunConfig, load_config
from .diagnostics import (
    DiagnosticsRecord,
    DiagnosticsRecorder,
    ForceStats,
    bound_checks,
    build_record,
    compute_J,
    dissipation_D,
    energy_functionals,
    force_stats,
    power_balance,
    update_error_decomposition,
    verify_mu_conditions,
)
from .dynamics import (
    ForcingSpec,
    PairState,
    PairStepper,
    SystemParams,
    integrate_window,
    make_forcing,
    spin_up,
    step_nudged,
    step_reference,
)
from .estimator import (
    EstimationTrace,
    EstimatorConfig,
    check_nondegeneracy,
    compute_update,
    run_estimation,
    select_update_time,
)
from .experiment import RunSummary, run_experiment, run_invariant_suite
from .spectral import (
    GridSpec,
    SpectralField,
    bilinear,
    from_coeffs,
    from_physical,
    grid_create,
    highpass,
    inner_hs,
    leray_project,
    lowpass,
    norm_hs,
    random_divergence_free,
    stokes_apply,
    to_physical,
    zero_field,
)

__version__ = "0.1.0"
