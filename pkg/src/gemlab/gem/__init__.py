"""Gradient echo memory dynamics: schedules, solver and recall metrics."""

from .compensation import compensated_solve, echo_phase_polynomial, recall_compensation, with_recall_bias
from .convergence import ConvergenceReport, convergence_study, refinement_grids
from .pulses import (
    PulseOverlapWarning,
    compute_efficiency,
    fractional_delay,
    gaussian_trace,
    make_pulse_train,
    mode_overlap,
    recall_order,
    recall_window,
    time_grid,
)
from .presets import multimode_run, single_pulse_run
from .schedule import build_storage_schedule, eta_for_width
from .solver import Grid, default_dt, idler_coupling_ratio, raman_coupling, solve_gem, solve_gem_4wm
from .types import (
    ControlField,
    EnsembleParams,
    ExperimentSchedule,
    FieldTrace,
    GaussianPulseSpec,
    GEMError,
    GradientSchedule,
    SimulationDiverged,
    SimulationResult,
    SpinwaveState,
)
