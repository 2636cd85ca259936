"""Maxwell-Bloch integration of gradient echo storage and recall.

The excited state is adiabatically eliminated, leaving the ground-state
coherence ``S(z, t)`` (scaled so that ``|S|^2 dz`` is an excitation number
density in the same units as ``|E|^2 dt``) and the probe envelope ``E(z, t)``
in the retarded frame::

    dS/dt = -(gamma0 + Gamma_sc(t)/2 + i delta(z, t)) S + i sqrt(beta(t)) E
    dE/dz = i sqrt(beta(t)) S

``beta = OD * Gamma_sc / (4 L)`` is fixed by requiring that a stationary
probe sees the Raman line of :mod:`gemlab.spectroscopy`, whose line-centre
intensity depth is ``OD * Gamma_sc / (2 gamma_R)``. The frame co-rotates with
the light-shifted two-photon resonance and the input carrier, so
``delta = delta0 + eta1(t) z + eta2 z^2 - carrier_detuning``.

With four-wave mixing the control also scatters off the probe transition at
detuning ``Delta - omega_hf`` and emits an idler; its conjugate envelope
``F = E_idler^*`` obeys ``dF/dz = -i sqrt(beta_i) S`` and feeds back into ``S``
through ``+ i sqrt(beta_i) F``.

Space is handled by trapezoidal cumulative quadrature in ``z`` (second
order); time by classical RK4 with sub-steps at every waveform breakpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .. import spectroscopy
from .pulses import compute_efficiency, recall_window, time_grid
from .types import (
    EnsembleParams,
    ExperimentSchedule,
    FieldTrace,
    GEMError,
    SimulationDiverged,
    SimulationResult,
    SpinwaveState,
    warn_if_not_adiabatic,
)

DEFAULT_NZ = 512
DT_PER_WIDTH = 40.0
MIN_SAMPLES_PER_SPAN = 20.0
MAX_PHASE_PER_CELL = np.pi / 4
RECALL_THRESHOLD = 1e-4


@dataclass(frozen=True)
class Grid:
    nz: int = DEFAULT_NZ
    dt: Optional[float] = None


def default_dt(schedule: ExperimentSchedule, length_L: float, input: Optional[FieldTrace] = None) -> float:
    """``1 / (40 * broadened width)``; pulse-limited when no gradient is applied."""
    width_hz = schedule.detuning_span(length_L) / (2 * np.pi)
    if width_hz > 0:
        return 1.0 / (DT_PER_WIDTH * width_hz)
    if input is not None:
        return input.dt
    raise GEMError("cannot choose a time step without a gradient or an input trace")


def raman_coupling(params: EnsembleParams, rabi: float) -> float:
    """Raman absorption coefficient ``beta`` (1/(s m)) for control Rabi ``rabi``."""
    if rabi == 0:
        return 0.0
    gamma_r = spectroscopy.raman_linewidth(rabi, params.raman_detuning_Delta,
                                           params.excited_linewidth_Gamma,
                                           params.ground_decoherence_gamma0)
    depth = spectroscopy.raman_depth(params.optical_depth, rabi, params.raman_detuning_Delta,
                                     params.excited_linewidth_Gamma,
                                     params.ground_decoherence_gamma0)
    return depth * gamma_r / (2.0 * params.length_L)


def idler_coupling_ratio(params: EnsembleParams) -> float:
    """Amplitude ratio of idler to probe Raman coupling, ``|Delta| / |Delta - omega_hf|``."""
    d = params.raman_detuning_Delta
    return abs(d) / abs(d - params.hyperfine_splitting)


def _input_sampler(trace: FieldTrace):
    if trace.times.size < 2:
        raise GEMError("input trace needs at least two samples")
    spline = CubicSpline(trace.times, trace.amplitudes)
    t0, t1 = trace.times[0], trace.times[-1]

    def sample(t: float) -> complex:
        if t < t0 or t > t1:
            return 0.0j
        return complex(spline(t))

    return sample


def _check_grid(params: EnsembleParams, schedule: ExperimentSchedule, input: FieldTrace,
                nz: int, dt: float) -> None:
    if nz < 16:
        raise GEMError(f"nz = {nz} is too coarse (need at least 16 points)")
    if not dt > 0:
        raise GEMError("dt must be positive")
    L = params.length_L
    z = np.array([-L / 2, 0.0, L / 2])
    g = schedule.gradient
    worst = 0.0
    biases = [g.bias_at(t) for t in g.breakpoints() + [schedule.t_end]]
    for _, _, e in g.segments:
        for b in biases:
            d = b + e * z + g.eta2 * z**2 - input.carrier_detuning
            worst = max(worst, float(d.max() - d.min()), float(np.abs(d).max()))
    span_hz = worst / (2 * np.pi)
    if span_hz * dt > 1.0 / MIN_SAMPLES_PER_SPAN:
        raise GEMError(
            f"time step {dt:.3e} s does not resolve the detuning span {span_hz:.4g} Hz; "
            f"need dt <= {1.0 / (MIN_SAMPLES_PER_SPAN * span_hz):.3e} s")
    # spinwave wavenumber bound: |int eta1 dt| + 2 |eta2| (L/2) t
    ts = np.array(g.breakpoints() + [schedule.t_end])
    kmax = max(abs(g.eta1_integral(t)) for t in ts) + abs(g.eta2) * L * schedule.t_end
    dz = L / (nz - 1)
    if kmax * dz > MAX_PHASE_PER_CELL:
        raise GEMError(
            f"nz = {nz} under-resolves the spinwave (k up to {kmax:.4g} rad/m); "
            f"need nz >= {int(np.ceil(kmax * L / MAX_PHASE_PER_CELL)) + 1}")


def _integrate(params: EnsembleParams, schedule: ExperimentSchedule, input: FieldTrace,
               nz: int, dt: float, idler_ratio: float, snapshot_times: Sequence[float],
               lossless: bool = False):
    L = params.length_L
    z = np.linspace(-L / 2, L / 2, nz)
    dz = z[1] - z[0]
    g = schedule.gradient
    ctrl = schedule.control
    quad_part = g.eta2 * z**2
    carrier = input.carrier_detuning
    e_in = _input_sampler(input)

    coupling_cache: dict[float, tuple[float, float]] = {}

    def coefficients(t: float) -> tuple[float, float]:
        rabi = ctrl.rabi_at(t)
        if rabi not in coupling_cache:
            gsc = spectroscopy.scattering_rate(params.excited_linewidth_Gamma, rabi,
                                               params.raman_detuning_Delta)
            decay = 0.0 if lossless else params.ground_decoherence_gamma0 + gsc / 2
            coupling_cache[rabi] = (np.sqrt(raman_coupling(params, rabi)), decay)
        return coupling_cache[rabi]

    def cumulative(s: np.ndarray) -> np.ndarray:
        out = np.empty_like(s)
        out[0] = 0.0
        np.cumsum((s[1:] + s[:-1]) * (dz / 2), out=out[1:])
        return out

    def fields(s: np.ndarray, t: float):
        sb, _ = coefficients(t)
        integral = cumulative(s)
        e = e_in(t) + 1j * sb * integral
        f = -1j * idler_ratio * sb * integral if idler_ratio else None
        return e, f

    def rhs(s: np.ndarray, t: float) -> np.ndarray:
        sb, decay = coefficients(t)
        e, f = fields(s, t)
        uniform = g.bias_at(t) - carrier
        ds = -(decay + 1j * (g.eta1_at(t) * z + quad_part + uniform)) * s + 1j * sb * e
        if f is not None:
            ds += 1j * idler_ratio * sb * f
        return ds

    def rk4(s: np.ndarray, t: float, h: float) -> np.ndarray:
        # stages are evaluated just inside the step so piecewise waveforms
        # take their value for this interval
        eps = h * 1e-9
        k1 = rhs(s, t + eps)
        k2 = rhs(s + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(s + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(s + h * k3, t + h - eps)
        return s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    times = time_grid(schedule.t_end, dt)
    breaks = np.array([b for b in g.breakpoints() if 0 < b < schedule.t_end])
    if ctrl.on_windows:
        breaks = np.union1d(breaks, [x for w in ctrl.on_windows for x in w if 0 < x < schedule.t_end])

    n = times.size
    out_e = np.empty(n, dtype=complex)
    out_f = np.empty(n, dtype=complex) if idler_ratio else None
    in_e = np.empty(n, dtype=complex)
    snaps: list[SpinwaveState] = []
    snap_idx = {int(np.clip(np.rint(ts / dt), 0, n - 1)) for ts in snapshot_times}

    s = np.zeros(nz, dtype=complex)
    for k, t in enumerate(times):
        e, f = fields(s, t)
        out_e[k] = e[-1]
        in_e[k] = e_in(t)
        if out_f is not None:
            out_f[k] = f[-1]
        if k in snap_idx:
            snaps.append(SpinwaveState(z, s, float(t)))
        if k == n - 1:
            break
        t_next = times[k + 1]
        inner = breaks[(breaks > t) & (breaks < t_next)]
        t_cur = t
        for b in list(inner) + [t_next]:
            s = rk4(s, t_cur, b - t_cur)
            t_cur = b
        if not np.all(np.isfinite(s)):
            raise SimulationDiverged(k + 1, float(t_next))

    return times, in_e, out_e, out_f, tuple(snaps)


def _resolve_grid(params, schedule, input, grid) -> tuple[int, float]:
    if grid is None:
        grid = Grid()
    elif isinstance(grid, tuple):
        grid = Grid(*grid)
    dt = grid.dt if grid.dt is not None else default_dt(schedule, params.length_L, input)
    return int(grid.nz), float(dt)


def _build_result(params, schedule, input, times, in_e, out_e, out_f, snaps, nz, dt, notes):
    carrier = input.carrier_detuning
    flip = schedule.flip_time
    before = times < flip
    input_trace = FieldTrace(times, in_e, carrier)
    transmitted = FieldTrace(times, np.where(before, out_e, 0.0), carrier)
    output = FieldTrace(times, np.where(before, 0.0, out_e), carrier)
    e_in = input_trace.energy()
    if e_in > 0:
        window = recall_window(output, flip, RECALL_THRESHOLD)
        eff = compute_efficiency(input_trace, output, window)
        trans = transmitted.energy() / e_in
    else:
        window = (flip, flip)
        eff = 0.0
        trans = 0.0
    idler = None
    idler_fraction = 0.0
    if out_f is not None:
        idler = FieldTrace(times, np.conj(out_f), carrier)
        idler_fraction = idler.energy() / e_in if e_in > 0 else 0.0
    return dict(input_trace=input_trace, transmitted_trace=transmitted, output_trace=output,
                idler_trace=idler, spinwave_snapshots=snaps, efficiency=float(eff),
                idler_fraction=float(idler_fraction), transmitted_fraction=float(trans),
                recall_window=window, nz=nz, dt=dt, warnings=tuple(notes))


def solve_gem(params: EnsembleParams, schedule: ExperimentSchedule, input: FieldTrace,
              grid=None, *, snapshot_times: Sequence[float] = (),
              lossless: bool = False) -> SimulationResult:
    """Store and recall ``input`` (the envelope at the entrance face).

    ``grid`` is a :class:`Grid`, an ``(nz, dt)`` tuple or ``None`` for the
    default (512 points, ``dt = 1 / (40 * broadened width)``). Spinwave
    snapshots are taken at the flip time plus any ``snapshot_times``.
    ``lossless`` drops the ground-state and scattering damping but keeps
    the Raman coupling.
    """
    notes = [m for m in [warn_if_not_adiabatic(params)] if m]
    nz, dt = _resolve_grid(params, schedule, input, grid)
    _check_grid(params, schedule, input, nz, dt)
    snaps_at = sorted({schedule.flip_time, *snapshot_times})
    raw = _integrate(params, schedule, input, nz, dt, 0.0, snaps_at, lossless)
    return SimulationResult(**_build_result(params, schedule, input, *raw, nz, dt, notes))


def solve_gem_4wm(params: EnsembleParams, schedule: ExperimentSchedule, input: FieldTrace,
                  grid=None, *, snapshot_times: Sequence[float] = (),
                  idler_ratio: Optional[float] = None, lossless: bool = False) -> SimulationResult:
    """Like :func:`solve_gem` with the anti-Stokes idler channel switched on.

    ``probe_gain`` is the relative change of the recall efficiency with
    respect to the same run without four-wave mixing.
    """
    notes = [m for m in [warn_if_not_adiabatic(params)] if m]
    nz, dt = _resolve_grid(params, schedule, input, grid)
    _check_grid(params, schedule, input, nz, dt)
    ratio = idler_coupling_ratio(params) if idler_ratio is None else float(idler_ratio)
    snaps_at = sorted({schedule.flip_time, *snapshot_times})
    raw = _integrate(params, schedule, input, nz, dt, ratio, snaps_at, lossless)
    fields = _build_result(params, schedule, input, *raw, nz, dt, notes)
    plain = solve_gem(params, schedule, input, Grid(nz, dt), lossless=lossless)
    gain = fields["efficiency"] / plain.efficiency - 1.0 if plain.efficiency > 0 else 0.0
    return SimulationResult(probe_gain=float(gain), **fields)
