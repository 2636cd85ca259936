"""Data types shared by the GEM solver and its analysis helpers.

Frequencies are angular (rad/s) unless a name ends in ``_hz``. Positions along
the medium are measured from its centre, so ``z`` runs over ``[-L/2, L/2]``.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import constants as C


class GEMError(ValueError):
    """Invalid GEM parameters, schedule or grid."""


class SimulationDiverged(RuntimeError):
    """Raised when the integrator produces non-finite values."""

    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite spinwave at step {step} (t = {time:.6e} s)")
        self.step = step
        self.time = time


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EnsembleParams:
    optical_depth: float = C.DEFAULT_OPTICAL_DEPTH
    length_L: float = C.DEFAULT_LENGTH
    excited_linewidth_Gamma: float = C.RB87_D1_LINEWIDTH
    ground_decoherence_gamma0: float = 0.0
    raman_detuning_Delta: float = C.DEFAULT_DETUNING
    temperature_T: float = C.DEFAULT_TEMPERATURE
    probe_waist_w0: float = C.DEFAULT_PROBE_WAIST
    atom_mass_m: float = C.RB87_MASS
    hyperfine_splitting: float = C.RB87_HYPERFINE_SPLITTING

    def __post_init__(self):
        for name in ("length_L", "excited_linewidth_Gamma", "raman_detuning_Delta",
                     "temperature_T", "probe_waist_w0", "atom_mass_m"):
            if not getattr(self, name) > 0:
                raise GEMError(f"{name} must be positive")
        # OD = 0 is the empty-medium limit and is allowed
        if self.optical_depth < 0:
            raise GEMError("optical_depth must be non-negative")
        if self.ground_decoherence_gamma0 < 0:
            raise GEMError("ground_decoherence_gamma0 must be >= 0")

    @property
    def adiabatic_ok(self) -> bool:
        return self.raman_detuning_Delta >= 10 * self.excited_linewidth_Gamma

    def replace(self, **changes) -> "EnsembleParams":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class ControlField:
    """Control beam: a constant Rabi frequency switched on inside ``on_windows``.

    ``on_windows=None`` means always on.
    """

    rabi_frequency_Omega_c: float = C.HIGH_EFFICIENCY_RABI_FREQUENCY
    angle_theta: float = 0.0
    on_windows: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.rabi_frequency_Omega_c < 0:
            raise GEMError("rabi_frequency_Omega_c must be >= 0")
        if not 0 <= self.angle_theta < np.pi / 2:
            raise GEMError("angle_theta must lie in [0, pi/2)")
        if self.on_windows is not None:
            wins = tuple((float(a), float(b)) for a, b in self.on_windows)
            object.__setattr__(self, "on_windows", wins)
            _check_windows(wins, "control window")

    def rabi_at(self, t: float) -> float:
        if self.on_windows is None:
            return self.rabi_frequency_Omega_c
        for a, b in self.on_windows:
            if a <= t < b:
                return self.rabi_frequency_Omega_c
        return 0.0


def _check_windows(windows: Sequence[tuple[float, float]], what: str) -> None:
    prev_end = -np.inf
    for a, b in windows:
        if not b > a:
            raise GEMError(f"{what} ({a}, {b}) has non-positive duration")
        if a < prev_end:
            raise GEMError(f"{what}s overlap or are unsorted near t = {a}")
        prev_end = b


@dataclass(frozen=True)
class GradientSchedule:
    """Zeeman detuning ``delta0 + eta1(t) z + eta2 z**2``.

    ``eta1`` is piecewise constant: ``segments`` holds ``(t_start, t_end, eta1)``
    triples covering the run. ``eta2`` keeps its sign when ``eta1`` is flipped.
    ``recall_bias = (offset, slope, t_ref)`` adds a uniform detuning
    ``offset + slope (t - t_ref)`` after the flip, the bias trim that removes
    frequency shift and chirp from the echo.
    """

    segments: tuple[tuple[float, float, float], ...]
    delta0: float = 0.0
    eta2: float = 0.0
    flip_time: float = 0.0
    recall_bias: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(e)) for a, b, e in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise GEMError("gradient schedule needs at least one segment")
        _check_windows([(a, b) for a, b, _ in segs], "gradient segment")
        if not segs[0][0] <= self.flip_time <= segs[-1][1]:
            raise GEMError("flip_time lies outside the simulation window")

    @property
    def off_intervals(self) -> list[tuple[float, float]]:
        return [(a, b) for a, b, e in self.segments if e == 0.0]

    def eta1_at(self, t: float) -> float:
        for a, b, e in self.segments:
            if a <= t < b:
                return e
        return self.segments[-1][2] if t >= self.segments[-1][1] else self.segments[0][2]

    def bias_at(self, t: float) -> float:
        """Uniform part of the detuning at ``t`` (``delta0`` plus any recall trim)."""
        if self.recall_bias is None or t < self.flip_time:
            return self.delta0
        offset, slope, t_ref = self.recall_bias
        return self.delta0 + offset + slope * (t - t_ref)

    def breakpoints(self) -> list[float]:
        return sorted({a for a, _, _ in self.segments} | {b for _, b, _ in self.segments})

    def eta1_integral(self, t: float) -> float:
        """Return the integral of eta1 from the start of the run to ``t``."""
        total = 0.0
        for a, b, e in self.segments:
            if t <= a:
                break
            total += e * (min(t, b) - a)
        return total


@dataclass(frozen=True)
class ExperimentSchedule:
    gradient: GradientSchedule
    control: ControlField
    t_end: float

    @property
    def flip_time(self) -> float:
        return self.gradient.flip_time

    def detuning_span(self, length_L: float) -> float:
        """Largest spread of the Zeeman detuning across the medium, rad/s."""
        z = np.array([-length_L / 2, 0.0, length_L / 2])
        span = 0.0
        for _, _, e in self.gradient.segments:
            d = e * z + self.gradient.eta2 * z**2
            span = max(span, float(d.max() - d.min()))
        return span


@dataclass(frozen=True)
class FieldTrace:
    """Complex probe envelope sampled on a uniform time grid.

    The physical field is ``amplitudes * exp(-1j * carrier_detuning * times)``
    relative to the frame of the simulation.
    """

    times: np.ndarray
    amplitudes: np.ndarray
    carrier_detuning: float = 0.0

    def __post_init__(self):
        t = _frozen(self.times, float)
        a = _frozen(self.amplitudes, complex)
        if t.ndim != 1 or t.shape != a.shape:
            raise GEMError("times and amplitudes must be 1-D arrays of equal length")
        if t.size >= 2:
            steps = np.diff(t)
            if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
                raise GEMError("FieldTrace requires a uniform time grid")
            if steps[0] <= 0:
                raise GEMError("times must be increasing")
        if not np.all(np.isfinite(a)):
            raise GEMError("FieldTrace amplitudes must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "amplitudes", a)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def energy(self, window: Optional[tuple[float, float]] = None) -> float:
        p = self.intensity
        if window is not None:
            mask = (self.times >= window[0]) & (self.times <= window[1])
            p = p[mask]
        return float(np.sum(p) * self.dt)

    def scaled(self, c: complex) -> "FieldTrace":
        return FieldTrace(self.times, c * self.amplitudes, self.carrier_detuning)


@dataclass(frozen=True)
class GaussianPulseSpec:
    """Gaussian intensity profile with the given FWHM."""

    center: float
    fwhm: float
    amplitude: complex = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.fwhm > 0:
            raise GEMError("pulse fwhm must be positive")

    @property
    def sigma_amplitude(self) -> float:
        # |E|^2 has FWHM = fwhm, so E has sigma = fwhm / (2 sqrt(ln 2))
        return self.fwhm / (2.0 * np.sqrt(np.log(2.0)))

    def envelope(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = self.sigma_amplitude
        return self.amplitude * np.exp(1j * self.phase) * np.exp(-((t - self.center) ** 2) / (2 * s * s))

    def energy(self) -> float:
        return float(abs(self.amplitude) ** 2 * self.sigma_amplitude * np.sqrt(np.pi))


@dataclass(frozen=True)
class SpinwaveState:
    z_grid: np.ndarray
    coherence: np.ndarray
    timestamp: float

    def __post_init__(self):
        object.__setattr__(self, "z_grid", _frozen(self.z_grid, float))
        object.__setattr__(self, "coherence", _frozen(self.coherence, complex))

    def norm(self) -> float:
        dz = float(self.z_grid[1] - self.z_grid[0])
        return float(np.sqrt(np.sum(np.abs(self.coherence) ** 2) * dz))

    def envelope_width(self) -> float:
        """RMS width of |alpha(z)|^2 about its centroid."""
        w = np.abs(self.coherence) ** 2
        if w.sum() == 0:
            return 0.0
        zc = np.sum(w * self.z_grid) / w.sum()
        return float(np.sqrt(np.sum(w * (self.z_grid - zc) ** 2) / w.sum()))


@dataclass(frozen=True)
class SimulationResult:
    input_trace: FieldTrace
    transmitted_trace: FieldTrace
    output_trace: FieldTrace
    idler_trace: Optional[FieldTrace]
    spinwave_snapshots: tuple[SpinwaveState, ...]
    efficiency: float
    idler_fraction: float
    transmitted_fraction: float
    recall_window: tuple[float, float]
    nz: int
    dt: float
    probe_gain: Optional[float] = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def checksum(self) -> str:
        h = hashlib.sha256()
        for tr in (self.input_trace, self.transmitted_trace, self.output_trace, self.idler_trace):
            if tr is not None:
                h.update(np.ascontiguousarray(tr.amplitudes).tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "efficiency": float(self.efficiency),
            "idler_fraction": float(self.idler_fraction),
            "transmitted_fraction": float(self.transmitted_fraction),
            "probe_gain": None if self.probe_gain is None else float(self.probe_gain),
            "recall_start_s": float(self.recall_window[0]),
            "recall_end_s": float(self.recall_window[1]),
            "grid": f"nz={self.nz},dt={self.dt:.6e}",
            "checksum": self.checksum,
        }


def warn_if_not_adiabatic(params: EnsembleParams) -> Optional[str]:
    if params.adiabatic_ok:
        return None
    msg = (f"Raman detuning {params.raman_detuning_Delta / C.TWO_PI:.3g} Hz is below "
           f"10 excited linewidths; adiabatic elimination is questionable")
    warnings.warn(msg, stacklevel=3)
    return msg
