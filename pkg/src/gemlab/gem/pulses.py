"""Pulse construction and recall metrics (efficiency, mode overlap, delay)."""

from __future__ import annotations

import warnings
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from .types import FieldTrace, GaussianPulseSpec, GEMError


class PulseOverlapWarning(UserWarning):
    pass


def time_grid(t_end: float, dt: float, t_start: float = 0.0) -> np.ndarray:
    n = int(np.floor((t_end - t_start) / dt + 1e-9)) + 1
    return t_start + dt * np.arange(n)


def gaussian_trace(spec: GaussianPulseSpec, times: np.ndarray, carrier_detuning: float = 0.0) -> FieldTrace:
    return FieldTrace(times, spec.envelope(times), carrier_detuning)


def make_pulse_train(
    n: int,
    spacing: float,
    fwhm: float,
    amplitude: Union[complex, Sequence[complex]] = 1.0,
    *,
    dt: Optional[float] = None,
    first_center: Optional[float] = None,
    t_end: Optional[float] = None,
    carrier_detuning: float = 0.0,
) -> FieldTrace:
    """Sum of ``n`` Gaussian pulses spaced ``spacing`` apart on a uniform grid.

    Spacing below one FWHM is allowed but raises :class:`PulseOverlapWarning`.
    """
    if n < 1:
        raise GEMError("pulse train needs n >= 1")
    if not fwhm > 0 or not spacing > 0:
        raise GEMError("fwhm and spacing must be positive")
    if spacing < fwhm and n > 1:
        warnings.warn(f"pulse spacing {spacing:g} s is below the FWHM {fwhm:g} s",
                      PulseOverlapWarning, stacklevel=2)
    amps = np.broadcast_to(np.asarray(amplitude, dtype=complex), (n,))
    proto = GaussianPulseSpec(center=0.0, fwhm=fwhm)
    lead = 4.0 * proto.sigma_amplitude
    if first_center is None:
        first_center = lead
    if dt is None:
        dt = fwhm / 100.0
    centers = first_center + spacing * np.arange(n)
    if t_end is None:
        t_end = centers[-1] + lead
    times = time_grid(t_end, dt)
    env = np.zeros(times.shape, dtype=complex)
    for c, a in zip(centers, amps):
        env += GaussianPulseSpec(center=float(c), fwhm=fwhm, amplitude=complex(a)).envelope(times)
    return FieldTrace(times, env, carrier_detuning)


def compute_efficiency(input: FieldTrace, output: FieldTrace,
                       output_window: Optional[tuple[float, float]] = None) -> float:
    """Output energy inside ``output_window`` over total input energy."""
    if not np.isclose(input.dt, output.dt, rtol=1e-6):
        raise GEMError("input and output traces must share a time step")
    e_in = input.energy()
    if e_in <= 0:
        raise GEMError("input trace carries no energy; efficiency is undefined")
    if output_window is not None:
        t1, t2 = output_window
        if t1 < output.times[0] - output.dt / 2 or t2 > output.times[-1] + output.dt / 2 or t2 < t1:
            raise GEMError(f"window {output_window} lies outside the output trace")
    return output.energy(output_window) / e_in


def recall_window(output: FieldTrace, start: float, threshold: float = 1e-4) -> tuple[float, float]:
    """From ``start`` until ``|E|^2`` falls below ``threshold`` times its peak.

    The end is the first sample after the recall peak where the intensity
    drops below the threshold; the trace end if it never does.
    """
    p = output.intensity
    idx = np.nonzero(output.times >= start)[0]
    if idx.size == 0:
        return (start, start)
    seg = p[idx]
    if seg.max() == 0:
        return (float(output.times[idx[0]]), float(output.times[idx[-1]]))
    k = int(np.argmax(seg))
    below = np.nonzero(seg[k:] < threshold * seg[k])[0]
    end = idx[k + below[0]] if below.size else idx[-1]
    return (float(output.times[idx[0]]), float(output.times[end]))


def mode_overlap(output: FieldTrace, reference: GaussianPulseSpec, *,
                 search_center: bool = True) -> tuple[float, float]:
    """Amplitude overlap with a Gaussian reference, best over centre time and phase.

    Returns ``(overlap, phase)`` where ``phase`` is the carrier phase of the
    output relative to the reference at the optimum. With ``search_center``
    off the reference stays at ``reference.center``.
    """
    e = output.amplitudes
    t = output.times
    norm_out = np.sum(np.abs(e) ** 2)
    if norm_out == 0:
        raise GEMError("output trace has zero energy")

    def proj(center: float) -> complex:
        ref = GaussianPulseSpec(center=center, fwhm=reference.fwhm).envelope(t)
        nr = np.sum(np.abs(ref) ** 2)
        if nr == 0:
            return 0.0
        return np.sum(np.conj(ref) * e) / np.sqrt(nr * norm_out)

    if not search_center:
        p = proj(reference.center)
        return float(min(abs(p), 1.0)), float(np.angle(p))

    # coarse scan on the trace grid, then a bounded refinement
    step = max(1, int(reference.fwhm / output.dt / 20))
    coarse = t[::step]
    vals = np.array([abs(proj(c)) for c in coarse])
    k = int(np.argmax(vals))
    lo = coarse[max(k - 1, 0)]
    hi = coarse[min(k + 1, coarse.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda c: -abs(proj(c)), bounds=(lo, hi), method="bounded",
                              options={"xatol": output.dt * 1e-3})
        best = float(res.x)
    else:
        best = float(coarse[k])
    p = proj(best)
    return float(min(abs(p), 1.0)), float(np.angle(p))


def fractional_delay(storage_time: float, fwhm: float) -> float:
    if not fwhm > 0:
        raise GEMError("fwhm must be positive")
    return storage_time / fwhm


def recall_order(output: FieldTrace, first_pulse_output: FieldTrace,
                 prominence: float = 0.05) -> Optional[str]:
    """``"FIFO"`` or ``"LIFO"`` for a recalled train, else ``None``.

    ``first_pulse_output`` is the echo of a run where only the first pulse of
    the train was sent in. Its peak is matched against the first and last
    resolved peaks of the full train's echo.
    """
    inten = output.intensity
    peaks, _ = find_peaks(inten, prominence=prominence * inten.max()) if inten.max() > 0 else ([], {})
    if len(peaks) < 2:
        return None
    t_mark = first_pulse_output.times[int(np.argmax(first_pulse_output.intensity))]
    t_first, t_last = output.times[peaks[0]], output.times[peaks[-1]]
    return "FIFO" if abs(t_mark - t_first) < abs(t_mark - t_last) else "LIFO"
