"""Ready-made storage runs at the experiment's parameters.

Each builder returns ``(params, schedule, input_trace)`` for :func:`solve_gem`.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .. import constants as C
from .pulses import gaussian_trace, make_pulse_train, time_grid
from .schedule import build_storage_schedule, eta_for_width
from .types import ControlField, EnsembleParams, GaussianPulseSpec

# the recall flip follows the (last) input pulse centre by this many FWHM
FLIP_DELAY_FWHM = 1.0
TAIL_FWHM = 3.0

MULTIMODE_PULSES = 20
MULTIMODE_FWHM = 3.0e-6
MULTIMODE_SPACING = 7.0e-6
MULTIMODE_WIDTH_HZ = 400e3
MULTIMODE_NZ = 1024


def single_pulse_run(params: Optional[EnsembleParams] = None, *,
                     rabi: float = C.HIGH_EFFICIENCY_RABI_FREQUENCY,
                     fwhm: float = C.DEFAULT_PULSE_FWHM,
                     write_width_hz: float = C.DEFAULT_WRITE_WIDTH_HZ,
                     read_width_hz: float = C.DEFAULT_READ_WIDTH_HZ,
                     t_hold: float = 0.0, hold_fields_off: bool = False,
                     flip_delay_fwhm: float = FLIP_DELAY_FWHM, eta2: float = 0.0,
                     amplitude: complex = 1.0, dt: Optional[float] = None):
    """Store one Gaussian pulse and recall it after the gradient flip.

    The write phase ends ``flip_delay_fwhm`` pulse widths after the pulse
    centre; the read phase lasts long enough for the (compressed) echo and
    three FWHM of tail.
    """
    params = params or EnsembleParams()
    spec = GaussianPulseSpec(center=0.0, fwhm=fwhm, amplitude=amplitude)
    center = 4.0 * spec.sigma_amplitude
    spec = replace(spec, center=center)
    t_write = center + flip_delay_fwhm * fwhm
    # echo appears ~ (t_write - center) * w/r after the flip
    t_read = (t_write - center) * write_width_hz / read_width_hz + TAIL_FWHM * fwhm
    L = params.length_L
    control = ControlField(rabi_frequency_Omega_c=rabi)
    schedule = build_storage_schedule(t_write, t_hold, t_read,
                                      eta_for_width(write_width_hz, L),
                                      -eta_for_width(read_width_hz, L),
                                      control, hold_fields_off, eta2=eta2)
    if dt is None:
        dt = 1.0 / (40.0 * max(write_width_hz, read_width_hz))
    trace = gaussian_trace(spec, time_grid(schedule.t_end, dt))
    return params, schedule, trace


def multimode_run(params: Optional[EnsembleParams] = None, *,
                  n: int = MULTIMODE_PULSES, fwhm: float = MULTIMODE_FWHM,
                  spacing: float = MULTIMODE_SPACING, width_hz: float = MULTIMODE_WIDTH_HZ,
                  rabi: float = C.SPECTROSCOPY_RABI_FREQUENCY, dt: Optional[float] = None,
                  amplitude=1.0):
    """A train of ``n`` Gaussian pulses stored with control and gradient on.

    ``amplitude`` may be one value or one per pulse.
    """
    params = params or EnsembleParams()
    if dt is None:
        dt = 1.0 / (40.0 * width_hz)
    proto = GaussianPulseSpec(center=0.0, fwhm=fwhm)
    first = 4.0 * proto.sigma_amplitude
    last = first + (n - 1) * spacing
    t_write = last + FLIP_DELAY_FWHM * fwhm
    t_read = t_write - first + TAIL_FWHM * fwhm
    L = params.length_L
    eta = eta_for_width(width_hz, L)
    schedule = build_storage_schedule(t_write, 0.0, t_read, eta, -eta,
                                      ControlField(rabi_frequency_Omega_c=rabi))
    trace = make_pulse_train(n, spacing, fwhm, amplitude, dt=dt, first_center=first, t_end=schedule.t_end)
    return params, schedule, trace
