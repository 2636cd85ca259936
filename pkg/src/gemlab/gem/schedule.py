"""Write/hold/read timing for a single GEM storage cycle."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .. import constants as C
from .types import ControlField, ExperimentSchedule, GEMError, GradientSchedule


def eta_for_width(width_hz: float, length_L: float) -> float:
    """Linear gradient (rad/s/m) that broadens the Raman line to ``width_hz``."""
    return C.TWO_PI * width_hz / length_L


def build_storage_schedule(
    t_write: float,
    t_hold: float,
    t_read: float,
    eta1_write: float,
    eta1_read: float,
    control: ControlField,
    hold_fields_off: bool = False,
    *,
    delta0: float = 0.0,
    eta2: float = 0.0,
) -> ExperimentSchedule:
    """Build the gradient and control waveforms for one storage cycle.

    The gradient is ``eta1_write`` until ``t_write + t_hold`` and ``eta1_read``
    afterwards. With ``hold_fields_off`` the gradient and control are both
    zero during the hold, the long-lifetime configuration.
    """
    if not (t_write > 0 and t_read > 0 and t_hold >= 0):
        raise GEMError("write and read durations must be positive and hold non-negative")
    if eta1_write == 0 or eta1_read == 0 or np.sign(eta1_write) == np.sign(eta1_read):
        raise GEMError("write and read gradients must be non-zero with opposite signs; "
                       "no rephasing is possible otherwise")

    flip = t_write + t_hold
    end = flip + t_read
    if hold_fields_off and t_hold > 0:
        segments = ((0.0, t_write, eta1_write), (t_write, flip, 0.0), (flip, end, eta1_read))
        windows = ((0.0, t_write), (flip, end))
    else:
        segments = ((0.0, flip, eta1_write), (flip, end, eta1_read))
        windows = ((0.0, end),)

    gradient = GradientSchedule(segments=segments, delta0=delta0, eta2=eta2, flip_time=flip)
    return ExperimentSchedule(gradient=gradient, control=replace(control, on_windows=windows), t_end=end)
