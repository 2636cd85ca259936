"""Recall bias trim that removes the echo's frequency shift and chirp.

A detuning that is uniform along the medium only multiplies the spinwave,
and so the emitted field, by ``exp(-i int delta dt)``. Ramping the bias
linearly after the flip therefore cancels a quadratic phase on the echo
while leaving its envelope and the efficiency untouched.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .types import ExperimentSchedule, FieldTrace, GEMError, SimulationResult


def echo_phase_polynomial(output: FieldTrace, window: tuple[float, float],
                          floor: float = 1e-3) -> tuple[float, float, float, float]:
    """Intensity-weighted quadratic fit of the echo phase.

    Returns ``(c2, c1, c0, t_ref)`` with ``phase ~ c2 tau^2 + c1 tau + c0``
    and ``tau = t - t_ref``; ``t_ref`` is the intensity centroid. Samples
    below ``floor`` times the peak intensity are ignored.
    """
    t = output.times
    mask = (t >= window[0]) & (t <= window[1])
    a = output.amplitudes[mask]
    t = t[mask]
    p = np.abs(a) ** 2
    if p.size < 3 or p.max() == 0:
        raise GEMError("echo window holds no signal to fit")
    keep = p >= floor * p.max()
    t, a, p = t[keep], a[keep], p[keep]
    t_ref = float(np.sum(p * t) / np.sum(p))
    phase = np.unwrap(np.angle(a))
    c2, c1, c0 = np.polyfit(t - t_ref, phase, 2, w=np.sqrt(p))
    return float(c2), float(c1), float(c0), t_ref


def recall_compensation(result: SimulationResult) -> tuple[float, float, float]:
    """Bias trim ``(offset, slope, t_ref)`` that flattens the echo phase of ``result``."""
    c2, c1, _, t_ref = echo_phase_polynomial(result.output_trace, result.recall_window)
    return c1, 2.0 * c2, t_ref


def with_recall_bias(schedule: ExperimentSchedule, bias: tuple[float, float, float]) -> ExperimentSchedule:
    """Copy of ``schedule`` with ``bias`` added to any trim it already has."""
    g = schedule.gradient
    if g.recall_bias is not None:
        o0, s0, r0 = g.recall_bias
        o1, s1, r1 = bias
        # re-express the old ramp about the new reference time
        bias = (o1 + o0 + s0 * (r1 - r0), s0 + s1, r1)
    return replace(schedule, gradient=replace(g, recall_bias=tuple(map(float, bias))))


def compensated_solve(params, schedule: ExperimentSchedule, input: FieldTrace, grid=None, *,
                      passes: int = 2, lossless: bool = False
                      ) -> tuple[SimulationResult, ExperimentSchedule]:
    """Solve, fit the recall trim and re-solve ``passes`` times.

    Returns the final result and the trimmed schedule.
    """
    from .solver import solve_gem

    result = solve_gem(params, schedule, input, grid, lossless=lossless)
    for _ in range(passes):
        schedule = with_recall_bias(schedule, recall_compensation(result))
        result = solve_gem(params, schedule, input, grid, lossless=lossless)
    return result, schedule
