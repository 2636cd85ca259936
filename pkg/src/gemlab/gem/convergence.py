"""Grid refinement study for the GEM solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .solver import Grid, _resolve_grid, solve_gem
from .types import EnsembleParams, ExperimentSchedule, FieldTrace


@dataclass
class ConvergenceReport:
    rows: list[tuple[int, float, float, float]]  # (nz, dz, dt, efficiency)
    observed_order: float
    flags: list[str] = field(default_factory=list)

    @property
    def final_change(self) -> float:
        effs = [r[3] for r in self.rows]
        return abs(effs[-1] - effs[-2])


def refinement_grids(base: Grid, count: int = 3, refine_z: bool = True,
                      refine_t: bool = True) -> list[Grid]:
    """Halve ``dz`` and/or ``dt`` ``count - 1`` times starting from ``base``."""
    out = []
    for k in range(count):
        nz = (base.nz - 1) * 2**k + 1 if refine_z else base.nz
        dt = base.dt / 2**k if refine_t else base.dt
        out.append(Grid(nz, dt))
    return out


def convergence_study(params: EnsembleParams, schedule: ExperimentSchedule, input: FieldTrace,
                      refinement_levels: Sequence[Grid] | int = 3,
                      tolerance: float = 1e-5) -> ConvergenceReport:
    """Efficiency at successively finer grids with the observed order of accuracy.

    Flags ``non-monotone`` when successive changes do not shrink and
    ``order<1`` when the observed order falls below one. Once every change
    is below ``tolerance`` the order is not measurable (reported as NaN)
    and no flags are raised.
    """
    if isinstance(refinement_levels, int):
        nz, dt = _resolve_grid(params, schedule, input, None)
        levels = refinement_grids(Grid(nz, dt), refinement_levels)
    else:
        levels = list(refinement_levels)
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least three levels")
    rows = []
    for g in levels:
        r = solve_gem(params, schedule, input, g)
        rows.append((g.nz, params.length_L / (g.nz - 1), g.dt, r.efficiency))
    effs = np.array([r[3] for r in rows])
    diffs = np.abs(np.diff(effs))
    flags = []
    if diffs.max() < tolerance:
        return ConvergenceReport(rows, float("nan"), flags)
    if np.any(diffs[1:] > diffs[:-1] * (1 + 1e-9)):
        flags.append("non-monotone")
    if diffs[-1] > 0 and diffs[-2] > 0:
        order = float(np.log2(diffs[-2] / diffs[-1]))
    else:
        order = float("inf")
    if order < 1:
        flags.append("order<1")
    return ConvergenceReport(rows, order, flags)
