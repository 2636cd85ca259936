"""Ideal fibre delay line used as the storage-time baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import constants as C
from .benchmark import TVPoint, linear_loss

ATTENUATION_DB_PER_KM = 0.15
GROUP_INDEX = 1.468


@dataclass(frozen=True)
class FiberReference:
    attenuation_db_per_km: float = ATTENUATION_DB_PER_KM
    group_index: float = GROUP_INDEX

    def __post_init__(self):
        if self.attenuation_db_per_km < 0 or self.group_index < 1:
            raise ValueError("need attenuation >= 0 and group index >= 1")

    def length_km(self, time) -> np.ndarray:
        return C.C_LIGHT / self.group_index * np.asarray(time, dtype=float) / 1e3

    def transmission(self, time):
        t = np.asarray(time, dtype=float)
        if np.any(t < 0):
            raise ValueError("time must be >= 0")
        return 10.0 ** (-self.attenuation_db_per_km * self.length_km(t) / 10.0)

    def time_at(self, eta: float) -> float:
        """Storage time after which the transmission has fallen to ``eta``."""
        if not 0 < eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.attenuation_db_per_km == 0:
            return np.inf if eta < 1 else 0.0
        km = -10.0 * np.log10(eta) / self.attenuation_db_per_km
        return float(km * 1e3 * self.group_index / C.C_LIGHT)


def fiber_reference(time: float, attenuation_db_per_km: float = ATTENUATION_DB_PER_KM,
                    group_index: float = GROUP_INDEX) -> tuple[float, TVPoint]:
    """Transmission after ``time`` in the fibre and its point on the linear-loss curve."""
    eta = float(FiberReference(attenuation_db_per_km, group_index).transmission(time))
    T, V = linear_loss(eta)
    return eta, TVPoint(float(T), float(V))
