"""Memory-comparison records and the storage-time report.

Records CSV columns: ``label, platform, protocol, universal, max_efficiency,
curve_ref``. ``curve_ref`` is either a side-car CSV path (``t_s, efficiency``,
relative to the records file) or a model reference such as
``model:thermal:E0=0.87;tau_l=1.24e-3;tau_d=0.071``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from ..decay import thermal_decay_model
from .fiber import FiberReference

PLATFORMS = ("cold-atom", "warm-vapour", "solid-state", "single-atom", "fiber", "other")
PROTOCOLS = ("GEM", "EIT", "AFC", "DLCZ", "Raman", "cavity", "fiber-loop", "other")
RECORD_COLUMNS = ("label", "platform", "protocol", "universal", "max_efficiency", "curve_ref")
MODEL_PARAMS = {
    "thermal": {"E0", "tau_l", "tau_d"},
    "exponential": {"E0", "tau"},
    "fiber": {"attenuation_db_per_km", "group_index"},
}
MODEL_HORIZON = 10.0  # s
GRID_POINTS = 4001


class RecordError(ValueError):
    def __init__(self, diagnostics: Sequence[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class DecayModelRef:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MODEL_PARAMS:
            raise ValueError(f"unknown decay model '{self.name}'")
        extra = set(self.params) - MODEL_PARAMS[self.name]
        if extra:
            raise ValueError(f"model '{self.name}' has no parameter(s) {sorted(extra)}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.name == "thermal":
            return thermal_decay_model(t, p["E0"], p["tau_l"], p.get("tau_d", np.inf))
        if self.name == "exponential":
            return p["E0"] * np.exp(-t / p["tau"])
        fiber = FiberReference(**p)
        return fiber.transmission(t)

    def horizon(self) -> float:
        return MODEL_HORIZON

    def to_ref(self) -> str:
        body = ";".join(f"{k}={self.params[k]!r}" for k in sorted(self.params))
        return f"model:{self.name}:{body}" if body else f"model:{self.name}"

    @classmethod
    def parse(cls, ref: str) -> "DecayModelRef":
        parts = ref.split(":", 2)
        if parts[0] != "model" or len(parts) < 2:
            raise ValueError(f"bad model reference '{ref}'")
        params = {}
        if len(parts) == 3 and parts[2]:
            for item in parts[2].split(";"):
                key, _, value = item.partition("=")
                params[key.strip()] = float(value)
        return cls(parts[1], params)


@dataclass(frozen=True)
class MemoryRecord:
    label: str
    platform: str
    protocol: str
    max_efficiency: float
    universal: bool = True
    decay_curve: Optional[np.ndarray] = None  # (n, 2): t_s, efficiency
    model: Optional[DecayModelRef] = None

    def __post_init__(self):
        if self.platform not in PLATFORMS:
            raise ValueError(f"platform '{self.platform}' not in {PLATFORMS}")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol '{self.protocol}' not in {PROTOCOLS}")
        if not 0 <= self.max_efficiency <= 1:
            raise ValueError("max_efficiency must lie in [0, 1]")
        if (self.decay_curve is None) == (self.model is None):
            raise ValueError("give exactly one of decay_curve or model")
        if self.decay_curve is not None:
            c = np.asarray(self.decay_curve, dtype=float)
            if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 2:
                raise ValueError("decay curve needs at least two (t, efficiency) rows")
            if np.any(np.diff(c[:, 0]) <= 0) or c[0, 0] < 0:
                raise ValueError("decay curve times must be non-negative and increasing")
            if np.any((c[:, 1] < 0) | (c[:, 1] > 1)):
                raise ValueError("decay curve efficiencies must lie in [0, 1]")
            object.__setattr__(self, "decay_curve", c)

    def horizon(self) -> float:
        return float(self.decay_curve[-1, 0]) if self.decay_curve is not None else self.model.horizon()

    def efficiency(self, t):
        t = np.asarray(t, dtype=float)
        if self.model is not None:
            return self.model(t)
        c = self.decay_curve
        return np.interp(t, c[:, 0], c[:, 1], left=np.nan, right=np.nan)


FIBER_RECORD = MemoryRecord("ideal fibre", "fiber", "fiber-loop", 1.0, True,
                            model=DecayModelRef("fiber", {}))
THIS_WORK_RECORD = MemoryRecord("this work (GEM, cold atoms)", "cold-atom", "GEM", 0.87, True,
                                model=DecayModelRef("thermal", {"E0": 0.87, "tau_l": 1.24e-3,
                                                                "tau_d": 71e-3}))
BUILTIN_RECORDS = (THIS_WORK_RECORD,)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _read_curve(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["t_s"]), float(r["efficiency"])] for r in rows])


def load_memory_records(source) -> list[MemoryRecord]:
    """Parse a records CSV (path or text stream); reject the file if any row is bad."""
    if hasattr(source, "read"):
        text, base = source.read(), Path(".")
    else:
        path = Path(source)
        text, base = path.read_text(), path.parent
    if not text.strip():
        return []
    reader = csv.DictReader(io.StringIO(text))
    missing = set(RECORD_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise RecordError([f"header: missing column(s) {sorted(missing)}"])
    records, problems = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            ref = (row["curve_ref"] or "").strip()
            curve = model = None
            if ref.startswith("model:"):
                model = DecayModelRef.parse(ref)
            elif ref:
                curve = _read_curve(base / ref)
            else:
                raise ValueError("curve_ref is empty")
            records.append(MemoryRecord(row["label"].strip(), row["platform"].strip(),
                                        row["protocol"].strip(), float(row["max_efficiency"]),
                                        _parse_bool(row["universal"]), curve, model))
        except (ValueError, KeyError, OSError, TypeError) as exc:
            problems.append(f"line {lineno}: {exc}")
    if problems:
        raise RecordError(problems)
    return records


def _grid(horizon: float) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(horizon * 1e-6, horizon, GRID_POINTS - 1)])


def _first_crossing(f, t: np.ndarray, level: float = 0.0) -> Optional[float]:
    """First time ``f`` falls from at/above ``level`` to below it."""
    y = f(t) - level
    ok = np.isfinite(y)
    t, y = t[ok], y[ok]
    if y.size == 0 or y[0] < 0:
        return None
    idx = np.nonzero(y < 0)[0]
    if idx.size == 0:
        return None
    i = idx[0]
    if y[i - 1] == 0:
        return float(t[i - 1])
    return float(brentq(lambda s: float(f(s)) - level, t[i - 1], t[i], xtol=1e-15, rtol=1e-12))


def _sign_change(d: np.ndarray, t: np.ndarray) -> Optional[float]:
    s = np.sign(d)
    nz = np.nonzero(s)[0]
    if nz.size < 2:
        return None
    flips = np.nonzero(s[nz][1:] != s[nz][:-1])[0]
    return None if flips.size == 0 else float(t[nz[flips[0] + 1]])


def compare(records: Sequence[MemoryRecord], fiber: FiberReference = FiberReference()) -> dict:
    """Storage-time figures of merit for each record against the fibre baseline."""
    fiber_t50 = fiber.time_at(0.5)
    fiber_te = fiber.time_at(np.exp(-1))
    rows = []
    for rec in records:
        t = _grid(rec.horizon())
        eff = rec.efficiency(t)
        fib = fiber.transmission(t)
        diff = eff - fib
        valid = np.isfinite(diff)
        e0 = float(rec.efficiency(0.0)) if np.isfinite(rec.efficiency(0.0)) else None
        t_e = _first_crossing(rec.efficiency, t, (e0 or 0.0) / np.e) if e0 else None
        t50 = _first_crossing(rec.efficiency, t, 0.5)
        late = valid & (t > fiber_t50)
        rows.append({
            "label": rec.label,
            "platform": rec.platform,
            "protocol": rec.protocol,
            "universal": rec.universal,
            "max_efficiency": rec.max_efficiency,
            "one_over_e_time_s": t_e,
            "t50_s": t50,
            "t50_ratio_to_fiber": None if t50 is None else t50 / fiber_t50,
            "crosses_fiber_at_s": _sign_change(diff[valid], t[valid]),
            "max_advantage": float(np.max(diff[valid])) if valid.any() else None,
            "above_50_beyond_fiber_t50": bool(np.any(eff[late] > 0.5)),
        })
    return {
        "fiber": {"attenuation_db_per_km": fiber.attenuation_db_per_km,
                  "group_index": fiber.group_index, "t50_s": fiber_t50,
                  "one_over_e_time_s": fiber_te},
        "records": rows,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def plot_data_rows(records: Sequence[MemoryRecord], fiber: FiberReference = FiberReference(),
                   points: int = 200) -> list[tuple[str, float, float]]:
    """Long-format ``(series, t_s, efficiency)`` rows on a shared log time grid."""
    horizon = max([r.horizon() for r in records] + [fiber.time_at(0.01)])
    t = np.geomspace(horizon * 1e-6, horizon, points)
    rows = [("fiber", float(x), float(y)) for x, y in zip(t, fiber.transmission(t))]
    for rec in records:
        for x, y in zip(t, rec.efficiency(t)):
            if np.isfinite(y):
                rows.append((rec.label, float(x), float(y)))
    return rows


def write_plot_data(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "t_s", "efficiency"])
        for label, t, e in rows:
            w.writerow([label, repr(t), repr(e)])
