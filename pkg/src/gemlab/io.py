"""CSV/JSON readers and writers for traces, spectra and decay data.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import constants as C
from .gem.types import FieldTrace
from .spectroscopy import RamanSpectrum


def _f(x) -> str:
    return repr(float(x))


def _numpy_scalar(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False,
                                     default=_numpy_scalar) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_trace(path, trace: FieldTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "re", "im", "abs2"])
        for t, a in zip(trace.times, trace.amplitudes):
            w.writerow([_f(t), _f(a.real), _f(a.imag), _f(abs(a) ** 2)])


def read_trace(path, carrier_detuning: float = 0.0) -> FieldTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FieldTrace(data[:, 0], data[:, 1] + 1j * data[:, 2], carrier_detuning)


def write_spectrum(path, spectrum: RamanSpectrum) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["detuning_hz", "transmission"] + (["sigma"] if spectrum.sigma is not None else [])
        w.writerow(header)
        for i, d in enumerate(spectrum.two_photon_detunings):
            row = [_f(d / C.TWO_PI), _f(spectrum.transmission[i])]
            if spectrum.sigma is not None:
                row.append(_f(spectrum.sigma[i]))
            w.writerow(row)


def read_spectrum(path) -> RamanSpectrum:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty spectrum")
    d = np.array([float(r["detuning_hz"]) for r in rows]) * C.TWO_PI
    t = np.array([float(r["transmission"]) for r in rows])
    sigma = np.array([float(r["sigma"]) for r in rows]) if "sigma" in rows[0] else None
    return RamanSpectrum(d, t, None, sigma)


def write_decay_points(path, points) -> None:
    pts = np.asarray(points, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "efficiency"] + (["sigma"] if pts.shape[1] == 3 else []))
        for row in pts:
            w.writerow([_f(x) for x in row])


def read_decay_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = ["t_s", "efficiency"] + (["sigma"] if "sigma" in (reader.fieldnames or ()) else [])
        rows = [[float(r[c]) for c in cols] for r in reader]
    if not rows:
        raise ValueError(f"{path}: no decay data")
    return np.array(rows)


def optional_float(x) -> Optional[float]:
    return None if x is None or not np.isfinite(x) else float(x)
