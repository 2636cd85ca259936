"""Heterodyne tomography of weak coherent pulses.

Units: the vacuum quadrature variance is 1/2. A heterodyne measurement adds
one more vacuum unit, so Q-function samples of vacuum have variance 1 on each
axis and a coherent state ``alpha`` is centred at ``(sqrt2 Re alpha, sqrt2 Im alpha)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

BEAT_FREQUENCY = 3.0e6
SAMPLE_RATE = 40.0e6
# 9 beat periods at 40 MHz / 3 MHz is exactly 120 samples, so the lock-in
# sums cancel the 2f term without leakage
PERIODS_PER_PULSE = 9
DEMOD_TOLERANCE = 0.10
MIN_SURFACE_SAMPLES = 100


class TomographyError(ValueError):
    pass


class UnphysicalDeconvolution(TomographyError):
    def __init__(self, message: str, eigenvalue: float):
        super().__init__(f"unphysical deconvolution: {message} (eigenvalue {eigenvalue:.4g})")
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class HeterodyneRecord:
    times: np.ndarray
    voltage: np.ndarray
    beat_frequency: float = BEAT_FREQUENCY
    reference_phase: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.voltage, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise TomographyError("times and voltage must be equal-length 1-D arrays")
        rate = 1.0 / (t[1] - t[0])
        if rate < 10 * self.beat_frequency * (1 - 1e-9):
            raise TomographyError(f"sample rate {rate:.3g} Hz is below 10x the beat frequency")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "voltage", v)


@dataclass(frozen=True)
class QuadratureEnsemble:
    samples: np.ndarray  # shape (m, 2): columns x, p

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 2:
            raise TomographyError("samples must have shape (m, 2)")
        if s.shape[0] < 2:
            raise TomographyError("an ensemble needs at least two pulses")
        if not np.all(np.isfinite(s)):
            raise TomographyError("samples must be finite")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def m(self) -> int:
        return int(self.samples.shape[0])

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def p(self) -> np.ndarray:
        return self.samples[:, 1]


@dataclass(frozen=True)
class GaussianStateEstimate:
    mean: np.ndarray
    covariance: np.ndarray
    kind: str  # "Q" or "W"
    m: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("Q", "W"):
            raise TomographyError("kind must be 'Q' or 'W'")
        mu = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.covariance, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise TomographyError("covariance must be symmetric")
        cov = (cov + cov.T) / 2
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean.tolist(),
                "covariance": self.covariance.tolist(), "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianStateEstimate":
        return cls(np.array(d["mean"]), np.array(d["covariance"]), d["kind"], d.get("m"))


def coherent_state(alpha: complex) -> GaussianStateEstimate:
    """Wigner-domain estimate of the coherent state ``alpha``."""
    return GaussianStateEstimate(np.sqrt(2) * np.array([alpha.real, alpha.imag]),
                                 0.5 * np.eye(2), "W")


VACUUM = coherent_state(0j)


# --- synthesis and demodulation ----------------------------------------------

def _pulse_times(beat_frequency: float, sample_rate: float, periods: int) -> np.ndarray:
    n = int(round(periods * sample_rate / beat_frequency))
    return np.arange(n) / sample_rate


def synthesize_heterodyne(alpha: complex, phase_drift_sigma: float, n_pulses: int, seed, *,
                          beat_frequency: float = BEAT_FREQUENCY, sample_rate: float = SAMPLE_RATE,
                          periods: int = PERIODS_PER_PULSE, reference_phase: float = 0.0
                          ) -> list[HeterodyneRecord]:
    """Shot-noise-limited heterodyne traces of ``n_pulses`` copies of ``alpha``.

    Each shot is rotated by a Gaussian phase offset of width
    ``phase_drift_sigma``. The white noise is scaled so that vacuum demodulates
    to unit variance per quadrature over the record.
    """
    if n_pulses < 1:
        raise TomographyError("n_pulses must be >= 1")
    rng = np.random.default_rng(seed)
    t = _pulse_times(beat_frequency, sample_rate, periods)
    phase = 2 * np.pi * beat_frequency * t + reference_phase
    sigma_v = np.sqrt(t.size / 2.0)
    drifts = rng.normal(0.0, phase_drift_sigma, n_pulses) if phase_drift_sigma > 0 else np.zeros(n_pulses)
    noise = rng.normal(0.0, sigma_v, (n_pulses, t.size))
    records = []
    for k in range(n_pulses):
        a = np.sqrt(2) * alpha * np.exp(1j * drifts[k])
        v = a.real * np.cos(phase) - a.imag * np.sin(phase) + noise[k]
        records.append(HeterodyneRecord(t, v, beat_frequency, reference_phase))
    return records


def demodulate(record: HeterodyneRecord, f_demod: Optional[float] = None) -> tuple[float, float]:
    """Lock-in the record with cosine and sine at ``f_demod``.

    The signal ``A cos(2 pi f t + phi)`` with ``phi`` the reference phase
    returns ``(A, 0)`` exactly when the record spans whole beat periods;
    otherwise the double-frequency term leaks in at order ``1/N``.
    """
    f = record.beat_frequency if f_demod is None else float(f_demod)
    if abs(f - record.beat_frequency) > DEMOD_TOLERANCE * record.beat_frequency:
        raise TomographyError(f"demodulation frequency {f:.4g} Hz is more than 10% away from "
                              f"the beat at {record.beat_frequency:.4g} Hz")
    span = record.times[-1] - record.times[0] + (record.times[1] - record.times[0])
    if span * record.beat_frequency < 3 - 1e-9:
        raise TomographyError("record is shorter than three beat periods")
    ref = np.exp(-1j * (2 * np.pi * f * record.times + record.reference_phase))
    z = 2.0 / record.times.size * np.sum(record.voltage * ref)
    return float(z.real), float(z.imag)


def ensemble_from_records(records: Sequence[HeterodyneRecord], f_demod: Optional[float] = None
                          ) -> QuadratureEnsemble:
    return QuadratureEnsemble(np.array([demodulate(r, f_demod) for r in records]))


def sample_heterodyne(state: GaussianStateEstimate, m: int, seed) -> QuadratureEnsemble:
    """Draw ``m`` heterodyne samples of a Wigner-domain Gaussian state directly."""
    if state.kind != "W":
        raise TomographyError("sample_heterodyne expects a Wigner-domain state")
    rng = np.random.default_rng(seed)
    cov_q = state.covariance + 0.5 * np.eye(2)
    return QuadratureEnsemble(rng.multivariate_normal(state.mean, cov_q, size=m))


# --- estimation ---------------------------------------------------------------

@dataclass(frozen=True)
class QSurface:
    x_edges: np.ndarray
    p_edges: np.ndarray
    density: np.ndarray  # shape (len(x_edges) - 1, len(p_edges) - 1)

    def integral(self) -> float:
        return float(np.sum(self.density * np.outer(np.diff(self.x_edges), np.diff(self.p_edges))))


def estimate_q(ensemble: QuadratureEnsemble, grid=None):
    """Histogram Q surface plus sample moments.

    ``grid`` is ``None`` (moments only), a bin count or a pair of edge
    arrays. Returns ``(surface_or_None, GaussianStateEstimate(kind="Q"))``.
    """
    s = ensemble.samples
    est = GaussianStateEstimate(s.mean(axis=0), np.cov(s, rowvar=False), "Q", ensemble.m)
    if grid is None:
        return None, est
    if ensemble.m < MIN_SURFACE_SAMPLES:
        raise TomographyError(f"need at least {MIN_SURFACE_SAMPLES} pulses for a Q surface")
    if isinstance(grid, int):
        lo = s.min(axis=0) - 1e-9
        hi = s.max(axis=0) + 1e-9
        x_edges = np.linspace(lo[0], hi[0], grid + 1)
        p_edges = np.linspace(lo[1], hi[1], grid + 1)
    else:
        x_edges, p_edges = (np.asarray(e, dtype=float) for e in grid)
    counts, _, _ = np.histogram2d(s[:, 0], s[:, 1], bins=(x_edges, p_edges))
    area = np.outer(np.diff(x_edges), np.diff(p_edges))
    total = counts.sum()
    if total == 0:
        raise TomographyError("no samples fall inside the Q grid")
    return QSurface(x_edges, p_edges, counts / (total * area)), est


def _relative_tolerance(m: Optional[int]) -> float:
    # three standard errors of a sample variance
    return 1e-9 if m is None else 3.0 * np.sqrt(2.0 / max(m - 1, 1))


def q_to_wigner(q: GaussianStateEstimate) -> GaussianStateEstimate:
    """Deconvolve the heterodyne vacuum: ``Sigma_W = Sigma_Q - I/2``.

    States below the Heisenberg bound by more than the sampling tolerance of
    the estimate raise :class:`UnphysicalDeconvolution`.
    """
    if q.kind != "Q":
        raise TomographyError("q_to_wigner expects a Q-domain estimate")
    cov_w = q.covariance - 0.5 * np.eye(2)
    eig = np.linalg.eigvalsh(cov_w)
    if eig[0] <= 0:
        raise UnphysicalDeconvolution("Wigner covariance is not positive-definite", float(eig[0]))
    slack = q.covariance * (1 + _relative_tolerance(q.m)) - 0.5 * np.eye(2)
    if np.linalg.det(slack) < 0.25:
        raise UnphysicalDeconvolution("Wigner covariance violates det >= 1/4", float(eig[0]))
    return GaussianStateEstimate(q.mean, cov_w, "W", q.m)


def wigner_to_q(w: GaussianStateEstimate) -> GaussianStateEstimate:
    if w.kind != "W":
        raise TomographyError("wigner_to_q expects a Wigner-domain estimate")
    return GaussianStateEstimate(w.mean, w.covariance + 0.5 * np.eye(2), "Q", w.m)


def _check_physical(s: GaussianStateEstimate) -> None:
    if s.kind != "W":
        raise TomographyError("fidelity needs Wigner-domain states")
    eig = np.linalg.eigvalsh(s.covariance)
    if eig[0] <= 0:
        raise UnphysicalDeconvolution("covariance is not positive-definite", float(eig[0]))
    # same slack as q_to_wigner, applied to the heterodyne covariance it came from
    slack = (s.covariance + 0.5 * np.eye(2)) * (1 + _relative_tolerance(s.m)) - 0.5 * np.eye(2)
    if np.linalg.det(slack) < 0.25:
        raise UnphysicalDeconvolution("covariance violates det >= 1/4", float(eig[0]))


def gaussian_fidelity(a: GaussianStateEstimate, b: GaussianStateEstimate) -> float:
    """Uhlmann fidelity of two single-mode Gaussian states (squared-overlap convention)."""
    _check_physical(a)
    _check_physical(b)
    s = a.covariance + b.covariance
    d = a.mean - b.mean
    delta = 4.0 * np.linalg.det(s)
    # sampled states can sit a hair under the bound; treat them as pure
    lam = max((4 * np.linalg.det(a.covariance) - 1) * (4 * np.linalg.det(b.covariance) - 1), 0.0)
    f = 2.0 / (np.sqrt(delta + lam) - np.sqrt(lam)) * np.exp(-0.5 * d @ np.linalg.solve(s, d))
    return float(min(f, 1.0))


def mean_photon_number(ensemble: QuadratureEnsemble) -> tuple[float, float]:
    """``n = <(x^2 + p^2)/2> - 1`` with a jackknife standard error."""
    y = 0.5 * (ensemble.x**2 + ensemble.p**2)
    m = y.size
    n = float(y.mean() - 1.0)
    loo = (y.sum() - y) / (m - 1)
    err = float(np.sqrt((m - 1) / m * np.sum((loo - loo.mean()) ** 2)))
    return n, err


def wigner_surface(state: GaussianStateEstimate, x, p) -> np.ndarray:
    """Gaussian phase-space density of ``state`` on the ``x`` by ``p`` grid."""
    X, P = np.meshgrid(np.asarray(x, float), np.asarray(p, float), indexing="ij")
    d = np.stack([X - state.mean[0], P - state.mean[1]], axis=-1)
    inv = np.linalg.inv(state.covariance)
    q = np.einsum("...i,ij,...j->...", d, inv, d)
    return np.exp(-0.5 * q) / (2 * np.pi * np.sqrt(np.linalg.det(state.covariance)))


# --- IO -----------------------------------------------------------------------

def write_quadratures(path, ensemble: QuadratureEnsemble) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot_index", "x", "p"])
        for k, (x, p) in enumerate(ensemble.samples):
            w.writerow([k, repr(float(x)), repr(float(p))])


def read_quadratures(path) -> QuadratureEnsemble:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise TomographyError(f"{path}: no quadrature rows")
    try:
        return QuadratureEnsemble(np.array([[float(r["x"]), float(r["p"])] for r in rows]))
    except (KeyError, ValueError) as exc:
        raise TomographyError(f"{path}: malformed quadrature CSV ({exc})") from exc


def write_surface(path, x, p, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "p", "value"])
        for i, xi in enumerate(x):
            for j, pj in enumerate(p):
                w.writerow([repr(float(xi)), repr(float(pj)), repr(float(values[i, j]))])


def write_estimate(path, est: GaussianStateEstimate) -> None:
    Path(path).write_text(json.dumps(est.to_dict(), indent=2, sort_keys=True) + "\n")
