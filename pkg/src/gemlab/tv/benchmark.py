"""Signal-transfer (T) and conditional-variance (V) coefficients.

Per quadrature, with Wigner variances in vacuum units (vacuum = 1)::

    g^2  = (mean_out / mean_in)^2
    T_q  = SNR_out / SNR_in,  SNR = mean^2 / variance
    V_q  = V_out - g^2 V_in

and ``T = T_x + T_p``, ``V = sqrt(V_x V_p)``. Heterodyne samples carry one
extra vacuum unit, removed as ``V = 2 Var_Q - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..tomography import GaussianStateEstimate, QuadratureEnsemble

BOOTSTRAP_RESAMPLES = 500
MIN_SAMPLES = 100


class TVError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureTV:
    """Moments behind one quadrature's contribution (vacuum units)."""

    gain2: float
    v_in: float
    v_out: float

    @property
    def T(self) -> float:
        return self.gain2 * self.v_in / self.v_out

    @property
    def V(self) -> float:
        return self.v_out - self.gain2 * self.v_in


@dataclass(frozen=True)
class TVPoint:
    T: float
    V: float
    err_T: float = 0.0
    err_V: float = 0.0
    quadratures: Optional[tuple[QuadratureTV, QuadratureTV]] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 0 or not np.isfinite(self.T):
            raise TVError(f"T = {self.T} must be finite and >= 0")
        if not np.isfinite(self.V):
            raise TVError("V must be finite")

    @classmethod
    def from_quadratures(cls, qx: QuadratureTV, qp: QuadratureTV, **kw) -> "TVPoint":
        return cls(qx.T + qp.T, _geometric_v(qx.V, qp.V), quadratures=(qx, qp), **kw)

    def to_dict(self) -> dict:
        d = {"T": self.T, "V": self.V, "err_T": self.err_T, "err_V": self.err_V}
        if self.quadratures is not None:
            d["quadratures"] = [{"gain2": q.gain2, "v_in": q.v_in, "v_out": q.v_out}
                                for q in self.quadratures]
        if self.provenance:
            d["provenance"] = dict(self.provenance)
        return d


def _geometric_v(vx: float, vp: float) -> float:
    if vx < 0 or vp < 0:
        raise TVError(f"negative conditional variance ({vx:.4g}, {vp:.4g})")
    return float(np.sqrt(vx * vp))


@dataclass(frozen=True)
class DetectionBudget:
    spatial_filter_transmission: float = 1.0
    fringe_visibility_squared: float = 1.0
    heterodyne_penalty: float = 1.0
    detector_qe: float = 1.0
    shotnoise_to_darknoise_factor: float = 1.0

    def __post_init__(self):
        for name in ("spatial_filter_transmission", "fringe_visibility_squared",
                     "heterodyne_penalty", "detector_qe", "shotnoise_to_darknoise_factor"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise TVError(f"{name} = {v} must lie in (0, 1]")

    @property
    def total_eta(self) -> float:
        return float(np.prod([self.spatial_filter_transmission, self.fringe_visibility_squared,
                              self.heterodyne_penalty, self.detector_qe,
                              self.shotnoise_to_darknoise_factor]))

    @classmethod
    def from_total(cls, eta: float) -> "DetectionBudget":
        return cls(detector_qe=eta)


# --- estimators ---------------------------------------------------------------

def _check_displacement(q_in: np.ndarray) -> None:
    # a sample mean is never exactly zero; demand it clear 3 standard errors
    if abs(q_in.mean()) < 3 * q_in.std(ddof=1) / np.sqrt(q_in.size):
        raise TVError("input has no resolvable displacement in one quadrature; T is undefined")


def _quadrature_moments(q_in: np.ndarray, q_out: np.ndarray) -> QuadratureTV:
    mi, mo = q_in.mean(), q_out.mean()
    v_in = 2.0 * q_in.var(ddof=1) - 1.0
    v_out = 2.0 * q_out.var(ddof=1) - 1.0
    if v_out <= 0 or v_in <= 0:
        raise TVError(f"unphysical Wigner variance (in {v_in:.4g}, out {v_out:.4g})")
    return QuadratureTV((mo / mi) ** 2, v_in, v_out)


def _point(a: np.ndarray, b: np.ndarray) -> tuple[float, float, QuadratureTV, QuadratureTV]:
    qx = _quadrature_moments(a[:, 0], b[:, 0])
    qp = _quadrature_moments(a[:, 1], b[:, 1])
    # near-noiseless channels scatter about V_q = 0; clip before the product
    return qx.T + qp.T, _geometric_v(max(qx.V, 0.0), max(qp.V, 0.0)), qx, qp


def tv_from_ensembles(input: QuadratureEnsemble, output: QuadratureEnsemble, *,
                      resamples: int = BOOTSTRAP_RESAMPLES, seed=0) -> TVPoint:
    """T and V from separate input and output heterodyne ensembles, bootstrap errors."""
    if input.m < MIN_SAMPLES or output.m < MIN_SAMPLES:
        raise TVError(f"need at least {MIN_SAMPLES} samples per ensemble")
    a, b = input.samples, output.samples
    _check_displacement(a[:, 0])
    _check_displacement(a[:, 1])
    T, V, qx, qp = _point(a, b)
    rng = np.random.default_rng(seed)
    ts, vs = np.empty(resamples), np.empty(resamples)
    for k in range(resamples):
        ia = rng.integers(0, a.shape[0], a.shape[0])
        ib = rng.integers(0, b.shape[0], b.shape[0])
        ts[k], vs[k], _, _ = _point(a[ia], b[ib])
    return TVPoint(T, V, float(ts.std(ddof=1)), float(vs.std(ddof=1)), (qx, qp),
                   {"m_in": input.m, "m_out": output.m, "resamples": resamples})


# --- detection correction -------------------------------------------------------

def _components(point: TVPoint) -> tuple[QuadratureTV, QuadratureTV]:
    if point.quadratures is not None:
        return point.quadratures
    # symmetric quadratures and a coherent (V_in = 1) input
    tq = point.T / 2
    if tq >= 1:
        if point.V == 0:
            q = QuadratureTV(tq, 1.0, tq)
            return q, q
        raise TVError("cannot resolve per-quadrature moments for T/2 >= 1 with V > 0")
    v_out = point.V / (1 - tq)
    q = QuadratureTV(tq * v_out, 1.0, v_out)
    return q, q


def _map(point: TVPoint, eta: float, forward: bool) -> TVPoint:
    if not 0 < eta <= 1:
        raise TVError(f"detection efficiency {eta} must lie in (0, 1]")

    def f(v):
        return 1 + eta * (v - 1) if forward else 1 + (v - 1) / eta

    new = []
    for q in _components(point):
        v_in, v_out = f(q.v_in), f(q.v_out)
        if v_in <= 0 or v_out <= 0:
            raise TVError("detection correction gives a non-positive variance")
        new.append(QuadratureTV(q.gain2, v_in, v_out))
    qx, qp = new
    # raw V_q can dip below zero for amplifying channels seen through loss
    if not forward and (qx.V < -1e-9 or qp.V < -1e-9):
        raise TVError(f"corrected conditional variance is unphysical ({qx.V:.4g}, {qp.V:.4g})")
    scale = eta if forward else 1 / eta
    prov = dict(point.provenance)
    prov["detection"] = list(prov.get("detection", [])) + [
        {"eta": eta, "direction": "loss" if forward else "correction"}]
    return TVPoint(qx.T + qp.T, _geometric_v(max(qx.V, 0.0), max(qp.V, 0.0)),
                   point.err_T * scale, point.err_V * scale,
                   (qx, qp), prov)


def correct_detection(raw: TVPoint, budget) -> TVPoint:
    """Undo a pure-loss detector of efficiency ``budget.total_eta`` (or a float).

    The same detector sees input and output, so the gain is unchanged and
    each Wigner variance maps back as ``1 + (V_raw - 1)/eta``. Noise above
    vacuum grows, so T falls and V rises; error bars scale by ``1/eta``.
    """
    eta = budget.total_eta if isinstance(budget, DetectionBudget) else float(budget)
    return _map(raw, eta, forward=False)


def apply_detection_loss(point: TVPoint, budget) -> TVPoint:
    """Forward model of :func:`correct_detection`."""
    eta = budget.total_eta if isinstance(budget, DetectionBudget) else float(budget)
    return _map(point, eta, forward=True)


# --- reference curves and channels ---------------------------------------------

def classical_limit(g):
    """Measure-and-recreate with one vacuum unit from each step, gain ``g``."""
    g2 = np.asarray(g, dtype=float) ** 2
    return 2 * g2 / (2 * g2 + 1), 1 + g2


def linear_loss(eta):
    eta = np.asarray(eta, dtype=float)
    return 2 * eta, 1 - eta


def boundary_curves(t_grid) -> dict:
    """Classical-limit and linear-loss curves sampled at ``t_grid`` values of T.

    The classical curve only exists for ``T < 1``; grid points at or above 1
    are dropped from it.
    """
    t = np.asarray(t_grid, dtype=float)
    tc = t[(t >= 0) & (t < 1)]
    g = np.sqrt(tc / (2 * (1 - tc)))
    cl_t, cl_v = classical_limit(g)
    tl = t[(t >= 0) & (t <= 2)]
    ll_t, ll_v = linear_loss(tl / 2)
    return {
        "classical": (cl_t, cl_v),
        "linear_loss": (ll_t, ll_v),
        "no_cloning": {"T_min": 1.0, "V_max": 1.0, "strict": True},
    }


def in_no_cloning_region(point: TVPoint) -> bool:
    return bool(point.T > 1 and point.V < 1)


def loss_channel(state: GaussianStateEstimate, eta: float) -> GaussianStateEstimate:
    """Beam splitter of transmission ``eta`` acting on a Wigner-domain state."""
    return GaussianStateEstimate(np.sqrt(eta) * state.mean,
                                 eta * state.covariance + (1 - eta) * 0.5 * np.eye(2), "W")


def measure_prepare_channel(state: GaussianStateEstimate, gain: float) -> GaussianStateEstimate:
    """Heterodyne then re-prepare a coherent state with amplitude gain ``gain``."""
    cov = gain**2 * (state.covariance + 0.5 * np.eye(2)) + 0.5 * np.eye(2)
    return GaussianStateEstimate(gain * state.mean, cov, "W")
