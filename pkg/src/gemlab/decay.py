"""Analytic efficiency-decay models, thermal timescales and their fits.

Two lifetime models are provided. The quadratic-gradient model, for storage
with control and gradient left on::

    E(t) = E0 |erf((L / 4 sigma) sqrt(1 - i zeta (t - t0)))|^2
           / sqrt(zeta^2 (t - t0)^2 + 1) * exp(-Gamma_sc t)

with ``zeta = 4 eta2 sigma^2``. The erf argument is read as ``(L/4sigma)``
times the square root; the quotient form ``sqrt(...) / (4 sigma / L)`` is the
same number. And the thermal model, for storage with all fields off::

    E(t) = E0 / (1 + (t/tau_l)^2)^2 * exp(-(t/tau_d)^2 / (1 + (t/tau_l)^2))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import special
from scipy.optimize import least_squares

from . import constants as C

ERF_SATURATION_RADIUS = 50.0


class FitError(RuntimeError):
    """A least-squares fit failed or its problem is degenerate."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


# --- complex error function -------------------------------------------------

def complex_erf(z):
    """Error function of a complex argument.

    Backed by the Faddeeva-based ``scipy.special.erf``. For ``|z| >= 50`` the
    saturation value ``sign(Re z)`` is returned (the sector containing the
    real axis); along the imaginary axis erf grows without bound and the
    pure-imaginary ``inf`` of the matching sign is returned.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(np.isnan(z)):
        raise ValueError("complex_erf received NaN")
    out = special.erf(z)
    big = np.abs(z) >= ERF_SATURATION_RADIUS
    if np.any(big):
        zb = z[big] if z.ndim else z
        # built by parts: 1j * inf would put a NaN in the real part
        imag_inf = np.zeros(zb.shape, complex)
        imag_inf.imag = np.copysign(np.inf, zb.imag)
        sat = np.where(np.abs(zb.real) >= np.abs(zb.imag), np.sign(zb.real) + 0j, imag_inf)
        if z.ndim:
            out = np.array(out)
            out[big] = sat
        else:
            out = sat
    return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out


# --- quadratic-gradient model ------------------------------------------------

@dataclass(frozen=True)
class QuadraticDecayParams:
    E0: float
    zeta: float
    sigma: float
    length_L: float
    Gamma_sc: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if not 0 < self.E0 <= 1:
            raise ValueError("E0 must lie in (0, 1]")
        if not (self.sigma > 0 and self.length_L > 0):
            raise ValueError("sigma and length_L must be positive")
        if self.Gamma_sc < 0:
            raise ValueError("Gamma_sc must be >= 0")


def _quadratic(t, E0, zeta, sigma, length_L, Gamma_sc, t0):
    t = np.asarray(t, dtype=float)
    u = zeta * (t - t0)
    arg = (length_L / (4.0 * sigma)) * np.sqrt(1.0 - 1j * u)
    return E0 * np.abs(complex_erf(arg)) ** 2 / np.sqrt(u * u + 1.0) * np.exp(-Gamma_sc * t)


def quadratic_decay_model(t, p: QuadraticDecayParams):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return _quadratic(t, p.E0, p.zeta, p.sigma, p.length_L, p.Gamma_sc, p.t0)


def scattering_rate(Gamma: float, Omega_c: float, Delta: float) -> float:
    """Control-induced Raman scattering rate ``Gamma (Omega_c / 2 Delta)^2``."""
    if Delta == 0:
        raise ValueError("Delta must be non-zero")
    return Gamma * (Omega_c / (2.0 * Delta)) ** 2


# --- thermal motion -----------------------------------------------------------

@dataclass(frozen=True)
class ThermalParams:
    temperature_T: float
    mass_m: float
    waist_w0: float
    lambda_sw: float
    v_bar: float
    tau_l: float
    tau_d: float


def thermal_timescales(T: float, m: float = C.RB87_MASS, w0: float = C.DEFAULT_PROBE_WAIST,
                       theta: float = 0.0, lambda_probe: float = C.RB87_D1_WAVELENGTH,
                       hyperfine_splitting: float = C.RB87_HYPERFINE_SPLITTING) -> ThermalParams:
    """Mean speed, spinwave wavelength and the loss/dephasing times.

    The control is red of the probe by the hyperfine splitting, so
    ``k_c = k_p - omega_hf / c``; the spinwave wavevector is ``k_p - k_c``
    with the two beams crossing at ``theta``.
    """
    if not (T > 0 and m > 0 and w0 > 0 and lambda_probe > 0 and hyperfine_splitting > 0):
        raise ValueError("all thermal inputs must be positive")
    if not 0 <= theta < np.pi / 2:
        raise ValueError("theta must lie in [0, pi/2)")
    v_bar = np.sqrt(C.K_BOLTZMANN * T / m)
    k_p = C.TWO_PI / lambda_probe
    k_c = k_p - hyperfine_splitting / C.C_LIGHT
    # |k_p - k_c|^2 written to avoid cancellation at small angles
    k_sw = np.sqrt((k_p - k_c) ** 2 + 4.0 * k_p * k_c * np.sin(theta / 2.0) ** 2)
    lambda_sw = C.TWO_PI / k_sw
    return ThermalParams(T, m, w0, float(lambda_sw), float(v_bar),
                         float(w0 / v_bar), float(lambda_sw / (C.TWO_PI * v_bar)))


def thermal_decay_model(t, E0: float, tau_l: float, tau_d: float = np.inf):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if not (tau_l > 0 and tau_d > 0):
        raise ValueError("tau_l and tau_d must be positive")
    return _thermal(t, E0, tau_l, tau_d)


def _thermal(t, E0, tau_l, tau_d):
    x = 1.0 + (t / tau_l) ** 2
    return E0 / x**2 * np.exp(-((t / tau_d) ** 2) / x)


def spinwave_k_evolution(k0: float, eta1_history, t: float) -> float:
    """``k0`` plus the time integral of the linear gradient up to ``t``.

    ``eta1_history`` is either a :class:`~gemlab.gem.types.GradientSchedule`
    or a sequence of ``(t_start, t_end, eta1)`` segments.
    """
    segments = getattr(eta1_history, "segments", eta1_history)
    segments = [(float(a), float(b), float(e)) for a, b, e in segments]
    if segments and not segments[0][0] <= t <= segments[-1][1]:
        raise ValueError(f"t = {t} lies outside the gradient history")
    k = float(k0)
    for a, b, e in segments:
        if t <= a:
            break
        k += e * (min(t, b) - a)
    return k


# --- fitting ------------------------------------------------------------------

MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-10


@dataclass
class FitResult:
    model: str
    params: dict[str, float]
    uncertainties: dict[str, float]
    covariance: np.ndarray
    free: tuple[str, ...]
    residual: float
    iterations: int
    converged: bool = True
    fixed: dict[str, float] = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "model": self.model,
            "parameters": {k: _finite_or_none(v) for k, v in self.params.items()},
            "uncertainties": {k: float(v) for k, v in self.uncertainties.items()},
            "fixed": sorted(self.fixed),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def _finite_or_none(v: float) -> Optional[float]:
    return float(v) if np.isfinite(v) else None


_QUAD_NAMES = ("E0", "zeta", "sigma", "length_L", "Gamma_sc", "t0")
_THERMAL_NAMES = ("E0", "tau_l", "tau_d")

MODELS: dict[str, tuple[tuple[str, ...], tuple[str, ...], Callable]] = {
    # name -> (all parameters, free by default, evaluator)
    "quadratic": (_QUAD_NAMES, ("E0", "zeta", "Gamma_sc"),
                  lambda t, p: _quadratic(t, *(p[k] for k in _QUAD_NAMES))),
    "thermal": (_THERMAL_NAMES, ("E0", "tau_l", "tau_d"),
                lambda t, p: _thermal(t, p["E0"], p["tau_l"], p["tau_d"])),
    "thermal_tau_d_inf": (_THERMAL_NAMES, ("E0", "tau_l"),
                          lambda t, p: _thermal(t, p["E0"], p["tau_l"], np.inf)),
    "thermal_fixed_tau_l": (_THERMAL_NAMES, ("E0", "tau_d"),
                            lambda t, p: _thermal(t, p["E0"], p["tau_l"], p["tau_d"])),
}

FIXED_TAU_L = 1.24e-3


EVEN_PARAMS = frozenset({"tau_l", "tau_d"})


def fit_decay(points, model: str, guess: Mapping[str, float],
              free: Optional[Sequence[str]] = None) -> FitResult:
    """Levenberg-Marquardt fit of one decay model to ``(t, efficiency, sigma)`` rows.

    ``guess`` must supply every model parameter; those not in ``free`` (by
    default the model's standard free set) are held at their guessed value.
    ``thermal_fixed_tau_l`` holds ``tau_l`` (1.24 ms unless given) and floats
    ``E0`` and ``tau_d``.
    """
    if model not in MODELS:
        raise ValueError(f"unknown decay model {model!r}; choose from {sorted(MODELS)}")
    names, default_free, evaluate = MODELS[model]
    guess = dict(guess)
    if model == "thermal_fixed_tau_l":
        guess.setdefault("tau_l", FIXED_TAU_L)
    if model == "thermal_tau_d_inf":
        guess.setdefault("tau_d", np.inf)
    missing = [k for k in names if k not in guess]
    if missing:
        raise ValueError(f"initial guess lacks {missing}")
    free = tuple(default_free if free is None else free)
    bad = [k for k in free if k not in names]
    if bad:
        raise ValueError(f"{bad} are not parameters of model {model!r}")

    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError("points must be rows of (t, efficiency[, sigma])")
    t, y = pts[:, 0], pts[:, 1]
    sigma = pts[:, 2] if pts.shape[1] == 3 else np.ones_like(y)
    if np.any(sigma <= 0):
        raise ValueError("sigma column must be positive")
    distinct = np.unique(t).size
    if distinct < len(free):
        raise FitError(f"singular Jacobian: {distinct} distinct time(s) cannot separate "
                       f"{list(free)}; {free[distinct]!r} is undetermined")
    if len(y) < len(free) + 1:
        raise FitError(f"{len(y)} points cannot constrain {len(free)} parameters")

    x0 = np.array([guess[k] for k in free], dtype=float)
    scale = np.where(x0 != 0, np.abs(x0), 1.0)

    def unpack(x):
        p = dict(guess)
        p.update(zip(free, x * scale))
        return p

    def residuals(x):
        return (evaluate(t, unpack(x)) - y) / sigma

    try:
        res = least_squares(residuals, x0 / scale, method="lm", xtol=STEP_TOLERANCE,
                            ftol=STEP_TOLERANCE, gtol=STEP_TOLERANCE,
                            max_nfev=MAX_ITERATIONS * (len(free) + 1))
    except ValueError as exc:
        raise FitError(f"fit failed: {exc}") from exc
    resid_norm = float(np.linalg.norm(res.fun))
    if res.status <= 0:
        raise FitError(f"no convergence after {res.nfev} evaluations: {res.message}", resid_norm)

    jtj = res.jac.T @ res.jac
    _check_singular(jtj, free, resid_norm)
    cov = np.linalg.inv(jtj)
    if pts.shape[1] == 2:
        dof = max(len(y) - len(free), 1)
        cov = cov * (resid_norm**2 / dof)
    # both timescales enter squared; report the positive branch
    sign = np.array([-1.0 if k in EVEN_PARAMS and res.x[i] * scale[i] < 0 else 1.0
                     for i, k in enumerate(free)])
    cov = cov * np.outer(scale * sign, scale * sign)
    params = unpack(res.x * sign)
    unc = {k: float(np.sqrt(max(cov[i, i], 0.0))) for i, k in enumerate(free)}
    fixed = {k: float(v) for k, v in params.items() if k not in free}
    return FitResult(model, {k: float(v) for k, v in params.items()}, unc, cov, free,
                     resid_norm, int(res.nfev), True, fixed)


def _check_singular(jtj: np.ndarray, names: Sequence[str], residual: float) -> None:
    diag = np.sqrt(np.clip(np.diag(jtj), 0, None))
    if np.any(diag == 0):
        k = int(np.argmin(diag))
        raise FitError(f"singular Jacobian: data do not constrain {names[k]!r}", residual)
    corr = jtj / np.outer(diag, diag)
    w, v = np.linalg.eigh(corr)
    if w[0] < 1e-12 * max(w[-1], 1.0):
        k = int(np.argmax(np.abs(v[:, 0])))
        raise FitError(f"singular Jacobian: {names[k]!r} is degenerate with the other parameters",
                       residual)
