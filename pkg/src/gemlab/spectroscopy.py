"""Off-resonant Raman absorption lines: synthesis, broadening and calibration fits.

Line shape
----------
For a weak probe on ``|1> -> |e>`` (one-photon detuning ``Delta``, optical
depth ``od``) and a control on ``|3> -> |e>`` with Rabi frequency
``Omega_c``, the steady-state amplitude transmission of a Lambda system is::

    t = exp(-(od Gamma / 4) / [(Gamma/2 - i Delta) + (Omega_c^2 / 4) / (gamma0 - i delta2)])

Expanding the bracket about the Raman resonance for ``Delta >> Gamma`` gives
a one-photon background ``1 / (Gamma/2 - i Delta)``, dropped here, plus a
Lorentzian Raman line::

    t_R(delta2) = exp(-beta L / (gamma_R - i (delta2 - delta_LS)))

    Gamma_sc = Gamma (Omega_c / 2 Delta)^2     control-induced scattering
    gamma_R  = gamma0 + Gamma_sc / 2           coherence (half-)width
    delta_LS = Omega_c^2 / (4 Delta)           light shift of the line
    beta L   = od Gamma_sc / 4

so the line-centre intensity depth is ``d_R = od Gamma_sc / (2 gamma_R)``,
which tends to ``od`` when ground-state decoherence is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import least_squares

from . import constants as C
from .decay import FitError, scattering_rate

GAUSS = 1e-4  # tesla


def _check_delta(Delta: float) -> None:
    if Delta == 0:
        raise ValueError("one-photon detuning Delta must be non-zero")


def light_shift(Omega_c: float, Delta: float) -> float:
    _check_delta(Delta)
    return Omega_c**2 / (4.0 * Delta)


def raman_linewidth(Omega_c: float, Delta: float, Gamma: float, gamma0: float = 0.0) -> float:
    return gamma0 + scattering_rate(Gamma, Omega_c, Delta) / 2.0


def raman_depth(od: float, Omega_c: float, Delta: float, Gamma: float, gamma0: float = 0.0) -> float:
    """Line-centre intensity optical depth of the unbroadened Raman line."""
    gsc = scattering_rate(Gamma, Omega_c, Delta)
    if gsc == 0:
        return 0.0
    return od * gsc / (2.0 * (gamma0 + gsc / 2.0))


def raman_transmission(delta2, od: float, Omega_c: float, Delta: float,
                       Gamma: float = C.RB87_D1_LINEWIDTH, gamma0: float = 0.0, center: float = 0.0):
    """Complex amplitude transmission of one Raman line at two-photon detuning ``delta2``.

    ``center`` adds a line offset (e.g. a Zeeman shift) on top of the light shift.
    """
    _check_delta(Delta)
    delta2 = np.asarray(delta2, dtype=float)
    gsc = scattering_rate(Gamma, Omega_c, Delta)
    if gsc == 0 or od == 0:
        return np.ones_like(delta2, dtype=complex)
    gamma_r = gamma0 + gsc / 2.0
    beta_l = od * gsc / 4.0
    x = delta2 - light_shift(Omega_c, Delta) - center
    return np.exp(-beta_l / (gamma_r - 1j * x))


def broadened_transmission(delta2, od: float, Omega_c: float, Delta: float, eta1: float,
                           length_L: float, Gamma: float = C.RB87_D1_LINEWIDTH,
                           gamma0: float = 0.0, center: float = 0.0):
    """Raman line with the linear Zeeman gradient ``eta1`` across the medium.

    The local line sits at ``center + eta1 z`` for ``z`` in ``[-L/2, L/2]``;
    ``log t`` is the z-average of the local exponent, integrated in closed
    form (the logarithms stay on the principal branch because their arguments
    have positive real part ``gamma_R``).
    """
    if eta1 == 0:
        return raman_transmission(delta2, od, Omega_c, Delta, Gamma, gamma0, center)
    _check_delta(Delta)
    delta2 = np.asarray(delta2, dtype=float)
    gsc = scattering_rate(Gamma, Omega_c, Delta)
    if gsc == 0 or od == 0:
        return np.ones_like(delta2, dtype=complex)
    gamma_r = gamma0 + gsc / 2.0
    beta = od * gsc / (4.0 * length_L)
    x = delta2 - light_shift(Omega_c, Delta) - center
    u_hi = gamma_r - 1j * x + 1j * eta1 * length_L / 2
    u_lo = gamma_r - 1j * x - 1j * eta1 * length_L / 2
    integral = (np.log(u_hi) - np.log(u_lo)) / (1j * eta1)
    return np.exp(-beta * integral)


def gradient_broadened_width(eta1: float, length_L: float) -> float:
    """Full Zeeman spread of the Raman line across the medium, in Hz."""
    return abs(eta1) * length_L / C.TWO_PI


@dataclass(frozen=True)
class ZeemanManifold:
    od_per_line: tuple[float, float, float] = C.DEFAULT_ZEEMAN_ODS
    bias_field: float = C.DEFAULT_BIAS_GAUSS * GAUSS
    zeeman_shift_per_gauss: float = C.RAMAN_ZEEMAN_SHIFT_PER_GAUSS

    def __post_init__(self):
        ods = tuple(float(x) for x in self.od_per_line)
        if len(ods) != 3 or min(ods) < 0:
            raise ValueError("od_per_line needs three non-negative values (m_F = -1, 0, +1)")
        object.__setattr__(self, "od_per_line", ods)

    def line_centers(self) -> np.ndarray:
        """Zeeman offsets of the m_F = -1, 0, +1 Raman lines (rad/s, light shift excluded)."""
        return np.array([-1.0, 0.0, 1.0]) * self.zeeman_shift_per_gauss * (self.bias_field / GAUSS)


@dataclass(frozen=True)
class RamanSpectrum:
    two_photon_detunings: np.ndarray
    transmission: np.ndarray
    phase: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.asarray(self.two_photon_detunings, dtype=float)
        if d.ndim != 1 or d.size < 2 or np.any(np.diff(d) <= 0):
            raise ValueError("detuning grid must be strictly increasing")
        if np.shape(self.transmission) != d.shape:
            raise ValueError("transmission and detunings differ in length")
        object.__setattr__(self, "two_photon_detunings", d)
        object.__setattr__(self, "transmission", np.asarray(self.transmission, dtype=float))


def _manifold_field(grid, ods, Omega_c, Delta, Gamma, gamma0, centers):
    t = np.ones_like(grid, dtype=complex)
    for od, c in zip(ods, centers):
        t *= raman_transmission(grid, od, Omega_c, Delta, Gamma, gamma0, c)
    return t


def simulate_manifold_spectrum(manifold: ZeemanManifold, Omega_c: float, Delta: float, grid,
                               Gamma: float = C.RB87_D1_LINEWIDTH, gamma0: float = 0.0) -> RamanSpectrum:
    """Transmission through all three m_F Raman lines (intensity and phase)."""
    grid = np.asarray(grid, dtype=float)
    centers = manifold.line_centers() + light_shift(Omega_c, Delta)
    if grid.min() > centers.min() or grid.max() < centers.max():
        raise ValueError("detuning grid must span all three line centres")
    t = _manifold_field(grid, manifold.od_per_line, Omega_c, Delta, Gamma, gamma0,
                        manifold.line_centers())
    return RamanSpectrum(grid, np.abs(t) ** 2, np.angle(t))


@dataclass
class SpectrumFit:
    od_per_line: tuple[float, float, float]
    Omega_c: float
    covariance: np.ndarray
    uncertainties: dict[str, float]
    residual: float
    iterations: int

    def report(self) -> dict:
        names = ("od_m-1", "od_m0", "od_m+1")
        params = dict(zip(names, map(float, self.od_per_line)))
        params["Omega_c_hz"] = float(self.Omega_c / C.TWO_PI)
        return {
            "parameters": params,
            "uncertainties": {k: float(v) for k, v in self.uncertainties.items()},
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }


def fit_spectrum(measured: RamanSpectrum, initial_guess: Mapping[str, object], *,
                 Delta: float = C.DEFAULT_DETUNING, Gamma: float = C.RB87_D1_LINEWIDTH,
                 gamma0: float = 0.0, bias_field: float = C.DEFAULT_BIAS_GAUSS * GAUSS,
                 zeeman_shift_per_gauss: float = C.RAMAN_ZEEMAN_SHIFT_PER_GAUSS,
                 max_iterations: int = 200) -> SpectrumFit:
    """Levenberg-Marquardt fit of the three-line model to a measured ``|T|^2``.

    ``initial_guess`` holds ``od_per_line`` (three values) and ``Omega_c``
    (rad/s). The detuning, linewidths and bias field are taken as known.
    """
    y = np.asarray(measured.transmission, dtype=float)
    if not np.all(np.isfinite(y)) or np.ptp(y) < 1e-6:
        raise FitError("spectrum is flat; no resolvable Raman dip")
    grid = measured.two_photon_detunings
    sigma = measured.sigma if measured.sigma is not None else np.ones_like(y)
    centers = np.array([-1.0, 0.0, 1.0]) * zeeman_shift_per_gauss * (bias_field / GAUSS)

    od0 = np.asarray(initial_guess["od_per_line"], dtype=float)
    om0 = float(initial_guess["Omega_c"])
    x0 = np.concatenate([od0, [om0]])
    scale = np.where(x0 != 0, np.abs(x0), 1.0)

    def model(x):
        p = x * scale
        t = _manifold_field(grid, p[:3], p[3], Delta, Gamma, gamma0, centers)
        return np.abs(t) ** 2

    def residuals(x):
        return (model(x) - y) / sigma

    res = least_squares(residuals, x0 / scale, method="lm", xtol=1e-10, ftol=1e-10, gtol=1e-10,
                        max_nfev=max_iterations * (x0.size + 1))
    resid = float(np.linalg.norm(res.fun))
    if res.status <= 0:
        raise FitError(f"Raman fit did not converge after {res.nfev} evaluations "
                       f"(residual {resid:.3e})", resid)
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian in Raman fit", resid) from exc
    if measured.sigma is None:
        cov *= resid**2 / max(y.size - x0.size, 1)
    cov *= np.outer(scale, scale)
    p = res.x * scale
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    unc = {"od_m-1": err[0], "od_m0": err[1], "od_m+1": err[2], "Omega_c": err[3]}
    return SpectrumFit(tuple(float(v) for v in p[:3]), float(abs(p[3])), cov, unc, resid, int(res.nfev))
