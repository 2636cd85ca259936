"""Physical constants and the default cold-atom parameter set (87Rb, D1 line)."""

import numpy as np
from scipy import constants as _sc

TWO_PI = 2.0 * np.pi

C_LIGHT = _sc.c
K_BOLTZMANN = _sc.k
ATOMIC_MASS_UNIT = _sc.atomic_mass

RB87_MASS = 86.909180527 * ATOMIC_MASS_UNIT
RB87_HYPERFINE_SPLITTING = TWO_PI * 6.834682611e9  # rad/s, ground F=1 <-> F=2
RB87_D1_LINEWIDTH = TWO_PI * 5.75e6  # rad/s
RB87_D1_WAVELENGTH = 794.978851e-9  # m

# two-photon (F=1,m -> F=2,m) Zeeman shift per unit m_F: (g_F2 - g_F1) * mu_B / h
RAMAN_ZEEMAN_SHIFT_PER_GAUSS = TWO_PI * 1.39962e6  # rad/s per gauss

# experiment defaults
DEFAULT_OPTICAL_DEPTH = 488.0  # m_F = +1 line
DEFAULT_LENGTH = 0.05
DEFAULT_DETUNING = TWO_PI * 325e6
DEFAULT_TEMPERATURE = 100e-6
DEFAULT_PROBE_WAIST = 110e-6
DEFAULT_PULSE_FWHM = 6.66e-6
DEFAULT_WRITE_WIDTH_HZ = 197e3
DEFAULT_READ_WIDTH_HZ = 210e3
DEFAULT_ZEEMAN_ODS = (6.3, 38.0, 488.0)  # m_F = -1, 0, +1
DEFAULT_BIAS_GAUSS = 0.5
SPECTROSCOPY_RABI_FREQUENCY = TWO_PI * 5.19e6

# control Rabi frequency adopted for the high-efficiency single-pulse run
HIGH_EFFICIENCY_RABI_FREQUENCY = TWO_PI * 9.0e6
