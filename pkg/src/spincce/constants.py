"""Physical constants and unit conversions.

Default units used throughout the package:

- Distance: angstrom
- Time: millisecond
- Magnetic field: gauss
- Gyromagnetic ratio: rad / ms / G
- User-facing couplings: kHz (converted to rad / ms internally)
"""
import numpy as np

# CODATA 2018
MU0 = 1.25663706212e-6  # N / A^2
HBAR = 1.054571817e-34  # J s
BOHR = 0.529177210903  # angstrom
ELECTRON_GYRO = -17608.5963023  # rad / ms / G

# (rad/ms/G)^2 = 1e14 (rad/s/T)^2, 1 A^3 = 1e-30 m^3, rad/s -> rad/ms is 1e-3.
HBAR_MU0_O4PI = MU0 / (4 * np.pi) * HBAR * 1e14 / 1e-30 * 1e-3  # rad/ms * A^3 / (rad/ms/G)^2

PI2 = 2 * np.pi


def khz_to_radms(x):
    """Convert kHz to angular frequency in rad/ms."""
    return np.asarray(x) * PI2


def radms_to_khz(x):
    return np.asarray(x) / PI2
