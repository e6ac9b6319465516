"""Curated table of spin-active isotopes.

Gyromagnetic ratios are gamma/2pi in MHz/T, converted on load to rad/ms/G.
Quadrupole moments in millibarn. Abundances are natural mole fractions.
"""
from dataclasses import dataclass

import numpy as np

from .constants import ELECTRON_GYRO


@dataclass(frozen=True)
class SpinType:
    name: str
    s: float
    gamma: float  # rad / ms / G
    quadrupole_moment: float = 0.0  # mb
    abundance: float = 1.0

    def __post_init__(self):
        if not 0 <= self.abundance <= 1:
            raise ValueError(f"{self.name}: abundance {self.abundance} outside [0, 1]")
        if self.s < 0 or abs(2 * self.s - round(2 * self.s)) > 1e-12:
            raise ValueError(f"{self.name}: spin {self.s} is not a half-integer")

    @property
    def dim(self):
        return int(round(2 * self.s + 1))


def _mhz_per_tesla(f):
    return 2 * np.pi * f / 10


#   element: [(isotope, s, gamma/2pi MHz/T, Q mb, abundance)]
_RAW = {
    "H": [("1H", 0.5, 42.577478, 0.0, 0.999885), ("2H", 1.0, 6.535903, 2.86, 0.000115)],
    "C": [("13C", 0.5, 10.708395, 0.0, 0.0107)],
    "N": [("14N", 1.0, 3.077706, 20.44, 0.99636), ("15N", 0.5, -4.317266, 0.0, 0.00364)],
    "O": [("17O", 2.5, -5.774236, -25.58, 0.00038)],
    "F": [("19F", 0.5, 40.078, 0.0, 1.0)],
    "Si": [("29Si", 0.5, -8.465499, 0.0, 0.04685)],
    "P": [("31P", 0.5, 17.235, 0.0, 1.0)],
    "S": [("33S", 1.5, 3.271674, -67.8, 0.0075)],
}

ISOTOPES = {
    el: tuple(SpinType(name, s, _mhz_per_tesla(f), q, ab) for name, s, f, q, ab in rows)
    for el, rows in _RAW.items()
}

ELECTRON = SpinType("e", 0.5, ELECTRON_GYRO, 0.0, 1.0)

SPIN_TYPES = {t.name: t for rows in ISOTOPES.values() for t in rows}
SPIN_TYPES["e"] = ELECTRON


def isotope_lookup(element):
    """All spin-active isotopes of ``element``.

    Raises:
        KeyError: if the element is not in the curated table.
    """
    try:
        return list(ISOTOPES[element])
    except KeyError:
        raise KeyError(f"element {element!r} is not in the isotope table") from None


def spin_type(name):
    """Look up a spin type by isotope name (e.g. ``'13C'``)."""
    try:
        return SPIN_TYPES[name]
    except KeyError:
        raise KeyError(f"unknown spin type {name!r}") from None
