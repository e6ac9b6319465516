"""Instantaneous control-pulse sequences."""
from dataclasses import dataclass

import numpy as np

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class Pulse:
    """Rotation by ``angle`` (rad) about ``axis`` at ``fraction`` of the total time."""
    fraction: float
    axis: str = "x"
    angle: float = np.pi

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"pulse axis must be one of {AXES}, got {self.axis!r}")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered pulses with times given as fractions of the total evolution time.

    ``mode`` is ``'uniform'`` for equispaced CPMG-like sequences (delays tau, 2tau, ..., tau)
    and ``'explicit'`` otherwise.
    """
    pulses: tuple = ()
    mode: str = "explicit"

    def __post_init__(self):
        pulses = tuple(p if isinstance(p, Pulse) else Pulse(*p) for p in self.pulses)
        object.__setattr__(self, "pulses", pulses)
        if self.mode not in ("explicit", "uniform"):
            raise ValueError(f"unknown pulse-sequence mode {self.mode!r}")
        f = self.fractions
        if len(f) and (f[0] <= 0 or f[-1] >= 1 or np.any(np.diff(f) <= 0)):
            raise ValueError("pulse times must be strictly increasing within (0, 1)")

    @classmethod
    def fid(cls):
        return cls((), "uniform")

    @classmethod
    def uniform(cls, n, axis="x", angle=np.pi):
        """n equispaced pulses at (2k - 1) / (2n), k = 1..n."""
        n = int(n)
        if n < 0:
            raise ValueError("number of pulses must be non-negative")
        return cls(tuple(Pulse((2 * k - 1) / (2 * n), axis, angle) for k in range(1, n + 1)), "uniform")

    @classmethod
    def hahn(cls, axis="x"):
        return cls.uniform(1, axis)

    @classmethod
    def explicit(cls, items):
        """From ``[(fraction, axis, angle), ...]``."""
        return cls(tuple(Pulse(*item) for item in items), "explicit")

    @property
    def n(self):
        return len(self.pulses)

    @property
    def fractions(self):
        return np.array([p.fraction for p in self.pulses], dtype=float)

    @property
    def segments(self):
        """Free-evolution durations as fractions of the total time (n + 1 entries)."""
        edges = np.concatenate([[0.0], self.fractions, [1.0]])
        return np.diff(edges)

    @property
    def conventional_compatible(self):
        return all(abs(abs(p.angle) - np.pi) < 1e-12 for p in self.pulses)

    def to_dict(self):
        return {"mode": self.mode,
                "pulses": [{"fraction": p.fraction, "axis": p.axis, "angle": p.angle} for p in self.pulses]}
