"""Compressed-exponential fits of coherence envelopes."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

MODULATION_THRESHOLD = 0.05
P_BOUNDS = (0.1, 10.0)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class T2Fit:
    """Result of fitting exp[-(t / T2)^p].

    Attributes:
        T2 (float): Coherence time in ms.
        p (float): Stretch exponent.
        residual (float): Root-mean-square residual over the fitted points.
        envelope (bool): True if only local maxima were fitted.
        n_points (int): Number of points in the fit.
    """
    T2: float
    p: float
    residual: float
    envelope: bool = False
    n_points: int = 0

    def to_dict(self):
        return {"T2_ms": self.T2, "p": self.p, "residual": self.residual,
                "envelope": self.envelope, "n_points": self.n_points}


def compressed_exp(t, T2, p):
    return np.exp(-(np.asarray(t) / T2) ** p)


def upper_envelope(t, y):
    """Indices of local maxima of ``y`` (endpoints included)."""
    y = np.asarray(y)
    n = len(y)
    if n < 3:
        return np.arange(n)
    inner = np.flatnonzero((y[1:-1] >= y[:-2]) & (y[1:-1] >= y[2:])) + 1
    return np.unique(np.concatenate([[0], inner, [n - 1]]))


def modulation_depth(t, y):
    """Largest drop of an interior local minimum of ``y`` below the interpolated upper envelope.

    Monotone curves have no interior minima and report zero.
    """
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    if len(y) < 3:
        return 0.0
    minima = np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1
    if not len(minima):
        return 0.0
    idx = upper_envelope(t, y)
    env = np.interp(t[minima], t[idx], y[idx])
    return float(np.max(env - y[minima]))


def fit_t2(time, values, window=None):
    """Fit |L| (or its envelope maxima when modulated) to exp[-(t/T2)^p].

    Args:
        time (ndarray): Times in ms.
        values (ndarray): Coherence values (complex or real).
        window (tuple): Optional (t_min, t_max) restricting the fit.

    Returns:
        T2Fit

    Raises:
        FitError: If the data do not decay or the optimizer fails.
    """
    t = np.asarray(time, dtype=float)
    y = np.abs(np.asarray(values))
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, y = t[keep], y[keep]
    if len(t) < 3:
        raise FitError("need at least 3 points in the fit window")
    if not np.all(np.isfinite(y)):
        raise FitError("coherence contains non-finite values")
    use_envelope = modulation_depth(t, y) > MODULATION_THRESHOLD
    if use_envelope:
        idx = upper_envelope(t, y)
        t, y = t[idx], y[idx]
    if y.min() > 0.9 or len(t) < 3:
        raise FitError(f"coherence does not decay in the fit window (min |L| = {y.min():.3g})")

    below = np.flatnonzero(y < np.exp(-1))
    T0 = t[below[0]] if len(below) else t[-1] * np.sqrt(-1 / np.log(max(y[-1], 1e-12)))
    T0 = max(T0, 1e-9)
    try:
        popt, _ = curve_fit(compressed_exp, t, y, p0=(T0, 2.0), bounds=([1e-12, P_BOUNDS[0]], [np.inf, P_BOUNDS[1]]),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"least-squares fit failed: {exc}") from None
    T2, p = (float(v) for v in popt)
    if not P_BOUNDS[0] * 1.001 < p < P_BOUNDS[1] * 0.999:
        raise FitError(f"stretch exponent ran into its bound (p = {p:.4g}); data are not a compressed exponential")
    resid = float(np.sqrt(np.mean((compressed_exp(t, T2, p) - y) ** 2)))
    return T2Fit(T2, p, resid, use_envelope, len(t))
