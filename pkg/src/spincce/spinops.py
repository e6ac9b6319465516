"""Dense spin-operator algebra on small product spaces."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-10


class InvalidArgument(ValueError):
    """Raised for inputs that violate an operation's preconditions."""


@dataclass(frozen=True)
class SpinMatrixSet:
    """Spin matrices in the Zeeman basis ordered m = s, s-1, ..., -s."""
    s: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    eye: np.ndarray

    @property
    def dim(self):
        return self.eye.shape[0]

    @property
    def vector(self):
        """Stacked (x, y, z) components with shape (3, dim, dim)."""
        return np.stack([self.x, self.y, self.z])


def _check_spin(s):
    twice = 2 * float(s)
    if not np.isfinite(twice) or twice < 0 or abs(twice - round(twice)) > 1e-12:
        raise InvalidArgument(f"spin must be a non-negative half-integer, got {s!r}")
    return round(twice) / 2


@lru_cache(maxsize=32)
def _spin_matrices_cached(s):
    dim = int(round(2 * s + 1))
    m = s - np.arange(dim)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
    ladder = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    plus = np.diag(ladder, k=1).astype(np.complex128)
    minus = plus.conj().T
    x = (plus + minus) / 2
    y = (plus - minus) / 2j
    z = np.diag(m).astype(np.complex128)
    eye = np.eye(dim, dtype=np.complex128)
    for arr in (x, y, z, plus, minus, eye):
        arr.setflags(write=False)
    return SpinMatrixSet(s, x, y, z, plus, minus, eye)


def spin_matrices(s):
    """Return the spin operators for spin quantum number ``s``.

    Args:
        s (float): Non-negative half-integer.

    Returns:
        SpinMatrixSet: Read-only matrices of dimension 2s+1.
    """
    return _spin_matrices_cached(_check_spin(s))


@dataclass(frozen=True)
class ProductSpace:
    """Ordered tensor product of local spin spaces (slot 0 is the slowest index)."""
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if any(d < 1 for d in self.dims):
            raise InvalidArgument(f"local dimensions must be positive, got {self.dims}")

    @classmethod
    def from_spins(cls, spins):
        return cls(tuple(int(round(2 * s + 1)) for s in spins))

    @property
    def total_dim(self):
        return int(np.prod(self.dims, dtype=np.int64))

    def __len__(self):
        return len(self.dims)


def embed(op, space, slot):
    """Embed a local operator into ``space`` acting on ``slot``.

    Works on stacks of operators as well: any leading axes of ``op`` are kept.
    """
    op = np.asarray(op)
    if not 0 <= slot < len(space.dims):
        raise InvalidArgument(f"slot {slot} out of range for {len(space.dims)} slots")
    d = space.dims[slot]
    if op.shape[-2:] != (d, d):
        raise InvalidArgument(f"operator shape {op.shape[-2:]} does not match local dimension {d}")
    left = int(np.prod(space.dims[:slot], dtype=np.int64))
    right = int(np.prod(space.dims[slot + 1:], dtype=np.int64))
    out = np.kron(np.eye(left), op)
    return np.kron(out, np.eye(right))


def embedded_spin_vectors(spins, space=None):
    """Embedded (x, y, z) operators for each spin of a product space.

    Returns:
        ndarray with shape (n, 3, D, D), read-only (cached per spin tuple).
    """
    return _embedded_cached(tuple(float(s) for s in spins))


@lru_cache(maxsize=64)
def _embedded_cached(spins):
    space = ProductSpace.from_spins(spins)
    D = space.total_dim
    out = np.empty((len(spins), 3, D, D), dtype=np.complex128)
    for k, s in enumerate(spins):
        out[k] = embed(spin_matrices(s).vector, space, k)
    out.setflags(write=False)
    return out


def is_hermitian(h, tol=HERMITIAN_TOL):
    h = np.asarray(h)
    return bool(np.all(np.abs(h - np.swapaxes(h, -1, -2).conj()) <= tol * max(1.0, np.abs(h).max(initial=0.0))))


def eigh_hermitian(h, tol=HERMITIAN_TOL):
    """Eigendecomposition of (a stack of) Hermitian matrices after a Hermiticity check."""
    h = np.asarray(h, dtype=np.complex128)
    if not is_hermitian(h, tol):
        raise InvalidArgument("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(h)


def propagate_eigen(evals, evecs, t):
    """exp(-i H t) from an eigendecomposition, vectorised over ``t``.

    Args:
        evals (ndarray): Eigenvalues with shape (..., D) in rad/ms.
        evecs (ndarray): Eigenvectors with shape (..., D, D).
        t (float or ndarray): Times in ms with shape (T,).

    Returns:
        ndarray: Propagators with shape (..., T, D, D), or (..., D, D) for scalar ``t``.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    phases = np.exp(-1j * evals[..., None, :] * t[:, None])  # (..., T, D)
    v = evecs[..., None, :, :]
    u = (v * phases[..., None, :]) @ np.swapaxes(v, -1, -2).conj()
    return u[..., 0, :, :] if scalar else u


def expm_hermitian(h, t):
    """Return exp(-i H t) for Hermitian ``H`` (rad/ms) and time ``t`` (ms)."""
    evals, evecs = eigh_hermitian(h)
    return propagate_eigen(evals, evecs, t)


def mixed_state(space):
    """Fully mixed density matrix Id / total_dim."""
    if not isinstance(space, ProductSpace):
        space = ProductSpace(tuple(space))
    D = space.total_dim
    return np.eye(D, dtype=np.complex128) / D


def product_state(vectors):
    """Kronecker product of local state vectors."""
    out = np.ones(1, dtype=np.complex128)
    for v in vectors:
        out = np.kron(out, np.asarray(v, dtype=np.complex128))
    return out


def zeeman_state(s, m):
    """Basis vector |s, m> in the Zeeman ordering m = s..-s."""
    s = _check_spin(s)
    dim = int(round(2 * s + 1))
    idx = s - m
    if abs(idx - round(idx)) > 1e-9 or not 0 <= round(idx) < dim:
        raise InvalidArgument(f"m={m} is not a projection of spin {s}")
    v = np.zeros(dim, dtype=np.complex128)
    v[int(round(idx))] = 1
    return v


def is_density_matrix(rho, tol=1e-10):
    rho = np.asarray(rho)
    if not is_hermitian(rho, tol):
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -tol)
