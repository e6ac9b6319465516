"""Coupling-tensor models (all outputs in kHz)."""
from dataclasses import dataclass

import numpy as np

from .constants import HBAR_MU0_O4PI, PI2


class SingularGeometry(ValueError):
    pass


def dipole_tensors(r, gamma1, gamma2):
    """Point dipole-dipole tensors for a stack of displacement vectors.

    Args:
        r (ndarray): Displacements in angstrom, shape (..., 3).
        gamma1, gamma2 (float or ndarray): Gyromagnetic ratios in rad/ms/G, broadcast
            against the leading axes of ``r``.

    Returns:
        ndarray: Tensors in kHz with shape (..., 3, 3).
    """
    r = np.asarray(r, dtype=float)
    d2 = np.einsum("...i,...i->...", r, r)
    if np.any(d2 == 0):
        raise SingularGeometry("dipolar coupling at zero distance")
    pref = -np.asarray(gamma1) * np.asarray(gamma2) * HBAR_MU0_O4PI / PI2 / d2 ** 2.5
    outer = 3 * r[..., :, None] * r[..., None, :] - d2[..., None, None] * np.eye(3)
    return pref[..., None, None] * outer


def dipole_tensor(r, gamma1, gamma2):
    """Dipolar interaction tensor between two point magnetic dipoles.

    A = -gamma1 gamma2 (mu0 hbar / 4pi) (3 r r - |r|^2 Id) / |r|^5, returned in kHz.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError("r must be a 3-vector")
    return dipole_tensors(r, gamma1, gamma2)


def point_dipole_hyperfine(bath, gamma_S):
    """Point-dipole hyperfine tensors for every bath spin (central spin at the origin)."""
    if len(bath) == 0:
        return np.zeros((0, 3, 3))
    return dipole_tensors(bath.positions, gamma_S, bath.gammas)


@dataclass(frozen=True)
class DonorModelParams:
    """Kohn-Luttinger envelope parameters of a shallow donor (lengths in nm)."""
    n: float = 0.81
    eta: float = 186.0
    a: float = 2.509
    b: float = 1.443
    a_si: float = 0.543
    k0_factor: float = 0.85

    def __post_init__(self):
        for name in ("n", "eta", "a", "b", "a_si", "k0_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"donor parameter {name} must be positive")

    @property
    def k0(self):
        """Valley wavevector in rad/nm."""
        return self.k0_factor * 2 * np.pi / self.a_si


def kl_envelopes(r, params):
    """Envelopes F1, F3, F5 (nm^-3/2) for valleys along x, y and z.

    The valley axis uses the compressed length n*b, the two transverse axes n*a.
    """
    r = np.asarray(r, dtype=float)
    na, nb = params.n * params.a, params.n * params.b
    norm = np.sqrt(np.pi * na ** 2 * nb)
    sq = r ** 2
    total = sq.sum(axis=-1)
    out = []
    for axis in range(3):
        arg = sq[..., axis] / nb ** 2 + (total - sq[..., axis]) / na ** 2
        out.append(np.exp(-np.sqrt(arg)) / norm)
    return np.stack(out, axis=-1)


def contact_hyperfine_kl(r, gamma_S, gamma_I, params=DonorModelParams()):
    """Fermi-contact hyperfine (kHz) of a nucleus at ``r`` (nm) from a shallow donor.

    A_F = (16 pi / 9) gamma_S gamma_I (mu0 hbar / 4 pi) eta [sum_j F_j cos(k0 r_j)]^2
    """
    r = np.asarray(r, dtype=float)
    env = kl_envelopes(r, params)
    amp = np.sum(env * np.cos(params.k0 * r), axis=-1)
    density = params.eta * amp ** 2 * 1e-3  # nm^-3 -> A^-3
    return 16 * np.pi / 9 * gamma_S * gamma_I * HBAR_MU0_O4PI * density / PI2


def donor_dipolar(r, gamma_S, gamma_I, params=DonorModelParams()):
    """Point-dipole tensor (kHz) beyond n*a from the donor, zero inside (step model)."""
    r = np.asarray(r, dtype=float)
    if np.linalg.norm(r) < params.n * params.a:
        return np.zeros((3, 3))
    return dipole_tensor(r * 10, gamma_S, gamma_I)


def donor_hyperfine(positions, gamma_S, gamma_I, params=DonorModelParams()):
    """Total donor hyperfine tensors (kHz) for positions in angstrom.

    Contact term on the diagonal plus the stepped dipolar term.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    gamma_I = np.broadcast_to(np.asarray(gamma_I, dtype=float), positions.shape[:1])
    r_nm = positions / 10
    contact = contact_hyperfine_kl(r_nm, gamma_S, gamma_I, params)
    out = contact[:, None, None] * np.eye(3)
    far = np.linalg.norm(r_nm, axis=1) >= params.n * params.a
    if np.any(far):
        out[far] += dipole_tensors(positions[far], gamma_S, gamma_I[far])
    return out


def cube_hyperfine(density, nucleus, gamma_S, gamma_I):
    """Dipolar hyperfine tensor (kHz) from a gridded spin density.

    Midpoint summation of rho(r') (3 d d - |d|^2 Id) / |d|^5 over voxels, d = r' - nucleus.
    Voxels closer to the nucleus than half the voxel diagonal are singular and skipped.

    Returns:
        tuple: (tensor with shape (3, 3), number of skipped voxels).
    """
    nucleus = np.asarray(nucleus, dtype=float)
    pts = density.grid_points() - nucleus
    rho = density.data.reshape(-1)
    half_diag = 0.5 * np.linalg.norm(density.voxel.sum(axis=0))
    d2 = np.einsum("ij,ij->i", pts, pts)
    ok = d2 >= half_diag ** 2
    pts, d2, w = pts[ok], d2[ok], rho[ok]
    inv5 = w / d2 ** 2.5
    tensor = 3 * np.einsum("i,ij,ik->jk", inv5, pts, pts) - np.eye(3) * np.sum(inv5 * d2)
    pref = -gamma_S * gamma_I * HBAR_MU0_O4PI / PI2 * density.voxel_volume
    return pref * tensor, int((~ok).sum())


def bath_dipolar_tensors(positions, gammas, pairs):
    """Bath-bath dipolar tensors (kHz) for index pairs with shape (m, 2)."""
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    r = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    return dipole_tensors(r, gammas[pairs[:, 0]], gammas[pairs[:, 1]])
