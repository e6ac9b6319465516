"""Reference solvers used to cross-check the cluster expansion.

The exact solver builds the total Hamiltonian of central spin plus bath with explicit
Kronecker products and propagates with a Pade matrix exponential, so it shares nothing
with the expansion code beyond the primitive spin matrices.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .constants import PI2
from .couplings import dipole_tensor
from .spinops import spin_matrices

MAX_DIM = 4096


class DimensionError(ValueError):
    pass


@dataclass
class ExactModel:
    """Central spin and a complete bath, all couplings explicit.

    Attributes:
        s (float): Central spin.
        D (ndarray): Central self-interaction (kHz, 3x3).
        gamma_S (ndarray): Central field coupling (rad/ms/G, 3x3).
        B (ndarray): Field (G).
        levels (tuple): Indices of |0>, |1> among ascending eigenstates of the free central spin.
        spins (ndarray): Bath spin quantum numbers.
        gammas (ndarray): Bath gyromagnetic ratios (rad/ms/G).
        A (ndarray): Hyperfine tensors (kHz), shape (n, 3, 3).
        P (ndarray): Self-interaction tensors (kHz), shape (n, 3, 3).
        J (ndarray): Bath-bath tensors (kHz), shape (n, n, 3, 3); only i < j is used.
    """
    s: float
    D: np.ndarray
    gamma_S: np.ndarray
    B: np.ndarray
    levels: tuple
    spins: np.ndarray
    gammas: np.ndarray
    A: np.ndarray
    P: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        if self.dim > MAX_DIM:
            raise DimensionError(f"total dimension {self.dim} exceeds {MAX_DIM}")

    @property
    def dim(self):
        d = int(round(2 * self.s + 1))
        for s in self.spins:
            d *= int(round(2 * s + 1))
        return d

    @classmethod
    def from_bath(cls, bath, cs):
        """Build from a BathArray and CentralSpin; J from point dipoles between bath spins."""
        n = len(bath)
        J = np.zeros((n, n, 3, 3))
        for i in range(n):
            for j in range(i + 1, n):
                J[i, j] = dipole_tensor(bath.positions[j] - bath.positions[i], bath.gammas[i], bath.gammas[j])
        return cls(cs.s, cs.D, cs.gamma, cs.B, cs.qubit_indices(), bath.spins, bath.gammas,
                   bath.A, bath.P, J)


def _op(local, slot, dims):
    out = np.ones((1, 1), dtype=np.complex128)
    for k, d in enumerate(dims):
        out = np.kron(out, local if k == slot else np.eye(d))
    return out


def total_hamiltonian(model):
    """H_S + H_SB + H_B in rad/ms, central spin in the first tensor slot."""
    dims = [int(round(2 * model.s + 1))] + [int(round(2 * s + 1)) for s in model.spins]
    cen = spin_matrices(model.s)
    S = [_op(m, 0, dims) for m in (cen.x, cen.y, cen.z)]
    I = []
    for k, s in enumerate(model.spins):
        sm = spin_matrices(s)
        I.append([_op(m, k + 1, dims) for m in (sm.x, sm.y, sm.z)])
    D = np.asarray(model.D) * PI2
    H = np.zeros((np.prod(dims), np.prod(dims)), dtype=np.complex128)
    for a in range(3):
        for b in range(3):
            H += D[a, b] * S[a] @ S[b]
            H += model.B[a] * model.gamma_S[a, b] * S[b]
    for k in range(len(model.spins)):
        A = np.asarray(model.A[k]) * PI2
        P = np.asarray(model.P[k]) * PI2
        for a in range(3):
            H += model.gammas[k] * model.B[a] * I[k][a]
            for b in range(3):
                H += A[a, b] * S[a] @ I[k][b]
                H += P[a, b] * I[k][a] @ I[k][b]
        for j in range(k + 1, len(model.spins)):
            J = np.asarray(model.J[k, j]) * PI2
            for a in range(3):
                for b in range(3):
                    H += J[a, b] * I[k][a] @ I[j][b]
    return H


def _qubit_vectors(model):
    cen = spin_matrices(model.s)
    ops = (cen.x, cen.y, cen.z)
    D = np.asarray(model.D) * PI2
    h = sum(D[a, b] * ops[a] @ ops[b] for a in range(3) for b in range(3))
    h = h + sum(model.B[a] * model.gamma_S[a, b] * ops[b] for a in range(3) for b in range(3))
    _, vecs = np.linalg.eigh(h)
    picked = vecs[:, list(model.levels)].astype(np.complex128)
    for k in range(2):
        col = picked[:, k]
        lead = col[np.argmax(np.round(np.abs(col), 10))]
        picked[:, k] = col * abs(lead) / lead
    return picked


def _rotation(vecs, axis, angle):
    v0, v1 = vecs[:, 0], vecs[:, 1]
    if axis == "x":
        sigma = np.outer(v0, v1.conj()) + np.outer(v1, v0.conj())
    elif axis == "y":
        sigma = -1j * np.outer(v0, v1.conj()) + 1j * np.outer(v1, v0.conj())
    else:
        sigma = np.outer(v0, v0.conj()) - np.outer(v1, v1.conj())
    return expm(-1j * sigma * angle / 2)


def exact_coherence(model, seq, timegrid, psi=None, bath_state=None):
    """Normalized qubit coherence from the full Schrodinger evolution.

    Args:
        model (ExactModel): System.
        seq (PulseSequence): Instantaneous pulses on the qubit levels.
        timegrid (ndarray): Times in ms.
        psi (ndarray): Qubit state in the (|0>, |1>) basis, default (|0>+|1>)/sqrt2.
        bath_state (ndarray): Bath density matrix; fully mixed if None.

    Returns:
        ndarray: Complex L(t) = <R0|rho_S(t)|R1> / <0|rho_S(0)|1>, R the product of pulses.
    """
    H = total_hamiltonian(model)
    dS = int(round(2 * model.s + 1))
    dB = H.shape[0] // dS
    vecs = _qubit_vectors(model)
    psi = np.array([1, 1], dtype=np.complex128) / np.sqrt(2) if psi is None else np.asarray(psi, dtype=np.complex128)
    psi = psi / np.linalg.norm(psi)
    phi = vecs @ psi
    rho_S = np.outer(phi, phi.conj())
    rho_B = np.eye(dB) / dB if bath_state is None else np.asarray(bath_state)
    rho0 = np.kron(rho_S, rho_B)

    rotations = [np.kron(_rotation(vecs, p.axis, p.angle), np.eye(dB)) for p in seq.pulses]
    R_total = np.eye(dS, dtype=np.complex128)
    for p in seq.pulses:
        R_total = _rotation(vecs, p.axis, p.angle) @ R_total
    bra = (R_total @ vecs[:, 0]).conj()
    ket = R_total @ vecs[:, 1]
    norm = psi[0] * np.conj(psi[1])

    out = np.empty(len(timegrid), dtype=np.complex128)
    for n, t in enumerate(timegrid):
        U = expm(-1j * H * seq.segments[0] * t)
        for R, frac in zip(rotations, seq.segments[1:]):
            U = expm(-1j * H * frac * t) @ R @ U
        rho = U @ rho0 @ U.conj().T
        red = np.einsum("ibjb->ij", rho.reshape(dS, dB, dS, dB))
        out[n] = bra @ red @ ket / norm
    return out


def analytical_hahn_eseem(spins, timegrid):
    """Hahn-echo modulation from isolated spin-1/2 nuclei.

    L(t) = prod_i [1 - 2 k_i sin^2(w0 t / 4) sin^2(w1 t / 4)] with w0 = gamma B_z,
    w1 = sqrt((w0 + A_par)^2 + A_perp^2) and k = A_perp^2 / w1^2.

    Args:
        spins (iterable): Tuples (A_par kHz, A_perp kHz, gamma rad/ms/G, B_z G).
        timegrid (ndarray): Times in ms.
    """
    t = np.asarray(timegrid, dtype=float)
    out = np.ones(t.shape)
    for a_par, a_perp, gamma, bz in spins:
        a_par, a_perp = a_par * PI2, a_perp * PI2
        w0 = gamma * bz
        w1_sq = (w0 + a_par) ** 2 + a_perp ** 2
        if w1_sq == 0:
            raise ValueError("degenerate ESEEM input: w_L + A_par = A_perp = 0")
        k = a_perp ** 2 / w1_sq
        w1 = np.sqrt(w1_sq)
        out = out * (1 - 2 * k * np.sin(w0 * t / 4) ** 2 * np.sin(w1 * t / 4) ** 2)
    return out
