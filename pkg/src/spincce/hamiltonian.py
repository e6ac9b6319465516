"""Central-spin eigenstructure and cluster Hamiltonians.

Coupling tensors are stored in kHz and converted to rad/ms here. The Zeeman term of
every spin is ``B . gamma . S`` with the sign convention of the tabulated gyromagnetic
ratios.
"""
from dataclasses import dataclass, field

import numpy as np

from .constants import PI2
from .couplings import dipole_tensors
from .spinops import InvalidArgument, ProductSpace, embedded_spin_vectors, spin_matrices

DEGENERACY_THRESHOLD = 1e-6  # rad/ms


class DegeneracyError(ValueError):
    """Perturbative correction requested with a (near-)degenerate central-spin spectrum."""


def _as_tensor(value):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return value * np.eye(3)
    if value.shape == (3,):
        return np.diag(value)
    if value.shape != (3, 3):
        raise InvalidArgument(f"expected a scalar, 3-vector or 3x3 tensor, got shape {value.shape}")
    return value


def fix_phase(vectors):
    """Make the largest-magnitude component of each column real and positive."""
    v = np.array(vectors, dtype=np.complex128)
    mags = np.round(np.abs(v), 10)
    idx = np.argmax(mags, axis=0)
    lead = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(lead) / np.where(lead == 0, 1, lead))[None, :]


@dataclass
class CentralSpin:
    """Central spin with self-interaction ``D`` (kHz) and field coupling ``gamma``.

    Attributes:
        s (float): Spin quantum number.
        D (ndarray): 3x3 self-interaction tensor in kHz.
        gamma (ndarray): 3x3 field-coupling tensor in rad/ms/G (scalars are isotropic).
        B (ndarray): Magnetic field in G.
        levels (tuple): Eigenstate indices (ascending energy) used as |0> and |1>.
            Defaults to the two lowest levels.
        sz_levels (tuple): Alternatively select |0>, |1> as the eigenstates whose
            <Sz> is closest to these values.
    """
    s: float = 0.5
    D: np.ndarray = 0.0
    gamma: np.ndarray = 0.0
    B: np.ndarray = (0.0, 0.0, 0.0)
    levels: tuple = None
    sz_levels: tuple = None

    def __post_init__(self):
        self.D = _as_tensor(self.D)
        self.gamma = _as_tensor(self.gamma)
        self.B = np.asarray(self.B, dtype=float).reshape(3)
        if np.abs(self.D - self.D.T).max() > 1e-9 * max(1.0, np.abs(self.D).max()):
            raise InvalidArgument("D tensor must be symmetric")
        spin_matrices(self.s)
        if self.levels is not None:
            lv = tuple(int(i) for i in self.levels)
            if len(lv) != 2 or lv[0] == lv[1] or not all(0 <= i < self.dim for i in lv):
                raise InvalidArgument(f"qubit levels {self.levels} invalid for spin {self.s}")
            self.levels = lv

    @classmethod
    def from_zfs(cls, s, D=0.0, E=0.0, **kwargs):
        """Central spin with H_zfs = D Sz^2 + E (Sx^2 - Sy^2); D and E in kHz."""
        return cls(s=s, D=np.diag([E, -E, D]), **kwargs)

    @property
    def dim(self):
        return int(round(2 * self.s + 1))

    @property
    def ops(self):
        return spin_matrices(self.s).vector

    def hamiltonian(self):
        """S.D.S + B.gamma.S in rad/ms."""
        S = self.ops
        D = self.D * PI2
        h = np.einsum("ab,axy,byz->xz", D, S, S)
        h = h + np.einsum("a,ab,bxy->xy", self.B, self.gamma, S)
        return h

    def eigensystem(self):
        return central_eigensystem(self)

    def qubit_indices(self):
        if self.sz_levels is not None:
            _, vecs = self.eigensystem()
            sz = np.real(np.einsum("ia,ij,ja->a", vecs.conj(), self.ops[2], vecs))
            picks = []
            for target in self.sz_levels:
                order = np.argsort(np.abs(sz - target), kind="stable")
                picks.append(int(next(i for i in order if i not in picks)))
            return tuple(picks)
        if self.levels is not None:
            return self.levels
        if self.dim < 2:
            raise InvalidArgument("spin-0 central spin has no qubit levels")
        return (0, 1)

    def qubit(self):
        """Energies (rad/ms) and state vectors of the two qubit levels."""
        energies, vecs = self.eigensystem()
        i0, i1 = self.qubit_indices()
        return energies[[i0, i1]], vecs[:, [i0, i1]]

    def projected_spin(self):
        """<alpha|S|beta> for all eigenstates, shape (3, dim, dim)."""
        _, vecs = self.eigensystem()
        return np.einsum("ia,kij,jb->kab", vecs.conj(), self.ops, vecs)


def central_eigensystem(cs):
    """Full diagonalization of the free central-spin Hamiltonian.

    Returns:
        tuple: (energies in rad/ms ascending, eigenvectors as columns, phase-fixed).
    """
    key = (cs.s, cs.D.tobytes(), cs.gamma.tobytes(), cs.B.tobytes())
    cached = getattr(cs, "_eig_cache", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    energies, vecs = np.linalg.eigh(cs.hamiltonian())
    result = (energies, fix_phase(vecs))
    object.__setattr__(cs, "_eig_cache", (key, result))
    return result


class BathState:
    """Initial state of every bath spin: None (fully mixed) or a normalized vector."""

    def __init__(self, states):
        out = []
        for st in states:
            if st is None:
                out.append(None)
                continue
            v = np.asarray(st, dtype=np.complex128)
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise InvalidArgument("pure bath states must be normalized")
            out.append(v)
        self.states = out

    @classmethod
    def mixed(cls, n):
        return cls([None] * n)

    @classmethod
    def from_projections(cls, spins, projections):
        """Pure Zeeman states |m> for each spin."""
        states = []
        for s, m in zip(spins, projections):
            dim = int(round(2 * s + 1))
            v = np.zeros(dim, dtype=np.complex128)
            v[int(round(s - m))] = 1
            states.append(v)
        return cls(states)

    def __len__(self):
        return len(self.states)

    @property
    def is_mixed(self):
        return all(st is None for st in self.states)

    def mean_spins(self, spins):
        """<I_a> = Tr[rho_a I_a] for every spin, shape (n, 3)."""
        out = np.zeros((len(self.states), 3))
        for k, (s, st) in enumerate(zip(spins, self.states)):
            if st is not None:
                out[k] = np.real(np.einsum("i,kij,j->k", st.conj(), spin_matrices(s).vector, st))
        return out

    def cluster_factor(self, cluster, spins):
        """Matrix K with rho_C = K K^dagger for the product state of ``cluster``."""
        K = np.ones((1, 1), dtype=np.complex128)
        for i in cluster:
            st = self.states[i]
            if st is None:
                d = int(round(2 * spins[i] + 1))
                local = np.eye(d) / np.sqrt(d)
            else:
                local = st[:, None]
            K = np.kron(K, local)
        return K

    def cluster_density(self, cluster, spins):
        K = self.cluster_factor(cluster, spins)
        return K @ K.conj().T


@dataclass
class MeanField:
    """Precomputed mean fields of a bath state (all in kHz).

    Attributes:
        spins_mean (ndarray): <I_a>, shape (n, 3).
        bath_field (ndarray): sum over a != i of J_ia <I_a>, shape (n, 3).
        hyperfine_field (ndarray): A_a <I_a> per spin, shape (n, 3).
    """
    spins_mean: np.ndarray
    bath_field: np.ndarray
    hyperfine_field: np.ndarray
    active: bool = True

    @classmethod
    def from_state(cls, bath, state, chunk=512):
        n = len(bath)
        spins = bath.spins
        mean = state.mean_spins(spins) if state is not None else np.zeros((n, 3))
        if not np.any(mean):
            z = np.zeros((n, 3))
            return cls(mean, z, z.copy(), active=False)
        field = np.zeros((n, 3))
        pos, gam = bath.positions, bath.gammas
        src = np.flatnonzero(np.any(mean != 0, axis=1))
        for lo in range(0, n, chunk):
            rows = np.arange(lo, min(n, lo + chunk))
            r = pos[src][None, :, :] - pos[rows][:, None, :]
            self_mask = rows[:, None] == src[None, :]
            r = np.where(self_mask[..., None], 1.0, r)
            J = dipole_tensors(r, gam[rows][:, None], gam[src][None, :])
            J[self_mask] = 0
            field[rows] = np.einsum("iaxy,ay->ix", J, mean[src])
        hf = np.einsum("axy,ay->ax", bath.A, mean)
        return cls(mean, field, hf)

    def cluster_bath_field(self, cluster, bath):
        """sum over a outside ``cluster`` of J_ia <I_a> for each i in the cluster."""
        cluster = list(cluster)
        out = self.bath_field[cluster].copy()
        if len(cluster) > 1 and self.active:
            pos, gam = bath.positions[cluster], bath.gammas[cluster]
            for a, i in enumerate(cluster):
                for b, j in enumerate(cluster):
                    if i != j and np.any(self.spins_mean[j]):
                        out[a] -= dipole_tensors(pos[b] - pos[a], gam[a], gam[b]) @ self.spins_mean[j]
        return out

    def cluster_hyperfine_field(self, cluster):
        """sum over a outside ``cluster`` of A_a <I_a>."""
        total = self.hyperfine_field.sum(axis=0)
        return total - self.hyperfine_field[list(cluster)].sum(axis=0)


@dataclass
class EffectiveHamiltonian:
    """Bath Hamiltonian conditioned on qubit level ``alpha`` (rad/ms).

    ``matrix`` excludes the central-spin energy, kept separately in ``energy`` so it can
    enter propagators as an exact scalar phase.
    """
    alpha: int
    matrix: np.ndarray
    energy: float
    mean_field: dict = field(default_factory=dict)

    @property
    def full(self):
        return self.matrix + self.energy * np.eye(self.matrix.shape[0])


def _bilinear(M, left, right):
    return np.einsum("ab,axy,byz->xz", M, left, right)


def _linear(v, ops):
    return np.einsum("a,axy->xy", v, ops)


class PerturbationFactors:
    """Second-order couplings via the other central-spin levels.

    For level alpha and every other level beta, stores ``left[i, beta] = <alpha|S|beta> A_i``
    and ``right[i, beta] = <beta|S|alpha> A_i`` (rad/ms) and the denominators
    ``E_alpha - E_beta``; then T_ij = sum_beta left[i, beta] (x) right[j, beta] / denom[beta].
    """

    def __init__(self, cs, A, alpha_level, threshold=DEGENERACY_THRESHOLD):
        energies, _ = cs.eigensystem()
        proj = cs.projected_spin()  # (3, d, d)
        others = [b for b in range(cs.dim) if b != alpha_level]
        denom = energies[alpha_level] - energies[others]
        if np.any(np.abs(denom) < threshold):
            raise DegeneracyError(
                "central-spin levels are degenerate within "
                f"{threshold:g} rad/ms; second-order corrections are invalid, use gCCE instead")
        A = np.asarray(A, dtype=float) * PI2
        s_ab = proj[:, alpha_level, others].T  # (nb, 3): <alpha|S|beta>
        s_ba = proj[:, others, alpha_level].T  # (nb, 3): <beta|S|alpha>
        self.left = np.einsum("bc,ica->iba", s_ab, A)
        self.right = np.einsum("bc,ica->iba", s_ba, A)
        self.denom = denom

    def tensor(self, i, j):
        return np.einsum("ba,bc,b->ac", self.left[i], self.right[j], 1 / self.denom)


def pt2_tensor(i, j, A, cs, alpha, threshold=DEGENERACY_THRESHOLD):
    """Second-order tensor T_ij (rad/ms) for bath spins ``i``, ``j`` and qubit level ``alpha``.

    Args:
        i, j (int): Bath spin indices into ``A``.
        A (ndarray): Hyperfine tensors in kHz, shape (n, 3, 3).
        cs (CentralSpin): Central spin.
        alpha (int): Qubit branch, 0 or 1.
    """
    level = cs.qubit_indices()[alpha]
    return PerturbationFactors(cs, A, level, threshold).tensor(i, j)


def _check_tensors(bath, cluster):
    for i in cluster:
        if not np.all(np.isfinite(bath.A[i])) or not np.all(np.isfinite(bath.P[i])):
            raise InvalidArgument(f"missing coupling tensors for bath spin {i}")


def _bath_terms(cluster, bath, B, ops, mean_field, gcce):
    """Cluster bath Hamiltonian: quadrupole, Zeeman, intra-cluster J and J mean field."""
    cluster = list(cluster)
    D = ops.shape[-1]
    h = np.zeros((D, D), dtype=np.complex128)
    gam = bath.gammas[cluster]
    pos = bath.positions[cluster]
    for a, i in enumerate(cluster):
        h += _bilinear(bath.P[i] * PI2, ops[a], ops[a])
        h += _linear(gam[a] * B, ops[a])
    if len(cluster) > 1:
        for a in range(len(cluster)):
            for b in range(a + 1, len(cluster)):
                J = dipole_tensors(pos[b] - pos[a], gam[a], gam[b]) * PI2
                h += _bilinear(J, ops[a], ops[b])
    if mean_field is not None and mean_field.active:
        fields = mean_field.cluster_bath_field(cluster, bath) * PI2
        for a in range(len(cluster)):
            h += _linear(fields[a], ops[a])
    return h


def bath_hamiltonian(cluster, bath, B, mean_field=None):
    """Bath-only Hamiltonian of ``cluster`` (rad/ms): quadrupole, Zeeman, J and J mean field."""
    cluster = tuple(cluster)
    spins = bath.spins[list(cluster)]
    ops = embedded_spin_vectors(spins)
    return _bath_terms(cluster, bath, np.asarray(B, dtype=float), ops, mean_field, False)


def conventional_cluster_hamiltonian(cluster, bath, cs, alpha, mean_field=None,
                                     second_order=False, self_terms=True, pt=None):
    """Effective cluster Hamiltonian for qubit branch ``alpha``.

    Includes the projected hyperfine <alpha|S|alpha> A_i I_i, quadrupole and Zeeman terms,
    intra-cluster dipolar couplings (each pair once), optional second-order tensors over
    all ordered pairs, and mean-field couplings to spins outside the cluster.

    Args:
        cluster (tuple): Bath spin indices.
        bath (BathArray): Bath with hyperfine tensors.
        cs (CentralSpin): Central spin.
        alpha (int): Qubit branch, 0 or 1.
        mean_field (MeanField): Mean fields of the bath state; None for a fully mixed bath.
        second_order (bool): Include T_ij corrections.
        self_terms (bool): Include the i == j corrections when ``second_order`` is set.
        pt (PerturbationFactors): Optional precomputed factors for this branch.

    Returns:
        EffectiveHamiltonian
    """
    cluster = tuple(int(i) for i in cluster)
    _check_tensors(bath, cluster)
    energies, vecs = cs.eigensystem()
    level = cs.qubit_indices()[alpha]
    spin_vec = np.real(np.einsum("i,kij,j->k", vecs[:, level].conj(), cs.ops, vecs[:, level]))
    spins = bath.spins[list(cluster)]
    ops = embedded_spin_vectors(spins)
    h = _bath_terms(cluster, bath, cs.B, ops, mean_field, False)
    for a, i in enumerate(cluster):
        h += _linear(spin_vec @ bath.A[i] * PI2, ops[a])
    record = {}
    if mean_field is not None and mean_field.active:
        const = spin_vec @ mean_field.cluster_hyperfine_field(cluster) * PI2
        h += const * np.eye(h.shape[0])
        record["central"] = const
    if second_order:
        if pt is None:
            pt = PerturbationFactors(cs, bath.A, level)
        for a, i in enumerate(cluster):
            for b, j in enumerate(cluster):
                if i == j and not self_terms:
                    continue
                h += _bilinear(pt.tensor(i, j), ops[a], ops[b])
        if mean_field is not None and mean_field.active:
            outside = np.ones(len(bath), dtype=bool)
            outside[list(cluster)] = False
            # sum_{a outside} <beta|S|alpha> A_a <I_a> for each beta
            w = np.einsum("iba,ia->b", pt.right[outside], mean_field.spins_mean[outside])
            for a, i in enumerate(cluster):
                coeff = np.einsum("ba,b,b->a", pt.left[i], w, 1 / pt.denom)
                h += _linear(2 * np.real(coeff), ops[a])
    return EffectiveHamiltonian(alpha, h, float(energies[level]), record)


def gcce_cluster_hamiltonian(cluster, bath, cs, mean_field=None):
    """Cluster Hamiltonian including the central spin (slot 0) in rad/ms."""
    cluster = tuple(int(i) for i in cluster)
    _check_tensors(bath, cluster)
    spins = [cs.s] + list(bath.spins[list(cluster)])
    space = ProductSpace.from_spins(spins)
    ops = embedded_spin_vectors(spins, space)
    S, bath_ops = ops[0], ops[1:]
    h = np.kron(cs.hamiltonian(), np.eye(space.total_dim // cs.dim))
    for a, i in enumerate(cluster):
        h += _bilinear(bath.A[i] * PI2, S, bath_ops[a])
    h += _bath_terms(cluster, bath, cs.B, bath_ops, mean_field, True)
    if mean_field is not None and mean_field.active:
        h += _linear(mean_field.cluster_hyperfine_field(cluster) * PI2, S)
    return h
