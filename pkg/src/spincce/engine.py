"""Cluster-correlation expansion of the central-spin coherence and bath noise."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .clusters import build_graph, enumerate_clusters
from .constants import PI2
from .hamiltonian import (BathState, MeanField, PerturbationFactors, bath_hamiltonian,
                          conventional_cluster_hamiltonian, gcce_cluster_hamiltonian)
from .pulses import PulseSequence
from .spinops import InvalidArgument, propagate_eigen, spin_matrices
from .structure import filter_r_bath

logger = logging.getLogger(__name__)

DIVISION_GUARD = 1e-10
_CHUNK_ELEMENTS = 2 ** 22


@dataclass
class CoherenceCurve:
    """Normalized coherence L(t).

    Attributes:
        time (ndarray): Time points in ms.
        values (ndarray): Complex coherence.
        flagged (ndarray): True where a guarded division occurred.
        normalization (complex): Divisor applied so that L(0) = 1.
        free_phase (ndarray): Contribution of the empty cluster (free central-spin evolution).
        info (dict): Run metadata.
    """
    time: np.ndarray
    values: np.ndarray
    flagged: np.ndarray = None
    normalization: complex = 1.0
    free_phase: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.flagged is None:
            self.flagged = np.zeros(self.time.shape, dtype=bool)

    @property
    def magnitude(self):
        return np.abs(self.values)


@dataclass
class AutocorrCurve:
    """Overhauser-field autocorrelation in kHz^2."""
    time: np.ndarray
    values: np.ndarray
    info: dict = field(default_factory=dict)


@dataclass
class CCEConfig:
    """Settings for one expansion run.

    Attributes:
        order (int): Maximum cluster size.
        r_bath (float): Bath cutoff radius in angstrom (None keeps every spin).
        r_dipole (float): Cluster edge cutoff in angstrom.
        method (str): ``'conventional'`` or ``'gcce'``.
        pulses (PulseSequence): Decoupling sequence.
        timegrid (ndarray): Total evolution times in ms.
        second_order (bool): Second-order corrections in conventional CCE.
        self_terms (bool): Include i == j second-order terms.
        magnitude (bool): Divide out the free central-spin evolution.
        psi (ndarray): Initial central state in the qubit basis (gCCE), default (|0>+|1>)/sqrt2.
        workers (int): Threads used to evaluate cluster batches.
    """
    order: int = 2
    r_bath: float = None
    r_dipole: float = 6.0
    method: str = "conventional"
    pulses: PulseSequence = field(default_factory=PulseSequence.hahn)
    timegrid: np.ndarray = field(default_factory=lambda: np.linspace(0, 1, 101))
    second_order: bool = False
    self_terms: bool = True
    magnitude: bool = False
    psi: np.ndarray = None
    workers: int = 1

    def __post_init__(self):
        if self.order < 1:
            raise InvalidArgument("order must be at least 1")
        if self.method not in ("conventional", "gcce"):
            raise InvalidArgument(f"unknown method {self.method!r}")
        if self.method == "conventional" and not self.pulses.conventional_compatible:
            raise InvalidArgument("conventional CCE supports only pi pulses; use gcce")
        self.timegrid = np.asarray(self.timegrid, dtype=float)


# ---------------------------------------------------------------------------
# propagators

def _segment_eigs(H):
    H = np.asarray(H, dtype=np.complex128)
    return np.linalg.eigh(H)


def _apply_segment(evals, evecs, W, times):
    """Apply exp(-i H times) to state blocks W with shape (c, T, D, r)."""
    phase = np.exp(-1j * evals[:, None, :] * times[None, :, None])  # (c, T, D)
    V = evecs[:, None]
    return V @ (phase[..., None] * (np.swapaxes(V, -1, -2).conj() @ W))


def conventional_propagators(H0, H1, seq, t):
    """Propagators U0, U1 of the two qubit branches.

    Each pi pulse swaps the branch; free segments run in time order and the branch of
    the last segment is alpha for even and beta for odd pulse counts.

    Args:
        H0, H1 (EffectiveHamiltonian or ndarray): Branch Hamiltonians in rad/ms.
        seq (PulseSequence): Pi-pulse sequence.
        t (float or ndarray): Total times in ms.

    Returns:
        tuple: (U0, U1) with shape (T, D, D), or (D, D) for scalar ``t``.
    """
    if not seq.conventional_compatible:
        raise InvalidArgument("conventional propagators require pi pulses only")
    mats = [getattr(h, "full", h) for h in (H0, H1)]
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    eigs = [np.linalg.eigh(np.asarray(m, dtype=np.complex128)) for m in mats]
    out = []
    for alpha in (0, 1):
        D = mats[0].shape[0]
        U = np.broadcast_to(np.eye(D, dtype=np.complex128), (len(t_arr), D, D))
        for k, frac in enumerate(seq.segments):
            branch = alpha if k % 2 == 0 else 1 - alpha
            U = propagate_eigen(*eigs[branch], frac * t_arr) @ U
        out.append(U[0] if np.ndim(t) == 0 else U)
    return tuple(out)


def qubit_pauli(vecs, axis):
    """Qubit Pauli operator embedded in the full central-spin space.

    Args:
        vecs (ndarray): Columns |0>, |1> with shape (d, 2).
    """
    v0, v1 = vecs[:, 0], vecs[:, 1]
    if axis == "x":
        return np.outer(v0, v1.conj()) + np.outer(v1, v0.conj())
    if axis == "y":
        return -1j * np.outer(v0, v1.conj()) + 1j * np.outer(v1, v0.conj())
    if axis == "z":
        return np.outer(v0, v0.conj()) - np.outer(v1, v1.conj())
    raise InvalidArgument(f"unknown axis {axis!r}")


def pulse_rotation(vecs, axis, angle):
    """exp(-i sigma angle / 2) acting on the qubit subspace, identity elsewhere."""
    sigma = qubit_pauli(vecs, axis)
    proj = vecs @ vecs.conj().T
    d = vecs.shape[0]
    return (np.eye(d) - proj) + np.cos(angle / 2) * proj - 1j * np.sin(angle / 2) * sigma


def gcce_propagator(H, seq, t, vecs):
    """Full propagator of a central-spin + cluster Hamiltonian under ``seq``.

    Args:
        H (ndarray): Hamiltonian with the central spin in slot 0 (rad/ms).
        seq (PulseSequence): Pulse sequence.
        t (float or ndarray): Total times in ms.
        vecs (ndarray): Qubit states |0>, |1> of the central spin, shape (d, 2).
    """
    H = np.asarray(H, dtype=np.complex128)
    D, dS = H.shape[0], vecs.shape[0]
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    evals, evecs = np.linalg.eigh(H)
    U = propagate_eigen(evals, evecs, seq.segments[0] * t_arr)
    for pulse, frac in zip(seq.pulses, seq.segments[1:]):
        R = np.kron(pulse_rotation(vecs, pulse.axis, pulse.angle), np.eye(D // dS))
        U = propagate_eigen(evals, evecs, frac * t_arr) @ (R @ U)
    return U[0] if np.ndim(t) == 0 else U


def _total_rotation(seq, vecs):
    R = np.eye(vecs.shape[0], dtype=np.complex128)
    for p in seq.pulses:
        R = pulse_rotation(vecs, p.axis, p.angle) @ R
    return R


# ---------------------------------------------------------------------------
# per-cluster coherence (batched)

def _group_by_dims(clusters, spins):
    """Group clusters by the tuple of their spin multiplicities so each batch stacks cleanly."""
    groups = {}
    for c in clusters:
        c = tuple(c)
        dims = tuple(int(round(2 * spins[i] + 1)) for i in c)
        groups.setdefault(dims, []).append(c)
    return sorted(groups.items(), key=lambda kv: (len(kv[0]), kv[0]))


def _chunks(n, per_item):
    size = max(1, _CHUNK_ELEMENTS // max(1, per_item))
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def _conventional_batch(H0, H1, E0, E1, K, seq, t):
    """Coherence Tr[U0 rho U1^dagger] for a batch of clusters.

    Args:
        H0, H1 (ndarray): (c, D, D) branch Hamiltonians without central energies.
        E0, E1 (float): Central-spin energies of the two qubit levels.
        K (ndarray): (c, D, r) factors of the initial cluster density matrices.
    """
    eigs = [_segment_eigs(H0), _segment_eigs(H1)]
    energies = (E0, E1)
    c, D, r = K.shape
    W = [np.broadcast_to(K[:, None], (c, len(t), D, r)).copy() for _ in range(2)]
    phase = np.zeros((2, len(t)))
    for k, frac in enumerate(seq.segments):
        for alpha in (0, 1):
            branch = alpha if k % 2 == 0 else 1 - alpha
            W[alpha] = _apply_segment(*eigs[branch], W[alpha], frac * t)
            phase[alpha] += energies[branch] * frac * t
    value = np.einsum("ctdr,ctdr->ct", W[0], W[1].conj())
    return value * np.exp(-1j * (phase[0] - phase[1]))[None, :]


def cluster_coherence_conventional(H0, H1, rho, seq, timegrid):
    """L_C(t) = Tr[U0(t) rho U1(t)^dagger] for one cluster."""
    m0, m1 = (getattr(h, "matrix", h) for h in (H0, H1))
    E0, E1 = (getattr(h, "energy", 0.0) for h in (H0, H1))
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != m0.shape or m0.shape != m1.shape:
        raise InvalidArgument("dimension mismatch between Hamiltonians and density matrix")
    evals, evecs = np.linalg.eigh(rho)
    K = evecs * np.sqrt(np.clip(evals, 0, None))[None, :]
    t = np.asarray(timegrid, dtype=float)
    return _conventional_batch(m0[None], m1[None], E0, E1, K[None], seq, t)[0]


def _gcce_batch(H, K, psi, vecs, seq, t):
    """<R0| Tr_B[U rho_{C+S} U^dagger] |R1> for a batch of clusters (unnormalized)."""
    c, dB, r = K.shape
    dS = vecs.shape[0]
    evals, evecs = _segment_eigs(H)
    psi_full = vecs @ psi
    W0 = np.einsum("s,cbr->csbr", psi_full, K).reshape(c, dS * dB, r)
    W = np.broadcast_to(W0[:, None], (c, len(t), W0.shape[1], r)).copy()
    W = _apply_segment(evals, evecs, W, seq.segments[0] * t)
    eye_b = np.eye(dB)
    for pulse, frac in zip(seq.pulses, seq.segments[1:]):
        R = np.kron(pulse_rotation(vecs, pulse.axis, pulse.angle), eye_b)
        W = R @ W
        W = _apply_segment(evals, evecs, W, frac * t)
    Rt = _total_rotation(seq, vecs)
    i_vec, j_vec = Rt @ vecs[:, 0], Rt @ vecs[:, 1]
    W = W.reshape(c, len(t), dS, dB, r)
    X = np.einsum("s,ctsbr->ctbr", i_vec.conj(), W)
    Y = np.einsum("s,ctsbr->ctbr", j_vec.conj(), W)
    return np.einsum("ctbr,ctbr->ct", X, Y.conj())


def _default_psi(psi):
    if psi is None:
        return np.array([1, 1], dtype=np.complex128) / np.sqrt(2)
    psi = np.asarray(psi, dtype=np.complex128)
    return psi / np.linalg.norm(psi)


def _gcce_norm(psi):
    return psi[0] * np.conj(psi[1])


def cluster_coherence_gcce(H, rho_C, cs, seq, timegrid, psi=None):
    """Normalized gCCE coherence of one cluster.

    Args:
        H (ndarray): Cluster Hamiltonian from :func:`gcce_cluster_hamiltonian`.
        rho_C (ndarray): Initial bath density matrix of the cluster.
        cs (CentralSpin): Central spin providing the qubit levels.
        seq (PulseSequence): Pulse sequence.
        timegrid (ndarray): Times in ms.
        psi (ndarray): Central state in the qubit basis, default (|0>+|1>)/sqrt2.
    """
    psi = _default_psi(psi)
    _, vecs = cs.qubit()
    rho_C = np.asarray(rho_C, dtype=np.complex128).reshape(H.shape[0] // cs.dim, -1)
    evals, evecs = np.linalg.eigh(rho_C)
    K = evecs * np.sqrt(np.clip(evals, 0, None))[None, :]
    t = np.asarray(timegrid, dtype=float)
    return _gcce_batch(np.asarray(H)[None], K[None], psi, vecs, seq, t)[0] / _gcce_norm(psi)


# ---------------------------------------------------------------------------
# expansion

def cce_expand(contributions, cluster_set, empty=None, guard=DIVISION_GUARD):
    """Combine raw cluster coherences into the CCE product.

    Irreducible contributions are L~_C = L_C / (L~_empty * prod L~_C' for C' proper
    subclusters of C in the set). Divisors below ``guard`` in magnitude set the
    contribution to 1 at that point and flag it.

    Args:
        contributions (dict): Cluster tuple -> raw L_C curve.
        cluster_set (ClusterSet): The clusters of the expansion.
        empty (ndarray): Coherence of the empty cluster (free evolution); 1 if None.

    Returns:
        tuple: (L(t), flagged mask, dict of irreducible contributions).
    """
    clusters = list(cluster_set)
    if not clusters and empty is None:
        raise InvalidArgument("empty expansion without a time grid")
    shape = np.shape(empty) if empty is not None else np.shape(contributions[clusters[0]])
    tilde_empty = np.ones(shape, dtype=np.complex128) if empty is None else np.asarray(empty, dtype=np.complex128)
    tilde = {}
    flagged = np.zeros(shape, dtype=bool)
    for c in clusters:
        divisor = tilde_empty.copy()
        for sub in cluster_set.subclusters(c):
            divisor = divisor * tilde[sub]
        small = np.abs(divisor) < guard
        value = np.asarray(contributions[c], dtype=np.complex128) / np.where(small, 1, divisor)
        value[small] = 1
        flagged |= small
        tilde[c] = value
    total = tilde_empty.copy()
    for c in clusters:
        total = total * tilde[c]
    return total, flagged, tilde




def _cluster_hamiltonians(clusters, bath, cs, config, mean_field, pts):
    if config.method == "conventional":
        H0 = np.array([conventional_cluster_hamiltonian(c, bath, cs, 0, mean_field, config.second_order,
                                                        config.self_terms, pts[0]).matrix for c in clusters])
        H1 = np.array([conventional_cluster_hamiltonian(c, bath, cs, 1, mean_field, config.second_order,
                                                        config.self_terms, pts[1]).matrix for c in clusters])
        return H0, H1
    return np.array([gcce_cluster_hamiltonian(c, bath, cs, mean_field) for c in clusters]), None


def cluster_curves(clusters, bath, cs, config, state=None, mean_field=None):
    """Raw coherence L_C(t) of every cluster in ``clusters`` (each a tuple of bath indices).

    The empty tuple is allowed and gives the free evolution of the central spin.
    Clusters are evaluated in batches of equal size; batches may run on a thread pool.
    """
    clusters = [tuple(int(i) for i in c) for c in clusters]
    t = config.timegrid
    spins = bath.spins
    if state is None:
        state = BathState.mixed(len(bath))
    if mean_field is None:
        mean_field = MeanField.from_state(bath, state)
    pts = (None, None)
    if config.method == "conventional" and config.second_order:
        levels = cs.qubit_indices()
        pts = tuple(PerturbationFactors(cs, bath.A, lv) for lv in levels)
    energies, vecs = cs.qubit()
    psi = _default_psi(config.psi)

    tasks = []
    for dims, group in _group_by_dims(clusters, spins):
        D = int(np.prod(dims))
        if config.method == "gcce":
            D *= cs.dim
        for lo, hi in _chunks(len(group), len(t) * D * D * 2):
            tasks.append(group[lo:hi])

    def run(batch):
        K = np.array([state.cluster_factor(c, spins) for c in batch])
        if config.method == "conventional":
            H0, H1 = _cluster_hamiltonians(batch, bath, cs, config, mean_field, pts)
            vals = _conventional_batch(H0, H1, energies[0], energies[1], K, config.pulses, t)
        else:
            H, _ = _cluster_hamiltonians(batch, bath, cs, config, mean_field, pts)
            vals = _gcce_batch(H, K, psi, vecs, config.pulses, t) / _gcce_norm(psi)
        return dict(zip(batch, vals))

    results = {}
    if config.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            for part in pool.map(run, tasks):
                results.update(part)
    else:
        for batch in tasks:
            results.update(run(batch))
    return results


def _prepare(bath, config):
    if config.r_bath is not None:
        bath = filter_r_bath(bath, config.r_bath)
    graph = build_graph(bath.positions, config.r_dipole)
    cset = enumerate_clusters(graph, config.order)
    return bath, cset


def _expand_state(bath, cs, config, cset, state):
    mean_field = MeanField.from_state(bath, state)
    curves = cluster_curves([()] + list(cset), bath, cs, config, state, mean_field)
    empty = curves.pop(())
    total, flagged, _ = cce_expand(curves, cset, empty=empty)
    return total, flagged, empty


def _finalize(t, total, flagged, empty, config, info):
    if config.magnitude:
        total = total / empty
    norm = complex(total[0]) if len(t) and t[0] == 0 else 1.0
    if norm != 1.0:
        total = total / norm
    if len(t) and t[0] == 0:
        total[0] = 1.0
    return CoherenceCurve(t, total, flagged, norm, empty, info)


def run_cce(bath, cs, config, state=None):
    """Coherence of the central spin under the cluster-correlation expansion.

    Filters the bath to ``r_bath``, builds the ``r_dipole`` graph, enumerates connected
    clusters up to ``order``, evaluates each cluster and combines them recursively.

    Args:
        bath (BathArray): Bath spins with hyperfine tensors.
        cs (CentralSpin): Central spin.
        config (CCEConfig): Expansion settings.
        state (BathState): Initial bath state (indexed like the filtered bath); fully
            mixed if None.

    Returns:
        CoherenceCurve
    """
    t = config.timegrid
    bath, cset = _prepare(bath, config)
    if state is None:
        state = BathState.mixed(len(bath))
    total, flagged, empty = _expand_state(bath, cs, config, cset, state)
    info = {"n_spins": len(bath), "clusters": cset.counts(), "method": config.method}
    return _finalize(t, total, flagged, empty, config, info)


def enumerate_bath_states(spins):
    """All product Zeeman states of the bath with equal weights.

    Yields:
        tuple: (projections m per spin, weight).
    """
    spins = np.asarray(spins, dtype=float)
    grids = [s - np.arange(int(round(2 * s + 1))) for s in spins]
    total = int(np.prod([len(g) for g in grids]))
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), -1).reshape(total, len(spins)) if len(spins) else np.zeros((1, 0))
    for m in mesh:
        yield m, 1.0 / total


def sample_projections(spins, rng):
    """Random Zeeman projections, uniform over 2s+1 values for each spin."""
    spins = np.asarray(spins, dtype=float)
    dims = np.rint(2 * spins + 1).astype(int)
    k = np.floor(rng.random(len(spins)) * dims).astype(int)
    return spins - k


def run_bath_states(bath, cs, config, projections, weights=None):
    """Weighted sum of expansions, each with a pure Zeeman product state of the bath.

    ``projections`` has shape (n_states, n_spins) and refers to the filtered bath.
    """
    t = config.timegrid
    bath, cset = _prepare(bath, config)
    projections = np.asarray(projections, dtype=float).reshape(-1, len(bath))
    n = len(projections)
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    total = np.zeros(len(t), dtype=np.complex128)
    empty_total = np.zeros(len(t), dtype=np.complex128)
    flagged = np.zeros(len(t), dtype=bool)
    spins = bath.spins
    samples = []
    for m, w in zip(projections, weights):
        state = BathState.from_projections(spins, m)
        value, flags, empty = _expand_state(bath, cs, config, cset, state)
        if config.magnitude:
            value = value / empty
        samples.append(value)
        total += w * value
        flagged |= flags
    info = {"n_spins": len(bath), "clusters": cset.counts(), "method": config.method,
            "n_states": n, "weights_sum": float(weights.sum())}
    cfg = replace(config, magnitude=False)
    curve = _finalize(t, total, flagged, np.ones(len(t), dtype=np.complex128), cfg, info)
    curve.info["samples"] = np.array(samples)
    return curve


def run_mc_sampling(bath, cs, config, n_samples, seed):
    """Average of the expansion over randomly sampled pure bath states.

    Each sample index draws from its own stream spawned from ``seed``.
    """
    if n_samples < 1:
        raise InvalidArgument("n_samples must be at least 1")
    filtered = filter_r_bath(bath, config.r_bath) if config.r_bath is not None else bath
    spins = filtered.spins
    children = np.random.SeedSequence(seed).spawn(n_samples)
    projections = [sample_projections(spins, np.random.default_rng(ch)) for ch in children]
    curve = run_bath_states(filtered, cs, replace(config, r_bath=None), projections)
    curve.info["seed"] = seed
    return curve


def run_exhaustive(bath, cs, config):
    """Exact average over every product Zeeman state of the (small) bath."""
    filtered = filter_r_bath(bath, config.r_bath) if config.r_bath is not None else bath
    states = list(enumerate_bath_states(filtered.spins))
    projections = [m for m, _ in states]
    weights = [w for _, w in states]
    return run_bath_states(filtered, cs, replace(config, r_bath=None), projections, weights)


# ---------------------------------------------------------------------------
# noise autocorrelation

def _autocorr_batch(H, X, K, t):
    """Re Tr[rho X(t) X(0)] with X(t) = U^dagger X U for a batch of clusters."""
    evals, evecs = np.linalg.eigh(H)
    Vh = np.swapaxes(evecs, -1, -2).conj()
    rho = K @ np.swapaxes(K, -1, -2).conj()
    Xe = Vh @ X @ evecs
    M = Vh @ X @ rho @ evecs
    gaps = evals[:, :, None] - evals[:, None, :]  # E_m - E_n
    weights = Xe * np.swapaxes(M, -1, -2)  # X_mn M_nm
    phase = np.exp(1j * gaps[:, None] * t[None, :, None, None])
    return np.real(np.einsum("cmn,ctmn->ct", weights, phase))


def cluster_autocorrelations(clusters, bath, B, t, state=None, mean_field=None):
    """Raw autocorrelation C_C(t) (kHz^2) of each cluster's secular Overhauser field."""
    spins = bath.spins
    if state is None:
        state = BathState.mixed(len(bath))
    if mean_field is None:
        mean_field = MeanField.from_state(bath, state)
    out = {}
    for dims, group in _group_by_dims(clusters, spins):
        if not dims:
            for c in group:
                out[c] = np.zeros(len(t))
            continue
        D = int(np.prod(dims))
        for lo, hi in _chunks(len(group), len(t) * D * D):
            batch = group[lo:hi]
            H = np.array([bath_hamiltonian(c, bath, B, mean_field) for c in batch])
            X = []
            for c in batch:
                dims = [int(round(2 * spins[i] + 1)) for i in c]
                x = np.zeros((D, D), dtype=np.complex128)
                for a, i in enumerate(c):
                    left = int(np.prod(dims[:a]))
                    right = int(np.prod(dims[a + 1:]))
                    op = np.kron(np.kron(np.eye(left), spin_matrices(spins[i]).z), np.eye(right))
                    x += bath.A[i, 2, 2] * op
                X.append(x)
            K = np.array([state.cluster_factor(c, spins) for c in batch])
            vals = _autocorr_batch(H, np.array(X), K, t)
            out.update(zip(batch, vals))
    return out


def autocorrelation(bath, cs, config, state=None):
    """Noise autocorrelation of the Overhauser field via cluster expansion.

    C = sum_C C~_C with C~_C = C_C - sum of C~_C' over proper subclusters.
    """
    t = config.timegrid
    bath, cset = _prepare(bath, config)
    if state is None:
        state = BathState.mixed(len(bath))
    raw = cluster_autocorrelations(list(cset), bath, cs.B, t, state)
    tilde = {}
    total = np.zeros(len(t))
    for c in cset:
        value = raw[c].copy()
        for sub in cset.subclusters(c):
            value -= tilde[sub]
        tilde[c] = value
        total += value
    return AutocorrCurve(t, total, {"n_spins": len(bath), "clusters": cset.counts()})


def ensemble_average(curves):
    """Mean complex coherence across realizations with per-point standard errors."""
    vals = np.array([c.values for c in curves])
    n = len(curves)
    mean = vals.mean(axis=0)
    ddof = 1 if n > 1 else 0
    se = lambda x: x.std(axis=0, ddof=ddof) / np.sqrt(n) if n > 1 else np.zeros(x.shape[1])
    flagged = np.sum([c.flagged for c in curves], axis=0)
    return {
        "time": curves[0].time,
        "mean": mean,
        "re_stderr": se(vals.real),
        "im_stderr": se(vals.imag),
        "abs_mean": np.abs(vals).mean(axis=0),
        "abs_stderr": se(np.abs(vals)),
        "flagged": flagged,
        "n": n,
    }
