import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from spincce.clusters import NeighborGraph, enumerate_clusters
from spincce.constants import PI2
from spincce.engine import (CCEConfig, DIVISION_GUARD, autocorrelation, cce_expand, cluster_coherence_conventional,
                            cluster_coherence_gcce, cluster_curves, conventional_propagators, ensemble_average,
                            enumerate_bath_states, gcce_propagator, pulse_rotation, run_bath_states, run_cce,
                            run_exhaustive, run_mc_sampling)
from spincce.hamiltonian import BathState, CentralSpin, conventional_cluster_hamiltonian, gcce_cluster_hamiltonian
from spincce.isotopes import ELECTRON
from spincce.oracle import ExactModel, exact_coherence
from spincce.pulses import Pulse, PulseSequence
from spincce.spinops import InvalidArgument
from spincce.structure import BathArray

GE = ELECTRON.gamma
T = np.linspace(0, 1.0, 21)


def herm(rng, d, scale=1.0):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (m + m.conj().T) / 2


def sym(rng, scale=1.0):
    m = rng.normal(size=(3, 3)) * scale
    return (m + m.T) / 2


def nv(B=(0, 0, 500.0)):
    return CentralSpin.from_zfs(1, D=2.87e6, gamma=GE, B=B)


# --- pulse sequences --------------------------------------------------------------------

def test_pulse_sequence_layouts():
    assert PulseSequence.fid().n == 0
    assert np.allclose(PulseSequence.hahn().fractions, [0.5])
    cpmg = PulseSequence.uniform(4)
    assert np.allclose(cpmg.fractions, [1 / 8, 3 / 8, 5 / 8, 7 / 8])
    assert np.allclose(cpmg.segments, [1 / 8, 1 / 4, 1 / 4, 1 / 4, 1 / 8])
    assert cpmg.segments.sum() == pytest.approx(1.0, abs=1e-15)
    assert cpmg.conventional_compatible
    assert not PulseSequence.uniform(2, angle=np.pi / 2).conventional_compatible


@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6, unique=True))
def test_explicit_segments_sum_to_one(fracs):
    fracs = sorted(fracs)
    if np.any(np.diff(fracs) <= 0):
        return
    seq = PulseSequence.explicit([(f, "x", np.pi) for f in fracs])
    assert seq.segments.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(seq.segments >= 0)


@pytest.mark.parametrize("fracs", [[0.5, 0.5], [0.6, 0.2], [0.0], [1.0]])
def test_invalid_pulse_times(fracs):
    with pytest.raises(ValueError):
        PulseSequence.explicit([(f, "x", np.pi) for f in fracs])


# --- conventional propagators -----------------------------------------------------------

def test_fid_propagators(rng):
    H0, H1 = herm(rng, 3), herm(rng, 3)
    U0, U1 = conventional_propagators(H0, H1, PulseSequence.fid(), 0.7)
    assert np.allclose(U0, expm(-1j * H0 * 0.7), atol=1e-12)
    assert np.allclose(U1, expm(-1j * H1 * 0.7), atol=1e-12)


def test_hahn_identical_branches(rng):
    H = herm(rng, 4)
    U0, U1 = conventional_propagators(H, H, PulseSequence.hahn(), T)
    assert np.allclose(U0, U1, atol=1e-12)
    rho = np.eye(4) / 4
    L = cluster_coherence_conventional(H, H, rho, PulseSequence.hahn(), T)
    assert np.allclose(L, 1, atol=1e-12)


def test_cpmg2_matches_sequential_products(rng):
    H0, H1 = herm(rng, 4), herm(rng, 4)
    t = 0.9
    U0, U1 = conventional_propagators(H0, H1, PulseSequence.uniform(2), t)
    e = lambda H, dt: expm(-1j * H * dt)
    assert np.allclose(U0, e(H0, t / 4) @ e(H1, t / 2) @ e(H0, t / 4), atol=1e-12)
    assert np.allclose(U1, e(H1, t / 4) @ e(H0, t / 2) @ e(H1, t / 4), atol=1e-12)


def test_odd_sequence_leftmost_is_other_branch(rng):
    H0, H1 = herm(rng, 3), herm(rng, 3)
    t = 1.3
    U0, _ = conventional_propagators(H0, H1, PulseSequence.uniform(3), t)
    e = lambda H, dt: expm(-1j * H * dt)
    expected = e(H1, t / 6) @ e(H0, t / 3) @ e(H1, t / 3) @ e(H0, t / 6)
    assert np.allclose(U0, expected, atol=1e-12)


def test_explicit_sequence_propagators(rng):
    H0, H1 = herm(rng, 2), herm(rng, 2)
    seq = PulseSequence.explicit([(0.2, "x", np.pi), (0.7, "y", np.pi)])
    t = 2.0
    U0, U1 = conventional_propagators(H0, H1, seq, t)
    e = lambda H, dt: expm(-1j * H * dt)
    assert np.allclose(U0, e(H0, 0.6) @ e(H1, 1.0) @ e(H0, 0.4), atol=1e-12)
    assert np.allclose(U1, e(H1, 0.6) @ e(H0, 1.0) @ e(H1, 0.4), atol=1e-12)


@given(st.integers(0, 6), st.integers(0, 2 ** 32 - 1))
def test_propagators_unitary(n, seed):
    rng = np.random.default_rng(seed)
    H0, H1 = herm(rng, 3, 5), herm(rng, 3, 5)
    for U in conventional_propagators(H0, H1, PulseSequence.uniform(n), T):
        assert np.allclose(U @ np.swapaxes(U, -1, -2).conj(), np.eye(3), atol=1e-10)


def test_conventional_rejects_non_pi_pulses(rng):
    H = herm(rng, 2)
    with pytest.raises(InvalidArgument):
        conventional_propagators(H, H, PulseSequence.uniform(1, angle=np.pi / 2), 1.0)
    with pytest.raises(InvalidArgument):
        CCEConfig(method="conventional", pulses=PulseSequence.uniform(1, angle=1.0))


# --- per-cluster conventional coherence -------------------------------------------------

def test_no_hyperfine_gives_pure_phase():
    cs = nv()
    bath = BathArray(["13C", "13C"], [[0, 0, 3.0], [1.5, 0, 0]])
    t = T
    H0 = conventional_cluster_hamiltonian((0, 1), bath, cs, 0)
    H1 = conventional_cluster_hamiltonian((0, 1), bath, cs, 1)
    L = cluster_coherence_conventional(H0, H1, np.eye(4) / 4, PulseSequence.fid(), t)
    assert np.allclose(np.abs(L), 1, atol=1e-12)
    assert np.allclose(L, np.exp(-1j * (H0.energy - H1.energy) * t), atol=1e-9)


def test_single_secular_spin_hahn_refocused():
    cs = nv()
    bath = BathArray(["13C"], [[0, 0, 3.0]], A=np.diag([0, 0, 250.0])[None])
    H0 = conventional_cluster_hamiltonian((0,), bath, cs, 0)
    H1 = conventional_cluster_hamiltonian((0,), bath, cs, 1)
    L = cluster_coherence_conventional(H0, H1, np.eye(2) / 2, PulseSequence.hahn(), T)
    assert np.allclose(L, 1, atol=1e-12)


def test_single_spin_fid_closed_form():
    azz = 75.0
    cs = nv()
    bath = BathArray(["13C"], [[0, 0, 3.0]], A=np.diag([0, 0, azz])[None])
    H0 = conventional_cluster_hamiltonian((0,), bath, cs, 0).matrix
    H1 = conventional_cluster_hamiltonian((0,), bath, cs, 1).matrix
    L = cluster_coherence_conventional(H0, H1, np.eye(2) / 2, PulseSequence.fid(), T)
    # branch 0 is m_s = 0, branch 1 is m_s = +1: the nucleus sees an extra +-A/2 splitting
    w = PI2 * azz
    expected = 0.5 * (np.exp(1j * w / 2 * T) + np.exp(-1j * w / 2 * T))
    assert np.allclose(L, expected, atol=1e-12)


def test_cluster_coherence_dimension_mismatch(rng):
    with pytest.raises(InvalidArgument):
        cluster_coherence_conventional(herm(rng, 2), herm(rng, 2), np.eye(3) / 3, PulseSequence.hahn(), T)


# --- gCCE propagators --------------------------------------------------------------------

def test_two_pi_pulse_negates_qubit_propagator(rng):
    cs = CentralSpin(s=0.5, gamma=GE, B=(0, 0, 10.0))
    _, vecs = cs.qubit()
    H = herm(rng, 4, 10)
    fid = gcce_propagator(H, PulseSequence.fid(), 0.8, vecs)
    full = gcce_propagator(H, PulseSequence.explicit([(0.5, "x", 2 * np.pi)]), 0.8, vecs)
    # a 2pi rotation of a spin-1/2 is -1, which commutes with everything
    assert np.allclose(full, -fid, atol=1e-12)


def test_two_pi_pulse_keeps_coherence_magnitude():
    cs = nv(B=(20.0, 0, 500.0))
    bath = BathArray(["13C", "13C"], [[0, 0, 3.0], [2.0, 1.0, 0]], A=np.array([np.diag([10.0, 10, 80]), np.diag([5.0, -2, 30])]))
    H = gcce_cluster_hamiltonian((0, 1), bath, cs)
    rho = np.eye(4) / 4
    a = cluster_coherence_gcce(H, rho, cs, PulseSequence.fid(), T)
    b = cluster_coherence_gcce(H, rho, cs, PulseSequence.explicit([(0.3, "y", 2 * np.pi)]), T)
    assert np.allclose(np.abs(a), np.abs(b), atol=1e-10)


def test_hahn_with_commuting_hamiltonian_reduces_to_flip_times_fid(rng):
    cs = CentralSpin(s=0.5, gamma=GE, B=(0, 0, 10.0))
    _, vecs = cs.qubit()
    sx = np.kron(np.array([[0, 1], [1, 0]]), np.eye(2))
    H = np.kron(np.array([[1.0, 2.0], [2.0, 1.0]]), herm(rng, 2))
    assert np.allclose(H @ sx, sx @ H)
    t = 0.6
    U = gcce_propagator(H, PulseSequence.hahn(), t, vecs)
    R = np.kron(pulse_rotation(vecs, "x", np.pi), np.eye(2))
    assert np.allclose(U, R @ expm(-1j * H * t), atol=1e-12)


def test_uniform_n1_equals_explicit_half(rng):
    cs = nv()
    _, vecs = cs.qubit()
    H = herm(rng, 6, 5)
    a = gcce_propagator(H, PulseSequence.uniform(1), T, vecs)
    b = gcce_propagator(H, PulseSequence.explicit([(0.5, "x", np.pi)]), T, vecs)
    assert np.allclose(a, b, atol=1e-12)
    t = 0.7
    e = expm(-1j * H * t / 2)
    R = np.kron(pulse_rotation(vecs, "x", np.pi), np.eye(2))
    assert np.allclose(gcce_propagator(H, PulseSequence.hahn(), t, vecs), e @ R @ e, atol=1e-12)


def test_pulse_rotation_closed_form():
    cs = nv()
    _, vecs = cs.qubit()
    for axis, sigma in (("x", [[0, 1], [1, 0]]), ("y", [[0, -1j], [1j, 0]]), ("z", [[1, 0], [0, -1]])):
        R = pulse_rotation(vecs, axis, 1.1)
        assert np.allclose(R @ R.conj().T, np.eye(3), atol=1e-14)
        qubit = vecs.conj().T @ R @ vecs
        assert np.allclose(qubit, expm(-1j * np.array(sigma) * 0.55), atol=1e-13)


def test_gcce_free_qubit_precession():
    cs = nv()
    E, _ = cs.qubit()
    L = cluster_coherence_gcce(cs.hamiltonian(), np.ones((1, 1)), cs, PulseSequence.fid(), T)
    assert np.allclose(np.abs(L), 1, atol=1e-12)
    assert np.allclose(L, np.exp(-1j * (E[0] - E[1]) * T), atol=1e-9)


def test_gcce_single_spin_matches_exact(rng):
    cs = nv(B=(30.0, -20.0, 400.0))
    bath = BathArray(["13C"], [[1.0, 2.0, 1.5]], A=sym(rng, 800)[None])
    model = ExactModel.from_bath(bath, cs)
    for seq in (PulseSequence.fid(), PulseSequence.hahn(), PulseSequence.uniform(2, "y", 1.3)):
        H = gcce_cluster_hamiltonian((0,), bath, cs)
        L = cluster_coherence_gcce(H, np.eye(2) / 2, cs, seq, T)
        assert np.allclose(L, exact_coherence(model, seq, T), atol=1e-8)


def test_gcce_matches_conventional_on_pure_dephasing(rng):
    cs = nv()
    A = np.array([np.diag([0, 0, 300.0]), np.diag([0, 0, -120.0])])
    bath = BathArray(["13C", "13C"], [[0, 0, 2.0], [1.4, 0, 1.0]], A=A)
    c = (0, 1)
    H0 = conventional_cluster_hamiltonian(c, bath, cs, 0)
    H1 = conventional_cluster_hamiltonian(c, bath, cs, 1)
    conv = cluster_coherence_conventional(H0, H1, np.eye(4) / 4, PulseSequence.hahn(), T)
    gcce = cluster_coherence_gcce(gcce_cluster_hamiltonian(c, bath, cs), np.eye(4) / 4, cs, PulseSequence.hahn(), T)
    assert np.allclose(conv, gcce, atol=1e-8)


# --- expansion --------------------------------------------------------------------------

def _random_contributions(cset, rng, n_t=5):
    return {c: np.exp(1j * rng.normal(size=n_t)) * rng.uniform(0.5, 1, n_t) for c in cset}


def test_cce_expand_single_cluster(rng):
    cset = enumerate_clusters(NeighborGraph.from_edges(1, []), 1)
    contrib = _random_contributions(cset, rng)
    total, flagged, _ = cce_expand(contrib, cset)
    assert np.allclose(total, contrib[(0,)])
    assert not flagged.any()


def test_cce_expand_noninteracting_pair(rng):
    cset = enumerate_clusters(NeighborGraph.from_edges(2, [(0, 1)]), 2)
    contrib = _random_contributions(cset, rng)
    contrib[(0, 1)] = contrib[(0,)] * contrib[(1,)]
    total, _, tilde = cce_expand(contrib, cset)
    assert np.allclose(tilde[(0, 1)], 1, atol=1e-14)
    assert np.allclose(total, contrib[(0,)] * contrib[(1,)], atol=1e-14)


def test_cce_expand_full_order_telescopes(rng):
    cset = enumerate_clusters(NeighborGraph.from_edges(3, [(0, 1), (1, 2)]), 3)
    contrib = _random_contributions(cset, rng)
    empty = np.exp(1j * rng.normal(size=5))
    total, _, _ = cce_expand(contrib, cset, empty=empty)
    assert np.allclose(total, contrib[(0, 1, 2)], atol=1e-12)


def test_cce_expand_order_invariance(rng):
    n = 7
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
    cset = enumerate_clusters(NeighborGraph.from_edges(n, edges), 3)
    contrib = _random_contributions(cset, rng)
    total, _, tilde = cce_expand(contrib, cset)
    for _ in range(5):
        order = rng.permutation(len(tilde))
        keys = list(tilde)
        prod = np.ones(5, dtype=complex)
        for k in order:
            prod = prod * tilde[keys[k]]
        assert np.allclose(prod, total, rtol=1e-12, atol=1e-14)


def test_cce_expand_division_guard(rng):
    cset = enumerate_clusters(NeighborGraph.from_edges(2, [(0, 1)]), 2)
    contrib = _random_contributions(cset, rng)
    contrib[(0,)][2] = 0.0
    total, flagged, tilde = cce_expand(contrib, cset)
    assert flagged.tolist() == [False, False, True, False, False]
    assert tilde[(0, 1)][2] == 1
    assert np.all(np.isfinite(total))
    assert DIVISION_GUARD == 1e-10


def test_cluster_curves_independent_of_order(rng):
    cs = nv(B=(10.0, 0, 500.0))
    pos = rng.uniform(-4, 4, (6, 3))
    bath = BathArray(["13C"] * 6, pos, A=np.array([sym(rng, 100) for _ in range(6)]))
    cfg = CCEConfig(order=2, r_dipole=5, timegrid=T)
    clusters = [(0,), (1,), (0, 1), (2, 3), (4,), (5,), (2,), (3,)]
    a = cluster_curves(clusters, bath, cs, cfg)
    b = cluster_curves(clusters[::-1], bath, cs, cfg)
    c = cluster_curves(clusters, bath, cs, CCEConfig(order=2, r_dipole=5, timegrid=T, workers=3))
    for k in clusters:
        assert np.array_equal(a[k], b[k])
        assert np.array_equal(a[k], c[k])


# --- full runs ---------------------------------------------------------------------------

def test_empty_bath():
    bath = BathArray([], np.zeros((0, 3)))
    curve = run_cce(bath, nv(), CCEConfig(timegrid=T, magnitude=True))
    assert np.allclose(curve.values, 1, atol=1e-12)
    curve = run_cce(bath, nv(), CCEConfig(timegrid=T, method="gcce"))
    assert np.allclose(np.abs(curve.values), 1, atol=1e-12)


def test_normalization_at_time_zero(rng):
    bath = BathArray(["13C"] * 4, rng.uniform(-5, 5, (4, 3)), A=np.array([sym(rng, 300) for _ in range(4)]))
    for method in ("conventional", "gcce"):
        for mag in (False, True):
            curve = run_cce(bath, nv(B=(20.0, 0, 500.0)), CCEConfig(order=2, r_dipole=8, method=method, timegrid=T, magnitude=mag))
            assert curve.values[0] == 1
            assert np.all(np.isfinite(curve.values))


def _random_small_bath(rng, n, pure_dephasing=False):
    names = list(rng.choice(["13C", "1H", "29Si"], size=n))
    pos = rng.uniform(-3, 3, (n, 3))
    while min(np.linalg.norm(pos[i] - pos[j]) for i in range(n) for j in range(i + 1, n)) < 0.8:
        pos = rng.uniform(-3, 3, (n, 3))
    if pure_dephasing:
        A = np.array([np.diag([0, 0, rng.normal(0, 300)]) for _ in range(n)])
    else:
        A = np.array([sym(rng, 300) for _ in range(n)])
    return BathArray(names, pos, A=A)


@pytest.mark.parametrize("seed", range(5))
def test_full_order_gcce_equals_exact(seed):
    rng = np.random.default_rng(100 + seed)
    n = 3 + seed % 2
    bath = _random_small_bath(rng, n)
    cs = nv(B=(rng.normal(0, 30), rng.normal(0, 30), 300.0))
    t = np.linspace(0, 0.5, 11)
    model = ExactModel.from_bath(bath, cs)
    for seq in (PulseSequence.fid(), PulseSequence.hahn()):
        cfg = CCEConfig(order=n, r_dipole=100, method="gcce", pulses=seq, timegrid=t)
        assert np.allclose(run_cce(bath, cs, cfg).values, exact_coherence(model, seq, t), atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_full_order_conventional_equals_exact_pure_dephasing(seed):
    rng = np.random.default_rng(200 + seed)
    n = 3 + seed % 2
    bath = _random_small_bath(rng, n, pure_dephasing=True)
    cs = nv()
    t = np.linspace(0, 0.5, 11)
    model = ExactModel.from_bath(bath, cs)
    for seq in (PulseSequence.fid(), PulseSequence.hahn(), PulseSequence.uniform(2)):
        cfg = CCEConfig(order=n, r_dipole=100, pulses=seq, timegrid=t)
        assert np.allclose(run_cce(bath, cs, cfg).values, exact_coherence(model, seq, t), atol=1e-8)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8))
def test_hahn_refocuses_static_secular_bath(seed, n):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-20, 20, (n, 3))
    A = np.array([np.diag([0, 0, rng.normal(0, 500)]) for _ in range(n)])
    bath = BathArray(["13C"] * n, pos, A=A)
    curve = run_cce(bath, nv(), CCEConfig(order=2, r_dipole=1e-6, timegrid=T))
    assert np.allclose(np.abs(curve.values), 1, atol=1e-9)


def test_singleton_magnitude_bounded(rng):
    bath = BathArray(["13C"] * 5, rng.uniform(-5, 5, (5, 3)), A=np.array([sym(rng, 500) for _ in range(5)]))
    cs = nv(B=(0, 0, 300.0))
    cfg = CCEConfig(order=1, r_dipole=0.1, timegrid=T)
    curves = cluster_curves([(i,) for i in range(5)], bath, cs, cfg)
    for v in curves.values():
        assert np.all(np.abs(v) <= 1 + 1e-9)


def test_magnitude_divides_free_phase(rng):
    bath = BathArray(["13C"] * 3, rng.uniform(-5, 5, (3, 3)), A=np.array([sym(rng, 300) for _ in range(3)]))
    cs = nv()
    seq = PulseSequence.fid()
    raw = run_cce(bath, cs, CCEConfig(order=2, r_dipole=6, pulses=seq, timegrid=T))
    mag = run_cce(bath, cs, CCEConfig(order=2, r_dipole=6, pulses=seq, timegrid=T, magnitude=True))
    E, _ = cs.qubit()
    assert np.allclose(mag.values, raw.values / np.exp(-1j * (E[0] - E[1]) * T), atol=1e-8)


def test_r_bath_filter_applied(rng):
    bath = BathArray(["13C"] * 4, [[0, 0, 2.0], [0, 0, 5.0], [0, 0, 30.0], [0, 40.0, 0]],
                     A=np.array([sym(rng, 100) for _ in range(4)]))
    curve = run_cce(bath, nv(), CCEConfig(order=1, r_bath=10, timegrid=T))
    assert curve.info["n_spins"] == 2


# --- Monte Carlo bath states -------------------------------------------------------------

def test_enumerate_states_weights():
    states = list(enumerate_bath_states([0.5, 1.0]))
    assert len(states) == 6
    assert sum(w for _, w in states) == pytest.approx(1.0, abs=1e-15)
    assert {tuple(m) for m, _ in states} == {(a, b) for a in (0.5, -0.5) for b in (1, 0, -1)}


def test_one_spin_exhaustive_equals_mixed(rng):
    bath = BathArray(["13C"], [[1.0, 0.5, 2.0]], A=sym(rng, 400)[None])
    cs = nv(B=(5.0, 0, 500.0))
    cfg = CCEConfig(order=1, timegrid=T)
    assert np.allclose(run_exhaustive(bath, cs, cfg).values, run_cce(bath, cs, cfg).values, atol=1e-10)


@pytest.mark.parametrize("n", [2, 3])
def test_small_bath_exhaustive_equals_mixed(n, rng):
    names = ["13C", "14N", "1H"][:n]
    bath = BathArray(names, rng.uniform(-3, 3, (n, 3)), A=np.array([sym(rng, 300) for _ in range(n)]))
    cs = nv(B=(15.0, -5.0, 450.0))
    for method in ("conventional", "gcce"):
        cfg = CCEConfig(order=n, r_dipole=100, method=method, timegrid=T)
        assert np.allclose(run_exhaustive(bath, cs, cfg).values, run_cce(bath, cs, cfg).values, atol=1e-9)


def test_mc_reproducible_per_seed(rng):
    bath = BathArray(["13C"] * 4, rng.uniform(-4, 4, (4, 3)), A=np.array([sym(rng, 200) for _ in range(4)]))
    cs = nv()
    cfg = CCEConfig(order=2, r_dipole=6, timegrid=T)
    a = run_mc_sampling(bath, cs, cfg, 1, seed=9)
    b = run_mc_sampling(bath, cs, cfg, 1, seed=9)
    assert np.array_equal(a.values, b.values)
    c = run_mc_sampling(bath, cs, cfg, 3, seed=9)
    assert np.array_equal(c.info["samples"][0], a.info["samples"][0])
    with pytest.raises(InvalidArgument):
        run_mc_sampling(bath, cs, cfg, 0, seed=1)


def test_weighted_bath_states(rng):
    bath = BathArray(["13C"], [[0, 0, 2.0]], A=sym(rng, 200)[None])
    cs = nv()
    cfg = CCEConfig(order=1, timegrid=T)
    up = run_bath_states(bath, cs, cfg, [[0.5]])
    down = run_bath_states(bath, cs, cfg, [[-0.5]])
    mix = run_bath_states(bath, cs, cfg, [[0.5], [-0.5]], weights=[0.25, 0.75])
    assert np.allclose(mix.values, 0.25 * up.values + 0.75 * down.values, atol=1e-12)


# --- autocorrelation ---------------------------------------------------------------------

def test_autocorrelation_zero_hyperfine(rng):
    bath = BathArray(["13C"] * 3, rng.uniform(-3, 3, (3, 3)))
    ac = autocorrelation(bath, nv(), CCEConfig(order=2, r_dipole=10, timegrid=T))
    assert np.allclose(ac.values, 0, atol=1e-15)


def test_autocorrelation_initial_value_mixed_species(rng):
    names = ["13C", "14N", "1H", "17O", "29Si"]
    bath = BathArray(names, rng.uniform(-4, 4, (5, 3)), A=np.array([sym(rng, 100) for _ in range(5)]))
    ac = autocorrelation(bath, nv(), CCEConfig(order=3, r_dipole=5, timegrid=T))
    s = bath.spins
    expected = np.sum(bath.A[:, 2, 2] ** 2 * s * (s + 1) / 3)
    assert ac.values[0] == pytest.approx(expected, rel=1e-9)


def test_autocorrelation_conserved_single_spin(rng):
    bath = BathArray(["13C"], [[0, 0, 3.0]], A=np.diag([0, 0, 40.0])[None])
    ac = autocorrelation(bath, nv(), CCEConfig(order=1, timegrid=T))
    assert np.allclose(ac.values, ac.values[0], rtol=1e-12)
    assert ac.values[0] == pytest.approx(40.0 ** 2 / 4, rel=1e-12)


def test_ensemble_average():
    from spincce.engine import CoherenceCurve
    t = np.array([0.0, 1.0])
    curves = [CoherenceCurve(t, np.array([1.0, v]), np.array([False, f])) for v, f in ((0.5, True), (0.7j, False))]
    ens = ensemble_average(curves)
    assert np.allclose(ens["mean"], [1.0, 0.25 + 0.35j])
    assert np.allclose(ens["abs_mean"], [1.0, 0.6])
    assert ens["re_stderr"][1] == pytest.approx(np.std([0.5, 0.0], ddof=1) / np.sqrt(2))
    assert ens["flagged"].tolist() == [0, 1]
