import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from fockfield.fock import FockState, basis_index, low_block_indices
from fockfield.gates import circuit_bogoliubov, circuit_matrix
from fockfield.lattice import (ModeLayout, ModelParams, OracleCapExceeded, build_G, build_Pint_circuit,
                               build_trotter_step, charge_labels, charge_operator, dispersion, exact_hamiltonian,
                               h0_diagonal, hint_chain_forms, hint_matrix, lowest_eigenvalue, momentum_labels,
                               momentum_phase, mode_ladders, site_quadratures, squeezing_parameter,
                               trotter_columns)
from fockfield.fock import quadratures

FAST = settings(max_examples=20, deadline=None)


def test_dispersion_examples():
    p = ModelParams(L=2, m=0.7)
    assert dispersion(0, p) == pytest.approx(0.7)
    assert dispersion(1, p) == pytest.approx(np.sqrt(0.49 + 4))
    p5 = ModelParams(L=5, m=0.3)
    for k in range(1, 5):
        assert dispersion(k, p5) == pytest.approx(dispersion(5 - k, p5))
    with pytest.raises(IndexError):
        dispersion(2, p)


def test_squeezing_examples():
    p = ModelParams(L=2, m=0.6)
    assert squeezing_parameter(0, p) == pytest.approx(-0.5 * np.log(0.6))
    assert squeezing_parameter(1, p) == pytest.approx(-0.25 * np.log(4 + 0.36))
    for k in range(2):
        r = squeezing_parameter(k, p)
        assert np.cosh(r) - np.sinh(r) == pytest.approx(np.sqrt(dispersion(k, p)))
    assert squeezing_parameter(0, ModelParams(L=3, m=1.0)) == 0.0


def test_free_hamiltonian_eigenvalues():
    p = ModelParams(L=2, m=0.8, cutoff=3)
    diag = h0_diagonal(p)
    lay = ModeLayout(2)
    assert diag[0] == 0
    counts = [0, 0, 0, 0]
    counts[lay.index(1, "b")] = 1
    assert diag[basis_index(counts, 3)] == pytest.approx(dispersion(1, p))
    counts = [0, 0, 0, 0]
    counts[lay.index(0, "b")] = 2
    counts[lay.index(1, "c")] = 1
    assert diag[basis_index(counts, 3)] == pytest.approx(2 * dispersion(0, p) + dispersion(1, p))


def test_G_structure_for_two_sites():
    p = ModelParams(L=2, m=0.5, cutoff=3)
    kinds = [g.kind for g in build_G(p).gates]
    assert kinds.count("Squeeze2") == 2 and kinds.count("BeamSplitter5050") == 2
    assert ModeLayout(2).pairs() == [(0, 1), (2, 3)]
    assert build_G(ModelParams(L=1, m=1.0)).gates == []


def test_G_heisenberg_matrix():
    # U^dag B(x) U from the circuit against the closed-form mode expansion
    for L in (2, 3):
        p = ModelParams(L=L, m=0.7, cutoff=2)
        T, _ = circuit_bogoliubov(build_G(p))
        M = 2 * L
        lay = ModeLayout(L)
        want = np.zeros((2 * M, 2 * M), dtype=complex)
        for x in range(L):
            for k in range(L):
                r = squeezing_parameter(k, p)
                e = np.exp(2j * np.pi * k * x / L) / np.sqrt(L)
                want[2 * x, lay.index(k, "b")] += e * np.cosh(r)
                want[2 * x, M + lay.index((L - k) % L, "c")] += e * np.sinh(r)
                # C(x) carries c(k) with the same Fourier phase as B(x) carries b(k)
                want[2 * x + 1, lay.index(k, "c")] += e * np.cosh(r)
                want[2 * x + 1, M + lay.index((L - k) % L, "b")] += e * np.sinh(r)
        assert np.max(np.abs(T[:M] - want[:M])) < 1e-8


def test_G_conjugates_wire_quadrature_one_site():
    # L = 1: G is one two-mode squeezer; compare on the low block with a padded register
    p = ModelParams(L=1, m=2.0, cutoff=4)
    Kw = 30
    pw = p.replace(cutoff=Kw)
    lo = low_block_indices(2, 4, 2, total=True)
    from fockfield.gates import apply_circuit_columns
    basis = np.zeros((25, len(lo)), dtype=complex)
    basis[lo, np.arange(len(lo))] = 1
    v = apply_circuit_columns(build_G(p), basis, 4, Kw, project=False)
    b = mode_ladders(pw)[0]
    qb = (b + b.T.conj()) / np.sqrt(2)
    lhs = v.conj().T @ (qb @ v)
    QB = site_quadratures(pw, 0)[0]
    idx = [basis_index(np.unravel_index(i, (5, 5)), Kw) for i in lo]
    assert np.max(np.abs(lhs - QB[np.ix_(idx, idx)].toarray())) < 1e-8


def test_interaction_examples():
    p0 = ModelParams(L=1, m=1.0, cutoff=4)
    assert np.max(np.abs(hint_matrix(p0))) == 0
    K = 6
    q, pq = quadratures(K)
    eye = np.eye(K + 1)
    s = np.kron(q.entries, eye) + np.kron(eye, q.entries)
    d = np.kron(pq.entries, eye) - np.kron(eye, pq.entries)
    comm = s @ d - d @ s
    lo = low_block_indices(2, K, K - 2)
    assert np.linalg.norm(comm[np.ix_(lo, lo)], 2) <= 1e-10
    p = ModelParams(L=1, m=1.0, lam=0.3, delta_m=0.07, cutoff=K)
    h = hint_matrix(p)
    lo = low_block_indices(2, K, 2, total=True)
    for form in hint_chain_forms(p):
        assert np.max(np.abs((form - h)[np.ix_(lo, lo)])) < 1e-9


def test_pint_circuit_examples():
    p = ModelParams(L=1, m=1.0, lam=0.1, delta_m=0.05, cutoff=8, dt=0.05)
    Kw = 24
    circ = build_Pint_circuit(p)
    lo = low_block_indices(2, 8, 4)
    u = circuit_matrix(circ, 8, lo, work_cutoff=Kw)[lo]
    ex = expm(-1j * 0.05 * hint_matrix(p))[np.ix_(lo, lo)]
    assert np.linalg.norm(u - ex, 2) < 1e-6
    gauss = p.replace(lam=0.0)
    circ = build_Pint_circuit(gauss)
    u = circuit_matrix(circ, 8, lo, work_cutoff=Kw)[lo]
    ex = expm(-1j * 0.05 * hint_matrix(gauss, Kw))
    idx = [basis_index(np.unravel_index(i, (9, 9)), Kw) for i in lo]
    assert np.linalg.norm(u - ex[np.ix_(idx, idx)], 2) < 1e-8
    assert np.allclose(circuit_matrix(build_Pint_circuit(p, dt=0.0), 4), np.eye(25), atol=1e-12)


def test_free_trotter_step_is_rotations():
    p = ModelParams(L=2, m=0.9, cutoff=2)
    step = build_trotter_step(p, dt=0.2)
    assert {g.kind for g in step.gates} == {"Rotate"}
    u = circuit_matrix(step, 2)
    assert np.allclose(u, np.diag(np.exp(-0.2j * h0_diagonal(p))))


def _block_error(p, dt, steps, lo, h):
    v = trotter_columns(p, dt * steps, steps, lo)
    ex = expm(-1j * dt * steps * h)[:, lo]
    return np.linalg.norm((v - ex)[lo], 2)


def test_one_step_error_is_second_order():
    p = ModelParams(L=1, m=1.5, lam=0.3, delta_m=0.1, cutoff=6)
    h = exact_hamiltonian(p, g_form="circuit")
    lo = low_block_indices(2, 6, 2)
    dts = np.array([0.1, 0.05, 0.025])
    errs = [_block_error(p, dt, 1, lo, h) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_fixed_time_composition_is_first_order():
    p = ModelParams(L=1, m=1.5, lam=0.3, delta_m=0.1, cutoff=6)
    h = exact_hamiltonian(p, g_form="circuit")
    lo = low_block_indices(2, 6, 2)
    steps = np.array([10, 20, 40])
    errs = [_block_error(p, 1.0 / n, n, lo, h) for n in steps]
    slope = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)


def test_exact_hamiltonian_examples():
    p = ModelParams(L=2, m=1.0, cutoff=2)
    h = exact_hamiltonian(p)
    assert np.allclose(h.toarray(), np.diag(h0_diagonal(p)))
    pi = ModelParams(L=1, m=1.0, lam=0.2, delta_m=0.05, cutoff=4)
    e = np.linalg.eigvals(exact_hamiltonian(pi).toarray())
    assert np.max(np.abs(e.imag)) < 1e-10
    assert lowest_eigenvalue(pi) == pytest.approx(lowest_eigenvalue(pi.replace(cutoff=6)), abs=1e-3)
    with pytest.raises(OracleCapExceeded):
        exact_hamiltonian(ModelParams(L=3, m=1.0, cutoff=8))


@pytest.mark.parametrize("L,K", [(1, 6), (2, 3), (3, 2)])
def test_charge_and_momentum_conservation(L, K):
    p = ModelParams(L=L, m=0.8, lam=0.4, delta_m=0.1, cutoff=K)
    h = exact_hamiltonian(p).toarray()
    q = charge_operator(p).toarray()
    assert np.linalg.norm(h @ q - q @ h, 2) <= 1e-9
    t = momentum_phase(p).toarray()
    assert np.linalg.norm(h @ t - t @ h, 2) <= 1e-9
    assert np.array_equal(np.rint(np.diag(q).real).astype(int), charge_labels(p))
    if L > 1:
        assert set(momentum_labels(p)) <= set(range(L))


@FAST
@given(st.integers(1, 6), st.floats(0.1, 3.0))
def test_dispersion_symmetry_and_squeezing_identity(L, m):
    p = ModelParams(L=L, m=m)
    for k in range(L):
        assert dispersion(k, p) == pytest.approx(dispersion((L - k) % L, p))
        r = squeezing_parameter(k, p)
        assert np.exp(-r) == pytest.approx(np.sqrt(dispersion(k, p)))


@FAST
@given(st.floats(0.0, 0.5), st.floats(0.0, 0.3), st.floats(0.3, 2.0))
def test_trotter_step_conserves_charge(lam, dm, m):
    p = ModelParams(L=1, m=m, lam=lam, delta_m=dm, cutoff=4)
    u = circuit_matrix(build_trotter_step(p, dt=0.1), 4)
    lab = charge_labels(p)
    off = u[lab[:, None] != lab[None, :]]
    assert np.max(np.abs(off)) < 1e-10


def test_model_validation():
    with pytest.raises(ValueError):
        ModelParams(L=0, m=1.0)
    with pytest.raises(ValueError):
        ModelParams(L=1, m=0.0)
    with pytest.raises(ValueError):
        ModelParams(L=1, m=1.0, cutoff=1)
    assert ModelParams(L=2, m=1.0).time_step == pytest.approx(0.1 / np.sqrt(5))
    FockState.vacuum(2, 2)
