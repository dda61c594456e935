import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from fockfield.fock import FockState, basis_counts, basis_index, number_op, pnr_distribution, quadratures
from fockfield.gates import Circuit, apply_circuit, evolve
from fockfield.lattice import ModelParams, build_G, exact_hamiltonian, h0_diagonal
from fockfield.tomography import (DisconnectedOutcomes, DisplacementSetting, ReconstructionError, SeedDegenerate,
                                  align_global_phase, link_phases_photon_control, link_phases_quadrature_control,
                                  measure_probabilities, phase_by_ode, reconstruct_multimode,
                                  reconstruct_single_mode, richardson, rk4_propagate, three_point_oracle,
                                  three_point_via_current)

FAST = settings(max_examples=10, deadline=None)


def anharmonic(K=24):
    q, _ = quadratures(K)
    return number_op(K).entries + 0.1 * np.linalg.matrix_power(q.entries, 4) + 0.3 * q.entries


def evolved(h, t, counts, K):
    st_, _ = apply_circuit(Circuit(len(counts), [evolve(t, h, range(len(counts)))]),
                           FockState.basis(counts, K), track=False)
    return st_


def test_setting_validation():
    with pytest.raises(ValueError):
        DisplacementSetting(0, 0.5)
    with pytest.raises(ValueError):
        DisplacementSetting(0, 1e-3 + 1e-3j)
    with pytest.raises(ValueError):
        DisplacementSetting(None, 0.1)
    assert DisplacementSetting(0, 0.5, guard=None).key == "re0"


def test_measure_probabilities_examples():
    K = 8
    h = 1.3 * number_op(K).entries
    st_ = evolved(h, 0.9, [1], K)
    tab = measure_probabilities(st_, 1e-3)
    pn = {o.counts: o.probability for o in pnr_distribution(st_)}
    for n in range(K + 1):
        assert tab.p("0", (n,)) == pytest.approx(pn.get((n,), 0.0), abs=1e-15)
    assert tab.p("0", (1,)) == pytest.approx(1.0)
    ha = anharmonic(12)
    st_ = evolved(ha, 0.7, [0], 12)
    exact = measure_probabilities(st_, 1e-2)
    shots = 10 ** 5
    sampled = measure_probabilities(st_, 1e-2, shots=shots, seed=3)
    for key in exact.probs:
        p = exact.probs[key]
        sigma = np.sqrt(p * (1 - p) / shots)
        assert np.all(np.abs(sampled.probs[key] - p) <= 5 * sigma + 1e-12)


def test_reconstruct_free_vacuum():
    K = 6
    st_ = evolved(0.8 * number_op(K).entries, 1.1, [0], K)
    res = reconstruct_single_mode(measure_probabilities(st_, 1e-3), 4)
    assert abs(res.table[(0,)]) == pytest.approx(1.0)
    assert max(abs(res.table[(n,)]) for n in range(1, 5)) < 1e-12


def test_reconstruct_anharmonic_within_tolerance():
    K = 24
    h = anharmonic(K)
    st_ = evolved(h, 0.7, [0], K)
    u = expm(-0.7j * h)
    oracle = {(n,): u[n, 0] for n in range(5)}
    res = reconstruct_single_mode(measure_probabilities(st_, 1e-3), 4)
    _, err = align_global_phase(res.table, oracle)
    assert err <= 1e-2


def test_finite_xi_error_is_first_order():
    K = 24
    h = anharmonic(K)
    st_ = evolved(h, 0.7, [0], K)
    u = expm(-0.7j * h)
    oracle = {(n,): u[n, 0] for n in range(5)}
    xis = np.array([4e-3, 2e-3, 1e-3])
    errs = [align_global_phase(reconstruct_single_mode(measure_probabilities(st_, x), 4).table, oracle)[1]
            for x in xis]
    slope = np.polyfit(np.log(xis), np.log(errs), 1)[0]
    assert slope >= 0.9
    assert errs[1] <= 0.5 * errs[0] * 1.05


def test_richardson_reduces_residual():
    K = 24
    h = anharmonic(K)
    st_ = evolved(h, 0.7, [0], K)
    u = expm(-0.7j * h)
    oracle = {(n,): u[n, 0] for n in range(5)}
    coarse = reconstruct_single_mode(measure_probabilities(st_, 1e-3), 4)
    fine = reconstruct_single_mode(measure_probabilities(st_, 5e-4), 4)
    e_c = align_global_phase(coarse.table, oracle)[1]
    e_r = align_global_phase(richardson(coarse, fine).table, oracle)[1]
    assert e_c / e_r >= 1.8


def test_seed_degenerate_is_reported():
    K = 6
    with pytest.raises(SeedDegenerate):
        reconstruct_single_mode(measure_probabilities(FockState.basis([2], K), 1e-3), 4)


def test_multimode_product_matches_single_mode():
    K = 8
    h1 = 0.9 * number_op(K).entries + 0.2 * quadratures(K)[0].entries
    h2 = 1.4 * number_op(K).entries + 0.3 * quadratures(K)[0].entries
    u1, u2 = expm(-0.5j * h1), expm(-0.5j * h2)
    amps = np.outer(u1[:, 0], u2[:, 0])
    st_ = FockState.from_tensor(amps)
    res = reconstruct_multimode(measure_probabilities(st_, 1e-4), 3)
    oracle = {o: amps[o] for o in res.table}
    _, err = align_global_phase(res.table, oracle)
    assert err < 1e-2
    single = reconstruct_single_mode(measure_probabilities(FockState(1, K, u1[:, 0]), 1e-4), 3)
    ratio = [res.table[(n, 0)] / res.table[(0, 0)] for n in range(4)]
    ratio1 = [single.table[(n,)] / single.table[(0,)] for n in range(4)]
    assert np.allclose(ratio, ratio1, atol=1e-3)


def test_multimode_vacuum_identity():
    res = reconstruct_multimode(measure_probabilities(FockState.vacuum(2, 4), 1e-3), 2)
    assert abs(res.table[(0, 0)]) == pytest.approx(1.0)
    assert max(abs(v) for k, v in res.table.items() if k != (0, 0)) < 1e-12


def test_multimode_two_site_free_theory():
    p = ModelParams(L=2, m=1.0, cutoff=3)
    dressed, _ = apply_circuit(build_G(p), FockState.vacuum(4, 3), track=False)
    amps = np.exp(-0.6j * h0_diagonal(p)) * dressed.amplitudes
    st_ = FockState(4, 3, amps)
    res = reconstruct_multimode(measure_probabilities(st_, 1e-4), 2)
    oracle = {o: st_.amplitude(o) for o in res.table}
    _, err = align_global_phase(res.table, oracle, res.component)
    assert err < 1e-2


def test_disconnected_outcomes_reported_when_strict():
    amps = np.zeros((4, 4), dtype=complex)
    amps[0, 0] = amps[2, 2] = 1 / np.sqrt(2)
    st_ = FockState.from_tensor(amps)
    with pytest.raises(DisconnectedOutcomes):
        reconstruct_multimode(measure_probabilities(st_, 1e-3), 2, strict=True)
    res = reconstruct_multimode(measure_probabilities(st_, 1e-3), 2)
    assert res.num_components == 2


def test_photon_control_examples():
    K, w = 6, 1.3
    h = w * number_op(K).entries
    same = link_phases_photon_control(h, (1,), 0.4, 0.4, K, [(1,)])
    assert same.delta_phi[(1,)] == pytest.approx(0.0, abs=1e-12)
    assert same.cos_term[(1,)] == pytest.approx(1.0)
    for m in (1, 2, 3):
        link = link_phases_photon_control(h, (m,), 0.2, 0.9, K, [(m,)])
        d = link.delta_phi[(m,)] + m * w * 0.7
        assert abs(np.angle(np.exp(1j * d))) < 1e-6
    with pytest.raises(ReconstructionError):
        link_phases_photon_control(h, (1,), 0.2, 0.9, K, [(2,)])


def test_photon_control_interacting_and_sum_rule():
    p = ModelParams(L=1, m=1.0, delta_m=0.05, lam=0.3, cutoff=5)
    h = exact_hamiltonian(p).toarray()
    m = (1, 0)
    outs = [(1, 0), (2, 1), (3, 2)]
    link = link_phases_photon_control(h, m, 0.3, 1.1, 5, outs)
    ua, ub = expm(-0.3j * h), expm(-1.1j * h)
    mi = basis_index(m, 5)
    for o in outs:
        i = basis_index(o, 5)
        ca, cb = ua[i, mi], ub[i, mi]
        assert abs(np.angle(np.exp(1j * (link.delta_phi[o] - np.angle(cb / ca))))) < 1e-2
        assert link.sum_rule[o] == pytest.approx(0.5 * (abs(ca) ** 2 + abs(cb) ** 2), abs=1e-10)


def test_quadrature_control_examples():
    K, w = 6, 1.3
    h = w * number_op(K).entries
    flat = link_phases_quadrature_control(h, 1, 0.5, 0.5, 0.1, [1])
    assert flat.delta_phi[1] == 0.0
    quad = link_phases_quadrature_control(h, 1, 0.2, 0.9, 0.1, [1])
    phot = link_phases_photon_control(h, (1,), 0.2, 0.9, K, [(1,)])
    assert abs(np.angle(np.exp(1j * (quad.delta_phi[1] - phot.delta_phi[(1,)])))) < 2e-2


def test_quadrature_control_visibility_tracks_squeezing():
    p = ModelParams(L=1, m=1.0, delta_m=0.05, lam=0.3, cutoff=5)
    h = exact_hamiltonian(p).toarray()
    mi = basis_index((1, 0), 5)
    vis = [link_phases_quadrature_control(h, mi, 0.3, 1.1, 0.1, [mi], r_anc=r).visibility[mi]
           for r in (0.5, 1.0, 2.0)]
    assert vis[0] < vis[1] < vis[2]


def test_phase_ode_examples():
    e = np.array([0.0, 1.0, 2.5])
    c = np.array([0.3, 0.5j, -0.2])
    assert np.allclose(phase_by_ode(c, np.diag(e)), -1j * e * c)
    assert np.allclose(rk4_propagate(c, np.zeros((3, 3)), 1.0, 0.1), c)
    K = 8
    h = anharmonic(K)
    c0 = np.zeros(K + 1, dtype=complex)
    c0[0] = 1
    out = rk4_propagate(c0, h, 1.0, 0.01)
    assert np.max(np.abs(out - expm(-1j * h) @ c0)) < 1e-6
    with pytest.raises(ValueError):
        phase_by_ode(c, np.eye(4))


def test_three_point_estimate():
    p = ModelParams(L=1, m=1.0, delta_m=0.05, lam=0.3, cutoff=6)
    h = exact_hamiltonian(p).toarray()
    m, ti, tf = (1, 0), -0.4, 0.6
    orc = three_point_oracle(p, m, ti, tf, hamiltonian=h)
    est = three_point_via_current(p, m, ti, tf, zeta=1e-3, xi=1e-3, nmax=5, hamiltonian=h)
    big = {basis_counts(i, 2, 6): orc[i] for i in np.nonzero(np.abs(orc) > 0.05)[0]}
    big = {k: v for k, v in big.items() if max(k) <= 5}
    al, _ = align_global_phase(est.table, big, est.component)
    assert max(abs(al[k] - big[k]) / abs(big[k]) for k in big) < 5e-2
    # outcomes outside the initial charge sector stay empty
    for o, v in est.table.items():
        if o[0] - o[1] != 1:
            assert abs(v) <= 1e-8


@FAST
@given(st.floats(0, 2 * np.pi))
def test_reconstruction_invariant_under_common_phase(alpha):
    K = 10
    h = anharmonic(K)
    st_ = evolved(h, 0.5, [0], K)
    rot = FockState(1, K, np.exp(1j * alpha) * st_.amplitudes)
    a = reconstruct_single_mode(measure_probabilities(st_, 1e-3), 4).table
    b = reconstruct_single_mode(measure_probabilities(rot, 1e-3), 4).table
    assert max(abs(a[k] - b[k]) for k in a) < 1e-9


@pytest.mark.slow
def test_shot_noise_scaling():
    # xi = 0.1 keeps the statistical error above the O(xi) systematic down to 1e6 shots
    K = 24
    h = anharmonic(K)
    st_ = evolved(h, 0.7, [0], K)
    exact = reconstruct_single_mode(measure_probabilities(st_, 0.1, guard=None), 3).table
    rms = []
    shots_list = [10 ** 4, 10 ** 5, 10 ** 6]
    for shots in shots_list:
        errs = []
        for seed in range(20):
            tab = measure_probabilities(st_, 0.1, shots=shots, seed=seed, guard=None)
            rec = reconstruct_single_mode(tab, 3, propagate=False).table
            errs.append(align_global_phase(rec, exact)[1])
        rms.append(np.sqrt(np.mean(np.square(errs))))
    for s, e in zip(shots_list, rms):
        pred = rms[0] * np.sqrt(shots_list[0] / s)
        assert pred / 2 <= e <= 2 * pred
