import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockfield.gates import gate_unitary, rotation, shear
from fockfield.mbqc import (DEFAULT_GRID, MbqcError, MeasurementRecord, Unreachable, build_chain, fidelity,
                            fourier, gate_teleport, grid_inner, grid_norm, hermite_functions, homodyne_marginal,
                            homodyne_project, ideal_map, inject_fock, load_transcript, net_map_fidelity,
                            photon_subtract, polynomial_gate_sequence, polynomial_map_error, replace_head,
                            resource_state, save_transcript, shift_state, single_node_marginal, solve_kappas,
                            squeeze_symplectic, subtraction_kraus, subtraction_success_probability,
                            teleport_gate, undo_rotation)

Q = DEFAULT_GRID.q
HF = hermite_functions(6)
FAST = settings(max_examples=8, deadline=None)


def test_single_node_and_nullifiers():
    for r in (0.5, 1.0):
        cov = build_chain(1, r).covariance()
        assert cov[1, 1] == pytest.approx(np.exp(-2 * r) / 2)
        assert cov[0, 0] == pytest.approx(np.exp(2 * r) / 2)
    vals = [nv for nv in (build_chain(3, r) for r in (1.0, 2.0, 3.0))]
    from fockfield.mbqc import nullifier_variance
    var = [nullifier_variance(c, 0, 1) for c in vals]
    assert var[0] > var[1] > var[2]
    assert var[2] == pytest.approx(np.exp(-6) / 2)
    two = build_chain(2, 1.3)
    assert nullifier_variance(two, 0, 1) == pytest.approx(nullifier_variance(two, 1, 0))
    with pytest.raises(ValueError):
        build_chain(0)
    with pytest.raises(ValueError):
        build_chain(2, -1.0)


def test_homodyne_examples():
    m, d = single_node_marginal(HF[0], 0.3)
    dm = m[1] - m[0]
    assert np.sum(d) * dm == pytest.approx(1.0, abs=1e-9)
    assert np.sum(m ** 2 * d) * dm == pytest.approx(0.5, abs=1e-9)
    chain = replace_head(build_chain(3, 3.0), HF[2])
    s, dens, _ = homodyne_marginal(chain, -0.4)
    assert np.sum(dens) * (s[1] - s[0]) == pytest.approx(1.0, abs=1e-6)
    head, rec = homodyne_project(chain, -0.4, outcome=0.2)
    assert chain.remaining == 2 and rec.node == 0 and rec.kind == "homodyne"
    assert grid_norm(head) == pytest.approx(1.0)
    with pytest.raises(MbqcError):
        homodyne_project(build_chain(1), 0.0)
    with pytest.raises(MbqcError):
        homodyne_project(build_chain(2), np.pi / 2)


def test_teleportation_examples():
    fids = [teleport_gate(HF[1], [0.0], r, [0.0])[1] for r in (1.0, 2.0, 3.0)]
    assert fids[0] < fids[1] < fids[2]
    assert fids[2] >= 0.95
    # two quarter turns act as parity: |1> -> -|1>
    out, fid, _ = teleport_gate(HF[1], [0.0, 0.0], 3.0, [0.0, 0.0])
    assert grid_inner(HF[1], out) == pytest.approx(-1.0, abs=1e-6)
    kap = solve_kappas(squeeze_symplectic(0.3))
    assert net_map_fidelity(kap, 3.0) > net_map_fidelity(kap, 2.0)
    assert net_map_fidelity(kap, 3.0) > 0.99


def test_teleported_gate_matches_circuit():
    # ideal grid map against gate-lib unitaries in a large Fock space
    K = 80
    kap = [0.2, -0.1]
    u = np.eye(K + 1, dtype=complex)
    for k in kap:
        u = gate_unitary(rotation(np.pi / 2), K).entries @ gate_unitary(shear(k), K).entries @ u
    for n in range(3):
        out = ideal_map(HF[n], kap)
        for j in range(5):
            assert abs(grid_inner(HF[j], out) - u[j, n]) < 1e-8


def test_fock_injection():
    chain = build_chain(2, 3.0)
    _, fid0, p0, _ = inject_fock(chain, 0)
    assert fid0 == pytest.approx(1.0, abs=1e-6)
    fids = []
    for r in (1.5, 2.0, 3.0):
        _, f, p, rec = inject_fock(build_chain(2, r), 2)
        assert 0 < p <= 1 and rec.outcome == 2
        fids.append(f)
    assert fids[2] >= 0.9
    assert fids[0] <= fids[1] <= fids[2]
    _, f1, p1, rec = inject_fock(build_chain(2, 3.0), 2, sample=True, seed=4)
    assert rec.postselected and rec.attempts >= 1
    assert p1 == pytest.approx(inject_fock(build_chain(2, 3.0), 2)[2])
    with pytest.raises(Unreachable):
        inject_fock(build_chain(2, 3.0), 2, floor=0.05)


def test_injection_probability_ignores_global_phase():
    psi = resource_state([1.0, 0.3], 1.0)
    a = inject_fock(replace_head(build_chain(2, 2.0), psi), 1)[2]
    b = inject_fock(replace_head(build_chain(2, 2.0), np.exp(0.7j) * psi), 1)[2]
    assert a == pytest.approx(b, rel=1e-12)


def test_subtraction_kraus_examples():
    K = 20
    beta = 0.1
    assert np.allclose(subtraction_kraus(beta, 0, K), np.diag(np.exp(-beta * np.arange(K + 1))))
    for n in range(4):
        assert np.linalg.norm(subtraction_kraus(beta, n, K), 2) <= 1 + 1e-12
    # sum_n S_n^dag S_n = 1 on states well inside the cutoff
    tot = sum(subtraction_kraus(0.3, n, 60).conj().T @ subtraction_kraus(0.3, n, 60) for n in range(60))
    assert np.allclose(tot[:6, :6], np.eye(6), atol=1e-10)
    with pytest.raises(ValueError):
        subtraction_kraus(0.0, 1, K)


def test_single_subtraction_probability_is_linear_in_beta():
    # after the CZ the head holds <N> + e^{2r}/4 photons; small beta gives 2 beta <N>
    r, beta = 1.0, 1e-5
    for k in range(3):
        p = subtraction_success_probability(HF[k], r, beta, 1)
        assert p == pytest.approx(2 * beta * (k + np.exp(2 * r) / 4), rel=1e-3)


def test_photon_subtract_record():
    chain = replace_head(build_chain(2, 2.0), HF[1])
    head, rec = photon_subtract(chain, 1e-2, n=1, homodyne=0.4)
    assert rec.kind == "subtraction-pnr" and rec.outcome == 1 and rec.beta == 1e-2
    assert grid_norm(head) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        photon_subtract(build_chain(2), -1.0)


def test_polynomial_sequence_examples(tmp_path):
    run = polynomial_gate_sequence(HF[1], 0)
    assert run.roots == [] and run.attempts == 0
    assert fidelity(run.output, HF[1]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        polynomial_gate_sequence(HF[1], -1)
    recs = [MeasurementRecord(0, "subtraction-pnr", 1, beta=1e-3, homodyne=0.0),
            MeasurementRecord(1, "subtraction-pnr", 0, beta=1e-3, homodyne=0.5),
            MeasurementRecord(2, "subtraction-pnr", 1, beta=1e-3, homodyne=0.0)]
    save_transcript(recs, tmp_path / "t.json")
    back = load_transcript(tmp_path / "t.json")
    assert [r.outcome for r in back] == [1, 0, 1]
    a = polynomial_gate_sequence(HF[0], 2, r=2.0, transcript=back)
    b = polynomial_gate_sequence(HF[0], 2, r=2.0, transcript=recs)
    assert np.array_equal(a.output, b.output)
    assert a.roots == [0.0, 0.0]
    # the two factors (Q + i m) commute, so the root order does not matter
    e1 = polynomial_map_error([0.0, 0.0], 1e-3, 2.0, recs)
    assert e1 == polynomial_map_error([0.0, 0.0][::-1], 1e-3, 2.0, recs)


def test_gate_teleportation_examples():
    fids = []
    for r in (2.0, 3.0):
        res = resource_state([0.5j, 1.0], r)
        out, m = gate_teleport(res, HF[1], r, outcome=0.3)
        fids.append(fidelity(out, (Q + 0.5j) * shift_state(HF[1], 0.3)))
    assert fids[0] < fids[1] and fids[1] >= 0.9
    with pytest.raises(MbqcError):
        gate_teleport(np.ones(8), HF[1])


def test_quarter_turn_inverse():
    psi = HF[0] + 0.2j * HF[1] + 0.1 * HF[3]
    assert np.allclose(undo_rotation(fourier(psi), 1), psi, atol=1e-10)
    assert np.allclose(undo_rotation(psi, 4), psi)


@FAST
@given(st.floats(-1.5, 1.5), st.floats(-1.0, 1.0))
def test_teleport_preserves_norm_and_records(kappa, outcome):
    chain = replace_head(build_chain(2, 2.0), HF[2])
    head, rec = homodyne_project(chain, -np.arctan(2 * kappa), outcome=outcome)
    assert grid_norm(head) == pytest.approx(1.0)
    assert 0 < rec.probability
    assert chain.remaining == 1


@FAST
@given(st.floats(1e-3, 0.5), st.integers(0, 3))
def test_kraus_never_grows_norm(beta, n):
    assert np.linalg.norm(subtraction_kraus(beta, n, 12), 2) <= 1 + 1e-12
