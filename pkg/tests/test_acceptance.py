"""Acceptance checks. Each check prints a PASS/FAIL line; test_summary prints one line per criterion.

Sub-checks that are known to miss their target are split into their own tests and
marked xfail(strict=True): they still run at the stated tolerance and print FAIL.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from fockfield.correlators import dominant_peak, extract_peaks, ft_continuous, ft_discrete, scan, toy_model_fig1
from fockfield.fock import FockState, basis_counts, basis_index, low_block_indices, number_op, quadratures, sample_pnr
from fockfield.gates import Circuit, apply_circuit, apply_circuit_columns, circuit_bogoliubov, circuit_matrix, evolve
from fockfield.lattice import (ModeLayout, ModelParams, build_G, build_Pint_circuit, charge_labels, charge_operator,
                               evolve_dense_by_sectors,
                               exact_hamiltonian, hint_chain_forms, hint_matrix, mode_ladders, site_quadratures,
                               squeezing_parameter, trotter_columns)
from fockfield.mbqc import (build_chain, inject_fock, net_map_fidelity, polynomial_gate_sequence,
                            polynomial_map_error, subtraction_kraus, subtraction_prefactor)
from fockfield.tomography import (align_global_phase, link_phases_photon_control, measure_probabilities,
                                  reconstruct_single_mode, richardson, three_point_oracle, three_point_via_current)

KNOWN_RED = pytest.mark.xfail(strict=True, reason="misses its target; see decisions ledger")
RESULTS: dict = {}


@pytest.fixture
def report(capsys):
    def emit(n, ok, msg):
        RESULTS.setdefault(n, []).append(bool(ok))
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {msg}")
        assert ok, msg
    return emit


# 1. toy-model spectrum

def test_criterion_1_peak(report):
    toy = toy_model_fig1(1.0)
    grid = np.arange(0.5, 1.5 + 1e-9, 0.001)
    t0 = time.perf_counter()
    p100 = dominant_peak(extract_peaks(scan(lambda w: ft_continuous(toy, w, 100.0), grid, 0.01)))
    p10 = dominant_peak(extract_peaks(scan(lambda w: ft_continuous(toy, w, 10.0), grid, 0.01)))
    ok = abs(p100.omega - 1.0) <= 0.02 and p100.half_width < p10.half_width
    report(1, ok, f"peak at {p100.omega:.4f} (T=100), half-widths {p100.half_width:.4f} < {p10.half_width:.4f} "
                  f"({time.perf_counter() - t0:.1f}s)")


def _sup_norm(dt, T):
    toy = toy_model_fig1(1.0)
    grid = np.arange(0.5, 1.5 + 1e-9, 0.001) + 0.01j
    c = np.array([ft_continuous(toy, w, T) for w in grid])
    d = np.array([ft_discrete(toy, w, dt, T) for w in grid])
    return np.max(np.abs(c - d)) / np.max(np.abs(c))


@KNOWN_RED
def test_criterion_1_continuous_vs_discrete(report):
    errs = {(dt, T): _sup_norm(dt, T) for dt in (0.1, 0.02) for T in (10.0, 100.0)}
    ok = all(errs[(0.1, T)] <= 0.05 and errs[(0.02, T)] <= 0.01 for T in (10.0, 100.0))
    report(1, ok, "relative sup-norm |cont - disc| " +
           ", ".join(f"dt={dt} T={T:g}: {e:.3g}" for (dt, T), e in errs.items()) + " (targets 5e-2 / 1e-2)")


# 2. Trotter convergence

def test_criterion_2_trotter_slope(report):
    t0 = time.perf_counter()
    p = ModelParams(L=2, m=1.0, lam=0.2, delta_m=0.05, cutoff=6)
    lo = low_block_indices(p.num_modes, p.cutoff, 2)
    h = exact_hamiltonian(p, g_form="circuit")
    ex = evolve_dense_by_sectors(h, charge_labels(p), 1.0, lo)[lo]
    steps = np.array([10, 20, 40])
    errs = [np.linalg.norm(trotter_columns(p, 1.0, n, lo)[lo] - ex, 2) for n in steps]
    slope = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
    dt = time.perf_counter() - t0
    report(2, abs(slope - 1.0) <= 0.2 and dt < 60,
           f"slope {slope:.3f} from errors {[float(f'{e:.3g}') for e in errs]} in {dt:.1f}s")


# 3. interaction circuit

def test_criterion_3_circuit_identity(report):
    p = ModelParams(L=1, m=1.0, lam=0.1, delta_m=0.05, cutoff=8, dt=0.05)
    lo = low_block_indices(2, 8, 4)
    ex = expm(-1j * 0.05 * hint_matrix(p))[np.ix_(lo, lo)]
    circ = build_Pint_circuit(p)
    padded = np.linalg.norm(circuit_matrix(circ, 8, lo, work_cutoff=24)[lo] - ex, 2)
    literal = np.linalg.norm(circuit_matrix(circ, 8, lo)[lo] - ex, 2)
    p6 = p.replace(cutoff=6)
    h6 = hint_matrix(p6)
    lo6 = low_block_indices(2, 6, 2, total=True)
    forms = max(np.max(np.abs((f - h6)[np.ix_(lo6, lo6)])) for f in hint_chain_forms(p6))
    report(3, padded <= 1e-6 and forms <= 1e-9,
           f"P_int circuit vs exp {padded:.2e} (padded register; K=8 register {literal:.2e}), three forms {forms:.2e}")


# 4. G transform

def test_criterion_4_G_identity(report):
    p = ModelParams(L=2, m=1.0, cutoff=6)
    K, Kw = 6, 24
    lo = low_block_indices(4, K, 2, total=True)
    basis = np.zeros(((K + 1) ** 4, len(lo)), dtype=complex)
    basis[lo, np.arange(len(lo))] = 1

    def deviation(work):
        v = apply_circuit_columns(build_G(p), basis, K, work, project=False)
        pw = p.replace(cutoff=work)
        b = mode_ladders(pw)[0]
        lhs = v.conj().T @ (((b + b.T.conj()) / np.sqrt(2)) @ v)
        idx = [basis_index(basis_counts(i, 4, K), work) for i in lo]
        return np.max(np.abs(lhs - site_quadratures(pw, 0)[0][np.ix_(idx, idx)].toarray()))

    padded, literal = deviation(Kw), deviation(K)
    T, _ = circuit_bogoliubov(build_G(p))
    lay, M = ModeLayout(2), 4
    want = np.zeros((M, 2 * M), dtype=complex)
    for x in range(2):
        for k in range(2):
            r = squeezing_parameter(k, p)
            e = np.exp(2j * np.pi * k * x / 2) / np.sqrt(2)
            want[2 * x, lay.index(k, "b")] += e * np.cosh(r)
            want[2 * x, M + lay.index((2 - k) % 2, "c")] += e * np.sinh(r)
            want[2 * x + 1, lay.index(k, "c")] += e * np.cosh(r)
            want[2 * x + 1, M + lay.index((2 - k) % 2, "b")] += e * np.sinh(r)
    bog = np.max(np.abs(T[:M] - want))
    pi = p.replace(lam=0.2, delta_m=0.05)
    h = exact_hamiltonian(pi)
    q = charge_operator(pi)
    comm = abs(h @ q - q @ h).max()
    report(4, padded <= 1e-8 and bog <= 1e-8 and comm <= 1e-9,
           f"G^dag q_b G vs Q_B {padded:.2e} (padded; K=6 register {literal:.2e}), Bogoliubov {bog:.2e}, "
           f"[Q, H] {comm:.2e}")


# 5. phase-sensitive reconstruction

def _anharmonic_state():
    K, t = 24, 0.7
    q, _ = quadratures(K)
    h = number_op(K).entries + 0.1 * np.linalg.matrix_power(q.entries, 4) + 0.3 * q.entries
    st, _ = apply_circuit(Circuit(1, [evolve(t, h, [0])]), FockState.basis([0], K), track=False)
    u = expm(-1j * t * h)
    return st, {(n,): u[n, 0] for n in range(5)}


def test_criterion_5_reconstruction(report):
    st, oracle = _anharmonic_state()
    coarse = reconstruct_single_mode(measure_probabilities(st, 1e-3), 4)
    fine = reconstruct_single_mode(measure_probabilities(st, 5e-4), 4)
    e_exact = align_global_phase(coarse.table, oracle)[1]
    e_rich = align_global_phase(richardson(coarse, fine).table, oracle)[1]
    gain = e_exact / e_rich
    # sampled run: the estimator fixes the phase of C_0, so compare in that gauge
    ref = {k: v * np.exp(-1j * np.angle(oracle[(0,)])) for k, v in oracle.items()}
    samp = reconstruct_single_mode(measure_probabilities(st, 1e-3, shots=10 ** 6, seed=0), 4)
    pulls = max(abs(samp.table[k] - ref[k]) / samp.sigma[k] for k in ref)
    report(5, e_exact <= 1e-2 and pulls <= 3 and gain >= 1.8,
           f"exact error {e_exact:.2e}, sampled max |err|/sigma {pulls:.2f}, Richardson gain {gain:.1f}")


# 6. global-phase linking

def test_criterion_6_phase_linking(report):
    K, w, ta, tb = 6, 1.3, 0.2, 0.9
    h = w * number_op(K).entries
    free = 0.0
    for m in (1, 2, 3):
        d = link_phases_photon_control(h, (m,), ta, tb, K, [(m,)]).delta_phi[(m,)] + m * w * (tb - ta)
        free = max(free, abs(np.angle(np.exp(1j * d))))
    p = ModelParams(L=1, m=1.0, delta_m=0.05, lam=0.3, cutoff=5)
    hi = exact_hamiltonian(p).toarray()
    outs = [(1, 0), (2, 1), (3, 2)]
    ta, tb = 0.3, 1.1
    link = link_phases_photon_control(hi, (1, 0), ta, tb, 5, outs)
    ua, ub = expm(-1j * ta * hi), expm(-1j * tb * hi)
    i0 = basis_index((1, 0), 5)
    inter, rule = 0.0, 0.0
    for o in outs:
        ca, cb = ua[basis_index(o, 5), i0], ub[basis_index(o, 5), i0]
        inter = max(inter, abs(np.angle(np.exp(1j * (link.delta_phi[o] - np.angle(cb / ca))))))
        rule = max(rule, abs(link.sum_rule[o] - 0.5 * (abs(ca) ** 2 + abs(cb) ** 2)))
    report(6, free <= 1e-6 and inter <= 1e-2 and rule <= 1e-10,
           f"free {free:.2e}, interacting {inter:.2e}, sum rule {rule:.2e}")


# 7. current insertion

def test_criterion_7_three_point(report):
    p = ModelParams(L=1, m=1.0, delta_m=0.05, lam=0.3, cutoff=6)
    h = exact_hamiltonian(p).toarray()
    m, ti, tf = (1, 0), -0.4, 0.6
    orc = three_point_oracle(p, m, ti, tf, hamiltonian=h)
    big = {basis_counts(i, 2, 6): orc[i] for i in np.nonzero(np.abs(orc) > 0.05)[0]}
    big = {k: v for k, v in big.items() if max(k) <= 5}

    def rel(zeta):
        est = three_point_via_current(p, m, ti, tf, zeta=zeta, xi=1e-3, nmax=5, hamiltonian=h)
        al, _ = align_global_phase(est.table, big, est.component)
        return max(abs(al[k] - big[k]) / abs(big[k]) for k in big)

    r1, r2 = rel(1e-3), rel(5e-4)
    ratio = r1 / r2
    report(7, r1 <= 5e-2 and 3.0 <= ratio <= 5.0,
           f"relative error {r1:.2e} on {len(big)} outcomes, halving zeta shrinks it by {ratio:.2f} (O(zeta^2) -> 4)")


# 8. measurement-based equivalences

def test_criterion_8_injection_and_teleportation(report):
    fids = {n: [inject_fock(build_chain(2, r), n)[1] for r in (1.5, 2.0, 3.0)] for n in range(4)}
    inj = all(f[0] <= f[1] <= f[2] and f[2] >= 0.9 for f in fids.values())
    tele = {k: [net_map_fidelity([k], r) for r in (1.5, 2.0, 3.0)] for k in (0.0, 0.5)}
    tel = all(f[0] < f[1] < f[2] and f[2] > 0.95 for f in tele.values())
    report(8, inj and tel,
           "inject_fock " + ", ".join(f"n={n}: {f[2]:.6f}" for n, f in fids.items()) + " at r=3; teleport "
           + ", ".join(f"kappa={k}: {[round(x, 4) for x in f]}" for k, f in tele.items()))


@KNOWN_RED
def test_criterion_8_subtraction_kraus(report):
    beta, K = 1e-3, 12
    lo = np.arange(5)
    a = np.diag(np.sqrt(np.arange(1, K + 1)), 1)
    errs = []
    for n in (1, 2):
        target = np.linalg.matrix_power(a, n) / np.sqrt(float(np.prod(np.arange(1, n + 1))))
        s = subtraction_kraus(beta, n, K) / subtraction_prefactor(beta, n)
        errs.append(np.linalg.norm((s - target)[np.ix_(lo, lo)], 2))
    report(8, max(errs) <= 1e-3,
           f"Kraus vs a^n/sqrt(n!) on n<=4 (heralding prefactor removed): n=1 {errs[0]:.2e}, n=2 {errs[1]:.2e}")


@KNOWN_RED
def test_criterion_8_polynomial_sequence(report):
    from fockfield.mbqc import hermite_functions
    run = polynomial_gate_sequence(hermite_functions(1)[1], 1, beta=1e-3, r=3.0, seed=0)
    err = polynomial_map_error(run.roots, 1e-3, 3.0, run.records)
    report(8, err <= 1e-2, f"k=1 sampled sequence, m_1 = {run.roots[0]:.3f}, map error {err:.2e}")


# 9. sampling statistics

def test_criterion_9_sampling(report):
    shots, reps = 10 ** 6, 100
    worst = 1.0
    for p in (0.5, 0.1, 0.013):
        amps = np.array([np.sqrt(1 - p), np.sqrt(p) * np.exp(0.4j)])
        st = FockState(1, 1, amps)
        sigma = np.sqrt(shots * p * (1 - p))
        inside = sum(abs(sample_pnr(st, shots, seed=s).get((1,), 0) - shots * p) <= 5 * sigma for s in range(reps))
        worst = min(worst, inside / reps)
    same = sample_pnr(FockState(1, 1, amps), shots, seed=11) == sample_pnr(FockState(1, 1, amps), shots, seed=11)
    report(9, worst >= 0.99 and same, f"worst in-band fraction {worst:.2f} over 100 seeds, identical seeds agree: {same}")


def test_summary(capsys):
    # one line per criterion; a criterion passes only if all of its sub-checks did
    with capsys.disabled():
        print()
        for n in range(1, 10):
            res = RESULTS.get(n)
            status = "NOT RUN" if res is None else "PASS" if all(res) else "FAIL"
            print(f"{status} criterion {n} ({sum(res or [])}/{len(res or [])} sub-checks)")
