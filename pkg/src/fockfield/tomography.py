"""Phase-sensitive correlator reconstruction from displaced photon counting.

Conventions
-----------
C_n = <n| U |m> for a prepared Fock state |m>. With a weak displacement D(xi)
applied before counting on mode j,

    P_n(xi e_j)  - P_n(0) = 2 xi (sqrt(n_j) Re[C_n C*_{n-e_j}] - sqrt(n_j+1) Re[C_n C*_{n+e_j}])
    P_n(i xi e_j) - P_n(0) = 2 xi (sqrt(n_j) Im[C_n C*_{n-e_j}] + sqrt(n_j+1) Im[C_n C*_{n+e_j}])

up to O(xi^2). The cascade solves these for products of neighbouring amplitudes
and fixes each modulus from the undisplaced count P_n(0). Phases are relative to
a reference outcome whose phase is set to 0; outcomes that no equation connects
to the reference form separate components, each with its own phase convention.

Time derivatives follow the physical sign dC/dt = -i H C.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .fock import FockState, basis_index, sample_pnr
from .gates import (Circuit, apply_circuit, beamsplitter_5050, controlled_evolution_n, current_unitary,
                    displacement, evolve, rotation)

XI_GUARD = 0.01


class ReconstructionError(ValueError):
    pass


class SeedDegenerate(ReconstructionError):
    def __init__(self, message, reseed_at=None):
        super().__init__(message)
        self.reseed_at = reseed_at


class DisconnectedOutcomes(ReconstructionError):
    def __init__(self, message, unreachable):
        super().__init__(message)
        self.unreachable = unreachable


@dataclass(frozen=True)
class DisplacementSetting:
    mode: int | None       # None: undisplaced
    value: complex
    guard: float | None = XI_GUARD

    def __post_init__(self):
        v = complex(self.value)
        if self.mode is None:
            if v != 0:
                raise ValueError("undisplaced setting must have value 0")
            return
        xi = abs(v)
        if not (xi > 0 and (v.imag == 0 or v.real == 0)):
            raise ValueError("setting value must be xi or i*xi with xi > 0")
        if v.real < 0 or v.imag < 0:
            raise ValueError("xi must be positive")
        if self.guard is not None and xi > self.guard:
            raise ValueError(f"|xi| = {xi} exceeds guard {self.guard}")

    @property
    def key(self) -> str:
        if self.mode is None:
            return "0"
        return f"{'re' if complex(self.value).imag == 0 else 'im'}{self.mode}"


def settings_for(modes, xi: float, guard: float | None = XI_GUARD) -> list[DisplacementSetting]:
    out = [DisplacementSetting(None, 0)]
    for j in modes:
        out += [DisplacementSetting(j, xi, guard), DisplacementSetting(j, 1j * xi, guard)]
    return out


@dataclass
class ProbabilityTable:
    num_modes: int
    cutoff: int
    xi: float
    probs: dict           # setting key -> probability tensor, shape (K+1,)*num_modes
    shots: int | None = None
    settings: list = field(default_factory=list)

    def p(self, key: str, outcome) -> float:
        return float(self.probs[key][tuple(outcome)])

    def variance(self, key: str) -> np.ndarray:
        if self.shots is None:
            return np.zeros_like(self.probs[key])
        p = self.probs[key]
        return p * (1 - p) / self.shots

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# lattice units, a = 1\n")
            w = csv.writer(fh)
            w.writerow([f"n{j}" for j in range(self.num_modes)]
                       + ["setting_mode", "setting_value_re", "setting_value_im", "probability", "shots"])
            for s in self.settings:
                tab = self.probs[s.key]
                for idx in product(range(self.cutoff + 1), repeat=self.num_modes):
                    v = complex(s.value)
                    w.writerow(list(idx) + ["" if s.mode is None else s.mode, repr(v.real), repr(v.imag),
                                            repr(float(tab[idx])), "" if self.shots is None else self.shots])


def _prob_tensor(state: FockState) -> np.ndarray:
    p = np.abs(state.tensor) ** 2
    return p / p.sum()


def measure_probabilities(state: FockState, xi: float, modes=None, shots: int | None = None, seed=None,
                          guard: float | None = XI_GUARD) -> ProbabilityTable:
    """Count statistics after each setting in {0, xi e_j, i xi e_j}; exact unless shots is given."""
    modes = range(state.num_modes) if modes is None else modes
    settings = settings_for(modes, xi, guard)
    seeds = np.random.SeedSequence(seed).spawn(len(settings)) if shots is not None else [None] * len(settings)
    probs = {}
    for s, ss in zip(settings, seeds):
        st = state if s.mode is None else apply_circuit(
            Circuit(state.num_modes, [displacement(s.value, s.mode)]), state, track=False)[0]
        if shots is None:
            probs[s.key] = _prob_tensor(st)
        else:
            counts = sample_pnr(st, shots, seed=np.random.default_rng(ss))
            tab = np.zeros((state.cutoff + 1,) * state.num_modes)
            for outcome, c in counts.items():
                tab[tuple(outcome)] = c / shots
            probs[s.key] = tab
    return ProbabilityTable(state.num_modes, state.cutoff, xi, probs, shots, settings)


@dataclass
class ReconstructionResult:
    table: dict                   # outcome tuple -> complex C
    reference_outcome: tuple
    component: dict               # outcome -> component id (0 = reference component)
    residuals: np.ndarray
    sigma: dict = field(default_factory=dict)
    global_phase_convention: str = "reference outcome of each component has phase 0"

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residuals)) if len(self.residuals) else 0.0

    @property
    def num_components(self) -> int:
        return len(set(self.component.values()))

    def to_json(self) -> dict:
        return {
            "reference_outcome": list(self.reference_outcome),
            "entries": [{"outcome": list(k), "re": v.real, "im": v.imag, "sigma": self.sigma.get(k),
                         "component": self.component.get(k)} for k, v in sorted(self.table.items())],
            "residual_norm": self.residual_norm,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def _outcome_grid(num_modes: int, nmax) -> list[tuple]:
    nm = [nmax] * num_modes if np.isscalar(nmax) else list(nmax)
    return [tuple(o) for o in product(*[range(k + 1) for k in nm])]


def _solve(table: ProbabilityTable, modes, nmax, reference, zero_threshold, seed_threshold, strict):
    xi = table.xi
    grid = _outcome_grid(table.num_modes, nmax)
    in_grid = set(grid)
    p0 = {o: table.p("0", o) for o in grid}
    known: dict = {o: 0j for o in grid if p0[o] < zero_threshold}
    comp: dict = {o: -1 for o in known}
    if p0[reference] < seed_threshold:
        order = sorted((o for o in grid if p0[o] >= seed_threshold), key=lambda o: (sum(o), o))
        raise SeedDegenerate(f"reference outcome {reference} has probability {p0[reference]:.3g}",
                             order[0] if order else None)

    def shift(o, j, d):
        o = list(o)
        o[j] += d
        return tuple(o)

    # each equation (n, j): dRe = sqrt(nj) Re[Y] - sqrt(nj+1) Re[X], dIm = sqrt(nj) Im[Y] + sqrt(nj+1) Im[X]
    # with X = C_n C*_{n+e_j}, Y = C_n C*_{n-e_j}
    equations = []
    for n in grid:
        for j in modes:
            up = shift(n, j, 1)
            if up not in in_grid:
                continue
            dre = (table.p(f"re{j}", n) - p0[n]) / (2 * xi)
            dim = (table.p(f"im{j}", n) - p0[n]) / (2 * xi)
            down = shift(n, j, -1) if n[j] > 0 else None
            equations.append((n, j, up, down, dre + 1j * dim))

    def seed(o, cid):
        known[o] = complex(np.sqrt(p0[o]))
        comp[o] = cid

    seed(reference, 0)
    cid = 0

    def compatible(o, c):
        # zero amplitudes carry no phase and fit any component
        return o is None or comp[o] in (c, -1)

    while True:
        progress = True
        while progress:
            progress = False
            estimates: dict = {}
            links: list = []
            for n, j, up, down, d in equations:
                if n not in known or abs(known[n]) == 0:
                    continue
                cn, cc = known[n], comp[n]
                s_dn, s_up = np.sqrt(n[j]), np.sqrt(n[j] + 1)
                # dre + i dim = s_dn Y - s_up conj(X), Y = C_n C*_down, conj(X) = conj(C_n) C_up
                if down is None or (down in known and compatible(down, cc)):
                    y = cn * np.conj(known[down]) if down is not None else 0
                    est = (s_dn * y - d) / s_up / np.conj(cn)
                    if up not in known:
                        estimates.setdefault(up, []).append((est, abs(cn) ** 2, cc))
                    elif comp[up] not in (cc, -1):
                        links.append((comp[up], cc, est / known[up], abs(cn) ** 2))
                elif up in known and compatible(up, cc):
                    xc = np.conj(cn) * known[up]
                    est = np.conj((d + s_up * xc) / s_dn / cn)
                    if down not in known:
                        estimates.setdefault(down, []).append((est, abs(cn) ** 2, cc))
                    elif comp[down] not in (cc, -1):
                        links.append((comp[down], cc, est / known[down], abs(cn) ** 2))
            if links:
                # rotate one foreign component into the gauge of the component that reaches it
                src, dst = links[0][0], links[0][1]
                ratio = sum(w * r for a, b, r, w in links if (a, b) == (src, dst))
                ph = ratio / abs(ratio)
                for o in known:
                    if comp[o] == src:
                        known[o] *= ph
                        comp[o] = dst
                progress = True
                continue
            for o, ests in estimates.items():
                cc = min(e[2] for e in ests)
                use = [e for e in ests if e[2] == cc]
                vals = np.array([e[0] for e in use])
                w = np.array([e[1] for e in use])
                lin = np.sum(w * vals) / np.sum(w)
                mod = np.sqrt(p0[o])
                known[o] = mod * lin / abs(lin) if abs(lin) > 0 else complex(mod)
                comp[o] = cc
                progress = True
        left = [o for o in grid if o not in known]
        if not left:
            break
        if strict:
            raise DisconnectedOutcomes(f"{len(left)} outcomes unreachable from {reference}", left)
        cid += 1
        seed(min(left, key=lambda o: (sum(o), -p0[o])), cid)

    # renumber surviving components consecutively, reference first
    ids = {comp[reference]: 0}
    for o in grid:
        c = comp[o]
        if c >= 0 and c not in ids:
            ids[c] = len(ids)
    comp = {o: ids.get(c, -1) for o, c in comp.items()}
    res = []
    for n, j, up, down, d in equations:
        if n in known and up in known and (down is None or down in known):
            cn = known[n]
            y = cn * np.conj(known[down]) if down is not None else 0
            pred = np.sqrt(n[j]) * y - np.sqrt(n[j] + 1) * np.conj(cn * np.conj(known[up]))
            res += [(pred - d).real, (pred - d).imag]
    # give zero entries the component of the reference so that alignment ignores them
    comp = {o: (c if c >= 0 else 0) for o, c in comp.items()}
    return known, comp, np.array(res)


def _bootstrap_sigma(table: ProbabilityTable, solve, base: dict, n_boot: int, seed) -> dict:
    """Parametric bootstrap: resample every setting's histogram from the measured
    frequencies, rerun the cascade, and report the RMS deviation per entry. Unlike a
    linearization this stays meaningful when phase errors are of order one."""
    rng = np.random.default_rng(seed)
    acc = {k: 0.0 for k in base}
    used = 0
    for _ in range(n_boot):
        pert = {}
        for key, tab in table.probs.items():
            p = tab.ravel() / tab.sum()
            pert[key] = (rng.multinomial(table.shots, p) / table.shots).reshape(tab.shape)
        tp = ProbabilityTable(table.num_modes, table.cutoff, table.xi, pert, table.shots, table.settings)
        try:
            moved = solve(tp)
        except ReconstructionError:
            continue
        used += 1
        for k in base:
            acc[k] += abs(moved.get(k, base[k]) - base[k]) ** 2
    if used == 0:
        raise ReconstructionError("no bootstrap replica could be reconstructed")
    return {k: float(np.sqrt(v / used)) for k, v in acc.items()}


def reconstruct_multimode(table: ProbabilityTable, nmax, modes=None, reference=None,
                          zero_threshold: float = 1e-12, seed_threshold: float = 1e-8,
                          strict: bool = False, propagate: bool = True, n_boot: int = 200,
                          boot_seed=0) -> ReconstructionResult:
    """Cascade over one-mode-at-a-time displacement settings.

    Every equation whose centre amplitude is known and nonzero, and which has a single
    unknown neighbour, yields an estimate; estimates for the same outcome are combined
    by inverse-variance weights (|C_centre|^2) and the modulus is taken from P(0).
    Outcomes unreachable from the reference raise DisconnectedOutcomes when strict,
    otherwise they start new components.
    """
    modes = list(range(table.num_modes)) if modes is None else list(modes)
    reference = tuple([0] * table.num_modes) if reference is None else tuple(reference)
    if np.isscalar(nmax) and nmax > table.cutoff:
        raise ValueError("nmax exceeds the detector cutoff")
    args = (modes, nmax, reference, zero_threshold, seed_threshold, strict)
    known, comp, res = _solve(table, *args)
    sigma = {}
    if propagate and table.shots is not None:
        sigma = _bootstrap_sigma(table, lambda t: _solve(t, *args)[0], known, n_boot, boot_seed)
    return ReconstructionResult(known, reference, comp, res, sigma)


def reconstruct_single_mode(table: ProbabilityTable, nmax: int, **kw) -> ReconstructionResult:
    if table.num_modes != 1:
        raise ValueError("single-mode reconstruction needs a one-mode table")
    kw.setdefault("strict", True)
    return reconstruct_multimode(table, nmax, **kw)


def richardson(coarse: ReconstructionResult, fine: ReconstructionResult) -> ReconstructionResult:
    """Combine reconstructions at xi and xi/2: 2 C(xi/2) - C(xi), moduli kept from the fine run."""
    out = {}
    for k, v in fine.table.items():
        c = coarse.table.get(k, v)
        lin = 2 * v - c
        out[k] = abs(v) * lin / abs(lin) if abs(lin) > 0 else v
    return ReconstructionResult(out, fine.reference_outcome, fine.component, fine.residuals, fine.sigma)


def align_global_phase(reconstructed: dict, oracle: dict, components: dict | None = None):
    """Optimal common phase per component; returns (aligned dict, max abs error)."""
    groups: dict = {}
    for k in oracle:
        groups.setdefault(0 if components is None else components.get(k, 0), []).append(k)
    aligned = {}
    for keys in groups.values():
        ov = sum(np.conj(reconstructed[k]) * oracle[k] for k in keys)
        ph = ov / abs(ov) if abs(ov) > 0 else 1.0
        for k in keys:
            aligned[k] = reconstructed[k] * ph
    err = max(abs(aligned[k] - oracle[k]) for k in oracle)
    return aligned, float(err)


# global phase linking

@dataclass
class PhaseLink:
    delta_phi: dict        # outcome -> Phi_b - Phi_a
    cos_term: dict         # outcome -> |Ca Cb| cos(delta phi) = P_{n,0} - P_{n,1}
    sin_term: dict
    sum_rule: dict         # outcome -> P_{n,0} + P_{n,1} at the cosine setting


def _photon_control_probs(num_sys: int, cutoff: int, initial, prefix: list, dt: float, control_h, theta: float,
                          shots=None, seed=None):
    a0, a1 = num_sys, num_sys + 1
    sysm = list(range(num_sys))
    counts = list(initial) + [1, 0]
    state = FockState.basis(counts, cutoff)
    gates = list(prefix) + [beamsplitter_5050((a0, a1)), controlled_evolution_n(dt, control_h, a0, sysm)]
    if theta:
        gates.append(rotation(theta, a0))
    gates.append(beamsplitter_5050((a0, a1)))
    out, _ = apply_circuit(Circuit(num_sys + 2, gates), state, track=False)
    if shots is None:
        return _prob_tensor(out)
    tab = np.zeros((cutoff + 1,) * (num_sys + 2))
    for o, c in sample_pnr(out, shots, seed=seed).items():
        tab[tuple(o)] = c / shots
    return tab


def photon_control_link(num_sys: int, cutoff: int, initial, prefix: list, dt: float, control_h,
                        outcomes, magnitudes=None, shots=None, seed=None, tol: float = 1e-6) -> PhaseLink:
    """Mach-Zehnder on an ancilla photon with exp(-i dt N_a0 H) in one arm.

    Returns arg(<n|e^{-i dt H} W|m> / <n|W|m>) per outcome, W the prefix; a second run
    with a quarter-turn on the controlled arm resolves the sign.
    """
    rng = np.random.SeedSequence(seed).spawn(2) if shots is not None else [None, None]
    p_cos = _photon_control_probs(num_sys, cutoff, initial, prefix, dt, control_h, 0.0, shots,
                                  None if rng[0] is None else np.random.default_rng(rng[0]))
    p_sin = _photon_control_probs(num_sys, cutoff, initial, prefix, dt, control_h, np.pi / 2, shots,
                                  None if rng[1] is None else np.random.default_rng(rng[1]))
    dphi, cs, sn, sums = {}, {}, {}, {}
    for o in outcomes:
        o = tuple(o)
        c = p_cos[o + (0, 1)] - p_cos[o + (1, 0)]
        s = p_sin[o + (0, 1)] - p_sin[o + (1, 0)]
        cs[o], sn[o] = float(c), float(-s)
        sums[o] = float(p_cos[o + (0, 1)] + p_cos[o + (1, 0)])
        amp = np.hypot(c, s)
        if amp < 1e-14:
            raise ReconstructionError(f"|C(t_a) C(t_b)| vanishes for outcome {o}; phase undefined")
        if magnitudes is not None:
            ma, mb = magnitudes[o]
            if abs(c) > ma * mb * (1 + tol) + tol:
                raise ReconstructionError(f"|cos| estimate exceeds 1 for outcome {o}")
        dphi[o] = float(np.arctan2(-s, c))
    return PhaseLink(dphi, cs, sn, sums)


def link_phases_photon_control(hamiltonian, initial, t_a: float, t_b: float, cutoff: int, outcomes,
                               magnitudes=None, shots=None, seed=None) -> PhaseLink:
    """Phi(t_b) - Phi(t_a) per outcome for C_n(t) = <n|e^{-itH}|m>."""
    if not t_b >= t_a >= 0:
        raise ValueError("need t_b >= t_a >= 0")
    initial = tuple(initial)
    num_sys = len(initial)
    prefix = [evolve(t_a, hamiltonian, range(num_sys))] if t_a else []
    return photon_control_link(num_sys, cutoff, initial, prefix, t_b - t_a, hamiltonian, outcomes,
                               magnitudes, shots, seed)


@dataclass
class QuadratureLink:
    delta_phi: dict
    visibility: dict
    p_grid: np.ndarray
    distributions: dict


def two_peak_ancilla(q: np.ndarray, s_a: float, s_b: float, r_anc: float) -> np.ndarray:
    """Equal superposition of two q-squeezed states centred at s_a and s_b, normalized on the grid."""
    w = np.exp(2 * r_anc)
    psi = np.exp(-0.5 * w * (q - s_a) ** 2) + np.exp(-0.5 * w * (q - s_b) ** 2)
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * (q[1] - q[0]))


def link_phases_quadrature_control(hamiltonian, initial_index: int, t_a: float, t_b: float, tau: float,
                                   outcomes, r_anc: float = 2.0, min_visibility: float = 1e-3) -> QuadratureLink:
    """exp(-i tau q_a H) controlled by a two-peak ancilla, then the ancilla p distribution.

    The fringe is extracted by projecting each outcome's distribution P_n(p) onto
    e^{i p ds}, ds = (t_b - t_a)/tau (the least-squares cosine fit over the whole p
    range): R = int P e^{i p ds} dp / int P dp. Then Phi_b - Phi_a = arg R and the
    visibility is 2|R|, which equals 2|Ca Cb|/(|Ca|^2 + |Cb|^2) for sharp peaks and
    drops as finite peak width averages over the evolution.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    h = hamiltonian.toarray() if hasattr(hamiltonian, "toarray") else np.asarray(hamiltonian, dtype=complex)
    e, v = np.linalg.eigh(h)
    s_a, s_b = t_a / tau, t_b / tau
    ds = s_b - s_a
    width = np.exp(-r_anc)
    q = np.arange(min(s_a, s_b) - 10 * width, max(s_a, s_b) + 10 * width, width / 12)
    dq = q[1] - q[0]
    psi = two_peak_ancilla(q, s_a, s_b, r_anc)
    coef = v.conj()[initial_index, :]                 # <k|m>
    pmax = 6 * np.exp(r_anc) + tau * np.max(np.abs(e))
    dp = min(2 * np.pi / (max(abs(ds), 1e-12) * 16), np.exp(r_anc) / 8)
    p = np.arange(-pmax, pmax + dp / 2, dp)
    kernel = np.exp(-1j * np.outer(p, q)) * dq / np.sqrt(2 * np.pi)
    phase = np.exp(-1j * tau * np.outer(e, q))
    dphi, vis, dists = {}, {}, {}
    for n in outcomes:
        cn = (v[n, :] * coef) @ phase                  # C_n(tau q)
        dist = np.abs(kernel @ (psi * cn)) ** 2
        dists[n] = dist
        if ds == 0:
            dphi[n], vis[n] = 0.0, 0.0
            continue
        norm = np.sum(dist)
        if norm <= 0:
            raise ReconstructionError(f"outcome {n} has zero probability")
        r = np.sum(dist * np.exp(1j * p * ds)) / norm
        vis[n] = float(2 * abs(r))
        if vis[n] < min_visibility:
            raise ReconstructionError(f"fringe visibility {vis[n]:.2g} below threshold for outcome {n}")
        dphi[n] = float(np.angle(r))
    return QuadratureLink(dphi, vis, p, dists)


# time derivative and propagation

def phase_by_ode(c_vector, hamiltonian) -> np.ndarray:
    """dC/dt for C_n(t) = <n|e^{-itH}|m> over a complete outcome set: -i H C."""
    h = hamiltonian.toarray() if hasattr(hamiltonian, "toarray") else np.asarray(hamiltonian)
    c = np.asarray(c_vector, dtype=complex)
    if h.shape[0] != c.shape[0]:
        raise ValueError("C table does not cover the Hamiltonian's outcome set")
    return -1j * (h @ c)


def rk4_propagate(c_vector, hamiltonian, t_span: float, step: float) -> np.ndarray:
    """Classical RK4 for dC/dt = -i H C over [0, t_span]."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = max(1, int(np.ceil(abs(t_span) / step)))
    h = np.sign(t_span) * abs(t_span) / n if t_span else 0.0
    c = np.asarray(c_vector, dtype=complex).copy()
    for _ in range(n):
        k1 = phase_by_ode(c, hamiltonian)
        k2 = phase_by_ode(c + 0.5 * h * k1, hamiltonian)
        k3 = phase_by_ode(c + 0.5 * h * k2, hamiltonian)
        k4 = phase_by_ode(c + h * k3, hamiltonian)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return c


# three-point correlator via the current unitary

@dataclass
class ThreePointEstimate:
    table: dict                   # outcome -> estimate of <n|e^{i t_f H} J e^{-i t_i H}|m>
    component: dict
    plus: ReconstructionResult
    minus_magnitudes: dict
    relative_phase: dict          # outcome -> arg(C(+zeta)/C(-zeta))


def _current_probe_state(params, initial, t_i, t_f, zeta, site, hamiltonian):
    M = params.num_modes
    gates = [evolve(t_i, hamiltonian, range(M)), current_unitary(zeta, site, params),
             evolve(-t_f, hamiltonian, range(M))]
    st, _ = apply_circuit(Circuit(M, gates), FockState.basis(initial, params.cutoff), track=False)
    return st


def three_point_via_current(params, initial, t_i: float, t_f: float, zeta: float = 1e-3, site: int = 0,
                            xi: float = 1e-3, nmax: int | None = None, hamiltonian=None,
                            richardson_step: bool = True, shots=None, seed=None) -> ThreePointEstimate:
    """[C(zeta) - C(-zeta)] / (2 i zeta) with C(zeta) = <n|e^{i t_f H} e^{i zeta J} e^{-i t_i H}|m>.

    C(+zeta) comes from the displacement cascade; C(-zeta) enters through its measured
    moduli and the per-outcome relative phase arg(C(+zeta)/C(-zeta)), which a photon-
    controlled interferometer with exp(2 i zeta J) in one arm measures directly.
    """
    from .lattice import current_operator, exact_hamiltonian
    if not t_f > 0 > t_i:
        raise ValueError("need t_f > 0 > t_i")
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if hamiltonian is None:
        hamiltonian = exact_hamiltonian(params)
    h = hamiltonian.toarray() if hasattr(hamiltonian, "toarray") else np.asarray(hamiltonian)
    M, K = params.num_modes, params.cutoff
    nmax = K - 1 if nmax is None else nmax
    initial = tuple(initial)
    grid = _outcome_grid(M, nmax)

    plus_state = _current_probe_state(params, initial, t_i, t_f, zeta, site, h)
    minus_state = _current_probe_state(params, initial, t_i, t_f, -zeta, site, h)
    sq = np.random.SeedSequence(seed).spawn(4) if shots is not None else [None] * 4
    tab = measure_probabilities(plus_state, xi, shots=shots, seed=sq[0])
    # charge conservation can empty the all-zeros outcome; seed from the most likely one instead
    ref = max(grid, key=lambda o: tab.p("0", o))
    plus = reconstruct_multimode(tab, nmax, reference=ref, propagate=False)
    if richardson_step:
        tab2 = measure_probabilities(plus_state, xi / 2, shots=shots, seed=sq[1])
        plus = richardson(plus, reconstruct_multimode(tab2, nmax, reference=ref, propagate=False))
    pm = measure_probabilities(minus_state, xi, modes=[], shots=shots, seed=sq[2]).probs["0"]
    minus_mod = {o: float(np.sqrt(pm[o])) for o in grid}

    jmat = current_operator(params, site).entries
    prefix = [evolve(t_i, h, range(M)), current_unitary(-zeta, site, params)]
    # the suffix exp(i t_f H) acts identically on both arms, so it is folded into the outcome basis
    live = [o for o in grid if abs(plus.table[o]) > 0 and minus_mod[o] > 0]
    rel = _relative_phases(params, initial, prefix, -2 * zeta, jmat, h, t_f, live, shots, sq[3])
    est = {}
    for o in grid:
        cp = plus.table[o]
        if o in rel:
            cm = minus_mod[o] * np.exp(1j * (np.angle(cp) - rel[o]))
        else:
            cm = minus_mod[o] * (cp / abs(cp) if abs(cp) > 0 else 1.0)
        est[o] = (cp - cm) / (2j * zeta)
    return ThreePointEstimate(est, plus.component, plus, minus_mod, rel)


def _relative_phases(params, initial, prefix, dt, control_h, h, t_f, outcomes, shots, seed):
    M, K = params.num_modes, params.cutoff
    a0, a1 = M, M + 1
    out = {}
    runs = []
    ss = np.random.SeedSequence(seed).spawn(2) if shots is not None else [None, None]
    for theta, s in zip((0.0, np.pi / 2), ss):
        gates = list(prefix) + [beamsplitter_5050((a0, a1)), controlled_evolution_n(dt, control_h, a0, range(M))]
        if theta:
            gates.append(rotation(theta, a0))
        gates += [beamsplitter_5050((a0, a1)), evolve(-t_f, h, range(M))]
        st, _ = apply_circuit(Circuit(M + 2, gates), FockState.basis(list(initial) + [1, 0], K), track=False)
        if shots is None:
            runs.append(_prob_tensor(st))
        else:
            tab = np.zeros((K + 1,) * (M + 2))
            for o, c in sample_pnr(st, shots, seed=np.random.default_rng(s)).items():
                tab[tuple(o)] = c / shots
            runs.append(tab)
    for o in outcomes:
        c = runs[0][o + (0, 1)] - runs[0][o + (1, 0)]
        s = runs[1][o + (0, 1)] - runs[1][o + (1, 0)]
        if np.hypot(c, s) > 1e-14:
            out[o] = float(np.arctan2(-s, c))
    return out


def three_point_oracle(params, initial, t_i: float, t_f: float, site: int = 0, hamiltonian=None) -> np.ndarray:
    """<n|e^{i t_f H} J e^{-i t_i H}|m> for all n, as a flat vector."""
    from scipy.linalg import expm
    from .lattice import current_operator, exact_hamiltonian
    h = exact_hamiltonian(params) if hamiltonian is None else hamiltonian
    h = h.toarray() if hasattr(h, "toarray") else np.asarray(h)
    j = current_operator(params, site).entries
    m = np.zeros(h.shape[0], dtype=complex)
    m[basis_index(initial, params.cutoff)] = 1
    return expm(1j * t_f * h) @ (j @ (expm(-1j * t_i * h) @ m))
