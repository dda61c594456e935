"""Named gates over the truncated Fock space.

Conventions (fixed once, used by every circuit in the package):

* Rotate(theta)      = exp(i theta N)
* Displace(xi)       = exp(xi a^dag - xi^* a)
* Shear(kappa)       = exp(i kappa Q^2)
* Squeeze1(r)        = exp((r/2)(a^dag^2 - a^2)),  r > 0 squeezes P
* Squeeze2(r)        = exp(r (a1^dag a2^dag - a1 a2))
* BeamSplitter5050   = exp((pi/4)(a1^dag a2 - a1 a2^dag))
  Schroedinger action: a1 -> (a1 - a2)/sqrt2, a2 -> (a1 + a2)/sqrt2,
  so |1,0> -> (|1,0> - |0,1>)/sqrt2.  Swapping the targets gives the inverse.
* CZ                 = exp(i Q1 Q2)
* QuarticPhase(g)    = exp(i (g/6) Q^4)
* TranslateQ(s)      = exp(-i s P),  TranslateP(t) = exp(i t Q)
* Interferometer(W)  = passive unitary U with U^dag a U = W a
* ControlledN(dt, H) = exp(-i dt N_anc (x) H)
* ControlledQ(tau,H) = exp(-i tau Q_anc (x) H)
* CurrentUnitary     = exp(i zeta J(x)) with J from the lattice model
* Evolve(dt, H)      = exp(-i dt H) for a Hermitian H on the target modes

All unitaries are exponentials of truncated Hermitian generators and are
therefore exactly unitary at the cutoff; truncation shows up as population on
the top Fock level, which apply_circuit tracks per gate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .fock import (FockState, ModeOperator, apply_matrix, identity_op, ladder_lower,
                   operator_exp, quadratures, _hermitian_eig)

GATE_PARAMS = {
    "Rotate": ("theta",),
    "Displace": ("xi",),
    "Shear": ("kappa",),
    "Squeeze1": ("r",),
    "Squeeze2": ("r",),
    "BeamSplitter5050": (),
    "CZ": (),
    "QuarticPhase": ("gamma",),
    "CurrentUnitary": ("zeta", "site", "model"),
    "ControlledN": ("dt", "hamiltonian"),
    "ControlledQ": ("tau", "hamiltonian"),
    "TranslateQ": ("s",),
    "TranslateP": ("t",),
    "Interferometer": ("matrix",),
    "Evolve": ("dt", "hamiltonian"),
}
OPTIONAL_PARAMS = {"CZ": ("weight",)}
GATE_ARITY = {
    "Rotate": 1, "Displace": 1, "Shear": 1, "Squeeze1": 1, "QuarticPhase": 1,
    "TranslateQ": 1, "TranslateP": 1, "Squeeze2": 2, "BeamSplitter5050": 2, "CZ": 2,
}
GAUSSIAN_KINDS = {"Rotate", "Displace", "Shear", "Squeeze1", "Squeeze2", "BeamSplitter5050", "CZ",
                  "TranslateQ", "TranslateP", "Interferometer"}


class GateError(ValueError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"gate {index}: {message}")


@dataclass(frozen=True)
class GateSpec:
    kind: str
    targets: tuple
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind not in GATE_PARAMS:
            raise GateError(f"unknown gate kind {self.kind!r}")
        need = set(GATE_PARAMS[self.kind])
        allowed = need | set(OPTIONAL_PARAMS.get(self.kind, ()))
        have = set(self.params)
        if not need <= have or not have <= allowed:
            raise GateError(f"{self.kind} takes params {sorted(need)}, got {sorted(have)}")
        if len(set(self.targets)) != len(self.targets) or not self.targets:
            raise GateError(f"{self.kind} targets {self.targets} must be distinct and non-empty")
        arity = GATE_ARITY.get(self.kind)
        if arity is not None and len(self.targets) != arity:
            raise GateError(f"{self.kind} needs {arity} target(s), got {len(self.targets)}")
        if self.kind in ("ControlledN", "ControlledQ") and len(self.targets) < 2:
            raise GateError(f"{self.kind} needs an ancilla and at least one system mode")
        for key, val in self.params.items():
            if key in ("model", "hamiltonian", "matrix"):
                continue
            if not np.all(np.isfinite(np.asarray(val))):
                raise GateError(f"{self.kind} parameter {key} is not finite")

    def __hash__(self):
        return hash((self.kind, self.targets))

    def to_json(self) -> dict:
        return {"kind": self.kind, "targets": list(self.targets),
                "params": {k: _encode(v) for k, v in self.params.items()}}

    @classmethod
    def from_json(cls, data: dict) -> "GateSpec":
        return cls(data["kind"], tuple(data["targets"]),
                   {k: _decode(v) for k, v in data.get("params", {}).items()})


def _encode(v):
    if isinstance(v, np.ndarray) or (isinstance(v, list) and v and isinstance(v[0], (list, np.ndarray))):
        arr = np.asarray(v, dtype=complex)
        return {"re": arr.real.tolist(), "im": arr.imag.tolist()}
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _decode(v):
    if isinstance(v, dict) and set(v) == {"re", "im"}:
        return np.asarray(v["re"], dtype=float) + 1j * np.asarray(v["im"], dtype=float)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    return v


@dataclass
class Circuit:
    num_modes: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for i, g in enumerate(self.gates):
            if any(not 0 <= t < self.num_modes for t in g.targets):
                raise GateError(f"targets {g.targets} outside {self.num_modes} modes", i)

    def append(self, gate: GateSpec) -> "Circuit":
        if any(not 0 <= t < self.num_modes for t in gate.targets):
            raise GateError(f"targets {gate.targets} outside {self.num_modes} modes", len(self.gates))
        self.gates.append(gate)
        return self

    def extend(self, other) -> "Circuit":
        for g in (other.gates if isinstance(other, Circuit) else other):
            self.append(g)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.num_modes, [inverse_gate(g) for g in reversed(self.gates)])

    def to_json(self) -> dict:
        return {"num_modes": self.num_modes, "gates": [g.to_json() for g in self.gates]}

    @classmethod
    def from_json(cls, data) -> "Circuit":
        if isinstance(data, list):
            gates = [GateSpec.from_json(g) for g in data]
            n = 1 + max((max(g.targets) for g in gates), default=0)
            return cls(n, gates)
        return cls(int(data["num_modes"]), [GateSpec.from_json(g) for g in data["gates"]])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "Circuit":
        return cls.from_json(json.loads(Path(path).read_text()))


# constructors

def rotation(theta: float, mode: int = 0) -> GateSpec:
    return GateSpec("Rotate", (mode,), {"theta": float(theta)})


def displacement(xi: complex, mode: int = 0) -> GateSpec:
    return GateSpec("Displace", (mode,), {"xi": complex(xi)})


def shear(kappa: float, mode: int = 0) -> GateSpec:
    return GateSpec("Shear", (mode,), {"kappa": float(kappa)})


def squeeze1(r: float, mode: int = 0) -> GateSpec:
    return GateSpec("Squeeze1", (mode,), {"r": float(r)})


def squeeze2(r: float, modes=(0, 1)) -> GateSpec:
    return GateSpec("Squeeze2", tuple(modes), {"r": float(r)})


def beamsplitter_5050(modes=(0, 1)) -> GateSpec:
    return GateSpec("BeamSplitter5050", tuple(modes), {})


def cz(modes=(0, 1), weight: float = 1.0) -> GateSpec:
    params = {} if weight == 1.0 else {"weight": float(weight)}
    return GateSpec("CZ", tuple(modes), params)


def quartic_phase(gamma: float, mode: int = 0) -> GateSpec:
    return GateSpec("QuarticPhase", (mode,), {"gamma": float(gamma)})


def translate_q(s: float, mode: int = 0) -> GateSpec:
    return GateSpec("TranslateQ", (mode,), {"s": float(s)})


def translate_p(t: float, mode: int = 0) -> GateSpec:
    return GateSpec("TranslateP", (mode,), {"t": float(t)})


def interferometer(matrix, modes) -> GateSpec:
    w = np.asarray(matrix, dtype=complex)
    if w.shape != (len(modes), len(modes)):
        raise GateError("interferometer matrix must be square over its modes")
    if np.max(np.abs(w.conj().T @ w - np.eye(len(modes)))) > 1e-12:
        raise GateError("interferometer matrix is not unitary")
    return GateSpec("Interferometer", tuple(modes), {"matrix": w})


def controlled_evolution_n(dt: float, hamiltonian, ancilla: int, system) -> GateSpec:
    return GateSpec("ControlledN", (ancilla, *system), {"dt": float(dt), "hamiltonian": _as_matrix(hamiltonian)})


def controlled_evolution_q(tau: float, hamiltonian, ancilla: int, system) -> GateSpec:
    return GateSpec("ControlledQ", (ancilla, *system), {"tau": float(tau), "hamiltonian": _as_matrix(hamiltonian)})


def evolve(dt: float, hamiltonian, modes) -> GateSpec:
    return GateSpec("Evolve", tuple(modes), {"dt": float(dt), "hamiltonian": _as_matrix(hamiltonian)})


def current_unitary(zeta: float, site: int, model) -> GateSpec:
    """exp(i zeta J(site)); `model` is a lattice ModelParams (or its dict form)."""
    from .lattice import ModelParams
    params = model if isinstance(model, ModelParams) else ModelParams(**model)
    if not 0 <= site < params.L:
        raise GateError(f"site {site} outside lattice of {params.L} sites")
    return GateSpec("CurrentUnitary", tuple(range(2 * params.L)),
                    {"zeta": float(zeta), "site": int(site), "model": params.to_dict()})


def _as_matrix(h):
    m = h.entries if isinstance(h, ModeOperator) else np.asarray(h, dtype=complex)
    if np.max(np.abs(m - m.conj().T)) > 1e-12:
        raise GateError("controlled-evolution Hamiltonian must be Hermitian")
    return m


def inverse_gate(g: GateSpec) -> GateSpec:
    k, p = g.kind, g.params
    if k == "BeamSplitter5050":
        return GateSpec(k, g.targets[::-1], {})
    if k == "CZ":
        return GateSpec(k, g.targets, {"weight": -float(p.get("weight", 1.0))})
    if k == "Interferometer":
        return GateSpec(k, g.targets, {"matrix": np.asarray(p["matrix"]).conj().T})
    flip = {"Evolve": "dt", "Rotate": "theta", "Displace": "xi", "Shear": "kappa", "Squeeze1": "r", "Squeeze2": "r",
            "QuarticPhase": "gamma", "CurrentUnitary": "zeta", "ControlledN": "dt",
            "ControlledQ": "tau", "TranslateQ": "s", "TranslateP": "t"}[k]
    new = dict(p)
    new[flip] = -p[flip]
    return GateSpec(k, g.targets, new)


# generators and unitaries

def _pair_ops(cutoff):
    a = ladder_lower(cutoff).entries
    eye = np.eye(cutoff + 1)
    return np.kron(a, eye), np.kron(eye, a)


def _herm(m, cutoff, arity):
    m = 0.5 * (m + m.conj().T)
    return ModeOperator(m, cutoff, arity, hermitian=True)


def passive_generator(matrix, cutoff: int) -> ModeOperator:
    """Hermitian H with exp(iH) = U and U^dag a U = W a."""
    w = np.asarray(matrix, dtype=complex)
    n = w.shape[0]
    x = linalg.logm(w)
    x = 0.5 * (x - x.conj().T)
    a = ladder_lower(cutoff).entries
    d = cutoff + 1
    ops = []
    for j in range(n):
        factors = [np.eye(d)] * n
        factors[j] = a
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    gen = np.zeros((d ** n, d ** n), dtype=complex)
    for i in range(n):
        for j in range(n):
            if x[i, j] != 0:
                gen += x[i, j] * ops[i].conj().T @ ops[j]
    return _herm(-1j * gen, cutoff, n)


def gate_unitary(g: GateSpec, cutoff: int) -> ModeOperator:
    """Matrix of a gate on its own target modes (not for ControlledN/Q)."""
    k, p = g.kind, g.params
    K = cutoff
    if k == "Rotate":
        return ModeOperator(np.diag(np.exp(1j * p["theta"] * np.arange(K + 1))), K)
    if k == "Displace":
        xi = complex(p["xi"])
        if xi == 0:
            return identity_op(K)
        a = ladder_lower(K).entries
        phase = xi / abs(xi)
        gen = _herm(1j * (phase * a.conj().T - np.conj(phase) * a), K, 1)
        return operator_exp(gen, -1j * abs(xi))
    if k in ("Shear", "QuarticPhase", "TranslateP"):
        q, _ = quadratures(K)
        if k == "Shear":
            return operator_exp(_herm(q.entries @ q.entries, K, 1), 1j * p["kappa"])
        if k == "QuarticPhase":
            return operator_exp(_herm(np.linalg.matrix_power(q.entries, 4), K, 1), 1j * p["gamma"] / 6)
        return operator_exp(q, 1j * p["t"])
    if k == "TranslateQ":
        _, pq = quadratures(K)
        return operator_exp(pq, -1j * p["s"])
    if k == "Squeeze1":
        a = ladder_lower(K).entries
        ad = a.conj().T
        return operator_exp(_herm(0.5j * (ad @ ad - a @ a), K, 1), -1j * p["r"])
    if k == "Squeeze2":
        a1, a2 = _pair_ops(K)
        gen = 1j * (a1.conj().T @ a2.conj().T - a1 @ a2)
        return operator_exp(_herm(gen, K, 2), -1j * p["r"])
    if k == "BeamSplitter5050":
        a1, a2 = _pair_ops(K)
        gen = 1j * (a1.conj().T @ a2 - a1 @ a2.conj().T)
        return operator_exp(_herm(gen, K, 2), -1j * np.pi / 4)
    if k == "CZ":
        q, _ = quadratures(K)
        return operator_exp(_herm(np.kron(q.entries, q.entries), K, 2), 1j * p.get("weight", 1.0))
    if k == "Interferometer":
        return operator_exp(passive_generator(p["matrix"], K), 1j)
    if k == "Evolve":
        h = np.asarray(p["hamiltonian"], dtype=complex)
        n = len(g.targets)
        if h.shape != ((K + 1) ** n,) * 2:
            raise GateError(f"Evolve Hamiltonian shape {h.shape} does not fit {n} modes at cutoff {K}")
        return operator_exp(ModeOperator(0.5 * (h + h.conj().T), K, n, hermitian=True), -1j * p["dt"])
    if k == "CurrentUnitary":
        from .lattice import ModelParams, current_operator
        model = ModelParams(**{**p["model"], "cutoff": K})
        return operator_exp(current_operator(model, p["site"]), 1j * p["zeta"])
    raise GateError(f"{k} has no single matrix form; apply it with apply_gate")


def _controlled(g: GateSpec, tensor: np.ndarray, cutoff: int) -> np.ndarray:
    anc, *system = g.targets
    h = np.asarray(g.params["hamiltonian"], dtype=complex)
    d = cutoff + 1
    if h.shape != (d ** len(system),) * 2:
        raise GateError(f"{g.kind} Hamiltonian shape {h.shape} does not fit {len(system)} modes at cutoff {cutoff}")
    e, v = _hermitian_eig(0.5 * (h + h.conj().T))
    if g.kind == "ControlledN":
        levels = np.arange(d, dtype=float)
        scale = g.params["dt"]
        basis = None
    else:
        q, _ = quadratures(cutoff)
        levels, basis = _hermitian_eig(q.entries)
        scale = g.params["tau"]
        tensor = apply_matrix(basis.conj().T, [anc], tensor)
    out = np.empty_like(tensor)
    sys_axes = [s if s < anc else s - 1 for s in system]
    for n, lev in enumerate(levels):
        block = np.take(tensor, n, axis=anc)
        u = (v * np.exp(-1j * scale * lev * e)) @ v.conj().T
        idx = [slice(None)] * tensor.ndim
        idx[anc] = n
        out[tuple(idx)] = apply_matrix(u, sys_axes, block)
    if basis is not None:
        out = apply_matrix(basis, [anc], out)
    return out


def apply_gate_tensor(g: GateSpec, tensor: np.ndarray, cutoff: int) -> np.ndarray:
    """Apply a gate to a mode tensor, which may carry trailing batch axes."""
    if g.kind in ("ControlledN", "ControlledQ"):
        return _controlled(g, tensor, cutoff)
    return apply_matrix(gate_unitary(g, cutoff).entries, list(g.targets), tensor)


def apply_gate(g: GateSpec, state: FockState) -> FockState:
    if any(not 0 <= t < state.num_modes for t in g.targets):
        raise GateError(f"targets {g.targets} outside {state.num_modes} modes")
    out = apply_gate_tensor(g, state.tensor, state.cutoff)
    return FockState(state.num_modes, state.cutoff, out.reshape(-1))


@dataclass
class LeakageReport:
    """Per-gate truncation diagnostics.

    boundary: population on the top Fock level of each gate's target modes right
    after the gate; total is their sum and bounds how much amplitude the cutoff
    has clipped. norm_deficit is 1 - ||psi||^2 of the output.
    """
    boundary: list = field(default_factory=list)
    norm_deficit: float = 0.0

    @property
    def total(self) -> float:
        return float(sum(self.boundary))

    def to_json(self) -> dict:
        return {"per_gate_boundary": self.boundary, "total": self.total,
                "norm_deficit": self.norm_deficit}


def apply_circuit(circuit: Circuit, state: FockState, track: bool = True):
    """Apply the gates in order. Returns (state, LeakageReport)."""
    if circuit.num_modes != state.num_modes:
        raise GateError(f"circuit has {circuit.num_modes} modes, state has {state.num_modes}")
    tensor = state.tensor
    report = LeakageReport()
    for i, g in enumerate(circuit.gates):
        try:
            tensor = apply_gate_tensor(g, tensor, state.cutoff)
        except GateError as exc:
            raise GateError(str(exc), i) from exc
        except (ValueError, IndexError) as exc:
            raise GateError(str(exc), i) from exc
        if track:
            s = FockState(state.num_modes, state.cutoff, tensor.reshape(-1))
            report.boundary.append(s.boundary_population(g.targets))
    out = FockState(state.num_modes, state.cutoff, tensor.reshape(-1))
    report.norm_deficit = out.leakage()
    return out, report


def pad_tensor(tensor: np.ndarray, num_modes: int, cutoff: int, work_cutoff: int) -> np.ndarray:
    """Embed a mode tensor (with optional trailing batch axes) into a larger cutoff."""
    if work_cutoff < cutoff:
        raise ValueError("work cutoff must not be below the register cutoff")
    shape = (work_cutoff + 1,) * num_modes + tensor.shape[num_modes:]
    out = np.zeros(shape, dtype=complex)
    out[(slice(0, cutoff + 1),) * num_modes] = tensor
    return out


def project_tensor(tensor: np.ndarray, num_modes: int, cutoff: int) -> np.ndarray:
    return np.ascontiguousarray(tensor[(slice(0, cutoff + 1),) * num_modes])


def apply_circuit_columns(circuit: Circuit, columns: np.ndarray, cutoff: int,
                          work_cutoff: int | None = None, project: bool = True) -> np.ndarray:
    """Apply a circuit to many states at once; columns has shape (dim, batch).

    With work_cutoff > cutoff the gates act on a padded register and the result
    is projected back (unless project=False), giving the matrix elements of the circuit unitary in the
    cutoff-K basis without clipping intermediate photon numbers.
    """
    d = cutoff + 1
    M = circuit.num_modes
    t = columns.reshape((d,) * M + (columns.shape[1],))
    kw = cutoff if work_cutoff is None else work_cutoff
    if kw != cutoff:
        t = pad_tensor(t, M, cutoff, kw)
    for i, g in enumerate(circuit.gates):
        try:
            t = apply_gate_tensor(g, t, kw)
        except (ValueError, IndexError) as exc:
            raise GateError(str(exc), i) from exc
    if kw != cutoff and project:
        t = project_tensor(t, M, cutoff)
    return t.reshape(-1, columns.shape[1])


def circuit_matrix(circuit: Circuit, cutoff: int, columns=None, work_cutoff: int | None = None) -> np.ndarray:
    """Dense matrix of a circuit, or just the listed basis columns."""
    dim = (cutoff + 1) ** circuit.num_modes
    cols = np.arange(dim) if columns is None else np.asarray(columns)
    basis = np.zeros((dim, len(cols)), dtype=complex)
    basis[cols, np.arange(len(cols))] = 1.0
    return apply_circuit_columns(circuit, basis, cutoff, work_cutoff)


# Heisenberg-picture (Bogoliubov) action of Gaussian gates, independent of any cutoff.

def bogoliubov(g: GateSpec, num_modes: int):
    """(T, d) with U^dag v U = T v + d for v = (a_1..a_M, a_1^dag..a_M^dag)."""
    M = num_modes
    T = np.eye(2 * M, dtype=complex)
    d = np.zeros(2 * M, dtype=complex)
    k, p, tg = g.kind, g.params, g.targets

    def set_linear(modes, A, B):
        # a_modes -> A a_modes + B a_modes^dag
        idx = list(modes)
        jdx = [i + M for i in idx]
        T[np.ix_(idx, idx)] = A
        T[np.ix_(idx, jdx)] = B
        T[np.ix_(jdx, jdx)] = np.conj(A)
        T[np.ix_(jdx, idx)] = np.conj(B)

    if k == "Rotate":
        set_linear(tg, [[np.exp(1j * p["theta"])]], [[0]])
    elif k == "Displace":
        d[tg[0]] = p["xi"]
        d[tg[0] + M] = np.conj(p["xi"])
    elif k == "TranslateQ":
        d[tg[0]] = p["s"] / np.sqrt(2)
        d[tg[0] + M] = p["s"] / np.sqrt(2)
    elif k == "TranslateP":
        d[tg[0]] = 1j * p["t"] / np.sqrt(2)
        d[tg[0] + M] = -1j * p["t"] / np.sqrt(2)
    elif k == "Shear":
        kap = p["kappa"]
        set_linear(tg, [[1 + 1j * kap]], [[1j * kap]])
    elif k == "Squeeze1":
        r = p["r"]
        set_linear(tg, [[np.cosh(r)]], [[np.sinh(r)]])
    elif k == "Squeeze2":
        r = p["r"]
        set_linear(tg, np.cosh(r) * np.eye(2), np.sinh(r) * np.array([[0, 1], [1, 0]]))
    elif k == "BeamSplitter5050":
        c = 1 / np.sqrt(2)
        set_linear(tg, [[c, c], [-c, c]], np.zeros((2, 2)))
    elif k == "CZ":
        w = p.get("weight", 1.0)
        set_linear(tg, [[1, 0.5j * w], [0.5j * w, 1]], 0.5j * w * np.array([[0, 1], [1, 0]]))
    elif k == "Interferometer":
        set_linear(tg, np.asarray(p["matrix"]), np.zeros((len(tg), len(tg))))
    else:
        raise GateError(f"{k} is not Gaussian")
    return T, d


def circuit_bogoliubov(circuit: Circuit):
    """Compose gate actions; for U = U_n ... U_1, U^dag v U = T v + d."""
    M = circuit.num_modes
    T = np.eye(2 * M, dtype=complex)
    d = np.zeros(2 * M, dtype=complex)
    for g in circuit.gates:
        Tg, dg = bogoliubov(g, M)
        # U'^dag v U' with U' = U_g U: U^dag (Tg v + dg) U = Tg (T v + d) + dg
        T, d = Tg @ T, Tg @ d + dg
    return T, d
