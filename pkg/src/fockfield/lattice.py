"""Complex scalar phi^4 theory on a periodic 1D lattice (lattice units, a = 1).

Qumode layout: momentum k, species s (b = particle, c = antiparticle) lives at
flat index 2k + s. After the Gaussian transform G, wire 2x carries the
site-local mode B(x) and wire 2x+1 carries C(x).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .fock import ModeOperator, ladder_lower, quadratures
from .gates import (Circuit, GateSpec, beamsplitter_5050, evolve, interferometer, quartic_phase,
                    rotation, shear, squeeze2)

DEFAULT_ORACLE_CAP = 65536
SPECIES = ("b", "c")


class OracleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    L: int
    m: float
    delta_m: float = 0.0
    lam: float = 0.0
    cutoff: int = 8
    dt: float | None = None
    steps: int = 10

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one lattice site")
        if not self.m > 0:
            raise ValueError("mass must be positive (m^2 > 0)")
        if self.cutoff < 2:
            raise ValueError("cutoff must be >= 2")
        if self.dt is not None and not self.dt >= 0:
            raise ValueError("dt must be non-negative")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")

    @property
    def num_modes(self) -> int:
        return 2 * self.L

    @property
    def time_step(self) -> float:
        """Configured dt, or 0.1 / max omega."""
        if self.dt is not None:
            return self.dt
        return 0.1 / max(dispersion(k, self) for k in range(self.L))

    def replace(self, **kw) -> "ModelParams":
        return ModelParams(**{**asdict(self), **kw})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModeLayout:
    L: int

    def index(self, k: int, species: str) -> int:
        if not 0 <= k < self.L:
            raise IndexError(f"momentum {k} outside 0..{self.L - 1}")
        return 2 * k + SPECIES.index(species)

    def label(self, index: int) -> tuple[int, str]:
        return index // 2, SPECIES[index % 2]

    def partner(self, k: int, species: str) -> tuple[int, str]:
        """Squeezer pairing (k, b) <-> ((L - k) mod L, c)."""
        other = "c" if species == "b" else "b"
        return (self.L - k) % self.L, other

    def pairs(self) -> list[tuple[int, int]]:
        """(b-mode, c-mode) index pairs, one per momentum k."""
        return [(self.index(k, "b"), self.index(*self.partner(k, "b"))) for k in range(self.L)]

    @property
    def b_modes(self) -> list[int]:
        return [self.index(k, "b") for k in range(self.L)]

    @property
    def c_modes(self) -> list[int]:
        return [self.index(k, "c") for k in range(self.L)]


def dispersion(k: int, params: ModelParams) -> float:
    if not 0 <= k < params.L:
        raise IndexError(f"momentum {k} outside 0..{params.L - 1}")
    return float(np.sqrt(params.m ** 2 + 4 * np.sin(np.pi * k / params.L) ** 2))


def squeezing_parameter(k: int, params: ModelParams) -> float:
    return -0.5 * float(np.log(dispersion(k, params)))


def frequencies(params: ModelParams) -> np.ndarray:
    """omega per flat mode index."""
    return np.array([dispersion(i // 2, params) for i in range(params.num_modes)])


def build_H0(params: ModelParams, layout: ModeLayout | None = None) -> list[tuple[int, ModeOperator]]:
    """Free Hamiltonian as (mode, omega N) terms."""
    layout = layout or ModeLayout(params.L)
    n = np.diag(np.arange(params.cutoff + 1, dtype=float))
    return [(i, ModeOperator(frequencies(params)[i] * n, params.cutoff, hermitian=True))
            for i in range(params.num_modes)]


def h0_diagonal(params: ModelParams) -> np.ndarray:
    d = params.cutoff + 1
    levels = np.arange(d, dtype=float)
    out = np.zeros(d ** params.num_modes)
    for i, w in enumerate(frequencies(params)):
        shape = [1] * params.num_modes
        shape[i] = d
        out = (out.reshape((d,) * params.num_modes) + w * levels.reshape(shape)).reshape(-1)
    return out


def dft_matrix(L: int, species: str = "b") -> np.ndarray:
    """W[x, k] with U^dag a(x) U = sum_k W[x, k] a(k).

    The same matrix serves b and c wires: after the squeezers pair c(k) with
    b^dag(L-k), C(x) expands in c(k) e^{+2 pi i k x / L}, like B(x) in b(k).
    """
    x = np.arange(L)
    return np.exp(2j * np.pi * np.outer(x, x) / L) / np.sqrt(L)


def _dft_gates(L: int, modes: list[int], species: str) -> list[GateSpec]:
    if L == 1:
        return []
    if L == 2:
        # BS gives a -> [[1, 1], [-1, 1]]/sqrt2; a pi phase on the second wire flips it to the DFT
        return [beamsplitter_5050((modes[0], modes[1])), rotation(np.pi, modes[1])]
    return [interferometer(dft_matrix(L, species), modes)]


def build_G(params: ModelParams, layout: ModeLayout | None = None) -> Circuit:
    """Two-mode squeezers on each (k, b)/(L-k, c) pair, then the DFT on b and on c modes."""
    layout = layout or ModeLayout(params.L)
    circ = Circuit(params.num_modes)
    for k, (ib, ic) in enumerate(layout.pairs()):
        r = squeezing_parameter(k, params)
        if r != 0.0:
            circ.append(squeeze2(r, (ib, ic)))
    circ.extend(_dft_gates(params.L, layout.b_modes, "b"))
    circ.extend(_dft_gates(params.L, layout.c_modes, "c"))
    return circ


def hint_matrix(params: ModelParams, cutoff: int | None = None) -> np.ndarray:
    """Two-mode h_int(q_b, p_b, q_c, p_c) at the given cutoff, modes ordered (b, c)."""
    K = params.cutoff if cutoff is None else cutoff
    q, p = quadratures(K)
    eye = np.eye(K + 1)
    qb, qc = np.kron(q.entries, eye), np.kron(eye, q.entries)
    pb, pc = np.kron(p.entries, eye), np.kron(eye, p.entries)
    s, d = qb + qc, pb - pc
    x = s @ s + d @ d
    h = 0.5 * params.delta_m * x + (params.lam / 16) * (x @ x)
    return 0.5 * (h + h.conj().T)


def hint_chain_forms(params: ModelParams, cutoff: int | None = None) -> list[np.ndarray]:
    """The three beam-splitter/rotation-massaged forms of h_int as matrices.

    Each form conjugates a function of single-mode quadratures by the actual
    truncated BS and quarter-turn rotation matrices, so agreement with
    hint_matrix checks the gate conventions used by build_Pint_circuit.
    """
    from .gates import gate_unitary
    K = params.cutoff if cutoff is None else cutoff
    q, p = quadratures(K)
    eye = np.eye(K + 1)
    qb, qc = np.kron(q.entries, eye), np.kron(eye, q.entries)
    pc = np.kron(eye, p.entries)
    bs = gate_unitary(beamsplitter_5050((0, 1)), K).entries
    rc = np.kron(eye, gate_unitary(rotation(np.pi / 2), K).entries)
    dm, lam = params.delta_m, params.lam

    y1 = qb @ qb + pc @ pc
    form1 = bs.conj().T @ (dm * y1 + (lam / 4) * y1 @ y1) @ bs
    y2 = qb @ qb + qc @ qc
    inner2 = dm * y2 + (lam / 4) * y2 @ y2
    form2 = bs.conj().T @ rc.conj().T @ inner2 @ rc @ bs
    sp, sm = qb + qc, qb - qc
    mp = lambda a: np.linalg.matrix_power(a, 4)
    inner3 = dm * y2 + (lam / 24) * (4 * mp(qb) + 4 * mp(qc) + mp(sp) + mp(sm))
    form3 = bs.conj().T @ rc.conj().T @ inner3 @ rc @ bs
    return [form1, form2, form3]


def build_Pint_circuit(params: ModelParams, modes=(0, 1), dt: float | None = None) -> Circuit:
    """Gate sequence for exp(-i dt h_int) on the (b, c) wire pair `modes`.

    Slots in order: BS, quarter turn on c, quadratic shear on both, quartic
    phase on both, BS, quartic phase on both, inverse BS, inverse quarter turn,
    inverse BS.
    """
    dt = params.time_step if dt is None else dt
    b, c = modes
    n = max(modes) + 1
    gamma = -params.lam * dt
    kappa = -params.delta_m * dt
    gates = [beamsplitter_5050((b, c)), rotation(np.pi / 2, c),
             shear(kappa, b), shear(kappa, c),
             quartic_phase(gamma, b), quartic_phase(gamma, c),
             beamsplitter_5050((b, c)),
             quartic_phase(gamma, b), quartic_phase(gamma, c),
             beamsplitter_5050((c, b)),
             rotation(-np.pi / 2, c),
             beamsplitter_5050((c, b))]
    return Circuit(n, gates)


def build_Pint_block(params: ModelParams, modes=(0, 1), dt: float | None = None,
                     pint: str = "exact") -> list[GateSpec]:
    """exp(-i dt h_int) on one wire pair, either as one exact two-mode gate or as the gate sequence."""
    dt = params.time_step if dt is None else dt
    if pint == "gates":
        return build_Pint_circuit(params, modes, dt).gates
    if pint == "exact":
        return [evolve(dt, hint_matrix(params), modes)]
    raise ValueError(f"pint must be 'exact' or 'gates', got {pint!r}")


def build_trotter_step(params: ModelParams, layout: ModeLayout | None = None,
                       dt: float | None = None, pint: str = "exact") -> Circuit:
    """One first-order step exp(-i dt H0) exp(-i dt H_int): G, P_int blocks, G^dag, free rotations.

    pint="exact" applies each P_int block as the exact two-mode exponential at
    the cutoff; pint="gates" uses the beam-splitter/quartic-phase sequence,
    which needs roughly twice the photon headroom to stay accurate.
    """
    layout = layout or ModeLayout(params.L)
    dt = params.time_step if dt is None else dt
    M = params.num_modes
    circ = Circuit(M)
    if params.lam != 0.0 or params.delta_m != 0.0:
        g = build_G(params, layout)
        circ.extend(g)
        for x in range(params.L):
            circ.extend(build_Pint_block(params, (2 * x, 2 * x + 1), dt, pint))
        circ.extend(g.inverse())
    for i, w in enumerate(frequencies(params)):
        circ.append(rotation(-w * dt, i))
    return circ


def trotter_circuit(params: ModelParams, steps: int | None = None, dt: float | None = None,
                    pint: str = "exact") -> Circuit:
    steps = params.steps if steps is None else steps
    one = build_trotter_step(params, dt=dt, pint=pint)
    circ = Circuit(params.num_modes)
    for _ in range(steps):
        circ.extend(one.gates)
    return circ


def trotter_columns(params: ModelParams, t: float, steps: int, columns, pint: str = "exact") -> np.ndarray:
    """U_trot(N) applied to basis columns, one step at a time."""
    from .gates import apply_circuit_columns
    dim = (params.cutoff + 1) ** params.num_modes
    cols = np.asarray(columns)
    v = np.zeros((dim, len(cols)), dtype=complex)
    v[cols, np.arange(len(cols))] = 1.0
    step = build_trotter_step(params, dt=t / steps, pint=pint)
    for _ in range(steps):
        v = apply_circuit_columns(step, v, params.cutoff)
    return v


# Sparse full-space operators (oracles)

def _check_cap(params: ModelParams, cap: int):
    dim = (params.cutoff + 1) ** params.num_modes
    if dim > cap:
        raise OracleCapExceeded(f"full space dimension {dim} exceeds oracle cap {cap}")
    return dim


def mode_ladders(params: ModelParams) -> list[sparse.csr_matrix]:
    """Sparse annihilation operator for every flat mode on the full space."""
    return list(_mode_ladders(params.num_modes, params.cutoff))


@lru_cache(maxsize=8)
def _mode_ladders(M: int, K: int):
    a = sparse.csr_matrix(ladder_lower(K).entries)
    d = K + 1
    out = []
    for j in range(M):
        left = sparse.identity(d ** j, format="csr")
        right = sparse.identity(d ** (M - j - 1), format="csr")
        out.append(sparse.kron(sparse.kron(left, a), right, format="csr"))
    return tuple(out)


def site_modes(params: ModelParams, x: int):
    """Analytic B(x), C(x) as sparse matrices built from the b, c ladder operators."""
    layout = ModeLayout(params.L)
    lad = mode_ladders(params)
    L = params.L
    B = 0
    C = 0
    for k in range(L):
        ch = np.cosh(squeezing_parameter(k, params))
        sh = np.sinh(squeezing_parameter(k, params))
        ph = np.exp(2j * np.pi * k * x / L) / np.sqrt(L)
        bk = lad[layout.index(k, "b")]
        cmk = lad[layout.index((L - k) % L, "c")]
        B = B + ph * (ch * bk + sh * cmk.T.conj())
        # C(x) = (phi^dag + i pi)/sqrt2 carries the conjugate Fourier phase
        C = C + np.conj(ph) * (sh * bk.T.conj() + ch * cmk)
    return sparse.csr_matrix(B), sparse.csr_matrix(C)


def site_quadratures(params: ModelParams, x: int):
    B, C = site_modes(params, x)
    r2 = np.sqrt(2)
    QB = (B + B.T.conj()) / r2
    PB = (B - B.T.conj()) / (r2 * 1j)
    QC = (C + C.T.conj()) / r2
    PC = (C - C.T.conj()) / (r2 * 1j)
    return QB, PB, QC, PC


def field_operators(params: ModelParams, x: int):
    """phi(x), pi(x) as linear combinations: lists of (coef, mode, dagger?)."""
    layout = ModeLayout(params.L)
    L = params.L
    phi, pi = [], []
    for k in range(L):
        w = dispersion(k, params)
        e = np.exp(2j * np.pi * k * x / L)
        ib, ic = layout.index(k, "b"), layout.index(k, "c")
        phi += [(e / np.sqrt(2 * w * L), ib, False), (np.conj(e) / np.sqrt(2 * w * L), ic, True)]
        g = 1j * np.sqrt(w / (2 * L))
        pi += [(g * np.conj(e), ib, True), (-g * e, ic, False)]
    return phi, pi


def _adjoint(terms):
    return [(np.conj(c), j, not dag) for c, j, dag in terms]


def _normal_product(left, right, lad):
    """Normal-ordered product :left right: of two linear combinations of ladder operators."""
    out = 0
    for c1, j1, d1 in left:
        for c2, j2, d2 in right:
            o1 = lad[j1].T.conj() if d1 else lad[j1]
            o2 = lad[j2].T.conj() if d2 else lad[j2]
            # put any creator first; annihilators commute with each other, as do creators
            prod = o2 @ o1 if (d2 and not d1) else o1 @ o2
            out = out + c1 * c2 * prod
    return sparse.csr_matrix(out)


def current_operator(params: ModelParams, x: int, cap: int = DEFAULT_ORACLE_CAP) -> ModeOperator:
    """J(x) = i(phi pi - phi^dag pi^dag), normal ordered (the vacuum contractions cancel)."""
    _check_cap(params, cap)
    lad = mode_ladders(params)
    phi, pi = field_operators(params, x)
    j = 1j * (_normal_product(phi, pi, lad) - _normal_product(_adjoint(phi), _adjoint(pi), lad))
    dense = j.toarray()
    return ModeOperator(dense, params.cutoff, params.num_modes, hermitian=True)


def charge_operator(params: ModelParams) -> sparse.csr_matrix:
    layout = ModeLayout(params.L)
    lad = mode_ladders(params)
    out = 0
    for k in range(params.L):
        b, c = lad[layout.index(k, "b")], lad[layout.index(k, "c")]
        out = out + b.T.conj() @ b - c.T.conj() @ c
    return sparse.csr_matrix(out)


def momentum_phase(params: ModelParams) -> sparse.csr_matrix:
    """Lattice translation by one site: diagonal exp(2 pi i sum_k k (N_b(k) + N_c(k)) / L).

    b^dag(k) and c^dag(k) both create momentum 2 pi k / L, so the antiparticle
    number enters with a plus sign.
    """
    return sparse.diags(np.exp(2j * np.pi * momentum_labels(params) / params.L), format="csr")


def interaction_from_quadratures(params: ModelParams, QB, PB, QC, PC):
    s = QB + QC
    d = PB - PC
    x = s @ s + d @ d
    return 0.5 * params.delta_m * x + (params.lam / 16) * (x @ x)


def exact_hamiltonian(params: ModelParams, cap: int = DEFAULT_ORACLE_CAP, g_form: str = "analytic"):
    """Sparse H = H0 + sum_x h_int(Q_B(x), P_B(x), Q_C(x), P_C(x)).

    g_form="analytic" builds the site quadratures from the closed-form
    Bogoliubov/Fourier expansion and returns a sparse matrix; g_form="circuit"
    conjugates the wire quadratures with the truncated G circuit matrix and
    returns a dense array (small spaces only).
    """
    dim = _check_cap(params, cap)
    h0 = sparse.diags(h0_diagonal(params), format="csr")
    if params.lam == 0.0 and params.delta_m == 0.0:
        return h0
    if g_form == "analytic":
        hint = 0
        for x in range(params.L):
            hint = hint + interaction_from_quadratures(params, *site_quadratures(params, x))
    elif g_form == "circuit":
        from .gates import circuit_matrix
        g = circuit_matrix(build_G(params), params.cutoff)
        lad = mode_ladders(params)
        hw = 0
        for x in range(params.L):
            b, c = lad[2 * x], lad[2 * x + 1]
            r2 = np.sqrt(2)
            qs = [(b + b.T.conj()) / r2, (b - b.T.conj()) / (r2 * 1j),
                  (c + c.T.conj()) / r2, (c - c.T.conj()) / (r2 * 1j)]
            hw = hw + interaction_from_quadratures(params, *qs)
        h = g.conj().T @ (hw @ g)
        h[np.diag_indices(dim)] += h0_diagonal(params)
        return 0.5 * (h + h.conj().T)
    else:
        raise ValueError(f"unknown g_form {g_form!r}")
    h = sparse.csr_matrix(h0 + hint)
    h = 0.5 * (h + h.T.conj())
    return sparse.csr_matrix(h)


def charge_labels(params: ModelParams) -> np.ndarray:
    """N_b - N_c of every basis state."""
    d = params.cutoff + 1
    levels = np.indices((d,) * params.num_modes).reshape(params.num_modes, -1)
    sign = np.where(np.arange(params.num_modes) % 2 == 0, 1, -1)
    return (sign[:, None] * levels).sum(0)


def momentum_labels(params: ModelParams) -> np.ndarray:
    """sum_k k (N_b(k) + N_c(k)) mod L of every basis state."""
    d = params.cutoff + 1
    levels = np.indices((d,) * params.num_modes).reshape(params.num_modes, -1)
    k = np.arange(params.num_modes) // 2
    return (k[:, None] * levels).sum(0) % params.L


def evolve_dense_by_sectors(h: np.ndarray, labels: np.ndarray, t: float, columns) -> np.ndarray:
    """exp(-i t h) on basis columns, diagonalizing each conserved sector separately."""
    cols = np.asarray(columns)
    off = h[labels[:, None] != labels[None, :]]
    if off.size and np.abs(off).max() > 1e-9:
        raise ValueError(f"matrix is not block diagonal in the given sectors (max off-block {np.abs(off).max():.2e})")
    out = np.zeros((h.shape[0], len(cols)), dtype=complex)
    for lab in np.unique(labels[cols]):
        idx = np.nonzero(labels == lab)[0]
        sel = np.nonzero(labels[cols] == lab)[0]
        e, v = np.linalg.eigh(h[np.ix_(idx, idx)])
        pos = np.searchsorted(idx, cols[sel])
        out[np.ix_(idx, sel)] = (v * np.exp(-1j * t * e)) @ v[pos].conj().T
    return out


def exact_evolution_columns(params: ModelParams, t: float, columns, cap: int = DEFAULT_ORACLE_CAP,
                            g_form: str = "analytic") -> np.ndarray:
    """exp(-i t H) applied to the listed basis columns."""
    h = exact_hamiltonian(params, cap, g_form)
    dim = h.shape[0]
    cols = np.asarray(columns)
    if not sparse.issparse(h):
        return evolve_dense_by_sectors(h, charge_labels(params), t, cols)
    basis = np.zeros((dim, len(cols)), dtype=complex)
    basis[cols, np.arange(len(cols))] = 1.0
    return splinalg.expm_multiply(-1j * t * h, basis)


def lowest_eigenvalue(params: ModelParams, cap: int = DEFAULT_ORACLE_CAP) -> float:
    h = exact_hamiltonian(params, cap)
    if h.shape[0] <= 2000:
        return float(np.linalg.eigvalsh(h.toarray())[0])
    return float(splinalg.eigsh(h, k=1, which="SA")[0][0])
