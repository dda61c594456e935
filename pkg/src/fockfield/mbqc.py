"""Measurement-based layer on finite-squeezing cluster chains.

Nodes start in p-squeezed vacua S(r)|0> with q wavefunction
g(q) = (pi e^{2r})^{-1/4} exp(-q^2 e^{-2r} / 2) and are linked by CZ = exp(i Q_1 Q_2).
A chain is consumed from its head: measuring the head node teleports its state to the
next node. Whatever is measured on the head enters through a bra function chi(q1), and
the next node is left in

    out(q2) = g(q2) * int dq1 chi(q1) psi(q1) e^{i q1 q2},

so the joint state is never built (lazy CZ). Everything lives on one quadrature grid
(+-8, 2^12 points); the e^{i q1 q2} transform is evaluated with a chirp-z FFT.

Gate conventions are those of gates.py: Rotate(theta) = e^{i theta N}, Shear(kappa) =
e^{i kappa Q^2}, X(s) = e^{-isP} shifts psi(q) -> psi(q - s). A homodyne measurement of
P_theta = P cos(theta) - Q sin(theta) with outcome m acts as X(m / cos theta) Rotate(pi/2)
Shear(-tan(theta)/2), so T(kappa) = Rotate(pi/2) Shear(kappa) needs theta = -arctan(2 kappa).
Shift byproducts are undone immediately (classical feedforward); rotations are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np

from .fock import FockState, ladder_lower
from .gates import Circuit, circuit_bogoliubov, cz, squeeze1

GRID_HALF_WIDTH = 8.0
GRID_POINTS = 2 ** 12
DEFAULT_R = 3.0
RUS_BUDGET = 200


class MbqcError(RuntimeError):
    pass


class Unreachable(MbqcError):
    pass


class BudgetExhausted(MbqcError):
    pass


# grid utilities

@dataclass(frozen=True)
class QuadratureGrid:
    half_width: float = GRID_HALF_WIDTH
    points: int = GRID_POINTS

    @property
    def dq(self) -> float:
        return 2 * self.half_width / self.points

    @property
    def q(self) -> np.ndarray:
        return -self.half_width + self.dq * np.arange(self.points)


DEFAULT_GRID = QuadratureGrid()


@lru_cache(maxsize=8)
def hermite_functions(nmax: int, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    """psi_n(q) for n = 0..nmax by the stable three-term recurrence; shape (nmax+1, points)."""
    q = grid.q
    out = np.empty((nmax + 1, q.size))
    out[0] = np.pi ** -0.25 * np.exp(-q * q / 2)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * q * out[0]
    for n in range(1, nmax):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * q * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    out.setflags(write=False)
    return out


def fock_to_grid(coeffs, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex)
    return c @ hermite_functions(len(c) - 1, grid)


def grid_to_fock(psi, nmax: int, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    return hermite_functions(nmax, grid) @ np.asarray(psi, dtype=complex) * grid.dq


def grid_norm(psi, grid: QuadratureGrid = DEFAULT_GRID) -> float:
    return float(np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dq))


def grid_inner(a, b, grid: QuadratureGrid = DEFAULT_GRID) -> complex:
    return complex(np.sum(np.conj(a) * b) * grid.dq)


def fidelity(a, b, grid: QuadratureGrid = DEFAULT_GRID) -> float:
    return abs(grid_inner(a, b, grid)) ** 2 / (grid_norm(a, grid) ** 2 * grid_norm(b, grid) ** 2)


def fourier(f, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    """(2 pi)^{-1/2} int e^{i x q} f(q) dq sampled at x on the same grid (chirp-z via FFT)."""
    n, d, q0 = grid.points, grid.dq, grid.q[0]
    j = np.arange(n)
    pre = np.exp(1j * (q0 * d * j + 0.5 * d * d * j * j))
    l = np.arange(-(n - 1), n)
    kern = np.exp(-0.5j * d * d * l * l)
    size = 1 << int(np.ceil(np.log2(3 * n)))
    a = np.zeros(size, dtype=complex)
    a[:n] = np.asarray(f) * pre
    b = np.zeros(size, dtype=complex)
    b[:2 * n - 1] = kern
    conv = np.fft.ifft(np.fft.fft(a) * np.fft.fft(b))[n - 1:2 * n - 1]
    return d / np.sqrt(2 * np.pi) * np.exp(1j * q0 * q0) * pre * conv


def node_envelope(x, r: float) -> np.ndarray:
    """Normalized q wavefunction of a p-squeezed vacuum S(r)|0>."""
    return (np.pi * np.exp(2 * r)) ** -0.25 * np.exp(-0.5 * np.exp(-2 * r) * np.asarray(x) ** 2)


def ideal_map(psi, kappas, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    """prod_k Rotate(pi/2) Shear(kappa_k) applied on the grid (first kappa acts first)."""
    out = np.asarray(psi, dtype=complex)
    for k in kappas:
        out = fourier(np.exp(1j * k * grid.q ** 2) * out, grid)
    return out


# records and chains

@dataclass
class MeasurementRecord:
    node: int
    kind: str                      # "homodyne" | "pnr" | "subtraction-pnr"
    outcome: float | int
    angle: float | None = None
    beta: float | None = None
    homodyne: float | None = None  # homodyne outcome of a subtraction gadget
    shift: float | None = None     # byproduct X(shift) undone by feedforward
    probability: float | None = None
    postselected: bool = False
    seed: int | None = None
    attempts: int = 1

    def __post_init__(self):
        if self.kind not in ("homodyne", "pnr", "subtraction-pnr"):
            raise ValueError(f"unknown measurement kind {self.kind}")
        if self.kind == "homodyne" and not np.isfinite(self.outcome):
            raise ValueError("homodyne outcome must be finite")
        if self.kind != "homodyne" and int(self.outcome) < 0:
            raise ValueError("photon counts are non-negative")

    def to_json(self) -> dict:
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in self.__dict__.items()}


def save_transcript(records, path):
    with open(path, "w") as fh:
        json.dump([r.to_json() for r in records], fh, indent=1)


def load_transcript(path) -> list[MeasurementRecord]:
    with open(path) as fh:
        return [MeasurementRecord(**d) for d in json.load(fh)]


@dataclass
class ClusterChain:
    length: int
    node_squeezing: list
    edges: list
    head: np.ndarray | None = None     # grid wavefunction of the first unmeasured node if it was replaced
    measured: int = 0
    records: list = field(default_factory=list)
    grid: QuadratureGrid = DEFAULT_GRID

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if len(self.node_squeezing) != self.length or min(self.node_squeezing) <= 0:
            raise ValueError("need one positive squeezing per node")
        for a, b in self.edges:
            if not (0 <= a < self.length and 0 <= b < self.length and a != b):
                raise ValueError(f"bad edge {(a, b)}")

    @property
    def remaining(self) -> int:
        return self.length - self.measured

    def gaussian_circuit(self) -> Circuit:
        gates = [squeeze1(r, i) for i, r in enumerate(self.node_squeezing)]
        gates += [cz(e) for e in self.edges]
        return Circuit(self.length, gates)

    def covariance(self) -> np.ndarray:
        """Quadrature covariance (Q_0, P_0, Q_1, P_1, ...) of the fresh chain."""
        T, _ = circuit_bogoliubov(self.gaussian_circuit())
        M = self.length
        # quadrature vector x = W (a, a^dag); vacuum covariance of (a, a^dag) is <a a^dag> = 1
        W = np.zeros((2 * M, 2 * M), dtype=complex)
        for i in range(M):
            W[2 * i, i], W[2 * i, M + i] = 1 / np.sqrt(2), 1 / np.sqrt(2)
            W[2 * i + 1, i], W[2 * i + 1, M + i] = -1j / np.sqrt(2), 1j / np.sqrt(2)
        A = W @ T
        vac = np.zeros((2 * M, 2 * M))
        vac[:M, M:] = np.eye(M)
        second = A @ vac @ A.T
        return np.real(0.5 * (second + second.T))

    def fock_state(self, cutoff: int) -> FockState:
        from .gates import apply_circuit
        st, _ = apply_circuit(self.gaussian_circuit(), FockState.vacuum(self.length, cutoff), track=False)
        return st

    def head_state(self) -> np.ndarray:
        if self.head is not None:
            return self.head
        # a fresh node wider than the grid is clipped; renormalize what the grid holds
        env = node_envelope(self.grid.q, self.node_squeezing[self.measured]).astype(complex)
        return env / grid_norm(env, self.grid)


def build_chain(length: int, r=DEFAULT_R, grid: QuadratureGrid = DEFAULT_GRID) -> ClusterChain:
    rs = [float(r)] * length if np.isscalar(r) else [float(x) for x in r]
    if min(rs) <= 0:
        raise ValueError("r must be positive")
    return ClusterChain(length, rs, [(i, i + 1) for i in range(length - 1)], grid=grid)


def nullifier_variance(chain: ClusterChain, i: int, j: int) -> float:
    """Var(P_i - Q_j) from the Gaussian covariance."""
    c = chain.covariance()
    v = np.zeros(2 * chain.length)
    v[2 * i + 1], v[2 * j] = 1, -1
    return float(v @ c @ v)


def replace_head(chain: ClusterChain, psi) -> ClusterChain:
    """Load an input wavefunction into the head node (before its CZ to the next node)."""
    psi = np.asarray(psi, dtype=complex)
    chain.head = psi / grid_norm(psi, chain.grid)
    return chain


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _advance(chain: ClusterChain, out: np.ndarray, record: MeasurementRecord) -> np.ndarray:
    chain.head = out / grid_norm(out, chain.grid)
    chain.measured += 1
    chain.records.append(record)
    return chain.head


def _sample_grid(density, grid: QuadratureGrid, rng) -> float:
    cdf = np.cumsum(np.clip(density, 0, None))
    cdf /= cdf[-1]
    u = rng.random()
    i = int(np.searchsorted(cdf, u))
    return float(grid.q[min(i, grid.points - 1)] + (rng.random() - 0.5) * grid.dq)


# homodyne teleportation

def homodyne_marginal(chain: ClusterChain, theta: float):
    """Density of the shift s = m / cos(theta): the convolution of |g|^2 with |H|^2.

    Returns (s grid, density in s, H) with H the unit-norm Fourier image of the sheared head.
    """
    if abs(np.cos(theta)) < 1e-12:
        raise MbqcError("theta = pi/2 measures Q and disconnects the chain")
    g = chain.grid
    psi = chain.head_state()
    h = fourier(np.exp(-0.5j * np.tan(theta) * g.q ** 2) * psi, g)
    r = chain.node_squeezing[chain.measured + 1]
    width = np.exp(r) / np.sqrt(2)
    span = 8 * width + g.half_width
    s = np.linspace(-span, span, 4001)
    hh = np.abs(h) ** 2
    dens = np.array([np.sum(node_envelope(g.q + si, r) ** 2 * hh) * g.dq for si in s])
    return s, dens, h


def single_node_marginal(psi, theta: float, grid: QuadratureGrid = DEFAULT_GRID):
    """Density of P_theta outcomes for an unentangled node: |H(m / cos theta)|^2 / |cos theta|."""
    c = np.cos(theta)
    if abs(c) < 1e-12:
        raise MbqcError("theta = pi/2 is the Q marginal; use |psi|^2 directly")
    h = fourier(np.exp(-0.5j * np.tan(theta) * grid.q ** 2) * np.asarray(psi, dtype=complex), grid)
    return grid.q * c, np.abs(h) ** 2 / abs(c)


def homodyne_project(chain: ClusterChain, theta: float, outcome: float | None = None, seed=None):
    """Measure P_theta on the head node; returns (new head, record).

    outcome=None samples m from the exact marginal: s = q_g - x_H with q_g drawn from the
    next node's |g|^2 and x_H by inverse CDF of |H|^2 on the grid.
    """
    if chain.remaining < 2:
        raise MbqcError("no downstream node to teleport into")
    if abs(np.cos(theta)) < 1e-12:
        raise MbqcError("theta = pi/2 measures Q and disconnects the chain")
    g = chain.grid
    node = chain.measured
    r = chain.node_squeezing[node + 1]
    psi = chain.head_state()
    h = fourier(np.exp(-0.5j * np.tan(theta) * g.q ** 2) * psi, g)
    if outcome is None:
        rng = _rng(seed)
        qg = rng.normal(0.0, np.exp(r) / np.sqrt(2))
        xh = _sample_grid(np.abs(h) ** 2, g, rng)
        s = qg - xh
        m = s * np.cos(theta)
    else:
        m = float(outcome)
        s = m / np.cos(theta)
    out = node_envelope(g.q + s, r) * h          # frame with X(s) undone
    dens = grid_norm(out, g) ** 2 / abs(np.cos(theta))
    if dens < 1e-300:
        raise MbqcError("zero-probability outcome (grid underflow)")
    rec = MeasurementRecord(node, "homodyne", m, angle=theta, shift=s, probability=dens,
                            seed=seed if isinstance(seed, int) else None)
    return _advance(chain, out, rec), rec


def teleport_gate(psi, kappas, r: float = DEFAULT_R, outcomes=None, seed=None,
                  grid: QuadratureGrid = DEFAULT_GRID):
    """Run T(kappa_k) ... T(kappa_1) on psi through a chain of len(kappas)+1 nodes.

    Returns (output wavefunction, fidelity to the ideal map, records).
    """
    chain = replace_head(build_chain(len(kappas) + 1, r, grid), psi)
    rng = _rng(seed)
    for i, k in enumerate(kappas):
        theta = -np.arctan(2 * k)
        m = None if outcomes is None else outcomes[i]
        homodyne_project(chain, theta, m, seed=rng)
    ideal = ideal_map(chain_input(psi, grid), kappas, grid)
    return chain.head, fidelity(chain.head, ideal, grid), chain.records


def chain_input(psi, grid: QuadratureGrid = DEFAULT_GRID):
    psi = np.asarray(psi, dtype=complex)
    return psi / grid_norm(psi, grid)


def net_map_fidelity(kappas, r: float = DEFAULT_R, nmax: int = 3, outcomes=None,
                     grid: QuadratureGrid = DEFAULT_GRID) -> float:
    """Mean state fidelity over Fock inputs |0..nmax> (outcomes default to 0)."""
    hf = hermite_functions(nmax, grid)
    outs = outcomes if outcomes is not None else [0.0] * len(kappas)
    return float(np.mean([teleport_gate(hf[n], kappas, r, outs, grid=grid)[1] for n in range(nmax + 1)]))


def solve_kappas(target_symplectic: np.ndarray, steps: int = 4, guess=None) -> np.ndarray:
    """kappa_1..kappa_steps with prod Rotate(pi/2) Shear(kappa) equal to a 2x2 symplectic target (Q, P)."""
    from scipy.optimize import least_squares

    def sym(kaps):
        out = np.eye(2)
        for k in kaps:
            out = np.array([[0.0, -1.0], [1.0, 0.0]]) @ np.array([[1.0, 0.0], [2 * k, 1.0]]) @ out
        return out

    x0 = np.full(steps, 0.3) if guess is None else np.asarray(guess, dtype=float)
    sol = least_squares(lambda k: (sym(k) - target_symplectic).ravel(), x0)
    if np.max(np.abs(sym(sol.x) - target_symplectic)) > 1e-9:
        raise MbqcError("no kappa sequence reproduces the target")
    return sol.x


def squeeze_symplectic(r: float) -> np.ndarray:
    """Squeeze1(r) on (Q, P): Q -> e^r Q, P -> e^-r P."""
    return np.diag([np.exp(r), np.exp(-r)])


def gaussian_symplectic(circuit: Circuit) -> np.ndarray:
    """Single-mode (Q, P) Heisenberg matrix of a Gaussian gate-lib circuit."""
    T, _ = circuit_bogoliubov(circuit)
    W = np.array([[1, 1], [-1j, 1j]]) / np.sqrt(2)
    return np.real(W @ T @ np.linalg.inv(W))


# PNR injection

def inject_fock(chain: ClusterChain, n: int, sample: bool = False, seed=None, floor: float = 1e-12,
                budget: int = 100000):
    """PNR-count the head node; the next node is left near i^n |n>.

    Returns (new head, fidelity to |n>, probability of n, record). In sample mode the
    detection is repeated until n is seen (repeat-until-success on parallel nodes).
    """
    if chain.remaining < 2:
        raise MbqcError("no downstream node")
    g = chain.grid
    node = chain.measured
    r = chain.node_squeezing[node + 1]
    psi = chain.head_state()
    hf = hermite_functions(n, g)[n]
    out = node_envelope(g.q, r) * np.sqrt(2 * np.pi) * fourier(hf * psi, g)
    prob = grid_norm(out, g) ** 2
    if prob < floor:
        raise Unreachable(f"P(n={n}) = {prob:.3g} below floor at r = {r}")
    attempts = 1
    if sample:
        rng = _rng(seed)
        attempts = int(rng.geometric(prob))
        if attempts > budget:
            raise BudgetExhausted(f"n = {n} not seen within {budget} attempts")
    rec = MeasurementRecord(node, "pnr", n, probability=prob, postselected=sample,
                            seed=seed if isinstance(seed, int) else None, attempts=attempts)
    head = _advance(chain, out, rec)
    return head, fidelity(head, hf, g), prob, rec


# photon subtraction

def subtraction_kraus(beta: float, n: int, cutoff: int) -> np.ndarray:
    """S_n = (-1)^n (n! e^{n beta})^{-1/2} (2 sinh beta)^{n/2} e^{-beta N} a^n at the cutoff."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    a = ladder_lower(cutoff).entries
    damp = np.diag(np.exp(-beta * np.arange(cutoff + 1)))
    pref = (-1) ** n * (factorial(n) * np.exp(n * beta)) ** -0.5 * (2 * np.sinh(beta)) ** (n / 2)
    return pref * damp @ np.linalg.matrix_power(a, n)


def subtraction_prefactor(beta: float, n: int) -> float:
    """Scalar that S_n carries on top of e^{-beta N} a^n / sqrt(n!)."""
    return (-1) ** n * np.exp(-n * beta / 2) * (2 * np.sinh(beta)) ** (n / 2)


def _raise_poly(coef: np.ndarray, alpha: float) -> np.ndarray:
    """Apply a^dag = (q - d/dq)/sqrt2 to P(q, g) exp(alpha q^2 + i g q); coef[j, l] multiplies q^j g^l."""
    J, L = coef.shape
    out = np.zeros((J + 1, L + 1), dtype=complex)
    out[1:, :L] += (1 - 2 * alpha) * coef          # (1 - 2 alpha) q P
    out[:J, 1:] += -1j * coef                        # -i g P
    deriv = coef[1:, :] * np.arange(1, J)[:, None]   # -P'
    out[:J - 1, :L] -= deriv
    return out / np.sqrt(2)


def _subtraction_terms(beta: float, n: int):
    """(alpha, coef) with <m_p| e^{-beta N} a^n |q> = N_m conj(P(q, g)) e^{alpha q^2 - i g q}, g = m / cosh beta."""
    alpha = -0.5 * np.tanh(beta)
    coef = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        coef = _raise_poly(coef, alpha)
    return alpha, coef


class _SubtractionBranch:
    """Photon-count-n branch of the subtraction gadget acting on a head state psi.

    For homodyne shift s = m / cosh(beta) the corrected output is
    c_n N_m g(x + s) sum_j poly_j(s) H_j(x), with H_j = sqrt(2 pi) F[q^j e^{alpha q^2} psi].
    """

    def __init__(self, psi, r, beta, n, grid):
        alpha, coef = _subtraction_terms(beta, n)
        q = grid.q
        self.r, self.beta, self.grid = r, beta, grid
        base = np.exp(alpha * q ** 2) * np.asarray(psi, dtype=complex)
        self.hj = np.array([np.sqrt(2 * np.pi) * fourier(q ** j * base, grid) for j in range(coef.shape[0])])
        self.cn = (-1) ** n * (factorial(n) * np.exp(n * beta)) ** -0.5 * (2 * np.sinh(beta)) ** (n / 2)
        self.ccoef = np.conj(coef)
        self.eps = np.exp(-beta)

    def _scale(self, s):
        m = np.asarray(s) * np.cosh(self.beta)
        return self.cn * (np.pi * (1 + self.eps ** 2)) ** -0.5 * np.exp(-0.5 * np.tanh(self.beta) * m * m)

    def _poly(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return (s[:, None] ** np.arange(self.ccoef.shape[1])) @ self.ccoef.T   # (len(s), J)

    def output(self, s: float) -> np.ndarray:
        poly = self._poly(s)[0]
        return self._scale(s) * node_envelope(self.grid.q + s, self.r) * (poly @ self.hj)

    def density(self, s_grid) -> np.ndarray:
        """||output(s)||^2 for every s, via envelope-weighted Gram matrices of the H_j."""
        dq = self.grid.dq
        J = self.hj.shape[0]
        gram = (np.conj(self.hj)[:, None, :] * self.hj[None, :, :]).reshape(J * J, -1)
        s = np.asarray(s_grid, dtype=float)
        env = _envelope_matrix(self.r, tuple(s), self.grid)
        G = (env @ np.ascontiguousarray(gram.real.T) + 1j * (env @ np.ascontiguousarray(gram.imag.T))).reshape(len(s), J, J) * dq
        c = self._poly(s)
        return np.real(np.einsum("si,sij,sj->s", np.conj(c), G, c)) * np.abs(self._scale(s)) ** 2


@lru_cache(maxsize=2)
def _envelope_matrix(r: float, s_grid: tuple, grid: QuadratureGrid) -> np.ndarray:
    s = np.asarray(s_grid)
    return node_envelope(grid.q[None, :] + s[:, None], r) ** 2


def _s_grid(r, grid, num_s):
    span = 8 * np.exp(r) / np.sqrt(2) + grid.half_width
    return np.linspace(-span, span, num_s)


def photon_subtract(chain: ClusterChain, beta: float, n: int | None = None, homodyne: float | None = None,
                    seed=None, n_cap: int = 12, num_s: int = 1601, tail: float = 1e-4):
    """Photon subtraction on the head node after its CZ, then a theta = 0 homodyne.

    Given (n, homodyne) the branch is applied as recorded; otherwise n and m are drawn
    from the joint distribution evaluated on an outcome grid. The record carries the
    density of the realized (n, m).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if chain.remaining < 2:
        raise MbqcError("no downstream node")
    g = chain.grid
    node = chain.measured
    r = chain.node_squeezing[node + 1]
    psi = chain.head_state()
    rng = _rng(seed)
    if n is None or homodyne is None:
        s_grid = _s_grid(r, g, num_s)
        ds = s_grid[1] - s_grid[0]
        rows, counts = [], []
        for k in ([n] if n is not None else range(n_cap + 1)):
            rows.append(_SubtractionBranch(psi, r, beta, k, g).density(s_grid) * np.cosh(beta) * ds)
            counts.append(k)
            if n is None and sum(x.sum() for x in rows) > 1 - tail:
                break
        table = np.array(rows)
        if n is None and table.sum() < 1 - 1e-3:
            raise MbqcError(f"photon counts above {n_cap} carry weight {1 - table.sum():.3g}; raise n_cap")
        flat = table.ravel() / table.sum()
        k_idx, s_idx = divmod(int(rng.choice(flat.size, p=flat)), num_s)
        n = counts[k_idx]
        s = float(s_grid[s_idx] + (rng.random() - 0.5) * ds)
        homodyne = s * np.cosh(beta)
    s = homodyne / np.cosh(beta)
    out = _SubtractionBranch(psi, r, beta, n, g).output(s)
    dens = grid_norm(out, g) ** 2 * np.cosh(beta)
    if dens < 1e-300:
        raise MbqcError("zero-probability outcome (grid underflow)")
    rec = MeasurementRecord(node, "subtraction-pnr", int(n), angle=0.0, beta=beta, homodyne=float(homodyne),
                            shift=float(s), probability=float(dens), seed=seed if isinstance(seed, int) else None)
    return _advance(chain, out, rec), rec


def subtraction_success_probability(psi, r: float, beta: float, n: int = 1, num_s: int = 1601,
                                    grid: QuadratureGrid = DEFAULT_GRID) -> float:
    """P(n) for a subtraction gadget acting on the head state psi (integrated over the homodyne)."""
    s_grid = _s_grid(r, grid, num_s)
    dens = _SubtractionBranch(psi, r, beta, n, grid).density(s_grid)
    return float(np.sum(dens) * (s_grid[1] - s_grid[0]) * np.cosh(beta))


def undo_rotation(psi, quarter_turns: int, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    """Apply Rotate(-pi/2) quarter_turns times (the inverse Fourier transform)."""
    out = np.asarray(psi, dtype=complex)
    for _ in range(quarter_turns % 4):
        out = np.conj(fourier(np.conj(out), grid))
    return out


@dataclass
class PolynomialRun:
    output: np.ndarray               # head state with all Rotate(pi/2) byproducts undone
    roots: list                      # m_j of the successful subtractions, factor (Q + i m_j)
    records: list
    attempts: int


def polynomial_gate_sequence(psi, degree: int, beta: float = 1e-3, r: float = DEFAULT_R, seed=None,
                             transcript=None, budget: int = RUS_BUDGET, grid: QuadratureGrid = DEFAULT_GRID):
    """Repeat subtraction gadgets until `degree` single-photon subtractions have succeeded.

    Each gadget leaves X(s) Rotate(pi/2) byproducts; the shift is undone in the record
    frame and the quarter turn right after the gadget, so a success acts as (Q + i m) and
    a failure as the damping e^{-beta N} up to scale. With a transcript the recorded
    outcomes are replayed exactly.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    rng = _rng(seed)
    steps = len(transcript) if transcript is not None else budget * max(degree, 1)
    chain = replace_head(build_chain(steps + 1, r, grid), psi)
    roots, attempts = [], 0
    if degree == 0:
        return PolynomialRun(chain.head, [], [], 0)
    for i in range(steps):
        if transcript is not None:
            rec_in = transcript[i]
            head, rec = photon_subtract(chain, beta, rec_in.outcome, rec_in.homodyne)
        else:
            head, rec = photon_subtract(chain, beta, seed=rng)
        chain.head = undo_rotation(head, 1, grid)
        attempts += 1
        if rec.outcome == 1:
            roots.append(rec.homodyne)
        elif rec.outcome > 1:
            raise MbqcError(f"{rec.outcome} photons subtracted; polynomial degree overshoots")
        if len(roots) == degree:
            break
        if transcript is None and attempts >= budget * degree:
            raise BudgetExhausted(f"only {len(roots)} of {degree} subtractions within {attempts} attempts")
    return PolynomialRun(chain.head, roots, chain.records, attempts)


def polynomial_map_error(roots, beta: float, r: float, transcript, nmax: int = 4,
                         grid: QuadratureGrid = DEFAULT_GRID) -> float:
    """Relative distance between the realized linear map on |0..nmax> and prod (Q + i m_j).

    Both maps are evaluated on the grid; the comparison allows one common complex scale.
    """
    hf = hermite_functions(nmax + len(roots) + 2, grid)
    q = grid.q
    real, ideal = [], []
    for k in range(nmax + 1):
        chain = replace_head(build_chain(len(transcript) + 1, r, grid), hf[k])
        chain.head = hf[k].astype(complex)
        for rec_in in transcript:
            branch = _SubtractionBranch(chain.head, r, beta, rec_in.outcome, grid)
            out = branch.output(rec_in.homodyne / np.cosh(beta))
            chain.head = undo_rotation(out, 1, grid)          # keep linear scale: no renormalization
        real.append(chain.head)
        tgt = hf[k].astype(complex)
        for m in roots:
            tgt = (q + 1j * m) * tgt
        ideal.append(tgt)
    real, ideal = np.array(real), np.array(ideal)
    scale = np.sum(np.conj(real) * ideal) / np.sum(np.abs(real) ** 2)
    return float(np.sqrt(np.sum(np.abs(scale * real - ideal) ** 2) / np.sum(np.abs(ideal) ** 2)))


# gate teleportation

def gate_teleport(resource, psi, r: float = DEFAULT_R, outcome: float | None = None, seed=None,
                  grid: QuadratureGrid = DEFAULT_GRID):
    """Teleport psi into a resource f(Q)|0>_p: pre-rotate psi by Rotate(-pi/2), CZ, measure P.

    Returns (output, m). The output approximates f(Q) X(m) psi.
    """
    resource = np.asarray(resource, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if resource.shape != psi.shape:
        raise MbqcError("resource and input must live on the same grid")
    q = grid.q
    rotated = undo_rotation(psi, 1, grid)            # Rotate(-pi/2) psi
    # out(q2) = resource(q2) * int dq1 <m_p|q1> rotated(q1) e^{i q1 q2} = resource(q2) * F[rotated](q2 - m)
    h = fourier(rotated, grid)
    if outcome is None:
        rng = _rng(seed)
        dens = np.array([np.sum(np.abs(resource) ** 2 * np.abs(np.interp(q - s, q, h.real)
                                                            + 1j * np.interp(q - s, q, h.imag)) ** 2)
                         for s in q]) * grid.dq
        outcome = _sample_grid(dens, grid, rng)
    m = float(outcome)
    shifted = np.interp(q - m, q, h.real, left=0, right=0) + 1j * np.interp(q - m, q, h.imag, left=0, right=0)
    return resource * shifted, m


def shift_state(psi, s: float, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    """X(s) psi (q) = psi(q - s) by linear interpolation on the grid."""
    q = grid.q
    psi = np.asarray(psi, dtype=complex)
    return np.interp(q - s, q, psi.real, left=0, right=0) + 1j * np.interp(q - s, q, psi.imag, left=0, right=0)


def resource_state(poly_coeffs, r: float = DEFAULT_R, grid: QuadratureGrid = DEFAULT_GRID) -> np.ndarray:
    """f(Q) S(r)|0> for f given by coefficients (lowest order first)."""
    q = grid.q
    f = np.polynomial.polynomial.polyval(q, np.asarray(poly_coeffs, dtype=complex))
    return f * node_envelope(q, r)
