"""Truncated Fock-space states and operators.

Amplitudes are stored flat in mode-major order (mode 0 varies slowest), so a
state on M modes with cutoff K reshapes to a tensor of shape (K+1,)*M.
Operators on one or a few modes are applied by tensor contraction; the full
(K+1)^M matrix is never built here.
"""

from __future__ import annotations

import json
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
from scipy import linalg

HERMITIAN_TOL = 1e-12
NORM_DRIFT_TOL = 1e-8


@dataclass(eq=False)
class ModeOperator:
    """Dense matrix acting on `arity` modes, factors in row-major order."""

    entries: np.ndarray
    cutoff: int
    arity: int = 1
    hermitian: bool = False

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        dim = (self.cutoff + 1) ** self.arity
        if self.entries.shape != (dim, dim):
            raise ValueError(
                f"operator shape {self.entries.shape} does not match arity {self.arity} at cutoff {self.cutoff}"
            )
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("operator has non-finite entries")
        if self.hermitian:
            err = np.max(np.abs(self.entries - self.entries.conj().T)) if dim else 0.0
            if err > HERMITIAN_TOL:
                raise ValueError(f"operator flagged Hermitian but max|A - A^dag| = {err:.3e}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dagger(self) -> "ModeOperator":
        return ModeOperator(self.entries.conj().T, self.cutoff, self.arity, self.hermitian)

    def __matmul__(self, other: "ModeOperator") -> "ModeOperator":
        _check_compatible(self, other)
        return ModeOperator(self.entries @ other.entries, self.cutoff, self.arity)

    def __add__(self, other: "ModeOperator") -> "ModeOperator":
        _check_compatible(self, other)
        return ModeOperator(self.entries + other.entries, self.cutoff, self.arity,
                            self.hermitian and other.hermitian)

    def __sub__(self, other: "ModeOperator") -> "ModeOperator":
        _check_compatible(self, other)
        return ModeOperator(self.entries - other.entries, self.cutoff, self.arity,
                            self.hermitian and other.hermitian)

    def scaled(self, factor: complex) -> "ModeOperator":
        keep = self.hermitian and np.isreal(factor)
        return ModeOperator(factor * self.entries, self.cutoff, self.arity, bool(keep))

    def kron(self, other: "ModeOperator") -> "ModeOperator":
        """Tensor product; `self` acts on the first (slower) factor."""
        if other.cutoff != self.cutoff:
            raise ValueError("cutoff mismatch in kron")
        return ModeOperator(np.kron(self.entries, other.entries), self.cutoff,
                            self.arity + other.arity, self.hermitian and other.hermitian)

    def power(self, n: int) -> "ModeOperator":
        return ModeOperator(np.linalg.matrix_power(self.entries, n), self.cutoff, self.arity,
                            self.hermitian)


def _check_compatible(a: ModeOperator, b: ModeOperator):
    if a.cutoff != b.cutoff or a.arity != b.arity:
        raise ValueError("operators differ in cutoff or arity")


def ladder_lower(cutoff: int) -> ModeOperator:
    """Annihilation operator with <n-1|a|n> = sqrt(n)."""
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    return ModeOperator(np.diag(np.sqrt(np.arange(1, cutoff + 1)), k=1), cutoff)


def ladder_raise(cutoff: int) -> ModeOperator:
    return ladder_lower(cutoff).dagger()


def number_op(cutoff: int) -> ModeOperator:
    return ModeOperator(np.diag(np.arange(cutoff + 1, dtype=float)), cutoff, hermitian=True)


def identity_op(cutoff: int, arity: int = 1) -> ModeOperator:
    return ModeOperator(np.eye((cutoff + 1) ** arity), cutoff, arity, hermitian=True)


def quadratures(cutoff: int) -> tuple[ModeOperator, ModeOperator]:
    """Q = (a + a^dag)/sqrt2 and P = i(a^dag - a)/sqrt2."""
    a = ladder_lower(cutoff).entries
    ad = a.conj().T
    q = (a + ad) / np.sqrt(2)
    p = 1j * (ad - a) / np.sqrt(2)
    return ModeOperator(q, cutoff, hermitian=True), ModeOperator(p, cutoff, hermitian=True)


@dataclass(eq=False)
class FockState:
    num_modes: int
    cutoff: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_modes < 1 or self.cutoff < 1:
            raise ValueError("need at least one mode and cutoff >= 1")
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != (self.cutoff + 1) ** self.num_modes:
            raise ValueError(
                f"expected {(self.cutoff + 1) ** self.num_modes} amplitudes, got {self.amplitudes.size}"
            )

    @property
    def dim(self) -> int:
        return self.cutoff + 1

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((self.dim,) * self.num_modes)

    @classmethod
    def vacuum(cls, num_modes: int, cutoff: int) -> "FockState":
        return cls.basis([0] * num_modes, cutoff)

    @classmethod
    def basis(cls, counts, cutoff: int) -> "FockState":
        counts = list(counts)
        if any(c < 0 or c > cutoff for c in counts):
            raise ValueError(f"photon numbers {counts} outside 0..{cutoff}")
        amps = np.zeros((cutoff + 1) ** len(counts), dtype=complex)
        amps[basis_index(counts, cutoff)] = 1.0
        return cls(len(counts), cutoff, amps)

    @classmethod
    def from_tensor(cls, tensor: np.ndarray) -> "FockState":
        return cls(tensor.ndim, tensor.shape[0] - 1, tensor.reshape(-1))

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def leakage(self) -> float:
        """Norm deficit 1 - ||psi||^2."""
        return 1.0 - self.norm_sq()

    def normalized(self) -> "FockState":
        return FockState(self.num_modes, self.cutoff, self.amplitudes / np.sqrt(self.norm_sq()))

    def inner(self, other: "FockState") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def amplitude(self, counts) -> complex:
        return complex(self.amplitudes[basis_index(counts, self.cutoff)])

    def expectation(self, op: ModeOperator, targets) -> complex:
        return self.inner(embed(op, targets, self))

    def boundary_population(self, modes=None) -> float:
        """Probability that any of `modes` sits on the top Fock level."""
        probs = np.abs(self.tensor) ** 2
        modes = range(self.num_modes) if modes is None else modes
        mask = np.zeros(probs.shape, dtype=bool)
        for m in modes:
            idx = [slice(None)] * self.num_modes
            idx[m] = self.cutoff
            mask[tuple(idx)] = True
        return float(probs[mask].sum())

    def to_json(self) -> dict:
        return {
            "num_modes": self.num_modes,
            "cutoff": self.cutoff,
            "layout": "mode-major",
            "amplitudes": [[float(z.real), float(z.imag)] for z in self.amplitudes],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FockState":
        if data.get("layout", "mode-major") != "mode-major":
            raise ValueError(f"unsupported layout {data['layout']!r}")
        amps = np.array([complex(re, im) for re, im in data["amplitudes"]])
        return cls(int(data["num_modes"]), int(data["cutoff"]), amps)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "FockState":
        return cls.from_json(json.loads(Path(path).read_text()))


def basis_index(counts, cutoff: int) -> int:
    idx = 0
    for c in counts:
        idx = idx * (cutoff + 1) + int(c)
    return idx


def basis_counts(index: int, num_modes: int, cutoff: int) -> tuple[int, ...]:
    return tuple(int(c) for c in np.unravel_index(index, (cutoff + 1,) * num_modes))


def low_block_indices(num_modes: int, cutoff: int, nmax: int, total: bool = False) -> np.ndarray:
    """Flat indices with every mode <= nmax (or total photon number <= nmax)."""
    out = []
    for counts in product(range(cutoff + 1), repeat=num_modes):
        if (sum(counts) <= nmax) if total else (max(counts) <= nmax):
            out.append(basis_index(counts, cutoff))
    return np.array(out, dtype=int)


def apply_matrix(matrix: np.ndarray, targets, tensor: np.ndarray) -> np.ndarray:
    """Contract a (d^a x d^a) matrix into the target axes of `tensor`.

    `tensor` may carry trailing batch axes beyond the mode axes; targets index
    mode axes only.
    """
    targets = list(targets)
    a = len(targets)
    d = tensor.shape[targets[0]]
    op = matrix.reshape((d,) * (2 * a))
    out = np.tensordot(op, tensor, axes=(list(range(a, 2 * a)), targets))
    return np.moveaxis(out, list(range(a)), targets)


def _check_targets(op: ModeOperator, targets, state: FockState):
    targets = list(targets)
    if len(targets) != op.arity:
        raise ValueError(f"operator arity {op.arity} but {len(targets)} targets given")
    if len(set(targets)) != len(targets):
        raise ValueError(f"targets {targets} are not distinct")
    for t in targets:
        if not 0 <= t < state.num_modes:
            raise IndexError(f"target mode {t} out of range for {state.num_modes} modes")
    if op.cutoff != state.cutoff:
        raise ValueError(f"operator cutoff {op.cutoff} != state cutoff {state.cutoff}")
    return targets


def embed(op: ModeOperator, targets, state: FockState) -> FockState:
    """Apply `op` on the target modes, identity elsewhere."""
    targets = _check_targets(op, targets, state)
    out = apply_matrix(op.entries, targets, state.tensor)
    return FockState(state.num_modes, state.cutoff, out.reshape(-1))


# Eigendecompositions are reused across Trotter steps and parameter scans.
_EIG_CACHE: "OrderedDict[bytes, tuple[np.ndarray, np.ndarray]]" = OrderedDict()
_EIG_CACHE_SIZE = 128


def _hermitian_eig(matrix: np.ndarray):
    key = matrix.tobytes() + str(matrix.shape).encode()
    hit = _EIG_CACHE.get(key)
    if hit is not None:
        _EIG_CACHE.move_to_end(key)
        return hit
    w, v = np.linalg.eigh(matrix)
    _EIG_CACHE[key] = (w, v)
    if len(_EIG_CACHE) > _EIG_CACHE_SIZE:
        _EIG_CACHE.popitem(last=False)
    return w, v


def operator_exp(generator: ModeOperator, scale: complex) -> ModeOperator:
    """exp(scale * G) at the truncated dimension."""
    if not np.isfinite(scale):
        raise ValueError("non-finite scale")
    if scale == 0:
        return identity_op(generator.cutoff, generator.arity)
    if generator.hermitian:
        w, v = _hermitian_eig(generator.entries)
        u = (v * np.exp(scale * w)) @ v.conj().T
    else:
        u = linalg.expm(scale * generator.entries)
    return ModeOperator(u, generator.cutoff, generator.arity)


def expm_apply(generator: ModeOperator, scale: complex, targets, state: FockState) -> FockState:
    return embed(operator_exp(generator, scale), targets, state)


@dataclass(frozen=True)
class PnrOutcome:
    counts: tuple
    probability: float


def _checked_probabilities(state: FockState) -> np.ndarray:
    probs = np.abs(state.amplitudes) ** 2
    total = probs.sum()
    if abs(total - 1.0) > NORM_DRIFT_TOL:
        warnings.warn(f"state norm^2 = {total:.10f}; renormalizing before PNR", RuntimeWarning,
                      stacklevel=3)
        probs = probs / total
    return probs


def pnr_distribution(state: FockState, floor: float = 1e-15) -> list[PnrOutcome]:
    """All photon-number outcomes with probability above `floor`, in basis order."""
    probs = _checked_probabilities(state)
    keep = np.nonzero(probs > floor)[0]
    return [PnrOutcome(basis_counts(i, state.num_modes, state.cutoff), float(probs[i])) for i in keep]


def sample_pnr(state: FockState, shots: int, seed=None, floor: float = 1e-15) -> dict:
    """Multinomial histogram {counts: hits} drawn from the PNR distribution."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    outcomes = pnr_distribution(state, floor)
    p = np.array([o.probability for o in outcomes])
    p = p / p.sum()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    hits = rng.multinomial(shots, p)
    return {o.counts: int(h) for o, h in zip(outcomes, hits) if h > 0}


def full_operator(op: ModeOperator, targets, num_modes: int) -> np.ndarray:
    """Dense full-space matrix of an embedded operator (oracle use, small spaces only)."""
    d = op.cutoff + 1
    eye = np.eye(d ** num_modes, dtype=complex).reshape((d,) * num_modes + (d ** num_modes,))
    return apply_matrix(op.entries, list(targets), eye).reshape(d ** num_modes, d ** num_modes)


def two_mode_squeezed_vacuum(r: float, cutoff: int) -> FockState:
    """sum_n tanh(r)^n / cosh(r) |n, n>, truncated at the cutoff (not renormalized)."""
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    n = np.arange(cutoff + 1)
    amps[n, n] = np.tanh(r) ** n / np.cosh(r)
    return FockState(2, cutoff, amps.reshape(-1))
