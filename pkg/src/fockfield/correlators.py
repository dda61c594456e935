"""Spectral correlators and their complex-frequency transforms.

A SpectralModel holds energies E_n with overlaps <l_f|n> and <n|l_i>; the
one-point correlator is C(t) = sum_n e^{-i t E_n} <l_f|n><n|l_i>. Transforms use
complex omega with Im(omega) > 0 and Delta omega_n = omega - E_n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

UNITS_NOTE = "lattice units, a = 1"


@dataclass
class SpectralModel:
    energies: np.ndarray
    overlaps_in: np.ndarray            # <n|l_i>
    overlaps_out: np.ndarray           # <l_f|n>
    current: np.ndarray | None = None  # <n_f|J|n_i> in the energy eigenbasis
    current_pair: Callable | None = None  # t_c -> <n_f|J(t_c) J(0)|n_i>

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.overlaps_in = np.asarray(self.overlaps_in, dtype=complex)
        self.overlaps_out = np.asarray(self.overlaps_out, dtype=complex)
        n = len(self.energies)
        if len(self.overlaps_in) != n or len(self.overlaps_out) != n:
            raise ValueError("energies and overlaps must have equal lengths")
        if not np.all(np.isfinite(self.energies)):
            raise ValueError("energies must be finite")
        if self.current is not None:
            self.current = np.asarray(self.current, dtype=complex)
            if self.current.shape != (n, n):
                raise ValueError("current matrix must be N x N")

    @property
    def weights(self) -> np.ndarray:
        return self.overlaps_out * self.overlaps_in

    def pair_matrix(self, t_c: float) -> np.ndarray:
        """<n_f|J(t_c) J(0)|n_i> with J(t_c) = e^{i t_c H} J e^{-i t_c H}."""
        if self.current_pair is not None:
            return np.asarray(self.current_pair(t_c), dtype=complex)
        if self.current is None:
            raise ValueError("model has no current matrix elements")
        ph = np.exp(1j * t_c * self.energies)
        jt = (ph[:, None] * self.current) * ph.conj()[None, :]
        return jt @ self.current


@dataclass
class CorrelatorSeries:
    times: np.ndarray
    values: np.ndarray
    var_re: np.ndarray | None = None
    var_im: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must match")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for v in (self.var_re, self.var_im):
            if v is not None and np.shape(v) != self.times.shape:
                raise ValueError("variance arrays must match times")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {UNITS_NOTE}\n")
            w = csv.writer(fh)
            has_var = self.var_re is not None
            w.writerow(["t", "re", "im"] + (["var_re", "var_im"] if has_var else []))
            for i, (t, v) in enumerate(zip(self.times, self.values)):
                row = [repr(float(t)), repr(float(v.real)), repr(float(v.imag))]
                if has_var:
                    row += [repr(float(self.var_re[i])), repr(float(self.var_im[i]))]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "CorrelatorSeries":
        rows = [r for r in csv.reader(l for l in open(path) if not l.startswith("#"))]
        head, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        var_re = body[:, 3] if "var_re" in head else None
        var_im = body[:, 4] if "var_im" in head else None
        return cls(body[:, 0], body[:, 1] + 1j * body[:, 2], var_re, var_im)


@dataclass
class FrequencyScan:
    omega_real: np.ndarray
    omega_imag: float
    values: np.ndarray

    def __post_init__(self):
        self.omega_real = np.asarray(self.omega_real, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if not self.omega_imag > 0:
            raise ValueError("Im(omega) must be positive")
        if self.omega_real.shape != self.values.shape:
            raise ValueError("grid and values must match")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {UNITS_NOTE}\n")
            w = csv.writer(fh)
            w.writerow(["re_omega", "im_omega", "re_val", "im_val", "abs_val"])
            for x, v in zip(self.omega_real, self.values):
                w.writerow([repr(float(x)), repr(float(self.omega_imag)), repr(float(v.real)),
                            repr(float(v.imag)), repr(float(abs(v)))])


@dataclass(frozen=True)
class Peak:
    omega: float
    height: float
    half_width: float   # half width at half maximum of the fitted parabola
    index: int


def _check_omega(omega):
    if np.imag(omega) <= 0:
        raise ValueError("transforms need Im(omega) > 0")


# time domain

def c1pt_from_spectrum(model: SpectralModel, t) -> complex:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    out = np.exp(-1j * np.multiply.outer(t, model.energies)) @ model.weights
    return complex(out) if out.ndim == 0 else out


def c3pt(model: SpectralModel, t_f: float, t_i: float) -> complex:
    if not t_f > 0 > t_i:
        raise ValueError("need t_f > 0 > t_i")
    if model.current is None:
        raise ValueError("model has no current matrix elements")
    a = np.exp(-1j * t_f * model.energies) * model.overlaps_out
    b = np.exp(1j * t_i * model.energies) * model.overlaps_in
    return complex(a @ model.current @ b)


def c4pt(model: SpectralModel, t_f: float, t_c: float, t_i: float) -> complex:
    if not t_f > t_c > 0 > t_i:
        raise ValueError("need t_f > t_c > 0 > t_i")
    a = np.exp(-1j * t_f * model.energies) * model.overlaps_out
    b = np.exp(1j * t_i * model.energies) * model.overlaps_in
    return complex(a @ model.pair_matrix(t_c) @ b)


# kernels

def _kernel(omega, energies, T):
    """i (1 - e^{i T dw}) / dw, the transform of e^{-i t E} over [0, T]."""
    dw = omega - energies
    if np.any(dw == 0):
        raise ValueError("omega sits on a pole of the model")
    return 1j * (1 - np.exp(1j * T * dw)) / dw


def _kernel_window(omega, energies, t0, T):
    """i (e^{i t0 dw} - e^{i T dw}) / dw, the transform over [t0, T]."""
    dw = omega - energies
    if np.any(dw == 0):
        raise ValueError("omega sits on a pole of the model")
    return 1j * (np.exp(1j * t0 * dw) - np.exp(1j * T * dw)) / dw


# integration

def adaptive_simpson(f: Callable, a: float, b: float, rtol: float = 1e-8, max_depth: int = 50,
                     panels: int | None = None):
    """Adaptive composite Simpson with Richardson correction; returns (value, error estimate)."""
    if b == a:
        return 0j, 0.0
    if panels is None:
        panels = max(8, int(np.ceil(abs(b - a))))
    edges = np.linspace(a, b, panels + 1)
    # coarse pass sets the absolute target
    coarse = 0j
    work = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        flo, fmid, fhi = f(lo), f(mid), f(hi)
        s = (hi - lo) / 6 * (flo + 4 * fmid + fhi)
        coarse += s
        work.append((lo, hi, flo, fmid, fhi, s, 0))
    scale = max(abs(coarse), sum(abs(w[5]) for w in work) * 1e-3, 1e-300)
    tol_total = rtol * scale
    total = 0j
    err = 0.0
    length = b - a
    while work:
        lo, hi, flo, fmid, fhi, whole, depth = work.pop()
        m1, m2 = 0.5 * (lo + 0.5 * (lo + hi)), 0.5 * (0.5 * (lo + hi) + hi)
        f1, f2 = f(m1), f(m2)
        mid = 0.5 * (lo + hi)
        left = (mid - lo) / 6 * (flo + 4 * f1 + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * f2 + fhi)
        diff = left + right - whole
        tol_here = tol_total * (hi - lo) / abs(length)
        if abs(diff) <= 15 * tol_here or depth >= max_depth:
            total += left + right + diff / 15
            err += abs(diff) / 15
        else:
            work.append((lo, mid, flo, f1, fmid, left, depth + 1))
            work.append((mid, hi, fmid, f2, fhi, right, depth + 1))
    return complex(total), err


def _simpson_samples(t, y):
    """Composite Simpson on a uniform grid with an odd number of points."""
    h = t[1] - t[0]
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def ft_continuous(source, omega: complex, T: float, rtol: float = 1e-8, return_error: bool = False):
    """int_0^T e^{i omega t} C(t) dt.

    source: SpectralModel (closed form), callable C(t) (adaptive Simpson) or a
    CorrelatorSeries sampled uniformly from t = 0 (Simpson with a
    Richardson estimate from the half grid).
    """
    _check_omega(omega)
    if T < 0:
        raise ValueError("T must be non-negative")
    if isinstance(source, SpectralModel):
        val = complex(_kernel(omega, source.energies, T) @ source.weights) if T > 0 else 0j
        return (val, 0.0) if return_error else val
    if callable(source):
        val, err = adaptive_simpson(lambda t: np.exp(1j * omega * t) * source(t), 0.0, T, rtol)
        return (val, err) if return_error else val
    if isinstance(source, CorrelatorSeries):
        t, c = source.times, source.values
        if t[0] != 0 or not np.allclose(np.diff(t), t[1] - t[0]):
            raise ValueError("series must be uniform and start at t = 0")
        n = int(np.searchsorted(t, T * (1 + 1e-12), side="right"))
        if abs(t[n - 1] - T) > 1e-9 * max(1, T) or n % 2 == 0 or n < 5:
            raise ValueError("series needs an odd number >= 5 of samples ending at T")
        y = np.exp(1j * omega * t[:n]) * c[:n]
        fine = _simpson_samples(t[:n], y)
        if (n - 1) % 4 == 0:
            coarse = _simpson_samples(t[:n:2], y[::2])
            val, err = fine + (fine - coarse) / 15, abs(fine - coarse) / 15
        else:
            val, err = fine, float("nan")
        return (complex(val), err) if return_error else complex(val)
    raise TypeError("unsupported correlator source")


def _num_steps(dt: float, T: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = T / dt
    nr = int(round(n))
    if nr < 1 or abs(n - nr) > 1e-9 * max(1.0, n):
        raise ValueError(f"T/dt = {n} is not a positive integer")
    return nr


def ft_discrete(source, omega: complex, dt: float, T: float):
    """dt sum_{n=1}^{N_t} e^{i n dt omega} C(n dt), N_t = T/dt."""
    _check_omega(omega)
    nt = _num_steps(dt, T)
    if isinstance(source, SpectralModel):
        dw = omega - source.energies
        q = np.exp(1j * dw * dt)
        if np.any(np.abs(1 - q) < 1e-300):
            raise ValueError("omega sits on a pole of the model")
        kern = dt * q * (1 - np.exp(1j * dw * T)) / (1 - q)
        return complex(kern @ source.weights)
    n = np.arange(1, nt + 1)
    if callable(source):
        c = np.array([source(k * dt) for k in n], dtype=complex)
    elif isinstance(source, CorrelatorSeries):
        c, _ = _series_at(source, n * dt)
    else:
        raise TypeError("unsupported correlator source")
    return complex(dt * np.exp(1j * n * dt * omega) @ c)


def _series_at(series: CorrelatorSeries, times):
    idx = np.searchsorted(series.times, times - 1e-9 * np.maximum(1, np.abs(times)))
    if np.any(idx >= len(series.times)) or not np.allclose(series.times[idx], times, rtol=1e-9, atol=1e-12):
        raise ValueError("series does not contain the required sample times")
    return series.values[idx], idx


def ft_discrete_with_variance(series: CorrelatorSeries, omega: complex, dt: float, T: float):
    """(value, var_re, var_im) with independent per-point variances propagated linearly."""
    _check_omega(omega)
    nt = _num_steps(dt, T)
    n = np.arange(1, nt + 1)
    c, idx = _series_at(series, n * dt)
    w = dt * np.exp(1j * n * dt * omega)
    val = complex(w @ c)
    vr = np.zeros(nt) if series.var_re is None else np.asarray(series.var_re)[idx]
    vi = np.zeros(nt) if series.var_im is None else np.asarray(series.var_im)[idx]
    var_re = float(np.sum(w.real ** 2 * vr + w.imag ** 2 * vi))
    var_im = float(np.sum(w.imag ** 2 * vr + w.real ** 2 * vi))
    return val, var_re, var_im


def ft_c3pt(model: SpectralModel, omega_f: complex, omega_i: complex, T_f: float, T_i: float) -> complex:
    """Double transform over t_f in [0, T_f] and t_i in [-T_i, 0]."""
    _check_omega(omega_f)
    _check_omega(omega_i)
    if not (T_f > 0 and T_i > 0):
        raise ValueError("T_f and T_i must be positive")
    if model.current is None:
        raise ValueError("model has no current matrix elements")
    kf = _kernel(omega_f, model.energies, T_f) * model.overlaps_out
    ki = _kernel(omega_i, model.energies, T_i) * model.overlaps_in
    return complex(kf @ model.current @ ki)


def ft_c4pt(model: SpectralModel, omega_f: complex, omega_i: complex, t_c: float, T_f: float,
            T_i: float) -> complex:
    """Double transform over t_f in [t_c, T_f] and t_i in [-T_i, 0]."""
    _check_omega(omega_f)
    _check_omega(omega_i)
    if t_c < 0 or T_i <= 0:
        raise ValueError("need t_c >= 0 and T_i > 0")
    if T_f < t_c:
        raise ValueError("need T_f >= t_c")
    kf = _kernel_window(omega_f, model.energies, t_c, T_f) * model.overlaps_out
    ki = _kernel(omega_i, model.energies, T_i) * model.overlaps_in
    return complex(kf @ model.pair_matrix(t_c) @ ki)


# models and scans

def toy_model_fig1(m: float = 1.0, n_states: int = 90) -> SpectralModel:
    """Single stable particle at m plus states from 2m upward spaced by m/5, equal overlaps."""
    e = np.concatenate([[m], 2 * m + np.arange(n_states - 1) * m / 5])
    ov = np.full(n_states, 1 / np.sqrt(n_states))
    return SpectralModel(e, ov, ov)


def spectral_model_from_hamiltonian(h, state_in, state_out, current=None) -> SpectralModel:
    """Diagonalize a dense Hermitian h and project the probe states (and J) onto its eigenbasis."""
    h = h.toarray() if hasattr(h, "toarray") else np.asarray(h)
    e, v = np.linalg.eigh(h)
    ov_in = v.conj().T @ np.asarray(state_in)
    ov_out = np.asarray(state_out).conj() @ v
    j = None if current is None else v.conj().T @ np.asarray(current) @ v
    return SpectralModel(e, ov_in, ov_out, j)


def scan(fn: Callable, omega_real, omega_imag: float) -> FrequencyScan:
    grid = np.asarray(omega_real, dtype=float)
    return FrequencyScan(grid, omega_imag, np.array([fn(w + 1j * omega_imag) for w in grid]))


def extract_peaks(sc: FrequencyScan) -> list[Peak]:
    """Local maxima of |value|, refined by a parabola through the three grid points."""
    x, y = sc.omega_real, np.abs(sc.values)
    if len(x) < 3:
        raise ValueError("need at least 3 grid points")
    peaks = []
    for i in range(1, len(x) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            x0, x1, x2 = x[i - 1], x[i], x[i + 1]
            y0, y1, y2 = y[i - 1], y[i], y[i + 1]
            denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
            a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
            b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denom
            c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
            if a < 0:
                xv = -b / (2 * a)
                yv = c - b * b / (4 * a)
                hw = float(np.sqrt(-yv / (2 * a)))
            else:
                xv, yv, hw = x1, y1, float("inf")
            peaks.append(Peak(float(xv), float(yv), hw, i))
    return peaks


def dominant_peak(peaks: list[Peak]) -> Peak | None:
    return max(peaks, key=lambda p: p.height) if peaks else None


def write_peaks_csv(path, rows):
    """rows: iterable of (label, Peak)."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {UNITS_NOTE}\n")
        w = csv.writer(fh)
        w.writerow(["label", "re_omega", "height", "half_width"])
        for label, p in rows:
            w.writerow([label, repr(p.omega), repr(p.height), repr(p.half_width)])
