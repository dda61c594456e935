"""Experiment runner: `fockfield run <config>` and `fockfield verify <config>`.

Configs are JSON. Every run writes its artifacts plus manifest.json into the output
directory; every CSV header carries the units note and the producing config hash.

Exit codes: 0 ok, 2 invalid config, 3 oracle cap exceeded, 4 numerical check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .correlators import (UNITS_NOTE, CorrelatorSeries, FrequencyScan, c4pt, dominant_peak, extract_peaks,
                          ft_continuous, ft_discrete, spectral_model_from_hamiltonian, toy_model_fig1,
                          write_peaks_csv)
from .fock import basis_index
from .lattice import (DEFAULT_ORACLE_CAP, ModelParams, OracleCapExceeded, charge_labels, current_operator,
                      exact_evolution_columns, exact_hamiltonian, trotter_columns)

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_NUMERIC = 0, 2, 3, 4

KINDS = ("spectrum", "correlate-1pt", "correlate-3pt", "correlate-4pt", "phase-reconstruct", "phase-link",
         "mbqc-verify", "fig1", "trotter")

# required blocks and keys per kind; optional keys are filled with defaults at use sites
SCHEMA = {
    "fig1": {"scan": []},
    "spectrum": {"model": ["L", "m"], "scan": ["omega_min", "omega_max", "omega_step", "omega_imag", "T", "dt"],
                 "states": ["initial"]},
    "correlate-1pt": {"model": ["L", "m"], "states": ["initial"], "series": ["t_max", "dt"]},
    "correlate-3pt": {"model": ["L", "m"], "states": ["initial"], "tomography": ["t_i", "t_f"]},
    "correlate-4pt": {"model": ["L", "m"], "states": ["initial"], "series": ["t_max", "dt", "t_c", "t_i"]},
    "phase-reconstruct": {"model": ["L", "m"], "states": ["initial"], "tomography": ["xi", "t"]},
    "phase-link": {"model": ["L", "m"], "states": ["initial"], "tomography": ["t_a", "t_b"]},
    "mbqc-verify": {"mbqc": ["r"]},
    "trotter": {"model": ["L", "m"], "series": ["t_max"], "trotter": ["steps"]},
}


class ConfigError(ValueError):
    pass


class NumericalInconsistency(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


# config handling

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}") from e
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    for block, keys in SCHEMA[kind].items():
        if block not in cfg or not isinstance(cfg[block], dict):
            raise ConfigError(f"{kind} needs a {block!r} block")
        missing = [k for k in keys if k not in cfg[block]]
        if missing:
            raise ConfigError(f"{block} block is missing {missing}")
    for block in ("tomography", "mbqc"):
        b = cfg.get(block, {})
        sampled = b.get("shots") is not None or b.get("sample", False)
        if sampled and b.get("seed") is None:
            raise ConfigError(f"{block}: a seed is mandatory for sampled runs")
        if b.get("shots") is not None and (not isinstance(b["shots"], int) or b["shots"] <= 0):
            raise ConfigError(f"{block}: shots must be a positive integer")
    if "model" in cfg:
        try:
            model_params(cfg)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"model block: {e}") from e


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def model_params(cfg: dict) -> ModelParams:
    allowed = {"L", "m", "delta_m", "lam", "cutoff", "dt", "steps"}
    extra = set(cfg["model"]) - allowed
    if extra:
        raise ValueError(f"unknown model keys {sorted(extra)}")
    return ModelParams(**cfg["model"])


# output helpers

class Run:
    def __init__(self, cfg: dict, out: Path, threads: int = 1):
        self.cfg, self.out, self.threads = cfg, out, max(1, int(threads))
        self.hash = config_hash(cfg)
        self.artifacts: list[str] = []
        self.leakage: dict = {}
        self.timings: dict = {}
        self.report: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def stamp_csv(self, name: str):
        """Insert the config hash right below the units line."""
        p = self.out / name
        lines = p.read_text().splitlines(keepends=True)
        if not lines or not lines[0].startswith("#"):
            lines.insert(0, f"# {UNITS_NOTE}\n")
        lines.insert(1, f"# config sha256 {self.hash}\n")
        p.write_text("".join(lines))

    def write_csv(self, name: str, header, rows):
        with open(self.path(name), "w") as fh:
            fh.write(f"# {UNITS_NOTE}\n# config sha256 {self.hash}\n")
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(v if isinstance(v, str) else repr(float(v)) if not isinstance(v, int) else str(v)
                                  for v in r) + "\n")

    def write_json(self, name: str, obj: dict):
        obj = {"units": UNITS_NOTE, "config_sha256": self.hash, **obj}
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)

    def parallel_map(self, fn, items):
        if self.threads == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, items))

    def manifest(self, command: str, status: str):
        m = {
            "command": command,
            "status": status,
            "config_sha256": self.hash,
            "config": self.cfg,
            "units": UNITS_NOTE,
            "versions": {"fockfield": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "artifacts": self.artifacts,
            "leakage": self.leakage,
            "runtimes_s": self.timings,
            "report": self.report,
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(m, fh, indent=1, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, complex) or isinstance(o, np.complexfloating):
        return [float(o.real), float(o.imag)]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o)}")


def _grid(scan: dict, m: float = 1.0):
    lo = scan.get("omega_min", 0.5 * m)
    hi = scan.get("omega_max", 1.5 * m)
    step = scan.get("omega_step", 1e-3 * m)
    return np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)


def _state_vector(params: ModelParams, counts) -> np.ndarray:
    counts = list(counts)
    if len(counts) != params.num_modes or max(counts) > params.cutoff or min(counts) < 0:
        raise ConfigError(f"state {counts} does not fit {params.num_modes} modes at cutoff {params.cutoff}")
    v = np.zeros((params.cutoff + 1) ** params.num_modes, dtype=complex)
    v[basis_index(counts, params.cutoff)] = 1
    return v


def _dense_h(params: ModelParams):
    h = exact_hamiltonian(params, cap=DEFAULT_ORACLE_CAP)
    return h.toarray() if hasattr(h, "toarray") else np.asarray(h)


# experiment kinds

def _fig1(run: Run, verify: bool):
    sc = run.cfg["scan"]
    m = float(sc.get("m", 1.0))
    model = toy_model_fig1(m, int(sc.get("n_states", 90)))
    grid = _grid(sc, m)
    eta = sc.get("omega_imag", m / 100)
    dt = sc.get("dt", 0.1 / m)
    rows, gaps = [], {}
    for T in sc.get("T", [10 / m, 100 / m]):
        vals = np.array(run.parallel_map(lambda w: ft_discrete(model, w + 1j * eta, dt, T), grid))
        FrequencyScan(grid, eta, vals).to_csv(run.path(f"scan_T{T:g}.csv"))
        run.stamp_csv(f"scan_T{T:g}.csv")
        pk = dominant_peak(extract_peaks(FrequencyScan(grid, eta, vals)))
        rows.append((f"T={T:g}", pk))
        cont = np.array([ft_continuous(model, w + 1j * eta, T) for w in grid])
        gaps[f"T={T:g}"] = float(np.max(np.abs(cont - vals)) / np.max(np.abs(cont)))
    write_peaks_csv(run.path("peaks.csv"), rows)
    run.stamp_csv("peaks.csv")
    run.report["peaks"] = {lab: {"omega": p.omega, "half_width": p.half_width} for lab, p in rows}
    run.report["continuous_vs_discrete_supnorm"] = gaps
    if verify:
        last = rows[-1][1]
        ok = abs(last.omega - m) <= 0.02 * m and rows[-1][1].half_width < rows[0][1].half_width
        run.report["checks"] = {"peak_within_0.02m": abs(last.omega - m), "half_width_shrinks": bool(ok)}
        if not ok:
            raise NumericalInconsistency("fig1 peak checks failed", run.report)


def _spectrum(run: Run, verify: bool):
    params = model_params(run.cfg)
    st, sc = run.cfg["states"], run.cfg["scan"]
    h = _dense_h(params)
    vin = _state_vector(params, st["initial"])
    vout = _state_vector(params, st.get("final", st["initial"]))
    model = spectral_model_from_hamiltonian(h, vin, vout)
    grid, eta, dt = _grid(sc, params.m), sc["omega_imag"], sc["dt"]
    for T in np.atleast_1d(sc["T"]):
        vals = np.array(run.parallel_map(lambda w: ft_discrete(model, w + 1j * eta, dt, T), grid))
        fs = FrequencyScan(grid, eta, vals)
        fs.to_csv(run.path(f"spectrum_T{T:g}.csv"))
        run.stamp_csv(f"spectrum_T{T:g}.csv")
        pk = extract_peaks(fs)
        write_peaks_csv(run.path(f"peaks_T{T:g}.csv"), [(f"{i}", p) for i, p in enumerate(pk)])
        run.stamp_csv(f"peaks_T{T:g}.csv")
    run.report["ground_energy"] = float(model.energies[0])


def _series_times(block: dict):
    dt, tmax = float(block["dt"]), float(block["t_max"])
    n = int(round(tmax / dt))
    if n < 1 or abs(n * dt - tmax) > 1e-9 * max(1, tmax):
        raise ConfigError("series t_max must be a positive multiple of dt")
    return dt * np.arange(n + 1)


def _correlate_1pt(run: Run, verify: bool):
    params = model_params(run.cfg)
    st, se = run.cfg["states"], run.cfg["series"]
    times = _series_times(se)
    i0 = basis_index(st["initial"], params.cutoff)
    vout = _state_vector(params, st.get("final", st["initial"]))
    method = se.get("method", "exact")
    t0 = time.perf_counter()
    if method == "exact":
        vals = [complex(vout.conj() @ exact_evolution_columns(params, t, [i0])[:, 0]) if t > 0 else vout[i0]
                for t in times]
    elif method == "trotter":
        per = int(se.get("steps_per_dt", 1))
        vals = [complex(vout.conj() @ trotter_columns(params, t, max(1, per * k), [i0])[:, 0]) if k else vout[i0]
                for k, t in enumerate(times)]
    else:
        raise ConfigError(f"unknown series method {method!r}")
    run.timings["series"] = time.perf_counter() - t0
    if method == "trotter":
        _record_leakage(run, params, st["initial"], len(times) - 1, float(se["dt"]))
    series = CorrelatorSeries(times, np.array(vals))
    series.to_csv(run.path("c1pt.csv"))
    run.stamp_csv("c1pt.csv")
    if verify or params.lam == 0 and params.delta_m == 0:
        h = _dense_h(params)
        e, v = np.linalg.eigh(h)
        vin = _state_vector(params, st["initial"])
        oracle = np.array([vout.conj() @ (v @ (np.exp(-1j * e * t) * (v.conj().T @ vin))) for t in times])
        err = float(np.max(np.abs(oracle - series.values)))
        run.report["max_error_vs_oracle"] = err
        tol = run.cfg.get("tolerance", 1e-10 if method == "exact" else 1e-2)
        if verify and err > tol:
            raise NumericalInconsistency(f"1pt series deviates from the oracle by {err:.3g}", run.report)


def _correlate_3pt(run: Run, verify: bool):
    from .tomography import three_point_oracle, three_point_via_current
    params = model_params(run.cfg)
    tb = run.cfg["tomography"]
    initial = tuple(run.cfg["states"]["initial"])
    h = exact_hamiltonian(params)
    est = three_point_via_current(params, initial, tb["t_i"], tb["t_f"], zeta=tb.get("zeta", 1e-3),
                                  site=tb.get("site", 0), xi=tb.get("xi", 1e-3), hamiltonian=h,
                                  shots=tb.get("shots"), seed=tb.get("seed"))
    rows = [list(o) + [v.real, v.imag] for o, v in sorted(est.table.items())]
    run.write_csv("c3pt.csv", [f"n{j}" for j in range(params.num_modes)] + ["re", "im"], rows)
    if verify:
        from .tomography import align_global_phase
        orc = three_point_oracle(params, initial, tb["t_i"], tb["t_f"], tb.get("site", 0), h)
        oracle = {o: orc[basis_index(o, params.cutoff)] for o in est.table}
        # outcomes in different charge sectors carry independent global phases
        aligned, _ = align_global_phase(est.table, oracle, est.component)
        errs = [(list(o), abs(aligned[o] - ref) / abs(ref)) for o, ref in oracle.items()
                if abs(ref) > tb.get("min_magnitude", 0.05)]
        run.report["relative_errors"] = errs
        worst = max((e for _, e in errs), default=0.0)
        if worst > run.cfg.get("tolerance", 5e-2):
            raise NumericalInconsistency(f"three-point relative error {worst:.3g}", run.report)


def _correlate_4pt(run: Run, verify: bool):
    params = model_params(run.cfg)
    st, se = run.cfg["states"], run.cfg["series"]
    h = _dense_h(params)
    j = current_operator(params, se.get("site", 0)).entries
    vin = _state_vector(params, st["initial"])
    vout = _state_vector(params, st.get("final", st["initial"]))
    model = spectral_model_from_hamiltonian(h, vin, vout, j)
    t_c, t_i = float(se["t_c"]), float(se["t_i"])
    times = t_c + _series_times(se)[1:]
    vals = np.array([c4pt(model, tf, t_c, t_i) for tf in times])
    rows = [[t, v.real, v.imag] for t, v in zip(times, vals)]
    run.write_csv("c4pt.csv", ["t_f", "re", "im"], rows)
    if verify:
        from scipy.linalg import expm

        def direct(tf):
            right = j @ (expm(1j * t_i * h) @ vin)
            mid = expm(1j * t_c * h) @ (j @ (expm(-1j * t_c * h) @ right))
            return vout.conj() @ (expm(-1j * tf * h) @ mid)

        err = max(abs(direct(tf) - v) for tf, v in zip(times[:5], vals[:5]))
        run.report["max_error_vs_oracle"] = float(err)
        if err > 1e-9:
            raise NumericalInconsistency(f"four-point deviates by {err:.3g}", run.report)


def _phase_reconstruct(run: Run, verify: bool):
    from .fock import FockState
    from .tomography import (align_global_phase, measure_probabilities, reconstruct_multimode, richardson)
    params = model_params(run.cfg)
    tb = run.cfg["tomography"]
    initial = list(run.cfg["states"]["initial"])
    M, K = params.num_modes, params.cutoff
    i0 = basis_index(initial, K)
    psi = exact_evolution_columns(params, tb["t"], [i0])[:, 0]
    state = FockState.from_tensor(psi.reshape((K + 1,) * M))
    nmax = tb.get("nmax", K - 1)
    shots, seed = tb.get("shots"), tb.get("seed")
    guard = tb.get("guard", 0.01)
    tab = measure_probabilities(state, tb["xi"], shots=shots, seed=seed, guard=guard)
    tab.to_csv(run.path("probabilities.csv"))
    run.stamp_csv("probabilities.csv")
    ref = max(((o,) if M == 1 else o for o in np.ndindex(*(nmax + 1,) * M)), key=lambda o: tab.p("0", o))
    rec = reconstruct_multimode(tab, nmax, reference=tuple(ref), n_boot=tb.get("n_boot", 200), boot_seed=seed or 0)
    if tb.get("richardson", True):
        tab2 = measure_probabilities(state, tb["xi"] / 2, shots=shots, seed=None if seed is None else seed + 1,
                                     guard=guard)
        rec = richardson(rec, reconstruct_multimode(tab2, nmax, reference=tuple(ref), propagate=False))
    run.write_json("reconstruction.json", rec.to_json())
    if verify:
        oracle = {o: psi[basis_index(o, K)] for o in rec.table}
        _, err = align_global_phase(rec.table, oracle, rec.component)
        run.report["aligned_max_error"] = err
        if err > run.cfg.get("tolerance", 1e-2):
            raise NumericalInconsistency(f"reconstruction error {err:.3g}", run.report)


def _phase_link(run: Run, verify: bool):
    from scipy.linalg import expm
    from .tomography import link_phases_photon_control
    params = model_params(run.cfg)
    tb = run.cfg["tomography"]
    initial = tuple(run.cfg["states"]["initial"])
    h = _dense_h(params)
    K, M = params.cutoff, params.num_modes
    nmax = tb.get("nmax", K - 1)
    # only outcomes in the charge sector of the initial state can carry amplitude
    q0 = sum(n if i % 2 == 0 else -n for i, n in enumerate(initial))
    outcomes = [tuple(o) for o in np.ndindex(*(nmax + 1,) * M)
                if sum(n if i % 2 == 0 else -n for i, n in enumerate(o)) == q0]
    link = link_phases_photon_control(h, initial, tb["t_a"], tb["t_b"], K, outcomes,
                                      shots=tb.get("shots"), seed=tb.get("seed"))
    rows = [list(o) + [link.delta_phi[o], link.cos_term[o], link.sin_term[o]] for o in sorted(link.delta_phi)]
    run.write_csv("phase_link.csv", [f"n{j}" for j in range(M)] + ["delta_phi", "cos_term", "sin_term"], rows)
    if verify:
        v0 = _state_vector(params, initial)
        ca, cb = expm(-1j * tb["t_a"] * h) @ v0, expm(-1j * tb["t_b"] * h) @ v0
        errs = []
        for o, d in link.delta_phi.items():
            i = basis_index(o, K)
            if abs(ca[i]) * abs(cb[i]) > 1e-6:
                ref = np.angle(cb[i]) - np.angle(ca[i])
                errs.append(abs(np.angle(np.exp(1j * (d - ref)))))
        err = max(errs, default=0.0)
        run.report["max_phase_error"] = float(err)
        if err > run.cfg.get("tolerance", 1e-2 if tb.get("shots") is None else 0.1):
            raise NumericalInconsistency(f"phase-link error {err:.3g}", run.report)


def _mbqc_verify(run: Run, verify: bool):
    from . import mbqc
    mb = run.cfg["mbqc"]
    rs = [float(r) for r in np.atleast_1d(mb["r"])]
    kappas = mb.get("kappas", [0.0, 0.5])
    nmax = int(mb.get("n_max", 3))
    rows = []
    for r in rs:
        tele = [mbqc.net_map_fidelity([k], r, nmax) for k in kappas]
        inj = [mbqc.inject_fock(mbqc.build_chain(2, r), n)[1] for n in range(nmax + 1)]
        rows.append([r] + tele + inj)
    header = ["r"] + [f"teleport_kappa_{k:g}" for k in kappas] + [f"inject_n{n}" for n in range(nmax + 1)]
    run.write_csv("mbqc_fidelity.csv", header, rows)
    beta = float(mb.get("beta", 1e-3))
    a = mbqc.ladder_lower(12).entries
    from math import factorial
    kraus = {}
    for n in (1, 2):
        s = mbqc.subtraction_kraus(beta, n, 12) / mbqc.subtraction_prefactor(beta, n)
        t = np.linalg.matrix_power(a, n) / np.sqrt(factorial(n))
        kraus[n] = float(np.linalg.norm((s - t)[:5, :5], 2))
    run.report["kraus_block_error"] = kraus
    if mb.get("sample", False):
        hf = mbqc.hermite_functions(4)
        seq = mbqc.polynomial_gate_sequence(hf[1], int(mb.get("degree", 1)), beta, rs[-1], seed=mb["seed"],
                                            budget=int(mb.get("budget", mbqc.RUS_BUDGET)))
        mbqc.save_transcript(seq.records, run.path("transcript.json"))
        run.report["polynomial_roots"] = seq.roots
        run.report["polynomial_map_error"] = mbqc.polynomial_map_error(seq.roots, beta, rs[-1], seq.records)
    if verify:
        arr = np.array(rows)[:, 1:]
        monotone = bool(np.all(np.diff(arr, axis=0) >= -1e-12))
        run.report["fidelity_monotone_in_r"] = monotone
        if not monotone:
            raise NumericalInconsistency("fidelities are not monotone in r", run.report)


def _trotter(run: Run, verify: bool):
    params = model_params(run.cfg)
    t = float(run.cfg["series"]["t_max"])
    steps = [int(s) for s in run.cfg["trotter"]["steps"]]
    nblk = int(run.cfg["trotter"].get("block", 2))
    from .fock import low_block_indices
    cols = low_block_indices(params.num_modes, params.cutoff, nblk)
    exact = _exact_dense_columns(params, t, cols)
    errs = []
    for n in steps:
        t0 = time.perf_counter()
        u = trotter_columns(params, t, n, cols)
        run.timings[f"N={n}"] = time.perf_counter() - t0
        errs.append(float(np.linalg.norm((u - exact)[cols], 2)))
    slope = -float(np.polyfit(np.log(np.array(steps, float)), np.log(errs), 1)[0])
    _record_leakage(run, params, [0] * params.num_modes, steps[0], t / steps[0])
    run.write_csv("trotter.csv", ["steps", "dt", "error"], [[n, t / n, e] for n, e in zip(steps, errs)])
    run.report["slope"] = slope
    if verify and abs(slope - 1.0) > 0.2:
        raise NumericalInconsistency(f"Trotter slope {slope:.3f} outside 1 +- 0.2", run.report)


def _record_leakage(run: Run, params: ModelParams, initial, steps: int, dt: float):
    """Per-gate boundary population of the Trotter circuit run on the initial basis state."""
    from .fock import FockState
    from .gates import apply_circuit
    from .lattice import trotter_circuit
    _, rep = apply_circuit(trotter_circuit(params, steps, dt), FockState.basis(list(initial), params.cutoff))
    run.leakage = {"initial": list(initial), "steps": steps, "dt": dt, "boundary_total": rep.total,
                   "boundary_max": max(rep.boundary, default=0.0), "norm_deficit": rep.norm_deficit}


def _exact_dense_columns(params: ModelParams, t: float, cols):
    from .lattice import evolve_dense_by_sectors
    h = exact_hamiltonian(params, g_form="circuit")
    return evolve_dense_by_sectors(h, charge_labels(params), t, cols)


HANDLERS = {
    "fig1": _fig1, "spectrum": _spectrum, "correlate-1pt": _correlate_1pt, "correlate-3pt": _correlate_3pt,
    "correlate-4pt": _correlate_4pt, "phase-reconstruct": _phase_reconstruct, "phase-link": _phase_link,
    "mbqc-verify": _mbqc_verify, "trotter": _trotter,
}


def execute(command: str, config_path, out=None, threads: int = 1, seed_override: int | None = None) -> int:
    try:
        cfg = load_config(config_path)
        if seed_override is not None:
            for block in ("tomography", "mbqc"):
                if block in cfg:
                    cfg[block]["seed"] = int(seed_override)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.get("out", "out"))
    run = Run(cfg, out_dir, threads)
    t0 = time.perf_counter()
    try:
        HANDLERS[cfg["kind"]](run, command == "verify")
        code, status = EXIT_OK, "ok"
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        code, status = EXIT_CONFIG, f"config error: {e}"
    except OracleCapExceeded as e:
        print(f"oracle cap exceeded: {e}", file=sys.stderr)
        code, status = EXIT_CAP, f"oracle cap exceeded: {e}"
    except NumericalInconsistency as e:
        print(f"numerical inconsistency: {e}", file=sys.stderr)
        run.report.update(e.report)
        code, status = EXIT_NUMERIC, f"numerical inconsistency: {e}"
    run.timings["total"] = time.perf_counter() - t0
    run.manifest(command, status)
    if code == EXIT_OK:
        print(json.dumps(run.report, default=_json_default, sort_keys=True))
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fockfield", description="Run or verify a fockfield experiment config.")
    ap.add_argument("command", choices=["run", "verify"])
    ap.add_argument("config")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for scan grids")
    ap.add_argument("--seed-override", type=int, help="replace every seed in the config")
    args = ap.parse_args(argv)
    if args.seed_override is not None and not 0 <= args.seed_override < 2 ** 64:
        print("config error: seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    return execute(args.command, args.config, args.out, args.threads, args.seed_override)


if __name__ == "__main__":
    sys.exit(main())
