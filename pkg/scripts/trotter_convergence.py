"""Trotter error on the low-photon block against the exact propagator, for a list of step counts."""
import argparse
import time

import numpy as np

from fockfield.fock import low_block_indices
from fockfield.lattice import ModelParams, charge_labels, evolve_dense_by_sectors, exact_hamiltonian, trotter_columns


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=2)
    ap.add_argument("--cutoff", type=int, default=6)
    ap.add_argument("--m", type=float, default=1.0)
    ap.add_argument("--lam", type=float, default=0.2)
    ap.add_argument("--delta-m", type=float, default=0.05)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--block", type=int, default=2, help="per-mode photon bound of the compared block")
    ap.add_argument("--steps", type=int, nargs="+", default=[10, 20, 40])
    args = ap.parse_args()
    p = ModelParams(L=args.L, m=args.m, lam=args.lam, delta_m=args.delta_m, cutoff=args.cutoff)
    lo = low_block_indices(p.num_modes, p.cutoff, args.block)
    t0 = time.perf_counter()
    h = exact_hamiltonian(p, g_form="circuit")
    exact = evolve_dense_by_sectors(h, charge_labels(p), args.t, lo)[lo]
    errs = []
    for n in args.steps:
        errs.append(np.linalg.norm(trotter_columns(p, args.t, n, lo)[lo] - exact, 2))
        print(f"N = {n:4d}  error {errs[-1]:.4e}")
    slope = -np.polyfit(np.log(args.steps), np.log(errs), 1)[0]
    print(f"log-log slope {slope:.3f}  ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
