"""Finite-squeezing fidelities of the measurement-based layer over a range of node squeezings."""
import argparse

import numpy as np

from fockfield.mbqc import (build_chain, hermite_functions, inject_fock, net_map_fidelity, polynomial_gate_sequence,
                            polynomial_map_error)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r", type=float, nargs="+", default=[1.0, 1.5, 2.0, 2.5, 3.0])
    ap.add_argument("--kappa", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--nmax", type=int, default=3)
    ap.add_argument("--beta", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("r      " + "  ".join(f"inject n={n}" for n in range(args.nmax + 1)) + "  "
          + "  ".join(f"T({k})" for k in args.kappa))
    for r in args.r:
        inj = [inject_fock(build_chain(2, r), n)[1] for n in range(args.nmax + 1)]
        tel = [net_map_fidelity([k], r, args.nmax) for k in args.kappa]
        print(f"{r:<6g} " + "  ".join(f"{f:10.6f}" for f in inj) + "  " + "  ".join(f"{f:.6f}" for f in tel))
    run = polynomial_gate_sequence(hermite_functions(1)[1], 1, args.beta, max(args.r), seed=args.seed)
    err = polynomial_map_error(run.roots, args.beta, max(args.r), run.records)
    print(f"degree-1 subtraction: {run.attempts} attempts, m_1 = {run.roots[0]:.3f}, map error {err:.3e}")


if __name__ == "__main__":
    main()
