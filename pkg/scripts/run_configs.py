"""Run every experiment config in scripts/configs through the CLI and report exit codes."""
import argparse
import sys
from pathlib import Path

from fockfield.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--command", choices=["run", "verify"], default="verify")
    ap.add_argument("--out", default="out", help="parent directory for per-config outputs")
    ap.add_argument("configs", nargs="*", help="config files (default: all in scripts/configs)")
    args = ap.parse_args()
    paths = [Path(c) for c in args.configs] or sorted((HERE / "configs").glob("*.json"))
    failed = 0
    for p in paths:
        code = cli_main([args.command, str(p), "--out", str(Path(args.out) / p.stem)])
        print(f"{p.name}: exit {code}", file=sys.stderr)
        failed += code != 0
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
