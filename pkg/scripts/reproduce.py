"""Run every study with the specs in scripts/specs.

    python3 scripts/reproduce.py [--workers N] [--only figure1 ablation ...]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from wsac.cli import main as wsac_main

SPECS = Path(__file__).resolve().parent / "specs"
ORDER = ["figure1", "ablation", "sensitivity", "rate"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--only", nargs="+", choices=ORDER, default=ORDER)
    parser.add_argument("--out", default=None, help="root directory for results (default: per-spec directory)")
    args = parser.parse_args()
    for study in ORDER:
        if study not in args.only:
            continue
        argv = [study, "--spec", str(SPECS / f"{study}.json"), "--workers", str(args.workers)]
        if args.out:
            argv += ["--out", str(Path(args.out) / study)]
        print(f"== {study}", flush=True)
        code = wsac_main(argv)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
