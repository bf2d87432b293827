"""Write the CSV data behind every figure into one directory.

    python scripts/make_figures.py --out results/figures [--quick]
"""
from __future__ import annotations

import argparse
from pathlib import Path

from sapcode import harness


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/figures"))
    ap.add_argument("--quick", action="store_true", help="1000 noise draws for fig6 instead of 10^4")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in harness.FIGURE_DEFAULTS:
        overrides = {"trials": 1000} if args.quick and name == "fig6" else {}
        path = harness.figure_command(name, args.out / f"{name}.csv", overrides)
        _, rows = harness.read_csv(path)
        print(f"{name}: {len(rows)} rows -> {path}")


if __name__ == "__main__":
    main()
