#!/usr/bin/env python3
"""Run the three analytic simulations and write their CSVs.

Produces growth.csv, retrieval.csv, and decomposition.csv under --out,
then prints the headline numbers each one supports.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from toolevo.cli import main as cli_main
from toolevo.theory_sim import (
    GrowthParams,
    growth_equilibrium,
    growth_rate_constant,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/theory",
                        help="directory for the CSV files")
    parser.add_argument("--samples", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    worked = GrowthParams(lambda_g=10.0, lambda_p=0.1, k_cap=500.0)
    horizon = 20.0 / growth_rate_constant(worked)
    code = cli_main(["sim", "growth",
                     "--lambda-g", "10.0", "--lambda-p", "0.1",
                     "--k-cap", "500.0", "--l0", "0.0",
                     "--horizon", str(horizon), "--dt", "0.01",
                     "--out", str(out / "growth.csv")])
    if code:
        return code
    print(f"growth: L* = {growth_equilibrium(worked):.6f}, "
          f"B = {growth_rate_constant(worked):.6f}, "
          f"horizon = {horizon:.2f} -> {out / 'growth.csv'}")

    code = cli_main(["sim", "retrieval",
                     "--samples", str(args.samples),
                     "--seed", str(args.seed),
                     "--out", str(out / "retrieval.csv")])
    if code:
        return code
    print(f"retrieval: success vs library size -> {out / 'retrieval.csv'}")

    code = cli_main(["sim", "decomposition",
                     "--samples", str(args.samples),
                     "--seed", str(args.seed),
                     "--out", str(out / "decomposition.csv")])
    if code:
        return code
    print(f"decomposition: gain estimate -> {out / 'decomposition.csv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
