"""Finite-B and large-B potential curves for BSC(0.1) at several rates, as CSV."""

import argparse

import numpy as np

from sscodes.channel import bsc
from sscodes.effective_noise import NoiseContext
from sscodes.potential import large_B_curve, potential_curve, write_csv
from sscodes.state_evolution import SectionPrior


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.2, 0.26, 0.28, 0.4])
    ap.add_argument("--B", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--points", type=int, default=201)
    ap.add_argument("--out", default="potential_curves.csv")
    a = ap.parse_args()
    ch = bsc(0.1)
    grid = np.linspace(0, 1, a.points)
    rows = []
    for R in a.rates:
        ctx = NoiseContext(ch, R)
        curves = [(str(B), potential_curve(ctx, SectionPrior(B), grid)) for B in a.B]
        curves.append(("inf", large_B_curve(ctx, grid)))
        for label, c in curves:
            rows += [(R, label, e, v) for e, v in zip(c.E_grid, c.values)]
            print(f"R={R:<6} B={label:<4} local minima at E={[round(float(grid[i]), 4) for i in c.local_minima()]}")
    write_csv(a.out, ["R", "B", "E", "potential"], rows)


if __name__ == "__main__":
    main()
