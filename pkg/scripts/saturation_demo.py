"""Coupled versus underlying state evolution on BSC(0.1), B = 2, at a rate between R_u and R_pot."""

import argparse

import numpy as np

from sscodes.channel import bsc
from sscodes.coupled import CouplingSpec, coupled_fixed_point, front_position
from sscodes.effective_noise import NoiseContext
from sscodes.potential import write_csv
from sscodes.state_evolution import SectionPrior, se_fixed_point


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--R", type=float, default=0.26)
    ap.add_argument("--Gamma", type=int, default=64)
    ap.add_argument("--w", type=int, default=3)
    ap.add_argument("--every", type=int, default=10, help="keep one profile per this many iterations")
    ap.add_argument("--out", default="saturation_profiles.csv")
    a = ap.parse_args()
    ctx, prior = NoiseContext(bsc(0.1), a.R), SectionPrior(2)
    spec = CouplingSpec(a.Gamma, a.w, a.R)
    print(f"underlying SE from E=1 stalls at {se_fixed_point(ctx, prior, 1.0).E:.5f}")
    fp = coupled_fixed_point(spec, ctx, prior, max_iter=50_000, record=True)
    hist = fp.history[:: a.every] + [fp.history[-1]]
    for t, E in zip(range(0, len(fp.history), a.every), hist):
        if t % (2 * a.every) == 0:
            print(f"t={t:<6} front at block {front_position(E, 0.05):6.2f}  max E {np.max(E):.4f}")
    print(f"coupled fixed point after {fp.iterations} iterations: max E = {np.max(fp.profile):.2e}")
    rows = [(i * a.every, r, e) for i, E in enumerate(hist) for r, e in enumerate(E)]
    write_csv(a.out, ["t", "block", "E"], rows)


if __name__ == "__main__":
    main()
