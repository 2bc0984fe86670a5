"""|F_c(S(E)) - F_c(E)| for saturated stalled profiles as the window w grows (Gamma = 16 w)."""

import argparse

from sscodes.channel import bsc
from sscodes.coupled import CouplingSpec, coupled_fixed_point, potential_c, saturate_profile, shift, threshold_gamp_c
from sscodes.effective_noise import NoiseContext
from sscodes.potential import write_csv
from sscodes.state_evolution import SectionPrior, mse_floor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--w", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--dR", type=float, default=4e-4)
    ap.add_argument("--out", default="shift_scaling.csv")
    a = ap.parse_args()
    ch, prior = bsc(0.1), SectionPrior(2)
    rows = []
    for w in a.w:
        Gamma = 16 * w
        R_c = threshold_gamp_c(ch, prior, Gamma, w, 0.24, 0.30, 2e-4, max_iter=20_000)
        R = R_c + a.dR
        spec, ctx = CouplingSpec(Gamma, w, R), NoiseContext(ch, R)
        E0 = mse_floor(ctx, prior).E
        fp = coupled_fixed_point(spec, ctx, prior, max_iter=20_000)
        sat = saturate_profile(fp.profile, E0, spec.pin_mask, atol=1e-9)
        d = abs(potential_c(spec, ctx, prior, shift(sat, E0)) - potential_c(spec, ctx, prior, sat))
        rows.append((w, Gamma, R_c, d, d * w))
        print(f"w={w}  R_c={R_c:.4f}  |dF_c|={d:.5f}  w*|dF_c|={d * w:.5f}")
    write_csv(a.out, ["w", "Gamma", "R_c", "abs_shift_difference", "times_w"], rows)


if __name__ == "__main__":
    main()
