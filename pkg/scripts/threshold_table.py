"""R_u < R_pot < C for B = 2, 4 on the threshold channels, plus the large-B limits."""

import argparse
import time

from sscodes.channel import bec, bsc, capacity_closed_form, z_channel
from sscodes.potential import r_u_infinity, threshold_potential, write_csv
from sscodes.state_evolution import SectionPrior, threshold_gamp_u


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--B", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--rate-tol", type=float, default=1e-3)
    ap.add_argument("--out", default="thresholds.csv")
    a = ap.parse_args()
    rows = []
    for name, ch in (("bsc(0.1)", bsc(0.1)), ("bec(0.5)", bec(0.5)), ("z(0.1)", z_channel(0.1))):
        C = capacity_closed_form(ch)
        for B in a.B:
            t0 = time.perf_counter()
            prior = SectionPrior(B)
            R_u = threshold_gamp_u(ch, prior, 0.1, C, a.rate_tol)
            R_pot = threshold_potential(ch, prior, R_u, C, a.rate_tol)
            rows.append((name, B, R_u, R_pot, C))
            print(f"{name:<9} B={B}  R_u={R_u:.4f}  R_pot={R_pot:.4f}  C={C:.4f}  ({time.perf_counter() - t0:.0f}s)")
        rows.append((name, "inf", r_u_infinity(ch), C, C))
    write_csv(a.out, ["channel", "B", "R_u", "R_pot", "C"], rows)


if __name__ == "__main__":
    main()
