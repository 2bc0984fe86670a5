"""Empirical GAMP MSE against the state-evolution trajectory, B = 8 over AWGN."""

import argparse

from sscodes.channel import AWGN
from sscodes.codec import se_tracking
from sscodes.potential import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, default=10.0)
    ap.add_argument("--B", type=int, default=8)
    ap.add_argument("--R", type=float, default=1.1)
    ap.add_argument("--L", type=int, default=1024)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--t-max", type=int, default=15)
    ap.add_argument("--out", default="gamp_tracking.csv")
    a = ap.parse_args()
    res = se_tracking(AWGN(a.snr), a.B, a.R, a.L, range(a.seeds), a.t_max)
    for t in range(a.t_max + 1):
        print(f"t={t:<3} SE {res.se[t]:.4f}  GAMP {res.mean[t]:.4f} +- {res.std[t]:.4f}")
    print(f"status: {res.status}")
    write_csv(a.out, res.header(), res.rows)


if __name__ == "__main__":
    main()
