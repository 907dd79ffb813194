"""Write g(theta), A_test(theta) and the margin for both variants as CSV plot data."""

import argparse
import csv
from fractions import Fraction
from pathlib import Path

from fourbody.testpaths import certificate_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=".")
    ap.add_argument("--step", type=Fraction, default=Fraction(1, 10000), help="grid step as a multiple of pi")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for variant in ("E1", "E2"):
        report = certificate_sweep(variant, args.step)
        target = out / f"curves-{variant.lower()}.csv"
        with target.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta_over_pi", "table", "a_test", "g", "margin"])
            for r in report.records:
                w.writerow([float(r.theta), r.table, r.a_test, r.g, r.margin])
        print(f"{variant}: min margin {report.min_margin:.6e} at {report.min_margin_theta}pi -> {target}")


if __name__ == "__main__":
    main()
