"""Residual decay of the pi/20 minimizers under mesh doubling."""

import argparse

from fourbody.action import polyline_action
from fourbody.extension import BLOCK, c1_junction_check, energy_drift, extend, newton_residual
from fourbody.geometry import RotationAngle, Variant
from fourbody.minimizer import MinimizeOptions, descend, first_variation_residual, minimize, newton_polish, prolong


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", default="1/20pi")
    ap.add_argument("--levels", type=int, nargs="+", default=[40, 80, 160, 320])
    args = ap.parse_args()
    theta = RotationAngle.parse(args.theta)
    opts = MinimizeOptions(restarts=1)
    for variant in Variant:
        print(f"{variant.value} at {theta}")
        print(f"{'N':>5} {'action':>14} {'residual':>10} {'C1 jump':>10} {'Newton rms':>10} {'K-U drift':>10}")
        path, prev = None, None
        for n in args.levels:
            if path is None:
                path = minimize(variant, theta, n, opts).path
            else:
                path, *_ = descend(prolong(path, n), opts)
                path = newton_polish(path, opts)
            window = (0, BLOCK[variant])
            jump = c1_junction_check(extend(path.polyline(), variant, theta, window)).max_jump
            traj = extend(path.polyline(), variant, theta, window, samples_per_unit=n)
            row = (first_variation_residual(path).max, jump, newton_residual(traj).rms, energy_drift(traj))
            line = f"{n:>5} {polyline_action(path.polyline()).total:>14.10f} " + " ".join(f"{v:>10.3e}" for v in row)
            if prev is not None:
                line += "   ratios " + " ".join(f"{a / b:.2f}" for a, b in zip(prev, row))
            print(line)
            prev = row


if __name__ == "__main__":
    main()
