"""Minimize one variant at a given angle and export the extended orbit as CSV."""

import argparse
import json
from pathlib import Path

from fourbody.bounds import g_for
from fourbody.extension import c1_junction_check, extend, newton_residual
from fourbody.geometry import RotationAngle
from fourbody.minimizer import MinimizeOptions, minimize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variant", default="E1")
    ap.add_argument("--theta", default="1/20pi")
    ap.add_argument("--segments", type=int, default=80)
    ap.add_argument("--restarts", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args()
    theta = RotationAngle.parse(args.theta)
    result = minimize(args.variant, theta, args.segments, MinimizeOptions(restarts=args.restarts, seed=args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"{args.variant.lower()}-{args.segments}"
    (out / f"path-{tag}.json").write_text(json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n")
    g = g_for(args.variant)(theta.radians)
    print(f"action {result.action:.10f}, bound {g:.10f}, min pair distance {result.min_pair_distance:.4f}")
    traj = extend(result.path.polyline(), args.variant, theta, samples_per_unit=args.segments)
    (out / f"orbit-{tag}.csv").write_text(traj.to_csv())
    print(f"{traj.period}: C1 max jump {c1_junction_check(traj).max_jump:.3e}, "
          f"Newton rms {newton_residual(traj).rms:.3e}")


if __name__ == "__main__":
    main()
