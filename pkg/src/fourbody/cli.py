"""Command-line entry point: certify, minimize, extend, tables.

Exit codes: 0 success, 1 analytic failure (certificate fails, all restarts
collapse, endpoint collision), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

from .bounds import THETA_MAX, g_for
from .errors import AllRestartsCollapsed, EndpointCollision, OutOfRange
from .extension import c1_junction_check, classify_period, energy_drift, extend, newton_residual
from .geometry import RotationAngle, Variant
from .minimizer import DiscretePath, MinimizeOptions, minimize
from .testpaths import COLUMNS, TABLE_IDS, certificate_sweep, certified_range, get_table

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _angle(text):
    try:
        return RotationAngle.parse(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected <p>/<q>pi, got {text!r}")


def _variant(text):
    try:
        return Variant.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError("variant must be e1 or e2")


def _write(path, text):
    Path(path).write_text(text)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _theta_from_args(args, required=True):
    if args.theta is not None and args.theta_real is not None:
        raise UsageError("use either --theta or --theta-real")
    if args.theta_real is not None:
        return RotationAngle.irrational(args.theta_real)
    if args.theta is None and required:
        raise UsageError("--theta is required")
    return args.theta


def cmd_certify(args):
    variant = args.variant
    lo_c, hi_c = certified_range(variant)
    lo = args.theta_min.frac if args.theta_min is not None else lo_c
    hi = args.theta_max.frac if args.theta_max is not None else hi_c
    if lo < lo_c or hi > hi_c or hi <= lo:
        raise UsageError(f"range ({lo}pi, {hi}pi] is outside the certified range ({lo_c}pi, {hi_c}pi]")
    report = certificate_sweep(variant, args.step.frac, (lo, hi))
    data = report.to_json()
    out = args.out or f"certificate-{variant.value.lower()}.{args.format}"
    if args.format == "json":
        _write(out, _dump_json(data))
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta_over_pi", "table", "a_test", "g", "margin"])
        for r in report.records:
            w.writerow([f"{float(r.theta)!r}", r.table, repr(r.a_test), repr(r.g), repr(r.margin)])
        _write(out, buf.getvalue())
    print(f"variant {variant.value}: {len(report.records)} evaluations over ({lo}pi, {hi}pi]")
    print(f"tables used: {', '.join(data['tables'])}")
    print(f"min margin {report.min_margin:.6g} at theta = {report.min_margin_theta}pi")
    print("certificate " + ("PASSES" if report.overall_pass else "FAILS"))
    return EXIT_OK if report.overall_pass else EXIT_FAIL


def cmd_minimize(args):
    theta = _theta_from_args(args)
    opts = MinimizeOptions(restarts=args.restarts, seed=args.seed, max_iterations=args.max_iter,
                           workers=args.workers)
    status = EXIT_OK
    try:
        result = minimize(args.variant, theta, args.segments, opts)
    except AllRestartsCollapsed as exc:
        result, status = exc.result, EXIT_FAIL
        print(f"all restarts collapsed: {exc}", file=sys.stderr)
    except OutOfRange as exc:
        raise UsageError(str(exc))
    out = args.out or f"path-{args.variant.value.lower()}.json"
    _write(out, _dump_json(result.to_json()))
    print(f"action {result.action:.12g}")
    if theta.radians <= THETA_MAX:
        g = g_for(args.variant)(theta.radians)
        print(f"collision bound g({theta}) = {g:.12g}, margin {g - result.action:.6g}")
    print(f"min pair distance {result.min_pair_distance:.6g}")
    if result.residuals is not None:
        print(f"first-variation residuals: start {result.residuals.start:.3e}, end {result.residuals.end:.3e}")
    return status


def cmd_extend(args):
    data = json.loads(Path(args.path).read_text())
    path = DiscretePath.from_json(data)
    theta = path.theta
    if args.theta_real is not None:
        theta = RotationAngle.irrational(args.theta_real)
    window = tuple(args.window) if args.window else None
    try:
        traj = extend(path.polyline(), path.variant, theta, window, args.samples_per_unit)
    except EndpointCollision as exc:
        print(f"cannot extend: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = args.out or f"trajectory-{path.variant.value.lower()}.csv"
    _write(out, traj.to_csv())
    c1 = c1_junction_check(traj)
    print(f"classification {classify_period(path.variant, theta)}")
    print(f"window [{traj.times[0]:g}, {traj.times[-1]:g}], {len(traj.times)} samples")
    print("C1 junction jumps: " + ", ".join(f"t={t:g}: {v:.3e}" for t, v in c1.jumps.items()))
    if args.samples_per_unit == path.N:
        nr = newton_residual(traj)
        print(f"Newton residual max {nr.max:.3e}, rms {nr.rms:.3e}; K - U spread {energy_drift(traj):.3e}")
    return EXIT_OK


def cmd_tables(args):
    if args.list:
        for v in Variant:
            for tid in TABLE_IDS[v]:
                t = get_table(tid)
                lo, hi = t.interval
                opening = "(" if lo == 0 else "["
                print(f"{tid}\t{v.value}\ttheta0={t.theta0}\tinterval={opening}{lo}pi, {hi}pi]\trepairs={len(t.repairs)}")
        return EXIT_OK
    if not args.dump:
        raise UsageError("tables needs --list or --dump <id>")
    try:
        t = get_table(args.dump)
    except KeyError as exc:
        raise UsageError(str(exc))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t",) + COLUMNS)
    for time, raw, q in zip(t.times, t.raw, t.nodes_q123):
        row = list(raw) if args.raw else [repr(float(v)) for v in q.ravel()]
        w.writerow([f"{time:g}"] + row)
    text = buf.getvalue()
    if args.raw:
        text += "".join(f"# repair t={r['t']} {r['column']}: {r['raw']} -> {r['repaired']} ({r['rule']})\n"
                        for r in t.repairs)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="fourbody", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, theta=True):
        p.add_argument("--variant", type=_variant, default=Variant.E1, help="e1 or e2")
        if theta:
            p.add_argument("--theta", type=_angle, help="rotation angle as <p>/<q>pi")
            p.add_argument("--theta-real", type=float, help="angle in radians, treated as irrational")
        p.add_argument("--out", help="output file")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("certify", help="sweep A_test(theta) < g(theta)")
    common(p, theta=False)
    p.add_argument("--step", type=_angle, default=RotationAngle(Fraction(1, 10000)))
    p.add_argument("--theta-min", type=_angle)
    p.add_argument("--theta-max", type=_angle)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("minimize", help="minimize the discrete action")
    common(p)
    p.add_argument("--segments", type=int, default=40)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--max-iter", type=int, default=50000)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("extend", help="extend a minimizer to a periodic or quasi-periodic orbit")
    p.add_argument("--path", required=True, help="path JSON written by minimize")
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--samples-per-unit", type=int, default=100)
    p.add_argument("--theta-real", type=float, help="override the angle as an irrational value")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("tables", help="list or dump the test-path tables")
    p.add_argument("--list", action="store_true")
    p.add_argument("--dump", metavar="ID")
    p.add_argument("--raw", action="store_true", help="print the literals before repair")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tables)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
