"""Command-line entry point: ``run`` one scenario or ``sweep`` a (w, s) grid."""

import argparse
import logging
import os
import sys

from .exceptions import ScenarioError
from .scenario import MODES, load_scenario
from .simulation import run, sweep, write_outputs, write_sweep_table


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _parser():
    p = argparse.ArgumentParser(prog="wfmpc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: scenario output_dir or ./out/<name>)")
    r.add_argument("--seed", type=int, help="override the wind and frequency seeds")
    r.add_argument("--mode", choices=MODES)

    s = sub.add_parser("sweep", help="run a grid of penalty factors")
    s.add_argument("config")
    s.add_argument("--w", type=_floats, required=True, help="comma-separated w values")
    s.add_argument("--s", type=_floats, required=True, help="comma-separated s values")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-normalize", action="store_true")
    return p


def _out_dir(args, cfg):
    return args.out or cfg.output_dir or os.path.join("out", cfg.name)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_scenario(args.config)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = cfg.replace(wind__seed=args.seed, frequency__seed=args.seed)

    if args.command == "run":
        if args.mode:
            cfg = cfg.replace(mpc__mode=args.mode)
        bundle = run(cfg)
        out = _out_dir(args, cfg)
        write_outputs(bundle, out)
        rep = bundle.report
        if rep is not None:
            print(f"{cfg.name}: rms_error={rep.rms_error:.6g} W dF={rep.dF:.6g} N"
                  f" eF={rep.eF:.6g} N -> {out}")
        if bundle.aborted:
            print(f"aborted after {bundle.solver_failures} solver failures", file=sys.stderr)
            return 1
        return 0

    grid = [(w, s) for w in args.w for s in args.s]
    normalize = not args.no_normalize
    try:
        rows, results = sweep(cfg, grid, normalize=normalize)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    write_sweep_table(rows, os.path.join(out, "sweep.csv"))
    for (w, s), bundle in results.items():
        write_outputs(bundle, os.path.join(out, f"w{w:g}_s{s:g}"))
    cols = list(rows[0])
    print(",".join(cols))
    for row in rows:
        print(",".join(f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                       for c in cols))
    return 1 if any(row["aborted"] for row in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
