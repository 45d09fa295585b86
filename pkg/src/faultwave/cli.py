"""Batch command-line interface.

Subcommands:

* ``simulate <config>``: run a configured rupture scenario.
* ``verify-operators``: build and check every shipped operator family/order.
* ``dispersion <family> <order>``: write the symbol/dispersion CSV.
* ``mms <config>``: run a manufactured-solution refinement study.

Exit codes: 0 success, 2 configuration problems, 3 runtime divergence,
4 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as cfgmod
from . import dispersion, driver, operators, scenarios
from .elastic import StateDivergedError


def _add_common(parser):
    parser.add_argument("--output-dir", default=None,
                        help="directory for output files")
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for compatibility; execution is "
                             "deterministic single-process")
    parser.add_argument("--snapshot-stride", type=int, default=None,
                        help="override the configured snapshot stride")


def _cmd_simulate(args) -> int:
    cfg = cfgmod.load(args.config)
    if args.snapshot_stride is not None:
        cfg.snapshot_stride = args.snapshot_stride
    result = driver.run(cfg, output_dir=args.output_dir)
    s = result.summary
    print(f"steps {s['steps']}  dt {s['dt']:.6g} s")
    print(f"max slip rate {s['max_slip_rate_mps']:.6g} m/s")
    print(f"final max slip {s['final_max_slip_m']:.6g} m")
    print(f"outputs in {result.output_dir}")
    return 0


def _cmd_verify(args) -> int:
    failures = 0
    table = []
    for order in (2, 4, 6):
        table.append(("traditional", order,
                      operators.build_traditional(order, 48)))
    for order in (4, 5, 6, 7):
        table.append(("dp_upwind", order, operators.build_dp_upwind(order, 48)))
    for order in (4, 5, 6, 7):
        table.append(("drp", order, operators.build_drp(order, 0.05, 48)))
    for family, order, ops in table:
        rep = operators.verify_operator(ops)
        status = "ok" if rep.verified else "FAILED"
        print(f"{family:12s} order {order}: {status}  "
              f"sbp {rep.sbp_residual:.2e}  eig+ {rep.s_plus_max_eig:+.2e}  "
              f"eig- {rep.s_minus_min_eig:+.2e}  "
              f"acc {max(rep.accuracy_residuals.values()):.2e}")
        failures += not rep.verified
    return 4 if failures else 0


def _cmd_dispersion(args) -> int:
    if args.family == "traditional":
        ops = operators.build_traditional(args.order, 48)
    elif args.family == "dp_upwind":
        ops = operators.build_dp_upwind(args.order, 48)
    elif args.family == "drp":
        ops = operators.build_drp(args.order, args.alpha_tol, 48)
    else:
        print(f"unknown family {args.family!r}", file=sys.stderr)
        return 2
    out_dir = args.output_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"dispersion_{args.family}_{args.order}.csv")
    dispersion.write_symbol_csv(ops, path)
    errs = dispersion.dispersion_errors(ops)
    print(f"{args.family} order {args.order}: "
          f"l2 {100 * errs['l2_relative']:.2f}%  "
          f"max {100 * errs['max_relative']:.2f}%")
    print(f"wrote {path}")
    return 0


def _cmd_mms(args) -> int:
    import configparser
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(args.config)
    if "mms" not in parser:
        print("config needs an [mms] section", file=sys.stderr)
        return 2
    sec = parser["mms"]
    order = sec.getint("order", 4)
    family = sec.get("family", "traditional")
    alpha = sec.getfloat("alpha", 4.0)
    end_time = sec.getfloat("end_time", 0.3)
    sizes = [int(v) for v in sec.get("cells", "8 16 32").split()]
    rows = scenarios.convergence_table(order, sizes, alpha=alpha,
                                       family=family, end_time=end_time)
    out_dir = args.output_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"mms_{family}_{order}.csv")
    with open(path, "w") as fh:
        fh.write("h,error,rate\n")
        for h, e, r in rows:
            fh.write(f"{h:.17g},{e:.17g},{r:.17g}\n")
    for h, e, r in rows:
        print(f"h {h:.5f}  error {e:.4e}  rate {r:.2f}")
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="faultwave",
        description="dual-pairing finite differences for dynamic rupture")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configured scenario")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify-operators", help="check all operator families")
    _add_common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("dispersion", help="dispersion CSV for one operator")
    p.add_argument("family", choices=["traditional", "dp_upwind", "drp"])
    p.add_argument("order", type=int)
    p.add_argument("--alpha-tol", type=float, default=0.05)
    _add_common(p)
    p.set_defaults(func=_cmd_dispersion)

    p = sub.add_parser("mms", help="manufactured-solution refinement study")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(func=_cmd_mms)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"missing file: {err}", file=sys.stderr)
        return 2
    except StateDivergedError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
