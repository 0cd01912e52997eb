"""Command line interface: ``rumatch invert|export|bench``."""

import argparse
import csv
import json
import sys

import numpy as np

from . import bench
from .auction import EpsilonSchedule, invert_auction
from .blp import SmoothingParams, blp_contraction
from .exceptions import (ConfigurationError, NonConvergenceError, PreconditionError,
                         UnsupportedOperationError)
from .lp import export_bounds_lp, export_combined_lp, export_dual_lp, save_lp, write_lp
from .market import dump_sample_csv, load_market
from .models import transferable_shocks
from .msa import MsaParams, msa_lower, msa_upper, write_trace_csv

EXIT_ERROR = 1
EXIT_NONCONVERGENCE = 2


def _emit(doc):
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _write_allocation(path, allocation):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["consumer", "jar", "brand"])
        for i, (jar, brand) in enumerate(zip(allocation.jar_of_consumer, allocation.brand_of_consumer)):
            writer.writerow([i, int(jar), int(brand)])


def cmd_invert(args):
    market = load_market(args.market)
    if args.dump_sample:
        dump_sample_csv(market.sample, args.dump_sample)
    model = market.model
    if args.algorithm == "msa":
        params = MsaParams(args.eta_init, args.eta_tol, args.max_outer)
        up = msa_upper(model, market, params, record_trace=bool(args.trace))
        out = {"algorithm": "msa"}
        if args.bound in ("upper", "both"):
            out["delta_upper"] = up.delta.tolist()
            out["step_upper"] = up.step
        if args.bound in ("lower", "both"):
            lo = msa_lower(model, market, up.delta, params, record_trace=bool(args.trace))
            out["delta_lower"] = lo.delta.tolist()
            out["step_lower"] = lo.step
            if args.trace:
                up.trace.extend(lo.trace)
        if args.trace:
            write_trace_csv(up, args.trace)
        _emit(out)
        return 0
    shocks = transferable_shocks(model, market.sample)
    if args.algorithm == "auction":
        default = EpsilonSchedule.default(shocks)
        final = args.eps_final if args.eps_final is not None else default.final
        schedule = EpsilonSchedule(max(default.start, final), default.factor, final)
        res = invert_auction(shocks, market.counts, schedule, args.gap_threshold)
        out = res.to_dict() if args.bounds else {"delta_point": res.delta_point.tolist()}
        out["algorithm"] = "auction"
        if args.allocation:
            _write_allocation(args.allocation, res.allocation)
        _emit(out)
        return 0
    res = blp_contraction(shocks, market.shares, SmoothingParams(args.lam, args.tol, args.max_iters))
    _emit({"algorithm": "blp", "delta": res.delta.tolist(), "iterations": res.iterations,
           "residual": res.residual})
    return 0


def cmd_export(args):
    markets = [load_market(p) for p in args.market]
    if args.kind != "combined-lp" and len(markets) != 1:
        raise ConfigurationError(f"'{args.kind}' takes exactly one --market")
    shocks = [transferable_shocks(m.model, m.sample) for m in markets]
    if args.kind == "lp":
        doc = export_dual_lp(markets[0], shocks[0])
    elif args.kind == "bounds-lp":
        doc = export_bounds_lp(markets[0], shocks[0], args.direction)
    else:
        doc = export_combined_lp(markets, shocks)
    if args.output in (None, "-"):
        sys.stdout.write(write_lp(doc))
    else:
        save_lp(doc, args.output)
    return 0


def _spec_from_args(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    doc["experiment"] = args.experiment
    for key, value in (("n", args.n), ("reps", args.reps), ("seed", args.seed), ("brands", args.brands),
                       ("eta_tol", args.eta_tol), ("eps_final", args.eps_final)):
        if value is not None:
            doc[key] = value
    if args.algos:
        doc["algorithms"] = [a.strip() for a in args.algos.split(",") if a.strip()]
    elif args.experiment == "table4" and "algorithms" not in doc:
        doc["algorithms"] = ["auction"]
    if args.lambdas:
        doc["blp_lambdas"] = [float(v) for v in args.lambdas.split(",")]
    doc.setdefault("n", {"table3": 1000, "table4": 5000, "table2-inner": 1000}.get(args.experiment, 1000))
    return bench.ExperimentSpec.from_dict(doc)


def cmd_bench(args):
    spec = _spec_from_args(args)
    table = bench.run_experiment(spec, workers=args.workers)
    text = bench.render_csv(table, args.out, deterministic=args.deterministic)
    if args.out is None:
        sys.stdout.write(text)
    if args.figures:
        from .plotting import render_figures

        for path in render_figures(table, args.figures):
            print(f"wrote {path}", file=sys.stderr)
    if table.total_failures:
        detail = ", ".join(f"{k}: {v}/{spec.reps}" for k, v in table.failures.items() if v)
        print(f"non-converged replications: {detail}", file=sys.stderr)
        if args.strict:
            return EXIT_NONCONVERGENCE
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rumatch", description="Demand inversion through matching markets.")
    sub = parser.add_subparsers(dest="command", required=True)

    inv = sub.add_parser("invert", help="invert the shares of one market")
    inv.add_argument("algorithm", choices=["msa", "auction", "blp"])
    inv.add_argument("--market", required=True, help="market JSON {shares, N, seed, model}")
    inv.add_argument("--dump-sample", metavar="CSV", help="also write the consumer draws")
    inv.add_argument("--eta-init", type=float, default=1.0)
    inv.add_argument("--eta-tol", type=float, default=1e-4)
    inv.add_argument("--max-outer", type=int, default=1000)
    inv.add_argument("--bound", choices=["upper", "lower", "both"], default="both")
    inv.add_argument("--trace", metavar="CSV", help="MSA convergence trace")
    inv.add_argument("--bounds", action="store_true", help="auction: report lattice bounds too")
    inv.add_argument("--eps-final", type=float, default=None)
    inv.add_argument("--gap-threshold", type=float, default=0.05)
    inv.add_argument("--allocation", metavar="CSV", help="auction: write the final allocation")
    inv.add_argument("--lambda", dest="lam", type=float, default=1.0)
    inv.add_argument("--tol", type=float, default=1e-12)
    inv.add_argument("--max-iters", type=int, default=5000)
    inv.set_defaults(func=cmd_invert)

    exp = sub.add_parser("export", help="write an LP file")
    exp.add_argument("kind", choices=["lp", "bounds-lp", "combined-lp"])
    exp.add_argument("--market", action="append", required=True)
    exp.add_argument("--direction", choices=["max", "min"], default="max")
    exp.add_argument("-o", "--output")
    exp.set_defaults(func=cmd_export)

    ben = sub.add_parser("bench", help="replicated simulation experiments")
    ben.add_argument("experiment", choices=list(bench.EXPERIMENTS))
    ben.add_argument("--n", type=int, help="consumers (draws for table2-inner)")
    ben.add_argument("--reps", type=int)
    ben.add_argument("--seed", type=int)
    ben.add_argument("--brands", type=int, help="table2-inner: alternatives including the outside good")
    ben.add_argument("--algos", help="comma separated subset of msa,auction,blp")
    ben.add_argument("--lambdas", help="comma separated BLP smoothing temperatures")
    ben.add_argument("--eta-tol", type=float)
    ben.add_argument("--eps-final", type=float)
    ben.add_argument("--config", help="JSON experiment spec; flags override its fields")
    ben.add_argument("--out", help="CSV path (stdout if omitted)")
    ben.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR")
    ben.add_argument("--workers", type=int, default=1)
    ben.add_argument("--deterministic", action="store_true", help="leave runtime_s empty")
    ben.add_argument("--strict", action="store_true", help="exit 2 if any replication did not converge")
    ben.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        last = exc.last_iterate
        doc = {"error": str(exc), "diagnostics": exc.diagnostics}
        if last is not None:
            doc["last_iterate"] = np.asarray(last).tolist()
        print(json.dumps(doc), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (PreconditionError, ConfigurationError, UnsupportedOperationError, OSError) as exc:
        print(f"rumatch: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
