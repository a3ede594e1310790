"""Command-line front end: ``gen``, ``solve`` and ``bench``."""

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .errors import AltSddipError, ConfigError
from .extform import DEFAULT_CAP, solve_extensive_form
from .instances import generate_gep, generate_smkp, read_model, write_model
from .mip import MipLimits
from .model import binarize_state
from .nested import NestedConfig, run_nested_benders
from .sddip import (
    SddipConfig,
    estimate_gap,
    run,
    summarize,
    write_iterations_csv,
    write_summary_csv,
)

log = logging.getLogger("altsddip")

EXIT_OK, EXIT_ERROR, EXIT_LIMIT = 0, 1, 2
LIMIT = ">limit"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    p = _Parser(prog="altsddip", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate an instance file")
    gsub = gen.add_subparsers(dest="problem", required=True, parser_class=_Parser)
    sm = gsub.add_parser("smkp", help="stochastic multi-knapsack")
    sm.add_argument("--T", type=int, required=True)
    sm.add_argument("--rows", type=int, required=True)
    sm.add_argument("--cols", type=int, required=True)
    sm.add_argument("--scens", type=int, required=True)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", required=True)
    ge = gsub.add_parser("gep", help="generation expansion planning")
    ge.add_argument("--T", type=int, default=10)
    ge.add_argument("--scens", type=int, default=3)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--G", type=int, nargs="+", default=None,
                    help="per-type unit caps (one value applies to all types)")
    ge.add_argument("--binarize", action="store_true",
                    help="write the base-2 expanded (binary-state) model")
    ge.add_argument("--out", required=True)

    so = sub.add_parser("solve", help="solve an instance file")
    so.add_argument("instance")
    so.add_argument("--algo", choices=["sddip", "nested", "extform"], default="sddip")
    so.add_argument("--cut", choices=["I", "L"], default=None)
    so.add_argument("--backward", choices=["default", "alternating"], default=None)
    so.add_argument("--M", type=int, default=None)
    so.add_argument("--alpha", type=float, default=None)
    so.add_argument("--gamma", type=float, default=None)
    so.add_argument("--delta", type=float, default=None)
    so.add_argument("--seed", type=int, default=None)
    so.add_argument("--gap", type=float, default=None, help="nested: relative gap threshold")
    so.add_argument("--time-limit", type=float, default=None)
    so.add_argument("--iteration-limit", type=int, default=None)
    so.add_argument("--node-limit", type=int, default=20_000, help="per-MILP node budget")
    so.add_argument("--binarize", action="store_true",
                    help="expand integer state into binaries before solving")
    so.add_argument("--no-timing", action="store_true",
                    help="omit wall-clock columns (byte-reproducible output)")
    so.add_argument("--out", required=True)

    be = sub.add_parser("bench", help="run an experiment grid")
    be.add_argument("grid", help="experiment JSON file")
    be.add_argument("--out", required=True)
    be.add_argument("--jobs", type=int, default=1)
    be.add_argument("--no-timing", action="store_true")
    return p


# -------------------------------------------------------------------- gen
def cmd_gen(args):
    if args.problem == "smkp":
        model = generate_smkp(args.T, args.rows, args.cols, args.scens, args.seed)
    else:
        G = None
        if args.G is not None:
            G = args.G[0] if len(args.G) == 1 else args.G
        model = generate_gep(args.T, args.scens, args.seed, G=G)
        if args.binarize:
            model = binarize_state(model)
    write_model(model, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ solve
_SDDIP_ONLY = ("M", "alpha", "gamma", "delta", "seed")
_DECOMP_ONLY = ("cut", "backward", "iteration_limit")


def _check_flags(args):
    given = lambda name: getattr(args, name) is not None  # noqa: E731
    if args.algo != "sddip":
        bad = [n for n in _SDDIP_ONLY if given(n)]
        if bad:
            raise UsageError(f"--{bad[0]} only applies to --algo sddip")
    if args.algo == "extform":
        bad = [n for n in _DECOMP_ONLY if given(n)]
        if bad:
            raise UsageError(f"--{bad[0].replace('_', '-')} does not apply to --algo extform")
    if args.algo != "nested" and given("gap"):
        raise UsageError("--gap only applies to --algo nested")
    if given("M") and args.M < 2:
        raise UsageError("--M must be at least 2")


def _summary_path(out):
    root, ext = os.path.splitext(out)
    return f"{root}_summary{ext or '.csv'}"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _pick(v, default):
    return default if v is None else v


def solve_instance(model, algo, opts):
    """Run one solve; returns ``(summary dict, records)``."""
    limits = MipLimits(max_nodes=opts.get("node_limit", 20_000))
    if algo == "extform":
        sol = solve_extensive_form(model, DEFAULT_CAP, MipLimits(
            max_nodes=10 ** 9, time_limit=opts.get("time_limit")))
        status = "converged" if sol.optimal else ("time-limit" if sol.status == "hit-limit"
                                                 else sol.status)
        gap = 0.0 if sol.optimal else (
            100.0 * (sol.objective - sol.bound) / abs(sol.objective)
            if sol.objective not in (math.inf, 0.0) else math.inf)
        return {"status": status, "LB": sol.bound, "UB": sol.objective, "gap_pct": gap,
                "tight_prop": math.nan, "iterations": sol.node_count,
                "total_s": round(sol.info.get("seconds", 0.0), 3)}, []
    if algo == "nested":
        cfg = NestedConfig(cut_family=_pick(opts.get("cut"), "I"),
                           backward_mode=_pick(opts.get("backward"), "alternating"),
                           gap_threshold=_pick(opts.get("gap"), 0.01),
                           time_limit=opts.get("time_limit"),
                           iteration_limit=_pick(opts.get("iteration_limit"), 500),
                           mip_limits=limits)
        res = run_nested_benders(model, cfg)
        return {"status": res.status, "LB": res.LB, "UB": res.UB,
                "gap_pct": 100.0 * res.gap, "tight_prop": res.tight_prop,
                "iterations": res.iterations, "total_s": round(res.seconds, 3)}, res.records
    cfg = SddipConfig(M=_pick(opts.get("M"), 2), alpha=_pick(opts.get("alpha"), 0.10),
                      gamma=_pick(opts.get("gamma"), 0.10), delta=_pick(opts.get("delta"), 0.01),
                      cut_family=_pick(opts.get("cut"), "I"),
                      backward_mode=_pick(opts.get("backward"), "alternating"),
                      seed=_pick(opts.get("seed"), 0), time_limit=opts.get("time_limit"),
                      iteration_limit=_pick(opts.get("iteration_limit"), 1000),
                      mip_limits=limits)
    res = run(model, cfg)
    res.gap = estimate_gap(model, res.pools, res.LB, cfg)
    return summarize(res), res.records


def _prepare(model, cut, binarize):
    if binarize:
        return binarize_state(model)
    if cut == "I" and any(k != "binary" for tpl in model.templates for k in tpl.state_kind):
        raise UsageError("integer L-shaped cuts need binary state; pass --binarize")
    return model


def cmd_solve(args):
    _check_flags(args)
    model = read_model(args.instance)
    model = _prepare(model, _pick(args.cut, "I") if args.algo != "extform" else None,
                     args.binarize)
    opts = {k: getattr(args, k) for k in ("cut", "backward", "M", "alpha", "gamma", "delta",
                                          "seed", "gap", "time_limit", "iteration_limit",
                                          "node_limit")}
    summary, records = solve_instance(model, args.algo, opts)
    timing = not args.no_timing
    write_iterations_csv(records, args.out, timing=timing)
    write_summary_csv(summary, _summary_path(args.out), timing=timing)
    for k, v in summary.items():
        if timing or k != "total_s":
            print(f"{k}: {_fmt(v)}")
    if summary["status"] == "converged":
        return EXIT_OK
    return EXIT_LIMIT


# ------------------------------------------------------------------ bench
def _label(cfg):
    return f"{cfg.get('cut', 'I')}{'A' if cfg.get('backward', 'alternating') == 'alternating' else 'D'}"


def _run_cell(cell):
    """One (class, seed, config) solve; never raises."""
    cls, seed, cfg, common = cell
    try:
        problem = common.get("problem", "smkp")
        if problem == "smkp":
            model = generate_smkp(cls["T"], cls["rows"], cls["cols"], cls["scens"],
                                  seed + cls.get("instance_offset", 0))
        else:
            model = generate_gep(cls.get("T", 10), cls.get("scens", 3), seed)
            if common.get("binarize", True):
                model = binarize_state(model)
        opts = dict(common)
        opts.update(cfg)
        opts["seed"] = seed
        algo = opts.pop("algo", "sddip")
        if algo != "sddip":
            for k in _SDDIP_ONLY:
                opts.pop(k, None)
        summary, _ = solve_instance(model, algo, opts)
        return summary, None
    except (AltSddipError, UsageError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _mean(vals):
    vals = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return sum(vals) / len(vals) if vals else math.nan


def cmd_bench(args):
    try:
        with open(args.grid) as fh:
            grid = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read grid file: {exc}") from None
    classes = grid.get("classes")
    seeds = grid.get("seeds", [0])
    configs = grid.get("configs", [{"cut": "I", "backward": "alternating"}])
    if not classes:
        raise UsageError("grid file needs a non-empty 'classes' list")
    common = {k: grid[k] for k in ("M", "alpha", "gamma", "delta", "time_limit",
                                   "iteration_limit", "node_limit", "problem", "binarize")
              if k in grid}
    cells = [(cls, s, cfg, common) for cls in classes for cfg in configs for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    keys = ["T", "rows", "cols", "scens"]
    timing = not args.no_timing
    header = keys + ["M"]
    for cfg in configs:
        lab = _label(cfg)
        header += ([f"{lab}-t"] if timing else []) + [f"{lab}-iter", f"{lab}-gap",
                                                        f"{lab}-eprop"]
    header.append("failures")
    rows = []
    it = iter(results)
    by_class = {}
    for cls in classes:
        for cfg in configs:
            by_class[(id(cls), _label(cfg))] = [next(it) for _ in seeds]
    for cls in classes:
        row = [cls.get(k, "") for k in keys] + [common.get("M", 2)]
        failures = 0
        for cfg in configs:
            runs = by_class[(id(cls), _label(cfg))]
            ok = [s for s, err in runs if s is not None]
            for _, err in runs:
                if err is not None:
                    failures += 1
                    log.error("bench cell failed: %s", err)
            if timing:
                if any(s["status"] == "time-limit" for s in ok):
                    row.append(LIMIT)
                else:
                    row.append(round(_mean([s["total_s"] for s in ok]), 3))
            row.append(_mean([s["iterations"] for s in ok]))
            row.append(_mean([s["gap_pct"] for s in ok]))
            row.append(_mean([s["tight_prop"] for s in ok]))
        row.append(failures)
        rows.append(row)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "solve":
            return cmd_solve(args)
        return cmd_bench(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (AltSddipError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
