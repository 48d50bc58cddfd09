"""Command-line interface: ``csm match | estimate | diagnose | simulate``.

Every table is written as CSV (plus a JSON mirror with ``--json``) whose
first line is a comment carrying the tool version and a hash of the inputs
and flags that determine its content. Exit codes: 0 success, 2 invalid
input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import Norm, Policy, Schema, default_caliper, load_dataset, read_caliper_config
from .diagnostics import frontier_series, love_plot_rows, love_plot_series, balance_report, topk_distance_histogram
from .distance import distance_matrix
from .errors import SolverFailure, ValidationError
from .estimator import estimate
from .matching import cem_match, one_nn_match, radius_match
from .scm import Scheme, assign_weights
from .simulate import EstimatorSettings, Overlap, run_coverage_study, run_method_comparison

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3

# Flags that never change output content.
_NON_CONTENT = {"out", "json", "workers", "func", "quiet"}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


class Writer:
    """Writes tables into the output directory with a provenance header."""

    def __init__(self, args: argparse.Namespace):
        self.out = Path(args.out)
        self.json = args.json
        self.header = f"# csmatch {__version__} config={config_hash(args)}"

    def table(self, name: str, columns: list[str], rows) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        rows = [list(r) for r in rows]
        path = self.out / f"{name}.csv"
        with path.open("w", newline="") as fh:
            fh.write(self.header + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        if self.json:
            doc = {"header": self.header[2:],
                   "rows": [{c: _jsonable(v) for c, v in zip(columns, r)} for r in rows]}
            (self.out / f"{name}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def config_hash(args: argparse.Namespace) -> str:
    """SHA-256 prefix over content-relevant flags and the bytes of input files."""
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_CONTENT}
    h = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode())
    for key in ("input", "caliper_config"):
        p = getattr(args, key, None)
        if p and Path(p).is_file():
            h.update(Path(p).read_bytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _dataset(args):
    covs = tuple(c.strip() for c in args.covariates.split(",")) if args.covariates else None
    return load_dataset(args.input, Schema(args.treatment, args.outcome, covs, args.id))


def _caliper(args, ds):
    if args.caliper_config:
        spec = read_caliper_config(args.caliper_config, ds.column_names)
    else:
        spec = default_caliper(ds, args.auto_caliper or 5)
    overrides = {}
    for flag, field, conv in (("norm", "norm", Norm), ("policy", "policy", Policy), ("alpha", "alpha", float),
                              ("c", "c", float), ("kmin", "k_min", int), ("kmax", "k_max", int)):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = conv(value)
    return spec.with_(**overrides) if overrides else spec


def _match(args, ds, spec):
    method = getattr(args, "method", "radius")
    if method == "cem":
        return cem_match(ds, args.auto_caliper or 5)
    D = distance_matrix(ds, spec)
    if method == "1nn":
        return one_nn_match(ds, D)
    return radius_match(ds, D, spec)


def _subset(arg: str | None, mr):
    if arg is None or arg in ("all", "feasible"):
        return arg or "all"
    if arg.startswith("max-caliper:"):
        try:
            limit = float(arg.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad subset {arg!r}; expected max-caliper:<number>") from None
        return [u.treated_id for u in mr.units if u.difficulty <= limit]
    if arg.startswith("ids:"):
        return [i for i in arg[4:].split(",") if i]
    raise ValidationError(f"unknown subset {arg!r}; use all, feasible, max-caliper:X or ids:a,b")


def _pipeline(args):
    ds = _dataset(args)
    spec = _caliper(args, ds)
    mr = _match(args, ds, spec)
    ws = assign_weights(mr, ds, mr.spec, args.scheme)
    return ds, spec, mr, ws


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# ---------------------------------------------------------------------------
# subcommands


MATCH_COLUMNS = ["treated_id", "control_id", "distance", "c_t", "feasible", "method"]
WEIGHT_COLUMNS = ["treated_id", "control_id", "weight", "scheme", "imbalance"]


def cmd_match(args) -> int:
    ds = _dataset(args)
    spec = _caliper(args, ds)
    mr = _match(args, ds, spec)
    path = Writer(args).table("matches", MATCH_COLUMNS, mr.rows())
    n_feas = len(mr.feasible_ids)
    cts = np.array([u.c_t for u in mr.units])
    q = np.percentile(cts, [0, 25, 50, 75, 100])
    _say(args, f"feasible: {n_feas}/{len(mr)} ({100.0 * n_feas / len(mr):.1f}%)")
    _say(args, "c_t quantiles (0/25/50/75/100%): " + " ".join(f"{v:.6g}" for v in q))
    infeasible = [u.treated_id for u in mr.units if not u.feasible]
    if infeasible:
        print(f"warning: {len(infeasible)} treated units have no control within c={spec.c:g}: "
              + ", ".join(infeasible), file=sys.stderr)
    unmatched = [u.treated_id for u in mr.units if u.size == 0]
    if unmatched:
        print(f"warning: unmatched treated units dropped from estimates: {', '.join(unmatched)}", file=sys.stderr)
    _say(args, f"wrote {path}")
    return EXIT_OK


ESTIMATE_COLUMNS = ["estimand", "tau_hat", "se_hat", "ci_lo", "ci_hi", "level", "s2", "ess_control",
                    "ess_treated", "n_treated_used", "n_clusters_used", "n_excluded"]


def _estimate_row(est):
    return [est.estimand.value, est.tau_hat, est.se_hat, est.ci_lo, est.ci_hi, est.level, est.s2,
            est.ess_control, est.ess_treated, est.n_treated_used, est.n_clusters_used, len(est.excluded)]


def cmd_estimate(args) -> int:
    ds, spec, mr, ws = _pipeline(args)
    est = estimate(ds, mr, ws, _subset(args.subset, mr), args.level)
    out = Writer(args)
    out.table("estimate", ESTIMATE_COLUMNS, [_estimate_row(est)])
    if args.weights:
        out.table("weights", WEIGHT_COLUMNS, ws.rows())
    if est.se_hat is None:
        se_text = "SE unavailable (no matched set has two or more controls)"
    else:
        se_text = f"SE = {est.se_hat:.6g}, {100 * est.level:g}% CI [{est.ci_lo:.6g}, {est.ci_hi:.6g}]"
    _say(args, f"{est.estimand.value}: tau_hat = {est.tau_hat:.6g}; {se_text}")
    _say(args, f"ESS(controls) = {est.ess_control:.4g}; treated used = {est.n_treated_used}")
    if est.excluded:
        print("warning: excluded treated units without matches: " + ", ".join(est.excluded), file=sys.stderr)
    return EXIT_OK


BALANCE_COLUMNS = ["covariate", "treated_mean", "control_mean", "abs_diff", "bound", "within_bound"]


def cmd_diagnose(args) -> int:
    out = Writer(args)
    which = args.which
    ds = _dataset(args)
    spec = _caliper(args, ds)
    if which == "distances":
        hists = topk_distance_histogram(distance_matrix(ds, spec), args.k, args.bins)
        rows = []
        for h in hists:
            for b in range(len(h.counts)):
                rows.append([h.rank, b, h.edges[b], h.edges[b + 1], int(h.counts[b])])
        out.table("distance_histogram", ["rank", "bin", "lo", "hi", "count"], rows)
        out.table("distance_quantiles", ["rank", "q25", "q50", "q75", "q90"],
                  [[h.rank] + [h.quantiles[q] for q in (25, 50, 75, 90)] for h in hists])
        for h in hists:
            _say(args, f"rank {h.rank}: 75th percentile = {h.quantiles[75]:.6g}")
        return EXIT_OK

    mr = _match(args, ds, spec)
    ws = assign_weights(mr, ds, mr.spec, args.scheme)
    if which == "balance":
        sub = _subset(args.subset, mr)
        ids = mr.feasible_ids if sub == "feasible" else (None if sub == "all" else sub)
        ids = [i for i in ids if i in ws.by_id()] if ids is not None else None
        rep = balance_report(ds, ws, ids, mr.spec)
        out.table("balance", BALANCE_COLUMNS, list(rep.rows()) + [
            ["__joint__", None, None, rep.joint, rep.joint_bound, rep.joint <= rep.joint_bound]])
        _say(args, f"joint imbalance {rep.joint:.6g} (bound {rep.joint_bound:g}); "
                   f"{int(rep.within_bound.sum())}/{len(rep.columns)} covariates within bound")
    elif which == "love":
        series = love_plot_series(ds, mr, ws, mr.spec)
        out.table("love", ["step", "n_treated"] + BALANCE_COLUMNS, love_plot_rows(series))
        _say(args, f"{len(series)} nested subsets")
    else:
        pts = frontier_series(ds, mr, ws, mr.spec, args.level)
        out.table("frontier", ["step", "max_caliper", "added_id"] + ESTIMATE_COLUMNS,
                  [[p.step, p.max_caliper, p.added_id] + _estimate_row(p.estimate) for p in pts])
        _say(args, f"{len(pts)} nested subsets")
    return EXIT_OK


def _aligned(columns, rows) -> str:
    cells = [columns] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


COVERAGE_COLUMNS = ["scenario", "n_trials", "ess_control_avg", "se_hat_avg", "se_true", "bias", "rmse",
                    "coverage", "mc_se_bias", "mc_se_rmse", "mc_se_coverage", "n_se_unavailable"]
COMPARE_COLUMNS = ["method", "n_trials", "rmse", "abs_bias", "mc_se_rmse", "mean_n_treated"]


def _settings(args) -> EstimatorSettings:
    base = EstimatorSettings()
    return EstimatorSettings(
        policy=Policy(args.policy) if args.policy else base.policy,
        norm=Norm(args.norm) if args.norm else base.norm,
        c=args.c if args.c is not None else base.c,
        alpha=args.alpha if args.alpha is not None else base.alpha,
        k_min=args.kmin if args.kmin is not None else base.k_min,
        k_max=args.kmax if args.kmax is not None else base.k_max,
        bins=args.auto_caliper or base.bins,
        scheme=Scheme(args.scheme),
        level=args.level,
    )


def cmd_simulate(args) -> int:
    out = Writer(args)
    settings = _settings(args)
    if args.which == "coverage":
        levels = [Overlap(v) for v in args.levels.split(",")] if args.levels else list(Overlap)
        rep = run_coverage_study(levels, args.trials, settings, args.seed, workers=args.workers)
        rows = [[r.as_dict()[c] for c in COVERAGE_COLUMNS] for r in rep.rows]
        out.table("coverage", COVERAGE_COLUMNS, rows)
        _say(args, _aligned(COVERAGE_COLUMNS, rows))
    else:
        res = run_method_comparison(None, args.trials, settings=settings, master_seed=args.seed,
                                    workers=args.workers)
        rows = [[r.as_dict()[c] for c in COMPARE_COLUMNS] for r in res]
        out.table("compare", COMPARE_COLUMNS, rows)
        _say(args, _aligned(COMPARE_COLUMNS, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_output(p):
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--json", action="store_true", help="also write a JSON mirror of every table")
    p.add_argument("--quiet", action="store_true", help="suppress the stdout summary")


def _add_caliper(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--caliper-config", help="file of 'key = value' caliper settings")
    g.add_argument("--auto-caliper", type=_positive_int, metavar="N",
                   help="pi_k = range / N per covariate (default N = 5)")
    p.add_argument("--norm", choices=[n.value for n in Norm])
    p.add_argument("--policy", choices=[x.value for x in Policy])
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--kmin", type=int)
    p.add_argument("--kmax", type=int)


def _add_data(p):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--treatment", required=True, help="0/1 treatment column")
    p.add_argument("--outcome", required=True, help="outcome column")
    p.add_argument("--covariates", help="comma-separated covariates (default: all other columns)")
    p.add_argument("--id", help="unit id column (default: row number)")
    _add_caliper(p)
    _add_output(p)


def _add_weighting(p):
    p.add_argument("--method", choices=["radius", "1nn", "cem"], default="radius")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.SCM.value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csm", description="Caliper synthetic matching.")
    parser.add_argument("--version", action="version", version=f"csmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match treated units to controls")
    _add_data(p)
    p.add_argument("--method", choices=["radius", "1nn", "cem"], default="radius")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("estimate", help="weights, effect estimate, SE and CI")
    _add_data(p)
    _add_weighting(p)
    p.add_argument("--subset", default="all", help="all | feasible | max-caliper:X | ids:a,b,...")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--weights", action="store_true", help="also write weights.csv")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="balance tables, love/frontier series, distance histograms")
    p.add_argument("which", choices=["balance", "love", "frontier", "distances"])
    _add_data(p)
    _add_weighting(p)
    p.add_argument("--subset", default="feasible", help="subset for 'balance' (default: feasible)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--k", type=_positive_int, default=3, help="ranks for 'distances'")
    p.add_argument("--bins", type=_positive_int, default=30, help="histogram bins for 'distances'")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="toy Monte Carlo studies")
    p.add_argument("which", choices=["coverage", "compare"])
    p.add_argument("--trials", type=int, default=None, help="trials per scenario (500 coverage, 250 compare)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", help="comma-separated overlap levels for 'coverage'")
    p.add_argument("--workers", type=int, default=None, help="worker processes (output is unaffected)")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.SCM.value)
    p.add_argument("--level", type=float, default=0.95)
    _add_caliper(p)
    _add_output(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate":
        if args.trials is None:
            args.trials = 500 if args.which == "coverage" else 250
        if args.caliper_config:
            parser.error("simulate derives calipers from the data; use --auto-caliper")
        if args.seed < 0:
            parser.error("--seed must be non-negative")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
