"""Command-line experiment runner.

Subcommands: calibrate, topk, audit, utility, rank. Each one writes a
single result record as JSON, or a CSV table with ``--format csv``. Exit
codes are 0 on success or pass, 1 on an audit or assertion failure, and 2
on invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, audit, mechanisms, ranking
from .errors import ConstraintError, InvalidParameterError, NumericError, ResourceError
from .mechanisms import PrivacyParams, calibrate_approx, calibrate_pure
from .noise import RngState, laplace_ppf, open_uniform
from .records import dumps_csv, dumps_json, result_record

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2
CHUNK = 10_000  # trials per rng stream; fixed so output does not depend on --jobs

# Options that never change the numbers and are left out of the config hash.
_NON_CONFIG = {"config", "format", "jobs", "output", "command", "func"}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INVALID, record=None):
        super().__init__(message)
        self.code = code
        self.record = record


def _csv_floats(text):
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise CliError(f"cannot parse numbers from {text!r}") from exc


def read_counts(path):
    """One real per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise CliError(f"{path}:{lineno}: not a number: {line!r}") from exc
    return values


def _counts_from(args):
    if getattr(args, "counts", None):
        return np.array(read_counts(args.counts))
    if getattr(args, "values", None) is not None:
        return np.array(_csv_floats(args.values))
    raise CliError("provide counts with --counts FILE or --values LIST")


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_CONFIG}


def _privacy(args, m, k, sensitivity=None):
    return PrivacyParams(args.eps, args.delta, k, m, args.sensitivity if sensitivity is None else sensitivity)


def _scale(args, m, k):
    """Noise scale: explicit ``--lambda`` or the chosen calibration, times ``--lambda-factor``."""
    if args.lam is not None:
        lam = args.lam
    elif args.eps is None:
        raise CliError("provide --lambda or --eps")
    elif args.calibration == "pure":
        lam = calibrate_pure(k, args.sensitivity, args.eps).value
    else:
        if args.delta is None:
            raise CliError("approximate calibration needs --delta")
        lam = calibrate_approx(_privacy(args, m, k)).value
    return lam * getattr(args, "lambda_factor", 1.0)


# -- calibrate ---------------------------------------------------------------


def cmd_calibrate(args):
    params = PrivacyParams(args.eps, args.delta, args.k, args.m, args.sensitivity)
    threshold = analysis.C0 * math.log(args.m / args.delta)
    metrics = {
        "lambda_pure": calibrate_pure(args.k, args.sensitivity, args.eps).value,
        "lambda_approx": calibrate_approx(params).value,
        "regime_threshold_k": threshold,
        "approx_regime": args.k >= threshold,
        "tau_max": analysis.tau_regime(args.eps, args.k, args.m, args.delta),
    }
    return result_record("calibrate", _config(args), args.seed, metrics), EXIT_OK


# -- topk --------------------------------------------------------------------


def _select(x, k, mechanism, lam, rng):
    """One selection on the min primitive; returns (ordered index list, estimates list)."""
    if mechanism == "oneshot":
        sel = mechanisms.oneshot_select_min(x, k, lam, rng)
        idx = sorted(sel.indices)
        return idx, [sel.estimates[i] for i in idx]
    if mechanism == "peeling":
        picks = mechanisms.peeling_select(x, k, lam, rng)
        return [i for i, _ in picks], [e for _, e in picks]
    idx = mechanisms.gumbel_oneshot_select(x, k, lam, rng)
    return idx, [None] * len(idx)


def cmd_topk(args):
    x = mechanisms.as_counts(_counts_from(args))
    k = args.k
    if not 1 <= k <= x.size:
        raise InvalidParameterError(f"k must lie in [1, m={x.size}], got k={k}")
    lam = _scale(args, x.size, k)
    sign = -1.0 if args.direction == "max" else 1.0
    rows = []
    for trial in range(args.trials):
        idx, est = _select(sign * x, k, args.mechanism, lam, RngState(args.seed, trial))
        est = [None if e is None else sign * e for e in est]
        rows.append({
            "trial": trial,
            "indices": [i + 1 for i in idx],
            "estimates": est,
        })
    metrics = {
        "mechanism": args.mechanism,
        "direction": args.direction,
        "lambda": lam,
        "m": int(x.size),
        "k": k,
    }
    if args.trials == 1:
        metrics["selection"] = rows[0]["indices"]
        metrics["estimates"] = rows[0]["estimates"]
    return result_record("topk", _config(args), args.seed, metrics, table=rows), EXIT_OK


# -- audit -------------------------------------------------------------------


def cmd_audit(args):
    x = mechanisms.as_counts(_counts_from(args))
    k = args.k
    delta = args.delta if args.delta is not None else 0.0
    if args.lam is None and args.calibration == "approx" and delta == 0:
        raise CliError("approximate calibration needs --delta > 0")
    lam = _scale(args, x.size, k)
    if args.method == "exact":
        rep = audit.audit_worst_case(x, k, lam, delta, args.sensitivity, target_epsilon=args.eps, jobs=args.jobs)
    else:
        corners = audit.adjacent_corners(x, args.sensitivity)
        reports = [
            audit.epsilon_hat_monte_carlo(audit.AdjacentPair(x, c, args.sensitivity), k, lam, delta,
                                          args.trials, RngState(args.seed, n), target_epsilon=args.eps)
            for n, c in enumerate(corners)
        ]
        rep = max(reports, key=lambda r: r.epsilon_hat)
        rep.pairs_checked = len(corners)
    metrics = rep.to_dict()
    metrics["worst_set"] = [i + 1 for i in rep.worst_set]
    metrics["lambda"] = lam
    metrics["pass_tolerance"] = args.tol
    passed = rep.passes(args.tol)
    metrics["passed"] = passed
    return result_record("audit", _config(args), args.seed, metrics), EXIT_OK if passed else EXIT_FAIL


# -- utility -----------------------------------------------------------------


def _utility_chunk(job):
    x, k, lam, seed, stream, n = job
    gen = RngState(seed, stream).generator
    member = mechanisms.oneshot_membership_batch(x, k, lam, gen, n)
    truth = np.zeros(x.size, dtype=bool)
    truth[mechanisms.smallest_k(x, k)] = True
    hits = int(np.all(member == truth, axis=1).sum())
    fresh = laplace_ppf(open_uniform(gen, (n, k)), lam)
    return hits, float(np.abs(fresh).sum()), n * k


def _run_chunks(fn, jobs_list, jobs):
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, jobs_list))
    return [fn(j) for j in jobs_list]


def cmd_utility(args):
    if getattr(args, "counts", None) or getattr(args, "values", None) is not None:
        x = mechanisms.as_counts(_counts_from(args))
    else:
        if args.m is None or args.gap is None:
            raise CliError("provide --m and --gap, or counts")
        perm = RngState(args.seed, 2**32).generator.permutation(args.m)
        x = args.gap * perm.astype(float)
    m, k = x.size, args.k
    if not 1 <= k <= m:
        raise InvalidParameterError(f"k must lie in [1, m={m}], got k={k}")
    lam = _scale(args, m, k)
    gap = analysis.min_gap(x)
    p = analysis.utility_bound(m, lam, gap)
    work = []
    for stream, start in enumerate(range(0, args.trials, CHUNK)):
        work.append((x, k, lam, args.seed, stream, min(CHUNK, args.trials - start)))
    results = _run_chunks(_utility_chunk, work, args.jobs)
    hits = sum(r[0] for r in results)
    abs_err = sum(r[1] for r in results) / sum(r[2] for r in results)
    freq = hits / args.trials
    stderr = math.sqrt(max(freq * (1 - freq), 1e-300) / args.trials)
    lo, hi = audit.clopper_pearson([hits], args.trials, 0.01)
    holds = freq >= p - 3 * stderr
    metrics = {
        "m": m,
        "k": k,
        "lambda": lam,
        "gap": gap,
        "gap_over_lambda": gap / lam,
        "p_bound": p,
        "trials": args.trials,
        "recovery_frequency": freq,
        "stderr": stderr,
        "ci99": [float(lo[0]), float(hi[0])],
        "mean_abs_error": abs_err,
        "mean_abs_error_over_lambda": abs_err / lam,
        "bound_holds": holds,
    }
    return result_record("utility", _config(args), args.seed, metrics), EXIT_OK if holds else EXIT_FAIL


# -- rank --------------------------------------------------------------------


def cmd_rank(args):
    if args.input:
        with open(args.input) as fh:
            graph = ranking.read_comparisons(fh)
        if args.d is not None:
            graph = ranking.ComparisonGraph(graph.m, graph.samples, graph.L, args.d)
    else:
        if args.omega is None:
            raise CliError("provide --input FILE or --omega LIST")
        graph = ranking.simulate_comparisons(_csv_floats(args.omega), args.edge_prob, args.L,
                                             RngState(args.seed, 0), d=args.d)
        if args.save_comparisons:
            with open(args.save_comparisons, "w") as fh:
                ranking.write_comparisons(graph, fh)
    P = ranking.build_transition(graph)
    connected = graph.is_connected()
    report = ranking.check_constrained(graph, args.rho, P)
    metrics = {
        "m": graph.m,
        "L": graph.L,
        "d": graph.d,
        "edges": len(graph.samples),
        "connected": connected,
        "tau1": report.tau1,
        "rho": args.rho,
        "constrained": report.constrained,
    }
    if args.emit_transition:
        metrics["transition"] = P
    if not report.constrained:
        why = "graph is disconnected" if not connected else f"tau1 = {report.tau1:.17g} exceeds rho = {args.rho}"
        metrics["error"] = why
        rec = result_record("rank", _config(args), args.seed, metrics)
        raise CliError(f"refusing to run: {why}", EXIT_FAIL, rec)
    diag = ranking.private_top_k_rank(graph, args.k, args.eps, args.delta, args.rho,
                                      RngState(args.seed, 1), diagnostics=True)
    metrics.update({
        "pi": diag.pi,
        "sensitivity": report.sensitivity,
        "lambda": diag.noise_scale,
        "selection": sorted(i + 1 for i in diag.selection),
    })
    return result_record("rank", _config(args), args.seed, metrics), EXIT_OK


# -- parser ------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--output", "-o", help="write the record here instead of stdout")


def _counts_args(p):
    p.add_argument("--counts", help="file with one count per line")
    p.add_argument("--values", help="comma-separated counts")


def _scale_args(p):
    p.add_argument("--eps", type=float, help="target epsilon")
    p.add_argument("--delta", type=float, help="target delta")
    p.add_argument("--sensitivity", type=float, default=1.0)
    p.add_argument("--calibration", choices=("pure", "approx"), default="approx")
    p.add_argument("--lambda", dest="lam", type=float, help="explicit noise scale")
    p.add_argument("--lambda-factor", type=float, default=1.0, help="multiplier on the noise scale")


def build_parser():
    parser = argparse.ArgumentParser(prog="oneshot-topk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="noise scales for pure and approximate DP")
    _common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--sensitivity", type=float, default=1.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("topk", help="run a selection mechanism on a count vector")
    _common(p)
    _counts_args(p)
    _scale_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mechanism", choices=("oneshot", "peeling", "gumbel"), default="oneshot")
    p.add_argument("--direction", choices=("min", "max"), default="max")
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=cmd_topk)

    p = sub.add_parser("audit", help="certify epsilon over all adjacent corners")
    _common(p)
    _counts_args(p)
    _scale_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--method", choices=("exact", "monte-carlo"), default="exact")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=1e-3, help="pass if epsilon_hat <= eps + tol")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("utility", help="utility bound versus empirical exact recovery")
    _common(p)
    _counts_args(p)
    _scale_args(p)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--gap", type=float, help="spacing of the synthetic counts")
    p.add_argument("--trials", type=int, default=100_000)
    p.set_defaults(func=cmd_utility)

    p = sub.add_parser("rank", help="private top-k from pairwise comparisons")
    _common(p)
    p.add_argument("--input", help="comparison file ('m= L= d=' header, 'i j l outcome' lines)")
    p.add_argument("--omega", help="comma-separated BTL scores to simulate from")
    p.add_argument("--edge-prob", type=float, default=1.0)
    p.add_argument("--L", type=int, default=100)
    p.add_argument("--d", type=float, help="override the normalisation factor")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--rho", type=float, required=True, help="a-priori bound on the ergodicity coefficient")
    p.add_argument("--save-comparisons", help="write simulated data in the comparison format")
    p.add_argument("--emit-transition", action="store_true", help="include P in the output")
    p.set_defaults(func=cmd_rank)
    return parser


def _parse(parser, argv):
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    if known.config and known.command in choices:
        try:
            with open(known.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error(f"config {known.config} must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        cfg = {("lam" if k == "lambda" else k): v for k, v in cfg.items()}
        subparser = choices[known.command]
        dests = {a.dest for a in subparser._actions}
        unknown = set(cfg) - dests
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        for action in subparser._actions:
            if action.dest in cfg:
                action.required = False
        subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def _emit(record, args):
    text = dumps_csv(record) if args.format == "csv" else dumps_json(record)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    args = _parse(parser, argv)
    try:
        record, code = args.func(args)
    except CliError as exc:
        if exc.record is not None:
            _emit(exc.record, args)
        print(f"oneshot-topk {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (InvalidParameterError, ResourceError) as exc:
        print(f"oneshot-topk {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConstraintError as exc:
        print(f"oneshot-topk {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except NumericError as exc:
        print(f"oneshot-topk {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"oneshot-topk {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(record, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
