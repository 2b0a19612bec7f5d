"""Command-line surface.

Subcommands: fit, cp, rank-select, simulate, bench, init-study, evaluate,
construct.  Exit codes: 0 success, 1 usage error, 2 data or format error,
3 numerical failure.  Diagnostics go to standard error; only result values
(evaluate, bench table, init-study table without --out) go to standard out.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import io as formats
from .cp import cp_als
from .model import FitConfig, NumericalError, conditional_mean, fit_supcp
from .selection import select_rank, test_loglik
from .simulation import (
    generate_init_sim,
    generate_rank_sim,
    generate_setting,
    run_benchmark,
    run_init_study,
)

__all__ = ["main", "entry"]

_SETTING_SCHEMES = {"setting1": 1, "setting2": 2, "setting3": 3, "setting4": 4}


class _Parser(argparse.ArgumentParser):
    # argparse defaults to exit code 2 on usage errors; the contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_ranks(text):
    """Candidate ranks from ``1..10`` (inclusive) or ``1,3,5`` syntax."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            ranks = list(range(lo, hi + 1))
        else:
            ranks = [int(c) for c in text.split(",")]
        if not ranks or any(r < 1 for r in ranks):
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"cannot parse ranks {text!r}; use e.g. 1..10 or 2,4,6"
        ) from None
    return ranks


def _parse_seeds(text):
    try:
        return [int(c) for c in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"cannot parse seeds {text!r}; use e.g. 0,1,2"
        ) from None


def _parse_values(text):
    if text == "":
        return []
    try:
        return [float(c) for c in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse values {text!r}") from None


def _resolve_jobs(flag_value):
    env = os.environ.get("SUPCP_JOBS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"SUPCP_JOBS={env!r} is not an integer") from None
    return flag_value


def _add_fit_flags(sub, include_rank=True):
    if include_rank:
        sub.add_argument("--rank", type=int, required=True, help="number of components")
    sub.add_argument("--max-iters", type=int, default=1000)
    sub.add_argument("--tol", type=float, default=1e-8)
    sub.add_argument("--anneal", type=int, default=100, help="annealing iterations")
    sub.add_argument("--init", choices=("random", "cp"), default="random")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument(
        "--seeds", type=_parse_seeds, default=None,
        help="comma-separated multi-start seeds; best likelihood wins",
    )
    sub.add_argument(
        "--full-sigma-f", action="store_true",
        help="estimate a full score covariance instead of diagonal",
    )
    sub.add_argument("--jobs", type=int, default=1)


def _fit_config(args, rank):
    return FitConfig(
        rank=rank,
        max_iters=args.max_iters,
        tol=args.tol,
        anneal_iters=args.anneal,
        init_method=args.init,
        seed=args.seed,
        diag_sigma_f=not args.full_sigma_f,
    )


def _load_xy(args):
    x = formats.read_tensor(args.x)
    y = formats.read_matrix_csv(args.y) if args.y else None
    return x, y


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, allow_nan=False, sort_keys=True)
    formats._atomic_write(path, (text + "\n").encode("utf-8"))


def _cmd_fit(args):
    x, y = _load_xy(args)
    config = _fit_config(args, args.rank)
    result = fit_supcp(x, y, config, seeds=args.seeds, n_jobs=_resolve_jobs(args.jobs))
    formats.save_model(args.out, result)
    print(
        f"fit: rank {args.rank}, {result.n_iters} iterations, "
        f"loglik {result.loglik:.6f}, converged {result.converged}",
        file=sys.stderr,
    )
    return 0


def _cmd_cp(args):
    x = formats.read_tensor(args.x)
    fit = cp_als(x, args.rank, max_iters=args.max_iters, tol=args.tol, seed=args.seed)
    doc = {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "cp",
        "dims": [int(d) for d in x.shape],
        "rank": int(args.rank),
        "u": [[float(v) for v in row] for row in fit.u],
        "loadings": [[[float(v) for v in row] for row in m] for m in fit.loadings],
        "rss": float(fit.rss),
        "n_iters": int(fit.n_iters),
        "converged": bool(fit.converged),
    }
    _write_json(args.out, doc)
    print(
        f"cp: rank {args.rank}, {fit.n_iters} iterations, rss {fit.rss:.6f}",
        file=sys.stderr,
    )
    return 0


def _cmd_rank_select(args):
    x, y = _load_xy(args)
    config = _fit_config(args, args.ranks[0])
    report = select_rank(
        x,
        y,
        args.ranks,
        config,
        train_fraction=args.train_frac,
        split_seed=args.split_seed,
        seeds=args.seeds,
        n_jobs=_resolve_jobs(args.jobs),
    )
    doc = {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "rank_selection",
        "candidate_ranks": [int(r) for r in report.candidate_ranks],
        "test_logliks": [float(v) for v in report.test_logliks],
        "train_logliks": [float(v) for v in report.train_logliks],
        "chosen_rank": int(report.chosen_rank),
        "split_seed": int(report.split_seed),
        "train_fraction": float(report.train_fraction),
    }
    # NaN from a failed candidate is not JSON; serialize as null
    doc["test_logliks"] = [None if np.isnan(v) else v for v in doc["test_logliks"]]
    doc["train_logliks"] = [None if np.isnan(v) else v for v in doc["train_logliks"]]
    _write_json(args.out_prefix + ".json", doc)
    lines = ["rank,test_loglik"]
    for r, v in zip(report.candidate_ranks, report.test_logliks):
        lines.append(f"{r},{'' if np.isnan(v) else repr(float(v))}")
    formats._atomic_write(
        args.out_prefix + ".csv", ("\n".join(lines) + "\n").encode("utf-8")
    )
    print(f"rank-select: chose rank {report.chosen_rank}", file=sys.stderr)
    return 0


def _truth_document(scheme, seed, truth):
    sigma_f = np.asarray(truth.sigma_f, dtype=float)
    doc = {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "sim_truth",
        "scheme": scheme,
        "seed": int(seed),
        "rank": int(truth.u.shape[1]),
        "u": [[float(v) for v in row] for row in truth.u],
        "loadings": [
            [[float(v) for v in row] for row in m] for m in truth.loadings
        ],
        "b": [[float(v) for v in row] for row in truth.b],
        "sigma_e2": float(truth.sigma_e2),
    }
    if np.allclose(sigma_f, np.diag(np.diag(sigma_f))):
        doc["sigma_f_diag"] = [float(v) for v in np.diag(sigma_f)]
    else:
        doc["sigma_f"] = [[float(v) for v in row] for row in sigma_f]
    return doc


def _cmd_simulate(args):
    scheme = args.scheme
    if scheme in _SETTING_SCHEMES:
        x, y, truth = generate_setting(_SETTING_SCHEMES[scheme], args.seed)
    elif scheme.startswith("rank:"):
        x, y, truth = generate_rank_sim(int(scheme.split(":", 1)[1]), args.seed)
    elif scheme == "init":
        x, y, truth = generate_init_sim(args.seed)
    else:
        raise ValueError(
            f"unknown scheme {scheme!r}; use setting1..setting4, rank:<R> or init"
        )
    prefix = args.out_prefix
    formats.write_tensor(prefix + ".x.mway", x)
    y_mat = np.asarray(y, dtype=float)
    if y_mat.ndim == 1:
        y_mat = y_mat[:, None]
    formats.write_matrix_csv(prefix + ".y.csv", y_mat)
    _write_json(prefix + ".truth.json", _truth_document(scheme, args.seed, truth))
    print(
        f"simulate: {scheme} seed {args.seed} -> {prefix}.x.mway "
        f"{prefix}.y.csv {prefix}.truth.json",
        file=sys.stderr,
    )
    return 0


def _cmd_bench(args):
    setting = _SETTING_SCHEMES.get(args.scheme)
    if setting is None:
        raise ValueError(f"unknown scheme {args.scheme!r}; use setting1..setting4")
    methods = tuple(m.strip() for m in args.methods.split(","))
    config = _fit_config(args, args.rank)
    rows, info = run_benchmark(
        setting,
        n_runs=args.runs,
        methods=methods,
        seed=args.seed,
        fit_config=config,
        n_jobs=_resolve_jobs(args.jobs),
    )
    lines = ["method,metric,median,mad,n_runs"]
    for row in rows:
        lines.append(
            f"{row.method},{row.metric},{row.median!r},{row.mad!r},{row.n_runs}"
        )
    if args.out:
        formats._atomic_write(args.out, ("\n".join(lines) + "\n").encode("utf-8"))
    width = max(len(r.metric) for r in rows) if rows else 6
    print(f"{'method':8s} {'metric':{width}s} {'median':>14s} {'mad':>14s} runs")
    for row in rows:
        print(
            f"{row.method:8s} {row.metric:{width}s} "
            f"{row.median:14.4f} {row.mad:14.4f} {row.n_runs:4d}"
        )
    for method, count in info.get("failures", {}).items():
        if count:
            print(f"bench: {count} failed {method} replicate(s)", file=sys.stderr)
    return 0


def _cmd_init_study(args):
    rows = run_init_study(
        n_datasets=args.datasets,
        seed=args.seed,
        max_iters=args.max_iters,
        tol=args.tol,
        n_jobs=_resolve_jobs(args.jobs),
    )
    lines = ["init,anneal_iters,mean_loglik,mean_abs_diff,mean_time_s,n_datasets"]
    for row in rows:
        lines.append(
            f"{row.init_method},{row.anneal_iters},{row.mean_loglik!r},"
            f"{row.mean_abs_diff!r},{row.mean_time_s!r},{row.n_datasets}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        formats._atomic_write(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return 0


def _cmd_evaluate(args):
    result = formats.load_model(args.model)
    x, y = _load_xy(args)
    ll = test_loglik(x, y, result)
    print(repr(float(ll)))
    return 0


def _cmd_construct(args):
    result = formats.load_model(args.model)
    params = result.params
    y_new = np.asarray(args.y_values, dtype=float)
    if params.b.shape[0] == 0:
        raise ValueError("model was fitted without covariates; cannot construct")
    recon = conditional_mean(y_new, params)[0] + result.x_mean
    formats.write_tensor(args.out, recon)
    print(f"construct: wrote {args.out}", file=sys.stderr)
    return 0


def build_parser():
    parser = _Parser(prog="supcp", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    fit = subs.add_parser("fit", help="fit the supervised factorization")
    fit.add_argument("--x", required=True, help="tensor file (.mway)")
    fit.add_argument("--y", default=None, help="covariate CSV; omit for unsupervised")
    _add_fit_flags(fit)
    fit.add_argument("--out", required=True, help="output model document (JSON)")
    fit.set_defaults(func=_cmd_fit)

    cp = subs.add_parser("cp", help="least-squares CP baseline")
    cp.add_argument("--x", required=True)
    cp.add_argument("--rank", type=int, required=True)
    cp.add_argument("--max-iters", type=int, default=500)
    cp.add_argument("--tol", type=float, default=1e-8)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=_cmd_cp)

    rank = subs.add_parser(
        "rank-select", help="held-out likelihood rank selection"
    )
    rank.add_argument("--x", required=True)
    rank.add_argument("--y", default=None)
    rank.add_argument("--ranks", type=_parse_ranks, required=True)
    rank.add_argument("--train-frac", type=float, default=0.5)
    rank.add_argument("--split-seed", type=int, default=0)
    _add_fit_flags(rank, include_rank=False)
    rank.add_argument("--out-prefix", required=True)
    rank.set_defaults(func=_cmd_rank_select)

    sim = subs.add_parser("simulate", help="generate synthetic data")
    sim.add_argument(
        "--scheme", required=True,
        help="setting1..setting4, rank:<R>, or init",
    )
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-prefix", required=True)
    sim.set_defaults(func=_cmd_simulate)

    bench = subs.add_parser("bench", help="replicated method comparison")
    bench.add_argument("--scheme", required=True)
    bench.add_argument("--runs", type=int, default=20)
    bench.add_argument("--methods", default="supcp,cp,supsvd")
    bench.add_argument("--rank", type=int, default=5)
    bench.add_argument("--max-iters", type=int, default=1000)
    bench.add_argument("--tol", type=float, default=1e-8)
    bench.add_argument("--anneal", type=int, default=100)
    bench.add_argument("--init", choices=("random", "cp"), default="random")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--seeds", type=_parse_seeds, default=None)
    bench.add_argument("--full-sigma-f", action="store_true")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", default=None, help="optional CSV path")
    bench.set_defaults(func=_cmd_bench)

    study = subs.add_parser(
        "init-study", help="initialization and annealing comparison"
    )
    study.add_argument("--datasets", type=int, default=20)
    study.add_argument("--seed", type=int, default=0)
    study.add_argument("--max-iters", type=int, default=1000)
    study.add_argument("--tol", type=float, default=1e-5)
    study.add_argument("--jobs", type=int, default=1)
    study.add_argument("--out", default=None, help="CSV path; stdout when omitted")
    study.set_defaults(func=_cmd_init_study)

    ev = subs.add_parser("evaluate", help="log-likelihood of data under a model")
    ev.add_argument("--model", required=True)
    ev.add_argument("--x", required=True)
    ev.add_argument("--y", default=None)
    ev.set_defaults(func=_cmd_evaluate)

    con = subs.add_parser(
        "construct", help="conditional-mean array for covariate values"
    )
    con.add_argument("--model", required=True)
    con.add_argument(
        "--y-values", type=_parse_values, required=True,
        help="comma-separated covariate deviations from the training means",
    )
    con.add_argument("--out", required=True)
    con.set_defaults(func=_cmd_construct)

    return parser


def main(argv=None):
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (formats.TensorFormatError, formats.CsvParseError) as exc:
        print(f"supcp: data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"supcp: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"supcp: error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
