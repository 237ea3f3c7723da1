"""Command-line interface.

Every command is a thin shell over the library: identical seeds give
byte-identical outputs whether the work is done here or through the
Python API.  Randomized commands require an explicit --seed; there is
no implicit entropy anywhere.

Exit codes: 0 success, 2 usage or validation error, 3 iteration cap
exceeded, 4 sequential forced stop (output is still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import designs, diagnostics, inference, sequential, tabular
from .balance import build_cache, mahalanobis
from .errors import IterationCapExceeded, RebalanceError
from .rng import stream

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ITER_CAP = 3
EXIT_FORCED_STOP = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads() -> int:
    env = os.environ.get("REBALANCE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_design_args(p: argparse.ArgumentParser, with_nt: bool = True) -> None:
    p.add_argument("--covariates", required=True, help="covariate matrix CSV (n rows, p columns)")
    p.add_argument("--method", required=True, choices=designs.METHODS)
    if with_nt:
        p.add_argument("--nt", type=int, required=True, help="number of treated units")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--pa", type=float, help="acceptance probability (sets the threshold)")
    group.add_argument("--a", type=float, help="balance threshold directly")
    p.add_argument("--gamma", type=float, default=designs.DEFAULT_GAMMA)
    p.add_argument("--max-total-iters", type=int, default=designs.DEFAULT_MAX_TOTAL_ITERS)
    p.add_argument("--seed", type=int, required=True)


def _spec_from_args(args, n_t: int | None = None) -> designs.DesignSpec:
    return designs.DesignSpec(
        method=args.method,
        n_t=args.nt if n_t is None else n_t,
        threshold=args.a,
        acceptance_prob=args.pa,
        gamma=args.gamma,
        max_total_iters=args.max_total_iters,
        seed=args.seed,
    )


def _trace_doc(trace: designs.SampleTrace, seed: int) -> dict:
    threshold = trace.threshold
    return {
        "final_m": trace.final_m,
        "threshold": None if math.isinf(threshold) else threshold,
        "meets_threshold": bool(trace.meets_threshold),
        "inner_iters": trace.inner_iters,
        "outer_iters": trace.outer_iters,
        "total_iters": trace.total_iters,
        "wall_clock": trace.wall_clock,
        "forced_stop": trace.forced_stop,
        "seed": seed,
    }


def _write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_result(path: str | None, doc: dict, fmt: str) -> None:
    if fmt == "json":
        _write_json(path, doc)
        return
    keys = list(doc)
    rows = [[doc[k] if doc[k] is not None else "" for k in keys]]
    if path is None or path == "-":
        import io

        buf = io.StringIO()
        import csv as _csv

        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(keys)
        writer.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        tabular.write_table(path, rows, headers=keys)


def cmd_design(args) -> int:
    x = tabular.read_matrix(args.covariates)
    spec = _spec_from_args(args)
    cache = build_cache(x, spec.n_t)
    trace = designs.sample(cache, spec, stream(args.seed))
    tabular.write_assignment(args.out, trace.assignment)
    if args.trace:
        _write_json(args.trace, _trace_doc(trace, args.seed))
    return EXIT_OK


def cmd_sample(args) -> int:
    x = tabular.read_matrix(args.covariates)
    spec = _spec_from_args(args)
    cache = build_cache(x, spec.n_t)
    traces = designs.sample_many(cache, spec, args.b, seed=args.seed, threads=args.threads)
    matrix = np.stack([t.assignment for t in traces], axis=1)
    tabular.write_matrix(args.out, matrix)
    if args.summary:
        doc = {
            "b": args.b,
            "seed": args.seed,
            "method": spec.method,
            "threshold": None if math.isinf(traces[0].threshold) else traces[0].threshold,
            "draws": [_trace_doc(t, args.seed) for t in traces],
        }
        _write_json(args.summary, doc)
    return EXIT_OK


def _experiment_from_args(args) -> inference.ObservedExperiment:
    x = tabular.read_matrix(args.covariates)
    y = tabular.read_vector(args.outcomes)
    w = tabular.read_assignment(args.assignment)
    spec = _spec_from_args(args, n_t=int(w.sum()))
    return inference.ObservedExperiment(covariates=x, w_obs=w, outcomes=y, design=spec)


def cmd_frt(args) -> int:
    exp = _experiment_from_args(args)
    result = inference.frt(
        exp, args.b, args.seed, enumeration_cap=args.enumeration_cap, plus_one=args.plus_one
    )
    doc = result.to_dict()
    doc["design_echo"] = {
        "method": args.method,
        "n_t": exp.n_t,
        "pa": args.pa,
        "a": args.a,
        "gamma": args.gamma,
    }
    _write_result(args.out, doc, args.format)
    return EXIT_OK


def cmd_ci(args) -> int:
    if not 0 < args.alpha < 1:
        raise RebalanceError(f"--alpha must be in (0, 1), got {args.alpha}")
    exp = _experiment_from_args(args)
    if args.ci_method == "exact":
        result = inference.ci_exact(
            exp, args.b, args.alpha, args.seed, enumeration_cap=args.enumeration_cap
        )
    else:
        result = inference.ci_bisection(
            exp, args.b, args.alpha, args.seed, tol=args.tol,
            enumeration_cap=args.enumeration_cap,
        )
    _write_result(args.out, result.to_dict(), args.format)
    return EXIT_OK


def _load_schedule(path: str) -> sequential.Schedule:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return sequential.Schedule(
            group_sizes=tuple(doc["group_sizes"]),
            treated_sizes=tuple(doc["treated_sizes"]),
            draws=tuple(doc["draws"]),
            cap_multiplier=int(doc.get("cap_multiplier", 10)),
        )
    except KeyError as exc:
        raise RebalanceError(f"schedule document missing field {exc}") from None


def cmd_seq_init(args) -> int:
    schedule = _load_schedule(args.schedule)
    session = sequential.new_session(schedule, args.method, args.seed, args.gamma)
    sequential.save_session(session, args.session)
    return EXIT_OK


def cmd_seq_next(args) -> int:
    session = sequential.load_session(args.session)
    if session.complete:
        raise RebalanceError(
            f"session already complete ({session.k_done}/{session.schedule.k_total} groups)"
        )
    x_k = tabular.read_matrix(args.covariates)
    session, trace = sequential.seq_next_group(session, x_k)
    sequential.save_session(session, args.session)
    tabular.write_assignment(args.out, trace.assignment)
    doc = _trace_doc(trace, session.base_seed)
    doc["group"] = session.k_done
    if args.trace:
        _write_json(args.trace, doc)
    if trace.forced_stop:
        print(
            f"forced stop in group {session.k_done}: best M = {trace.final_m:.6g} "
            f"> threshold {trace.threshold:.6g}",
            file=sys.stderr,
        )
        return EXIT_FORCED_STOP
    return EXIT_OK


def cmd_metrics(args) -> int:
    mat = tabular.read_assignment_matrix(args.samples)
    samples = mat.T  # stored n-by-B, diagnostics wants draws in rows
    report = diagnostics.randomness_report(samples)
    _write_result(args.out, report.to_dict(), args.format)
    if args.pair_props:
        tabular.write_table(args.pair_props, [[v] for v in report.pair_props], headers=["p_r"])
    return EXIT_OK


def cmd_check(args) -> int:
    x = tabular.read_matrix(args.covariates)
    w = tabular.read_assignment(args.assignment)
    cache = build_cache(x, int(w.sum()))
    m = mahalanobis(cache, w)
    doc = {"n": int(w.shape[0]), "n_t": int(w.sum()), "m": m}
    if args.a is not None or args.pa is not None:
        a = args.a if args.a is not None else designs.threshold_from_pa(x.shape[1], args.pa)
        doc["threshold"] = a
        doc["acceptable"] = bool(m <= a)
    _write_result(args.out, doc, args.format)
    return EXIT_OK


def _load_bench_config(path: str) -> bench_mod.BenchConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    seq = None
    if "sequential" in doc:
        block = doc.pop("sequential")
        try:
            seq = bench_mod.SeqBenchSpec(
                group_sizes=tuple(block["group_sizes"]),
                treated_sizes=tuple(block["treated_sizes"]),
                draws=tuple(block["draws"]),
                cap_multiplier=int(block.get("cap_multiplier", 10)),
            )
        except KeyError as exc:
            raise RebalanceError(f"bench config [sequential] missing field {exc}") from None
    if "methods" in doc:
        doc["methods"] = tuple(doc["methods"])
    try:
        return bench_mod.BenchConfig(sequential=seq, **doc)
    except TypeError as exc:
        raise RebalanceError(f"bench config: {exc}") from None


def cmd_bench(args) -> int:
    cfg = _load_bench_config(args.config)
    result = bench_mod.run_bench(cfg)
    rows = [[row[col] for col in bench_mod.RESULT_COLUMNS] for row in result.rows]
    tabular.write_table(args.out, rows, headers=list(bench_mod.RESULT_COLUMNS))
    if args.figures:
        from .figures import render_bench_figures

        fig_dir = args.fig_dir or str(Path(args.out).parent or ".")
        for path in render_bench_figures(result, fig_dir):
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rebalance", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[], help="draw one assignment")
    _add_design_args(p)
    p.add_argument("--out", required=True, help="assignment CSV (one 0/1 column)")
    p.add_argument("--trace", help="optional trace JSON")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("sample", help="draw B assignments")
    _add_design_args(p)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--out", required=True, help="n-by-B 0/1 matrix CSV")
    p.add_argument("--summary", help="optional per-draw summary JSON")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("frt", help="randomization test of the sharp null")
    _add_design_args(p, with_nt=False)
    p.add_argument("--outcomes", required=True)
    p.add_argument("--assignment", required=True, help="observed assignment CSV")
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--plus-one", action="store_true", help="use the (1+count)/(1+B) p-value")
    p.add_argument("--enumeration-cap", type=int, default=inference.DEFAULT_ENUMERATION_CAP)
    p.add_argument("--out", help="result document (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_frt)

    p = sub.add_parser("ci", help="confidence interval by test inversion")
    _add_design_args(p, with_nt=False)
    p.add_argument("--outcomes", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--ci-method", choices=("exact", "bisection"), default="exact")
    p.add_argument("--tol", type=float, help="bisection tolerance (default 1e-6 x bracket)")
    p.add_argument("--enumeration-cap", type=int, default=inference.DEFAULT_ENUMERATION_CAP)
    p.add_argument("--out", help="result document (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("seq", help="group-sequential sessions")
    seq_sub = p.add_subparsers(dest="seq_command", required=True)

    q = seq_sub.add_parser("init", help="create a session file")
    q.add_argument("--schedule", required=True, help="schedule JSON")
    q.add_argument("--method", required=True, choices=sequential.SEQ_METHODS)
    q.add_argument("--gamma", type=float, default=10.0)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--session", required=True, help="session file to create")
    q.set_defaults(func=cmd_seq_init)

    q = seq_sub.add_parser("next", help="assign the next group")
    q.add_argument("--session", required=True)
    q.add_argument("--covariates", required=True, help="covariates of the arriving group")
    q.add_argument("--out", required=True, help="group assignment CSV")
    q.add_argument("--trace", help="optional trace JSON")
    q.set_defaults(func=cmd_seq_next)

    p = sub.add_parser("metrics", help="randomness metrics of sampled assignments")
    p.add_argument("--samples", required=True, help="n-by-B 0/1 matrix CSV")
    p.add_argument("--pair-props", help="optional CSV of pairwise same-group proportions")
    p.add_argument("--out", help="report document (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="run the simulation benchmark")
    p.add_argument("--config", required=True, help="bench config TOML")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="render figures next to the results CSV")
    p.add_argument("--fig-dir", help="directory for figures (default: beside --out)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="verify an assignment against covariates")
    p.add_argument("--covariates", required=True)
    p.add_argument("--assignment", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--pa", type=float)
    group.add_argument("--a", type=float)
    p.add_argument("--out", help="result document (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IterationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ITER_CAP
    except RebalanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
