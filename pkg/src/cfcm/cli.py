"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import chisquare

from .estimator import ALGORITHMS, CFCCMaximizer, check_graph, evaluate_cfcc
from .exact import ConvergenceError, DenseLimitError, exhaustive_optimum, forest_count
from .graph import GraphFormatError, largest_connected_component, load_edge_list
from .greedy import DEFAULT_R_MAX
from .sampler import SamplerError, forest_codes, sample_forests
from .schur import SchurSingularError

log = logging.getLogger("cfcm")

CSV_COLUMNS = ["algo", "graph", "n", "m", "k", "eps", "seed", "iter", "node", "samples",
               "cfcc", "seconds"]
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SAMPLER_CHECK_MAX_FORESTS = 10**5


class UsageError(Exception):
    pass


@dataclass
class ResultRecord:
    """One selection run. Per-iteration lists are aligned with ``nodes``;
    ``cfcc[i]`` is the CFCC of the first i+1 chosen nodes."""

    algorithm: str
    graph: str
    n: int
    m: int
    k: int
    eps: float
    seed: int
    nodes: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    cfcc: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    evaluation: str = "dense"

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ResultRecord":
        return cls(**json.loads(text))

    def csv_rows(self) -> list:
        rows = []
        for i, node in enumerate(self.nodes):
            rows.append({"algo": self.algorithm, "graph": self.graph, "n": self.n, "m": self.m,
                         "k": self.k, "eps": repr(float(self.eps)), "seed": self.seed,
                         "iter": i + 1, "node": node, "samples": self.samples[i],
                         "cfcc": repr(float(self.cfcc[i])),
                         "seconds": repr(float(self.seconds[i]))})
        return rows

    @classmethod
    def from_csv_rows(cls, rows, evaluation="dense") -> list:
        """Group CSV rows back into records (in order of first appearance)."""
        out = []
        key = None
        for r in rows:
            this = (r["algo"], r["graph"], r["k"], r["eps"], r["seed"])
            if this != key or int(r["iter"]) == 1:
                key = this
                out.append(cls(r["algo"], r["graph"], int(r["n"]), int(r["m"]), int(r["k"]),
                               float(r["eps"]), int(r["seed"]), evaluation=evaluation))
            rec = out[-1]
            rec.nodes.append(int(r["node"]))
            rec.samples.append(int(r["samples"]))
            rec.cfcc.append(float(r["cfcc"]))
            rec.seconds.append(float(r["seconds"]))
        return out


def write_csv(records, stream):
    w = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerows(rec.csv_rows())


def read_csv(stream) -> list:
    return ResultRecord.from_csv_rows(csv.DictReader(stream))


def _emit(text: str, out):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _emit_records(records, fmt, out):
    if fmt == "json":
        body = (records[0].to_json() if len(records) == 1
                else json.dumps([asdict(r) for r in records]))
        _emit(body + "\n", out)
    else:
        buf = io.StringIO()
        write_csv(records, buf)
        _emit(buf.getvalue(), out)


def _load(args):
    if not os.path.exists(args.graph):
        raise FileNotFoundError(f"graph file not found: {args.graph}")
    g = load_edge_list(args.graph)
    if getattr(args, "lcc", False):
        g = largest_connected_component(g)
    return check_graph(g)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _schur_roots(text):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--schur-roots takes 'auto' or an integer")
    if v < 0:
        raise argparse.ArgumentTypeError("--schur-roots must be non-negative")
    return v


def _eps(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("--eps must lie in (0, 1)")
    return v


def _run_one(g, name, algo, k, eps, args) -> ResultRecord:
    model = CFCCMaximizer(k=k, algorithm=algo, eps=eps, seed=args.seed, workers=args.threads,
                          r_max=args.rmax, schur_roots=args.schur_roots,
                          evaluation=args.eval_method)
    t0 = time.perf_counter()
    model.fit(g)
    log.info("%s k=%d eps=%g done in %.2fs", algo, k, eps, time.perf_counter() - t0)
    trace = model.trace_
    cfcc = [evaluate_cfcc(g, trace.nodes[:i + 1], args.eval_method, seed=args.seed)
            for i in range(len(trace) - 1)] + [model.cfcc_]
    method = args.eval_method if args.eval_method != "auto" else (
        "dense" if g.n <= 5000 else "cg")
    return ResultRecord(algo, name, g.n, g.m, k, eps, args.seed, list(model.selected_labels_),
                        list(trace.samples), cfcc, list(trace.seconds), method)


def cmd_maximize(args):
    g = _load(args)
    rec = _run_one(g, os.path.basename(args.graph), args.algo, args.k, args.eps, args)
    _emit_records([rec], args.format, args.out)


def cmd_evaluate(args):
    g = _load(args)
    nodes = g.to_dense(args.set)
    if len(set(nodes)) != len(nodes) or not nodes:
        raise UsageError("--set must list distinct nodes")
    value = evaluate_cfcc(g, nodes, args.method, probes=args.probes, tol=args.tol, seed=args.seed)
    row = {"graph": os.path.basename(args.graph), "set": args.set, "method": args.method,
           "cfcc": value}
    if args.format == "json":
        _emit(json.dumps(row) + "\n", args.out)
    else:
        _emit(f"graph,set,method,cfcc\n{row['graph']},{' '.join(map(str, args.set))},"
              f"{args.method},{value!r}\n", args.out)


def cmd_optimum(args):
    g = _load(args)
    t0 = time.perf_counter()
    best, value = exhaustive_optimum(g, args.k)
    labels = g.to_original(best)
    row = {"graph": os.path.basename(args.graph), "k": args.k, "set": labels, "cfcc": value,
           "seconds": time.perf_counter() - t0}
    if args.format == "json":
        _emit(json.dumps(row) + "\n", args.out)
    else:
        _emit(f"graph,k,set,cfcc,seconds\n{row['graph']},{args.k},"
              f"{' '.join(map(str, labels))},{value!r},{row['seconds']!r}\n", args.out)


def sampler_chi_square(g, roots, samples, seed):
    """(statistic, p-value, forests) for the empirical forest distribution."""
    total = forest_count(g, roots)
    if total > SAMPLER_CHECK_MAX_FORESTS:
        raise UsageError(f"{total:.0f} rooted forests is too many to check by chi-square")
    total = int(round(total))
    parents, _, _ = sample_forests(g, roots, seed, 0, samples)
    _, counts = np.unique(forest_codes(parents, roots), return_counts=True)
    if counts.size > total:
        raise AssertionError("sampled more distinct forests than exist")
    observed = np.concatenate([counts, np.zeros(total - counts.size)])
    if total == 1:
        return 0.0, 1.0, total
    stat, p = chisquare(observed)
    return float(stat), float(p), total


def cmd_sampler_check(args):
    g = _load(args)
    roots = g.to_dense(args.roots)
    stat, p, total = sampler_chi_square(g, roots, args.samples, args.seed)
    ok = p > args.alpha
    row = {"graph": os.path.basename(args.graph), "roots": args.roots, "forests": total,
           "samples": args.samples, "chi2": stat, "p": p, "pass": ok}
    if args.format == "json":
        _emit(json.dumps(row) + "\n", args.out)
    else:
        _emit("graph,roots,forests,samples,chi2,p,pass\n"
              f"{row['graph']},{' '.join(map(str, args.roots))},{total},{args.samples},"
              f"{stat!r},{p!r},{ok}\n", args.out)
    if not ok:
        raise SamplerError(f"forest frequencies fail chi-square (p={p:.3g})")


def cmd_bench(args):
    g = _load(args)
    name = os.path.basename(args.graph)
    records = []
    for algo in args.algo:
        if algo not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {algo!r}")
        for k in args.k:
            for eps in args.eps:
                rec = _run_one(g, name, algo, k, eps, args)
                # one row per run: final set, total forests and total time
                records.append(ResultRecord(
                    algo, name, g.n, g.m, k, eps, args.seed, [rec.nodes[-1]],
                    [int(sum(rec.samples))], [rec.cfcc[-1]], [float(sum(rec.seconds))],
                    rec.evaluation))
    if args.format == "json":
        _emit(json.dumps([asdict(r) for r in records]) + "\n", args.out)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            row = rec.csv_rows()[0]
            row["iter"] = rec.k
            w.writerow(row)
        _emit(buf.getvalue(), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfcm", description="Group current-flow closeness maximization")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt="csv"):
        sp.add_argument("--graph", required=True, help="edge list file")
        sp.add_argument("--lcc", action="store_true", help="restrict to the largest component")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--format", choices=["csv", "json"], default=fmt)

    def runner(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores)")
        sp.add_argument("--schur-roots", type=_schur_roots, default="auto")
        sp.add_argument("--rmax", type=int, default=DEFAULT_R_MAX)
        sp.add_argument("--eval-method", choices=["auto", "dense", "cg"], default="auto")

    m = sub.add_parser("maximize", help="select k nodes")
    common(m, fmt="json")
    runner(m)
    m.add_argument("--algo", choices=ALGORITHMS, default="schur")
    m.add_argument("--k", type=int, required=True)
    m.add_argument("--eps", type=_eps, default=0.2)
    m.set_defaults(func=cmd_maximize)

    e = sub.add_parser("evaluate", help="CFCC of a given node set")
    common(e, fmt="json")
    e.add_argument("--set", type=_int_list, required=True, help="comma-separated node labels")
    e.add_argument("--method", choices=["dense", "cg"], default="dense")
    e.add_argument("--probes", type=int, default=128)
    e.add_argument("--tol", type=float, default=1e-8)
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("optimum", help="exhaustive best k-set")
    common(o, fmt="json")
    o.add_argument("--k", type=int, required=True)
    o.set_defaults(func=cmd_optimum)

    s = sub.add_parser("sampler-check", help="chi-square test of forest frequencies")
    common(s, fmt="json")
    runner(s)
    s.add_argument("--roots", type=_int_list, required=True)
    s.add_argument("--samples", type=int, default=10**5)
    s.add_argument("--alpha", type=float, default=1e-3)
    s.set_defaults(func=cmd_sampler_check)

    b = sub.add_parser("bench", help="sweep eps and k, one CSV row per run")
    common(b)
    runner(b)
    b.add_argument("--algo", type=lambda t: t.split(","), default=["forest", "schur"])
    b.add_argument("--k", type=_int_list, required=True)
    b.add_argument("--eps", type=_float_list, default=[0.3, 0.2, 0.15])
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        if getattr(args, "rmax", 1) < 1:
            raise UsageError("--rmax must be positive")
        if args.command == "bench" and any(not 0 < e < 1 for e in args.eps):
            raise UsageError("--eps values must lie in (0, 1)")
        args.func(args)
    except (UsageError, DenseLimitError) as exc:
        print(f"cfcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, GraphFormatError, IsADirectoryError, PermissionError) as exc:
        print(f"cfcm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SchurSingularError, ConvergenceError, SamplerError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"cfcm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"cfcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
