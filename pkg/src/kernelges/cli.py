"""Command-line entry points.

Five subcommands cover the full workflow: `generate` writes a synthetic
dataset with its ground truth, `discover` runs the greedy search on a
dataset, `evaluate` compares a recovered graph against the truth,
`diagnose` prints the residual dependence check for one family, and
`bench` drives the generate/discover/evaluate matrix into tidy CSVs.

Exit codes: 0 on success, 1 for usage or validation problems, 2 for
runtime failures such as unreadable files.
"""

import argparse
import math
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import io as artifacts
from . import synth
from .metrics import residual_hsic_diagnostic, structure_report
from .scores import MARG, OURS, SCORE_KINDS, optimize_local_score
from .search import ges

WORKERS_ENV = "KERNELGES_WORKERS"

RESULT_FIELDS = (
    "kind",
    "density",
    "n",
    "seed",
    "score_kind",
    "f1",
    "shd",
    "normalized_shd",
    "wall_time_s",
    "status",
)

SUMMARY_FIELDS = (
    "kind",
    "density",
    "n",
    "score_kind",
    "runs",
    "f1_mean",
    "f1_stderr",
    "shd_mean",
    "shd_stderr",
    "normalized_shd_mean",
    "normalized_shd_stderr",
)


def _default_workers():
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1, got {value}")
    return value


def _float_list(text):
    return tuple(float(part) for part in text.split(","))


def _int_list(text):
    return tuple(int(part) for part in text.split(","))


def _str_list(text):
    return tuple(part for part in (p.strip() for p in text.split(",")) if part)


def cmd_generate(args):
    config = synth.GenConfig(
        num_vars=args.vars,
        density=args.density,
        n=args.n,
        kind=args.kind,
        discrete_ratio=args.discrete_ratio,
        seed=args.seed,
    )
    dataset, truth = synth.generate(config)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.csv")
    meta_path = os.path.join(args.out, "meta.json")
    truth_path = os.path.join(args.out, "truth.json")
    artifacts.write_dataset(data_path, meta_path, dataset)
    artifacts.write_truth(truth_path, truth)
    for path in (data_path, meta_path, truth_path):
        print(path)
    return 0


def cmd_discover(args):
    dataset = artifacts.read_dataset(args.data, args.meta)
    started = time.perf_counter()
    result = ges(dataset, kind=args.score)
    elapsed = time.perf_counter() - started
    artifacts.write_discovery(args.out, result)
    print(args.out)
    print(
        f"score_kind={result.score_kind} total_score={result.total_score!r} "
        f"steps={len(result.steps)} wall_time_s={elapsed:.3f}"
    )
    return 0


def _load_estimated(path):
    obj = artifacts.load_json(path)
    if "graph" in obj:
        obj = obj["graph"]
    return artifacts.obj_to_cpdag(obj)


def cmd_evaluate(args):
    estimated = _load_estimated(args.graph)
    truth, _ = artifacts.read_truth(args.truth)
    report = structure_report(estimated, truth)
    artifacts.write_report(args.out, report)
    print(
        f"precision={report.precision:.4f} recall={report.recall:.4f} "
        f"f1={report.f1:.4f} shd={report.shd} "
        f"normalized_shd={report.normalized_shd:.4f}"
    )
    return 0


def cmd_diagnose(args):
    dataset = artifacts.read_dataset(args.data, args.meta)
    parents = args.parents
    trained = optimize_local_score(dataset, args.target, parents, kind=OURS)
    fixed = optimize_local_score(dataset, args.target, parents, kind=MARG)
    h_trained = residual_hsic_diagnostic(
        dataset, args.target, parents, args.candidate, trained.params
    )
    h_fixed = residual_hsic_diagnostic(
        dataset, args.target, parents, args.candidate, fixed.params
    )
    obj = {
        "target": args.target,
        "parents": list(parents),
        "candidate": args.candidate,
        "trained": {
            "sigma_x": trained.params.sigma_x,
            "sigma_p": trained.params.sigma_p,
            "sigma_eps": trained.params.sigma_eps,
            "score": trained.value,
            "hsic": h_trained,
        },
        "median_fixed": {
            "sigma_x": fixed.params.sigma_x,
            "sigma_p": fixed.params.sigma_p,
            "sigma_eps": fixed.params.sigma_eps,
            "score": fixed.value,
            "hsic": h_fixed,
        },
    }
    artifacts.dump_json(args.out, obj)
    print(f"trained_hsic={h_trained!r} median_fixed_hsic={h_fixed!r}")
    return 0


def _bench_cell(kind, density, n, seed, score_kind):
    config = synth.GenConfig(num_vars=8, density=density, n=n, kind=kind, seed=seed)
    dataset, truth = synth.generate(config)
    started = time.perf_counter()
    result = ges(dataset, kind=score_kind)
    elapsed = time.perf_counter() - started
    report = structure_report(result.cpdag, truth.dag)
    return {
        "kind": kind,
        "density": repr(float(density)),
        "n": str(int(n)),
        "seed": str(int(seed)),
        "score_kind": score_kind,
        "f1": repr(float(report.f1)),
        "shd": str(int(report.shd)),
        "normalized_shd": repr(float(report.normalized_shd)),
        "wall_time_s": f"{elapsed:.3f}",
        "status": "ok",
    }


def _row_key(row):
    return (row["kind"], row["density"], row["n"], row["seed"], row["score_kind"])


def _read_rows(path):
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _write_rows(path, fields, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _mean_stderr(values):
    m = len(values)
    if m == 0:
        return float("nan"), float("nan")
    mean = sum(values) / m
    if m == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


def summarize_rows(rows):
    cells = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = (row["kind"], row["density"], row["n"], row["score_kind"])
        cells.setdefault(key, []).append(row)
    out = []
    for key in sorted(cells):
        kind, density, n, score_kind = key
        group = cells[key]
        entry = {
            "kind": kind,
            "density": density,
            "n": n,
            "score_kind": score_kind,
            "runs": str(len(group)),
        }
        for field in ("f1", "shd", "normalized_shd"):
            mean, stderr = _mean_stderr([float(r[field]) for r in group])
            entry[f"{field}_mean"] = repr(mean)
            entry[f"{field}_stderr"] = repr(stderr)
        out.append(entry)
    return out


def run_bench(
    out_dir,
    densities,
    sizes,
    kinds,
    reps,
    score_kinds,
    base_seed=0,
    workers=1,
):
    """Run the generate/discover/evaluate matrix, resuming completed rows.

    Every (kind, density, n, rep) cell shares one dataset across score
    kinds: the same seed feeds the generator, so the comparison between
    score kinds is paired. Returns the results and summary CSV paths.
    """
    for kind in kinds:
        if kind not in synth.DATA_KINDS:
            raise ValueError(f"unknown data kind {kind!r}")
    for score_kind in score_kinds:
        if score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {score_kind!r}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(out_dir, "results.csv")
    summary_path = os.path.join(out_dir, "summary.csv")

    done = {_row_key(r) for r in _read_rows(results_path) if r["status"] == "ok"}
    kept = [r for r in _read_rows(results_path) if r["status"] == "ok"]

    pending = []
    for kind in kinds:
        for density in densities:
            for n in sizes:
                for rep in range(reps):
                    seed = base_seed + rep
                    for score_kind in score_kinds:
                        spec = (kind, density, n, seed, score_kind)
                        key = (
                            kind,
                            repr(float(density)),
                            str(int(n)),
                            str(int(seed)),
                            score_kind,
                        )
                        if key not in done:
                            pending.append(spec)

    def attempt(spec):
        kind, density, n, seed, score_kind = spec
        try:
            return _bench_cell(kind, density, n, seed, score_kind)
        except Exception as exc:  # keep the matrix going on one bad cell
            return {
                "kind": kind,
                "density": repr(float(density)),
                "n": str(int(n)),
                "seed": str(int(seed)),
                "score_kind": score_kind,
                "f1": "",
                "shd": "",
                "normalized_shd": "",
                "wall_time_s": "",
                "status": f"failed: {exc}",
            }

    fresh = []
    if pending:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                fresh = list(pool.map(attempt, pending))
        else:
            fresh = [attempt(spec) for spec in pending]

    rows = kept + fresh
    rows.sort(key=lambda r: (r["kind"], float(r["density"]), int(r["n"]), int(r["seed"]), r["score_kind"]))
    _write_rows(results_path, RESULT_FIELDS, rows)
    _write_rows(summary_path, SUMMARY_FIELDS, summarize_rows(rows))
    return results_path, summary_path


def cmd_bench(args):
    results_path, summary_path = run_bench(
        args.out,
        args.densities,
        args.sizes,
        args.kinds,
        args.reps,
        args.score_kinds,
        base_seed=args.seed,
        workers=args.workers,
    )
    print(results_path)
    print(summary_path)
    return 0


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser():
    parser = _Parser(prog="kernelges", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset", parents=[])
    gen.add_argument("--vars", type=int, default=8)
    gen.add_argument("--density", type=float, default=0.5)
    gen.add_argument("--n", type=int, default=200)
    gen.add_argument("--kind", choices=synth.DATA_KINDS, default=synth.CONTINUOUS)
    gen.add_argument("--discrete-ratio", type=float, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=".")
    gen.set_defaults(func=cmd_generate)

    disc = sub.add_parser("discover", help="run greedy search on a dataset")
    disc.add_argument("--data", required=True)
    disc.add_argument("--meta", required=True)
    disc.add_argument("--score", choices=SCORE_KINDS, default=OURS)
    disc.add_argument("--out", default="discovery.json")
    disc.add_argument("--workers", type=int, default=None)
    disc.set_defaults(func=cmd_discover)

    ev = sub.add_parser("evaluate", help="compare a recovered graph to truth")
    ev.add_argument("--graph", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", default="report.json")
    ev.set_defaults(func=cmd_evaluate)

    diag = sub.add_parser("diagnose", help="residual dependence check")
    diag.add_argument("--data", required=True)
    diag.add_argument("--meta", required=True)
    diag.add_argument("--target", required=True)
    diag.add_argument("--parents", type=_str_list, default=())
    diag.add_argument("--candidate", required=True)
    diag.add_argument("--out", default="diagnosis.json")
    diag.set_defaults(func=cmd_diagnose)

    bench = sub.add_parser("bench", help="run the benchmark matrix")
    bench.add_argument("--out", required=True)
    bench.add_argument("--densities", type=_float_list, default=(0.2, 0.5, 0.8))
    bench.add_argument("--sizes", type=_int_list, default=(200,))
    bench.add_argument("--kinds", type=_str_list, default=(synth.CONTINUOUS,))
    bench.add_argument("--reps", type=int, default=5)
    bench.add_argument(
        "--score-kinds", dest="score_kinds", type=_str_list, default=(OURS, MARG)
    )
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--workers", type=int, default=None)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", None) is None:
        try:
            workers = _default_workers()
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if hasattr(args, "workers"):
            args.workers = workers
    elif getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run():
    raise SystemExit(main())


if __name__ == "__main__":
    run()
