"""Command-line front end.

Every subcommand computes everything in memory first and only then writes its
artifacts, so a failure leaves the output directory untouched. Exit codes:
0 success, 1 usage or configuration, 2 data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import baselines as bl
from .config import ConfigError, RunConfig, build_problem, load_config, load_domain
from .gp import GPError
from .grid import GridError, load_grid, negate_values, write_grid
from .gumbel import EstimationError, Estimator
from .mobo import OptimizationError, run
from .objectives import EVALUATION_COLUMNS, ProblemDefinition, evaluation_row
from .pareto import hypervolume_2d
from .validate import ValidationError, full_domain_problem, out_of_sample, synthetic_replications

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- formatting

def _spec_str(spec: Sequence[int]) -> str:
    return "x".join(str(int(d)) for d in spec)


def _parse_spec(text: str) -> Tuple[int, ...]:
    try:
        spec = tuple(int(p) for p in text.strip().split("x"))
    except ValueError:
        raise DataError(f"malformed spec {text!r}") from None
    if not spec:
        raise DataError("empty spec")
    return spec


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


ARCHIVE_COLUMNS = ("decision", "spec", "m", "f1", "f2")


def _front_rows(problem: ProblemDefinition, items) -> List[list]:
    """``items`` are ``(decision, f1, f2)`` already sorted by f1."""
    rows = []
    for decision, f1, f2 in items:
        spec = problem.expand(decision)
        rows.append([_spec_str(decision), _spec_str(spec), math.prod(spec), f1, f2])
    return rows


def _evaluation_table(problem: ProblemDefinition, decisions, extra=None) -> str:
    extra = extra or []
    header = [name for name, _ in extra] + list(EVALUATION_COLUMNS)
    rows = []
    for i, d in enumerate(decisions):
        row = evaluation_row(problem, d)
        rows.append([fn(i) for _, fn in extra] + [row[c] for c in EVALUATION_COLUMNS])
    return _csv(header, rows)


def _write(out: Path, files: Dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _out_dir(args, cfg: Optional[RunConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is None:
        raise UsageError("--out is required without --config")
    return Path(cfg.output)


def _need_config(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    return load_config(args.config)


def _read_csv(path: Path) -> List[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None


def _reference_arg(args) -> Optional[Tuple[float, float]]:
    if getattr(args, "reference", None):
        try:
            a, b = (float(v) for v in args.reference.split(","))
        except ValueError:
            raise UsageError(f"--reference expects 'r1,r2', got {args.reference!r}") from None
        return a, b
    if getattr(args, "mobo_run", None):
        ref = _read_json(Path(args.mobo_run) / "summary.json").get("reference")
        if ref is None:
            raise DataError(f"{args.mobo_run} has no reference point in summary.json")
        return float(ref[0]), float(ref[1])
    return None


# ---------------------------------------------------------------- commands

def cmd_optimize(args) -> int:
    cfg = _need_config(args)
    opt = cfg.optimizer.build(args.seed)
    out = _out_dir(args, cfg)
    problem = build_problem(cfg)
    start = time.perf_counter()
    result = run(problem, opt)
    wall = time.perf_counter() - start

    log = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in result.log)
    archive = _csv(ARCHIVE_COLUMNS, _front_rows(problem, result.archive.sorted_rows()))
    traj = _csv(("t", "hv"), list(enumerate(result.hv_trajectory)))
    evals = _evaluation_table(
        problem, [e.decision for e in result.evaluations],
        [("iteration", lambda i: result.evaluations[i].iteration),
         ("phase", lambda i: result.evaluations[i].phase.value),
         ("added", lambda i: int(result.evaluations[i].added))])
    cum, timing_rows = 0.0, []
    for i, s in enumerate(result.iteration_times, start=1):
        cum += s
        timing_rows.append((i, s, cum))
    summary = {
        "command": "optimize",
        "stop_reason": result.stop_reason.value,
        "iterations": result.iterations,
        "evaluations": len(result.evaluations),
        "reference": list(result.reference),
        "final_hv": result.final_hv,
        "archive_size": len(result.archive),
        "seed": opt.seed,
        "wall_time": wall,
        "phase_times": result.phase_times,
    }
    _write(out, {"run_log.jsonl": log, "archive.csv": archive, "hv_trajectory.csv": traj,
                 "evaluations.csv": evals, "timing.csv": _csv(
                     ("iteration", "seconds", "cumulative_seconds"), timing_rows),
                 "summary.json": _json(summary)})
    print(f"{result.stop_reason.value} after {result.iterations} iterations; "
          f"{len(result.archive)} archive points; HV {result.final_hv:.6g}; wrote {out}")
    return EXIT_OK


def _baseline_artifacts(problem, run_: bl.BaselineRun, reference, extra: dict) -> Dict[str, str]:
    decisions = [rec.decision for rec in run_.records]
    front = [(rec.decision, rec.pair.f1, rec.pair.f2) for rec in run_.front()]
    files = {
        "evaluations.csv": _evaluation_table(problem, decisions, [("order", lambda i: i + 1)]),
        "front.csv": _csv(ARCHIVE_COLUMNS, _front_rows(problem, front)),
        "timing.csv": _csv(("evaluation", "seconds", "cumulative_seconds"),
                           [(i + 1, rec.elapsed, c) for i, (rec, c) in
                            enumerate(zip(run_.records, run_.cumulative_time()))]),
    }
    summary = {"strategy": run_.strategy.value, "budget": run_.budget, "seed": run_.seed,
               "evaluations": len(run_.records),
               "feasible": len(run_.feasible_records()),
               "front_size": len(front),
               "reference": list(reference) if reference else None,
               "wall_time": run_.wall_time}
    if reference:
        summary["hv"] = run_.hypervolume(reference)
        files["hv_trajectory.csv"] = _csv(("step", "hv"),
                                          list(enumerate(run_.hv_trajectory(reference), 1)))
    summary.update(extra)
    files["summary.json"] = _json(summary)
    return files


def cmd_enumerate(args) -> int:
    cfg = _need_config(args)
    out = _out_dir(args, cfg)
    reference = _reference_arg(args)
    problem = build_problem(cfg)
    run_ = bl.enumerate_all(problem, cfg.baselines.enumeration_cap, args.workers, args.timing)
    files = _baseline_artifacts(problem, run_, reference, {"command": "enumerate"})
    _write(out, files)
    print(f"enumerated {len(run_.records)} decisions; exact front has "
          f"{len(run_.front())} points; wrote {out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _need_config(args)
    out = _out_dir(args, cfg)
    reference = _reference_arg(args)
    budget = args.budget
    if budget is None and args.mobo_run:
        budget = int(_read_json(Path(args.mobo_run) / "summary.json")["evaluations"])
    if budget is None:
        budget = (cfg.baselines.random_budget if args.strategy == "random"
                  else cfg.baselines.structured_budget)
    if budget is None:
        raise UsageError("no budget: pass --budget, --mobo-run or set it in the config")
    problem = build_problem(cfg)
    if args.strategy == "random":
        seed = args.seed if args.seed is not None else 0
        run_ = bl.random_baseline(problem, budget, seed, args.workers, args.timing)
    else:
        counts = cfg.baselines.structured_counts
        run_ = bl.structured_grid(problem, budget, counts, args.workers, args.timing)
    files = _baseline_artifacts(problem, run_, reference, {"command": "baseline"})
    _write(out, files)
    print(f"{args.strategy} baseline: {len(run_.records)} evaluations; wrote {out}")
    return EXIT_OK


def _front_specs(path: Path) -> List[Tuple[int, ...]]:
    rows = _read_csv(path)
    if not rows:
        raise DataError(f"front file {path} has no rows")
    if "spec" not in rows[0]:
        raise DataError(f"front file {path} has no 'spec' column")
    return [_parse_spec(r["spec"]) for r in rows]


def cmd_validate(args) -> int:
    cfg = _need_config(args)
    out = _out_dir(args, cfg)
    if not args.front:
        raise UsageError("--front is required")
    specs = _front_specs(Path(args.front))
    estimator = Estimator(cfg.problem.estimator.upper())
    negate = cfg.data.transform == "negate"
    sources = args.test_source or cfg.validation.test_paths
    if sources:
        def problems():
            for path in sources:
                dom = load_grid(path)
                if negate:
                    dom = negate_values(dom)
                yield full_domain_problem(dom, estimator)
    else:
        recipe = cfg.data.synthetic
        if recipe is None:
            raise UsageError("validation needs --test-source files or a synthetic data recipe")
        seed = args.seed if args.seed is not None else cfg.validation.seed
        problems = lambda: synthetic_replications(  # noqa: E731
            recipe.shape, recipe.mean, recipe.stddev, cfg.validation.replications, seed,
            lambda d: full_domain_problem(d, estimator))
    report = out_of_sample(specs, problems(), args.workers)
    raw_rows = []
    for r in report.rows:
        for f1, f2 in zip(r.f1, r.f2):
            raw_rows.append((_spec_str(r.spec), f1, f2))
    fail_rows = [(_spec_str(r.spec), k, msg) for r in report.rows for k, msg in r.failures]
    files = {"validation.csv": report.to_csv(),
             "validation_raw.csv": _csv(("spec", "f1", "f2"), raw_rows),
             "validation_failures.csv": _csv(("spec", "replication", "error"), fail_rows)}
    _write(out, files)
    print(f"validated {len(specs)} specs on {report.replications} test domains; wrote {out}")
    return EXIT_OK


def _points_from_evaluations(path: Path) -> List[Tuple[float, float]]:
    pts = []
    for row in _read_csv(path):
        if row.get("f1") and row.get("f2"):
            try:
                pts.append((float(row["f1"]), float(row["f2"])))
            except ValueError:
                raise DataError(f"bad objective values in {path}") from None
    return pts


def _timing_series(path: Path) -> List[float]:
    if not path.exists():
        return []
    return [float(r["cumulative_seconds"]) for r in _read_csv(path)]


def cmd_compare(args) -> int:
    if not args.mobo_run:
        raise UsageError("--mobo-run is required")
    out = Path(args.out) if args.out else None
    if out is None:
        raise UsageError("--out is required")
    mobo_dir = Path(args.mobo_run)
    summary = _read_json(mobo_dir / "summary.json")
    r = (float(summary["reference"][0]), float(summary["reference"][1]))
    mobo_hv = hypervolume_2d(
        [(float(row["f1"]), float(row["f2"])) for row in _read_csv(mobo_dir / "archive.csv")], r)
    rows = [("mobo", "mobo", summary["evaluations"], mobo_hv, 0.0, summary.get("wall_time", ""))]
    hv_series = [("mobo", int(row["t"]), float(row["hv"]))
                 for row in _read_csv(mobo_dir / "hv_trajectory.csv")]
    time_series = [("mobo", i + 1, t) for i, t in enumerate(_timing_series(mobo_dir / "timing.csv"))]
    for k, d in enumerate(args.baseline_run or [], start=1):
        d = Path(d)
        meta = _read_json(d / "summary.json")
        ref = meta.get("reference")
        if ref is not None and (float(ref[0]), float(ref[1])) != r:
            raise bl.ComparisonError(
                f"run {d} uses reference {tuple(ref)}, optimizer uses {r}")
        pts = _points_from_evaluations(d / "evaluations.csv")
        hv = hypervolume_2d(pts, r)
        name = f"{meta.get('strategy', 'run')}-{k}"
        rows.append((name, meta.get("strategy", ""), meta.get("evaluations", len(pts)), hv,
                     bl._pct_higher(mobo_hv, hv), meta.get("wall_time", "")))
        seen = []
        for step, p in enumerate(pts, 1):
            seen.append(p)
            hv_series.append((name, step, hypervolume_2d(seen, r)))
        time_series += [(name, i + 1, t) for i, t in enumerate(_timing_series(d / "timing.csv"))]
    files = {
        "comparison.csv": _csv(("name", "strategy", "evaluations", "final_hv",
                                "pct_mobo_higher", "wall_time"), rows),
        "hv_series.csv": _csv(("name", "step", "hv"), hv_series),
        "time_series.csv": _csv(("name", "step", "cumulative_seconds"), time_series),
    }
    _write(out, files)
    for row in rows:
        print(f"{row[0]:>14}  HV {row[3]:.6g}  mobo higher by {row[4]:.2f}%")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _need_config(args)
    recipe = cfg.data.synthetic
    if recipe is None:
        raise UsageError("simulate needs a synthetic data recipe in the config")
    if args.seed is not None:
        recipe = recipe.model_copy(update={"seed": args.seed})
    out = _out_dir(args, cfg)
    data = cfg.data.model_copy(update={"synthetic": recipe, "transform": "identity"})
    domain = load_domain(data)
    name = "domain.bin" if args.format == "binary" else "domain.txt"
    out.mkdir(parents=True, exist_ok=True)
    write_grid(domain, out / name, args.format)
    print(f"wrote {out / name} with shape {'x'.join(map(str, domain.shape))}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evtblock", description="Block-size selection for block maxima.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--workers", type=int, default=1, help="parallel evaluations cap")
        p.add_argument("--timing", action="store_true", help="start from a cold objective cache")
        if seed:
            p.add_argument("--seed", type=int, help="override the configured seed")

    p = sub.add_parser("optimize", help="run the Bayesian optimizer")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("enumerate", help="evaluate every admissible decision")
    common(p, seed=False)
    p.add_argument("--reference", help="reference point 'r1,r2' for hypervolume")
    p.add_argument("--mobo-run", help="optimizer output directory supplying the reference")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("baseline", help="random or structured comparison run")
    common(p)
    p.add_argument("--strategy", choices=("random", "structured"), required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--reference", help="reference point 'r1,r2' for hypervolume")
    p.add_argument("--mobo-run", help="optimizer output directory (reference and budget)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("validate", help="score front specs on held-out domains")
    common(p)
    p.add_argument("--front", help="archive.csv or front.csv with a 'spec' column")
    p.add_argument("--test-source", action="append", help="held-out grid file (repeatable)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="hypervolume comparison against the optimizer")
    common(p, seed=False)
    p.add_argument("--mobo-run", help="optimizer output directory")
    p.add_argument("--baseline-run", action="append", help="baseline output directory (repeatable)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="write a synthetic domain to a grid file")
    common(p)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        return args.func(args)
    except (UsageError, ConfigError, bl.ComparisonError, bl.BaselineError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (DataError, GridError, ValidationError, OSError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except (OptimizationError, EstimationError, GPError, ArithmeticError) as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    print(f"evtblock: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
