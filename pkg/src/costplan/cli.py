"""Command-line entry point: ingestion -> prediction -> optimization -> reporting.

Exit status: 0 on success, 1 on domain errors (validation failures,
infeasible instances), 2 on usage or parse errors. Diagnostics go to
stderr; documents go to --out or stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, fileio, predictor, solver
from .core import (
    InfeasibleSchedule,
    Problem,
    ValidationErrors,
    validate_problem,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class DomainError(Exception):
    pass


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_validated(path: str, require_durations: bool = True):
    problem = fileio.load_problem(_read(path), validate=False)
    return problem, validate_problem(problem, require_durations=require_durations)


def _solver_config(args) -> solver.SolverConfig:
    return solver.SolverConfig(
        absolute_gap=args.gap,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
    )


def cmd_validate(args) -> int:
    fileio.load_problem(_read(args.infile))
    _emit("ok\n", args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    records = fileio.load_records(_read(args.infile))
    if not records:
        raise DomainError("no records to train on")
    schema = predictor.FeatureSchema()
    X, y = predictor.encode_records(records, schema)
    model = predictor.DurationRegressor(
        family=args.family, alpha=args.alpha, l1_ratio=args.l1_ratio
    ).fit(X, y)
    metrics = predictor.evaluate(model, X, y)
    extras = {
        "training_metrics": {
            "mae": metrics.mae,
            "mse": metrics.mse,
            "rmse": metrics.rmse,
            "mape_percent": metrics.mape,
            "n": metrics.n,
        }
    }
    _emit(fileio.save_model(model, schema, extras), args.out)
    return EXIT_OK


def cmd_tune(args) -> int:
    records = fileio.load_records(_read(args.infile))
    schema = predictor.FeatureSchema()
    X, y = predictor.encode_records(records, schema)
    result = predictor.tune_alpha(X, y, family=args.family, folds=args.folds)
    doc = {
        "family": args.family,
        "folds": result.folds,
        "best_alpha": result.best_alpha,
        "cv_mae_by_alpha": [
            [alpha, result.cv_score_by_alpha[alpha]]
            for alpha in sorted(result.cv_score_by_alpha)
        ],
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _fill_durations(problem: Problem, model_path: str) -> Problem:
    model, schema = fileio.load_model(_read(model_path))
    feats = {w.id: dict(w.features) for w in problem.workflows if w.features is not None}
    missing = [w.id for w in problem.workflows if w.id not in feats]
    if missing:
        raise DomainError(
            f"workflows without static features, cannot predict durations: {missing}"
        )
    table = predictor.build_duration_table(
        model, schema, [w.id for w in problem.workflows], problem.configs, feats
    )
    return Problem.build(
        problem.workflows, problem.devices, problem.configs, table, problem.precedence
    )


def cmd_predict(args) -> int:
    problem = fileio.load_problem(_read(args.infile), require_durations=False)
    problem = _fill_durations(problem, args.model)
    validate_problem(problem)
    _emit(fileio.save_problem(problem), args.out)
    return EXIT_OK


def cmd_schedule(args) -> int:
    problem = fileio.load_problem(_read(args.infile), require_durations=False)
    have_durations = bool(problem.durations.entries)
    if not have_durations:
        if args.no_model or not args.model:
            raise UsageError(
                "problem has no durations block; supply --model or add durations"
            )
        problem = _fill_durations(problem, args.model)
    vp = validate_problem(problem)
    outcome, assignment, schedule, cost = solver.solve_problem(vp, _solver_config(args))
    if outcome.status == "infeasible":
        raise DomainError(_infeasibility_message(vp))
    if schedule is None:
        raise DomainError(f"no incumbent found within limits ({outcome.status})")
    print(
        f"status={outcome.status} cost={outcome.objective:.6f} "
        f"nodes={outcome.report.nodes_explored} pruned={outcome.report.nodes_pruned}",
        file=sys.stderr,
    )
    _emit(fileio.save_schedule(vp, schedule, cost), args.out)
    return EXIT_OK


def _infeasibility_message(vp) -> str:
    # Name the workflows that cannot meet their deadline under any choice.
    from .core import Assignment, earliest_schedule

    culprits: set[str] = set()
    cheapest = {
        wid: min(
            vp.choices_by_workflow[wid],
            key=lambda ch: vp.duration(wid, ch[0], ch[1]),
        )
        for wid in vp.workflow_by_id
    }
    try:
        earliest_schedule(vp, Assignment(cheapest))
    except InfeasibleSchedule as e:
        culprits = set(e.deficits)
    detail = f"; workflows violating deadlines: {sorted(culprits)}" if culprits else ""
    return "no feasible schedule exists" + detail


def cmd_report(args) -> int:
    runlog = fileio.load_runlog(_read(args.infile))
    report = fileio.orchestration_report(runlog)
    _emit(fileio.save_report(report), args.out)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "problem":
        cfg = bench.GeneratorConfig(
            workflow_count=args.workflows,
            device_count=args.devices,
            configs_per_device=args.configs,
            precedence_density=args.density,
            window_slack_factor=args.slack,
            seed=args.seed,
        )
        _emit(fileio.save_problem(bench.generate_problem(cfg)), args.out)
    else:
        records, _ = bench.generate_records(
            bench.RecordConfig(n=args.count, noise_sigma=args.noise, seed=args.seed)
        )
        _emit(fileio.save_records(records), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    _, vp = _load_validated(args.infile)
    result = bench.brute_force_optimum(vp)
    if result.status == "infeasible":
        raise DomainError("no feasible assignment exists")
    doc = {
        "status": result.status,
        "total": result.cost,
        "assignment": [
            {"workflow_id": wid, "device_id": did, "config_id": kid}
            for wid, (did, kid) in sorted(result.assignment.choice.items())
        ],
        "enumerated": result.enumerated,
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="costplan",
        description="Predict job durations and compute minimum-cost workflow schedules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        return p

    p = add("validate", cmd_validate, "validate a problem document")
    p.add_argument("--in", dest="infile", required=True)

    p = add("train", cmd_train, "fit a duration model from run records")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--family", default="ridge", choices=["ols", "ridge", "lasso", "elastic_net"])
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--l1-ratio", type=float, default=0.5)

    p = add("tune", cmd_tune, "cross-validated penalty search")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--family", default="ridge", choices=["ridge", "lasso", "elastic_net"])
    p.add_argument("--folds", type=int, default=5)

    p = add("predict", cmd_predict, "fill a problem skeleton's duration table from a model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)

    p = add("schedule", cmd_schedule, "solve for the minimum-cost assignment and schedule")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--no-model", action="store_true", help="require the durations block")
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=None)

    p = add("report", cmd_report, "aggregate a run log into orchestration metrics")
    p.add_argument("--in", dest="infile", required=True)

    p = add("gen", cmd_gen, "generate a seeded synthetic problem or record set")
    p.add_argument("--kind", choices=["problem", "records"], default="problem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workflows", type=int, default=4)
    p.add_argument("--devices", type=int, default=2)
    p.add_argument("--configs", type=int, default=2)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--slack", type=float, default=2.0)
    p.add_argument("--count", type=int, default=1000, help="records to generate")
    p.add_argument("--noise", type=float, default=60.0, help="record noise sigma (s)")

    p = add("oracle", cmd_oracle, "brute-force optimum for a small problem")
    p.add_argument("--in", dest="infile", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (ValidationErrors, InfeasibleSchedule, bench.TooLarge, DomainError) as e:
        _print_domain_error(e)
        return EXIT_DOMAIN
    except (fileio.ParseError, fileio.SchemaError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def _print_domain_error(e: Exception) -> None:
    if isinstance(e, ValidationErrors):
        print("invalid problem:", file=sys.stderr)
        for v in e.violations:
            print(f"  [{v.code}] {v.message}", file=sys.stderr)
    else:
        print(f"error: {e}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
