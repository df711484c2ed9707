"""Command-line front end: single experiments, table sweeps and field snapshots."""

import argparse
import logging
import math
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import ErrorRecord, fill_orders, reference_error, write_records
from .constants import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_SOLVER_FAILURE
from .errors import ConfigError, InvalidArgumentError, StepFailureError, TwoGridError
from .experiment_params import ExperimentConfig
from .fespace import FeFunction
from .msolve import RunReport, StepState, init_state, run
from .reference_cache import ReferenceCache, Solution
from .snapshot import write_snapshot
from .tables import TABLE_IDS, load_manifest
from .theta import ThetaScheme

logger = logging.getLogger(__name__)

# Relative distance from the time grid above which a requested time is reported as snapped
_SNAP_TOL = 1e-9


def solve_config(config: ExperimentConfig) -> tuple[StepState, RunReport]:
    """Run the configured method to the final time."""
    return run(
        config.problem_spec(),
        config.scheme(),
        config.method,
        config.fine_space(),
        config.coarse_space(),
        config.solver_config(),
    )


def compute_reference(config: ExperimentConfig, cache: ReferenceCache) -> Solution:
    """Load the reference solution of `config` from the cache, running it on a miss."""
    reference = config.reference_config()
    if reference is None:
        raise InvalidArgumentError("Configuration has no reference run")

    def compute() -> Solution:
        state, _ = solve_config(reference)
        return state.u.coeffs, state.sigma.coeffs

    return cache.get_or_compute(reference, compute)


def _snapshot_steps(config: ExperimentConfig, scheme: ThetaScheme) -> dict[int, float]:
    steps = {}
    for t in config.snapshot_times:
        n = min(scheme.num_steps, max(0, round(t / scheme.dt)))
        if abs(n * scheme.dt - t) > _SNAP_TOL * max(1.0, t):
            logger.warning("Snapshot time snapped to grid", extra={"requested": t, "snapped": n * scheme.dt})
        steps[n] = n * scheme.dt
    return steps


def _new_record(config: ExperimentConfig) -> ErrorRecord:
    return ErrorRecord(
        method=config.method,
        problem=config.problem,
        gamma=config.gamma,
        theta=config.theta,
        dt=config.time_step,
        H_hat=config.H_hat,
        h_hat=config.h_hat,
    )


def _failed_reference_record(config: ExperimentConfig, message: str) -> ErrorRecord:
    record = _new_record(config)
    record.failure = f"Reference run failed: {message}"
    return record


def run_experiment(
    config: ExperimentConfig,
    reference: Solution | None = None,
    cache: ReferenceCache | None = None,
    stem: str = "run",
) -> ErrorRecord:
    """
    Run one experiment and measure its final-time errors.

    Errors come from the exact solution when the problem has one, otherwise from the reference run
    (given directly, or loaded through `cache`). A failed run yields a record with NaN numbers and the
    failure message; it is never raised.
    """
    scheme = config.scheme()
    record = _new_record(config)
    snapshot_steps = _snapshot_steps(config, scheme)

    def write_requested(state: StepState) -> None:
        if state.n in snapshot_steps:
            write_snapshot(state.u, state.sigma, config.output, stem, snapshot_steps[state.n])

    try:
        state, report = run(
            config.problem_spec(),
            scheme,
            config.method,
            config.fine_space(),
            config.coarse_space(),
            config.solver_config(),
            callback=write_requested if snapshot_steps else None,
        )
    except StepFailureError as e:
        logger.error("Experiment failed", extra={"problem": config.problem, "method": config.method})
        record.failure = str(e)
        record.cpu_seconds = e.report.cpu_seconds
        return record

    record.cpu_seconds = report.cpu_seconds
    record.newton_total_iters = report.newton_total_iters
    if config.has_reference:
        if reference is None:
            try:
                reference = compute_reference(config, cache or ReferenceCache())
            except ConfigError:
                raise
            except TwoGridError as e:
                logger.error("Reference run failed", extra={"problem": config.problem, "gamma": config.gamma})
                record.failure = f"Reference run failed: {e}"
                return record
        reference_config = config.reference_config()
        assert reference_config is not None
        ref_space = reference_config.fine_space()
        record.err_u = reference_error(state.u, FeFunction(ref_space, reference[0]))
        record.err_sigma = reference_error(state.sigma, FeFunction(ref_space, reference[1]))
    else:
        record.err_u = math.nan if report.err_u is None else report.err_u
        record.err_sigma = math.nan if report.err_sigma is None else report.err_sigma
    return record


def cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.out is not None:
        config.output = str(args.out)
    stem = Path(args.config).stem
    record = run_experiment(config, cache=ReferenceCache(), stem=stem)

    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    write_records([record], csv_path)
    if record.failed:
        print(f"Run failed: {record.failure}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    print(f"err_u={record.err_u:.5E} err_sigma={record.err_sigma:.5E} cpu={record.cpu_seconds:.2f}s -> {csv_path}")
    return EXIT_OK


def _table_worker(config: ExperimentConfig, reference: Solution | None) -> ErrorRecord:
    return run_experiment(config, reference=reference)


def cmd_table(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.id)
    out_dir = Path(args.out)
    sequences = manifest.configs(output=str(out_dir))
    configs = [config for sequence in sequences for config in sequence]
    print(f"Table {manifest.table_id}: {manifest.title} ({len(configs)} runs)")

    references: dict[str, Solution] = {}
    failed_references: dict[str, str] = {}
    if manifest.reference is not None:
        cache = ReferenceCache()
        for config in configs:
            reference_config = config.reference_config()
            assert reference_config is not None
            key = ReferenceCache.key(reference_config)
            if key in references or key in failed_references:
                continue
            print(f"... Reference solution {len(references) + len(failed_references) + 1} (gamma={config.gamma:g})")
            try:
                references[key] = compute_reference(config, cache)
            except ConfigError:
                raise
            except TwoGridError as e:
                logger.error("Reference run failed", extra={"key": key, "gamma": config.gamma})
                failed_references[key] = str(e)

    def reference_for(config: ExperimentConfig) -> Solution | None:
        reference_config = config.reference_config()
        return references[ReferenceCache.key(reference_config)] if reference_config is not None else None

    def reference_failure(config: ExperimentConfig) -> str | None:
        reference_config = config.reference_config()
        return failed_references.get(ReferenceCache.key(reference_config)) if reference_config is not None else None

    runnable = [config for config in configs if reference_failure(config) is None]

    results: list[ErrorRecord] = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_table_worker, config, reference_for(config)) for config in runnable]
            for i, future in enumerate(futures, start=1):
                results.append(future.result())
                print(f"{i}/{len(runnable)} {runnable[i - 1].method} done")
    else:
        for i, config in enumerate(runnable, start=1):
            print(f"{i}/{len(runnable)} {config.method} gamma={config.gamma:g} theta={config.theta:g}")
            results.append(_table_worker(config, reference_for(config)))

    finished = iter(results)
    records = [
        next(finished) if (message := reference_failure(config)) is None else _failed_reference_record(config, message)
        for config in configs
    ]

    start = 0
    for sequence in sequences:
        fill_orders(records[start : start + len(sequence)], refine_by=manifest.refine_by)
        start += len(sequence)

    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"table{manifest.table_id}.csv"
    write_records(records, csv_path)
    failures = sum(record.failed for record in records)
    print(f"Wrote {csv_path} ({failures} failed rows)")
    return EXIT_SOLVER_FAILURE if failures else EXIT_OK


def cmd_snapshot(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    out_dir = Path(args.out) if args.out is not None else Path(config.output)
    scheme = config.scheme()
    if not 0.0 <= args.t <= scheme.final_time:
        raise ConfigError(f"must lie in [0, {scheme.final_time}]", field="t")
    n = round(args.t / scheme.dt)
    if abs(n * scheme.dt - args.t) > _SNAP_TOL * max(1.0, args.t):
        logger.warning("Snapshot time snapped to grid", extra={"requested": args.t, "snapped": n * scheme.dt})

    if n == 0:
        state = init_state(config.fine_space(), config.problem_spec(), config.solver_config())
    else:
        truncated = ThetaScheme(theta=scheme.theta, dt=scheme.dt, num_steps=n)
        state, _ = run(
            config.problem_spec(),
            truncated,
            config.method,
            config.fine_space(),
            config.coarse_space(),
            config.solver_config(),
        )
    u_path, sigma_path = write_snapshot(state.u, state.sigma, out_dir, Path(args.config).stem, n * scheme.dt)
    print(f"Wrote {u_path} and {sigma_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twogridmfe",
        description="Mixed finite element and two-grid solvers for the extended Fisher-Kolmogorov equation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="run one experiment and write a CSV row")
    run_parser.add_argument("--config", required=True, help="experiment config file")
    run_parser.add_argument("--out", default=None, help="output directory (default: config 'output')")
    run_parser.set_defaults(handler=cmd_run)

    table_parser = subparsers.add_parser("table", help="reproduce a built-in benchmark table")
    table_parser.add_argument("--id", type=int, required=True, choices=TABLE_IDS, help="table number")
    table_parser.add_argument("--out", default="results", help="output directory")
    table_parser.add_argument("--jobs", type=int, default=1, help="worker processes for table rows")
    table_parser.set_defaults(handler=cmd_table)

    snapshot_parser = subparsers.add_parser("snapshot", help="write U_h and Sigma_h grids at one time")
    snapshot_parser.add_argument("--config", required=True, help="experiment config file")
    snapshot_parser.add_argument("--t", type=float, required=True, help="snapshot time")
    snapshot_parser.add_argument("--out", default=None, help="output directory (default: config 'output')")
    snapshot_parser.set_defaults(handler=cmd_snapshot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.handler(args))
    except ConfigError as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except TwoGridError as e:
        print(f"Solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
