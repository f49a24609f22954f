"""Experiment harness and command line interface.

Runs privacy-ratio sweeps (estimation errors of both observers as delta
grows) and correlation grids (receiver error over delta and the x-w
cross-covariance), with optional Monte Carlo columns, and writes the
results as CSV.  Plotting is left to external tools; the CSV column schema
is documented in the README.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields

import numpy as np

from .costs import DegenerateMessageError, costs_from_moments
from .equilibrium import (
    EquilibriumSolution,
    SenderPolicy,
    babbling_equilibrium,
    lmmse_gains,
    solve_general,
    solve_scalar,
)
from .model import (
    GaussianModel,
    ModelValidationError,
    Scenario,
    ScenarioFormatError,
    load_scenario,
    message_moments,
    validate_model,
)
from .verification import (
    SimulationConfig,
    check_coalition_separation,
    check_estimator_optimality,
    check_sender_deviation,
    monte_carlo_costs,
    oracle_solve,
)

__all__ = [
    "SweepRecord",
    "GridRecord",
    "DEFAULT_DELTA_GRID",
    "run_delta_sweep",
    "run_correlation_grid",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_grid_csv",
    "read_grid_csv",
    "cli_main",
    "main",
]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFICATION = 2
EXIT_USAGE = 3

# 0..10 in steps of 0.1 captures the knee; the tail points show the
# large-delta plateau where the eavesdropper's error saturates.
DEFAULT_DELTA_GRID = tuple(round(0.1 * i, 10) for i in range(101)) + (20.0, 50.0, 100.0)


@dataclass(frozen=True)
class SweepRecord:
    """One row of a privacy-ratio sweep; MC columns present iff simulated."""

    delta: float
    v_xw: float
    receiver_mse_closed: float
    malicious_mse_closed: float
    receiver_mse_mc: float | None
    malicious_mse_mc: float | None
    sender_cost: float
    active_rank: int


@dataclass(frozen=True)
class GridRecord:
    """One cell of the delta x correlation grid; infeasible cells carry no cost."""

    delta: float
    v_xw: float
    receiver_mse_closed: float | None
    feasible: bool


def _solve(model: GaussianModel, delta: float) -> EquilibriumSolution:
    if model.dims.n_y == 1:
        return solve_scalar(model, delta)
    return solve_general(model, delta)


def _leading_vxw(model: GaussianModel) -> float:
    return float(model.V_xw[0, 0])


def run_delta_sweep(
    scenario: Scenario,
    delta_grid=DEFAULT_DELTA_GRID,
    simulate: bool = False,
    config: SimulationConfig | None = None,
) -> list[SweepRecord]:
    """Solve the scenario's game across a grid of privacy ratios.

    When ``simulate`` is set, each grid point also gets Monte Carlo error
    estimates; point i uses seed ``config.seed + i`` so points are
    independent and the whole sweep is reproducible.
    """
    grid = [float(d) for d in delta_grid]
    if not grid:
        raise ValueError("delta grid must be nonempty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("delta grid must be sorted ascending")
    if simulate and config is None:
        config = SimulationConfig(sample_count=100_000)
    records = []
    v_xw = _leading_vxw(scenario.model)
    for index, delta in enumerate(grid):
        solution = _solve(scenario.model, delta)
        mc_r = mc_m = None
        if simulate:
            point_config = SimulationConfig(
                sample_count=config.sample_count,
                seed=config.seed + index,
                chunk_size=config.chunk_size,
            )
            mc = monte_carlo_costs(
                scenario.model,
                solution.sender,
                solution.receiver,
                solution.malicious,
                delta,
                point_config,
            )
            mc_r, mc_m = mc.costs.receiver_mse, mc.costs.malicious_mse
        records.append(
            SweepRecord(
                delta=delta,
                v_xw=v_xw,
                receiver_mse_closed=solution.receiver_mse,
                malicious_mse_closed=solution.malicious_mse,
                receiver_mse_mc=mc_r,
                malicious_mse_mc=mc_m,
                sender_cost=solution.sender_cost,
                active_rank=solution.diagnostics.active_rank,
            )
        )
    return records


def run_correlation_grid(
    scenario_template: Scenario, delta_grid, v_xw_grid
) -> list[GridRecord]:
    """Receiver error over a (delta, V_xw) grid built from a scalar template.

    Correlations that break positive definiteness are reported as
    infeasible cells, not errors.  Requires scalar x and w blocks.
    """
    model = scenario_template.model
    if model.dims.n_x != 1 or model.dims.n_w != 1:
        raise ValueError("correlation grid requires scalar state and private info")
    records = []
    for delta in delta_grid:
        for v_xw in v_xw_grid:
            candidate = GaussianModel(
                dims=model.dims,
                V_xx=model.V_xx,
                V_ww=model.V_ww,
                V_zz=model.V_zz,
                V_xw=np.array([[float(v_xw)]]),
                V_xz=model.V_xz,
                V_wz=model.V_wz,
            )
            if not validate_model(candidate).ok:
                records.append(
                    GridRecord(
                        delta=float(delta),
                        v_xw=float(v_xw),
                        receiver_mse_closed=None,
                        feasible=False,
                    )
                )
                continue
            solution = _solve(candidate, float(delta))
            records.append(
                GridRecord(
                    delta=float(delta),
                    v_xw=float(v_xw),
                    receiver_mse_closed=solution.receiver_mse,
                    feasible=True,
                )
            )
    return records


# ---------------------------------------------------------------------------
# CSV: header row matches the record field names; floats carry 17 significant
# digits so a written file reads back value-identical.


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_records(records, path, record_type) -> None:
    names = [f.name for f in fields(record_type)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for record in records:
            writer.writerow([_format_cell(getattr(record, name)) for name in names])


def write_sweep_csv(records: list[SweepRecord], path) -> None:
    _write_records(records, path, SweepRecord)


def write_grid_csv(records: list[GridRecord], path) -> None:
    _write_records(records, path, GridRecord)


def _parse_cell(text: str, kind: str):
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "optional":
        return None if text == "" else float(text)
    if kind == "bool":
        return text == "true"
    raise ValueError(kind)


def read_sweep_csv(path) -> list[SweepRecord]:
    kinds = ["float", "float", "float", "float", "optional", "optional", "float", "int"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [
            SweepRecord(*[_parse_cell(cell, kind) for cell, kind in zip(row, kinds)])
            for row in reader
        ]


def read_grid_csv(path) -> list[GridRecord]:
    kinds = ["float", "float", "optional", "bool"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [
            GridRecord(*[_parse_cell(cell, kind) for cell, kind in zip(row, kinds)])
            for row in reader
        ]


# ---------------------------------------------------------------------------
# CLI


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_grid(spec: str) -> list[float]:
    """Parse 'a:b:step' (inclusive endpoints) or a comma-separated list."""
    try:
        if ":" in spec:
            parts = [float(p) for p in spec.split(":")]
            if len(parts) != 3:
                raise ValueError("expected a:b:step")
            a, b, step = parts
            if step <= 0 or b < a:
                raise ValueError("need step > 0 and b >= a")
            count = int(round((b - a) / step)) + 1
            grid = [a + i * step for i in range(count)]
            if grid[-1] > b + 1e-12:
                grid.pop()
            return grid
        return [float(p) for p in spec.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise _UsageError(f"bad grid specification '{spec}': {exc}") from exc


def _matrix_str(name: str, a: np.ndarray) -> str:
    body = np.array2string(np.atleast_2d(a), precision=9, suppress_small=True)
    return f"  {name} = {body}"


def _print_solution(solution: EquilibriumSolution) -> None:
    print(f"delta = {solution.delta:g}")
    print("sender policy:")
    print(_matrix_str("K_x ", solution.sender.K_x))
    print(_matrix_str("K_w ", solution.sender.K_w))
    if solution.sender.K_z is not None and solution.sender.K_z.size:
        print(_matrix_str("K_z ", solution.sender.K_z))
    print(_matrix_str("V_vv", solution.sender.V_vv))
    print("costs:")
    print(f"  receiver_mse  = {solution.receiver_mse:.12g}")
    print(f"  malicious_mse = {solution.malicious_mse:.12g}")
    print(f"  sender_cost   = {solution.sender_cost:.12g}")
    diag = solution.diagnostics
    eigs = ", ".join(f"{v:.9g}" for v in diag.eigenvalues)
    print(f"diagnostics: eigenvalues = [{eigs}], active_rank = {diag.active_rank}")


def _load_policy_file(path) -> SenderPolicy:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        K_z = doc.get("K_z")
        return SenderPolicy(
            K_x=np.asarray(doc["K_x"], dtype=float),
            K_w=np.asarray(doc["K_w"], dtype=float),
            V_vv=np.asarray(doc["V_vv"], dtype=float),
            K_z=None if K_z is None else np.asarray(K_z, dtype=float),
        )
    except KeyError as exc:
        raise ScenarioFormatError(f"policy file is missing key {exc}") from exc
    except ValueError as exc:
        raise ScenarioFormatError(f"malformed policy file: {exc}") from exc


def _cmd_validate(args) -> int:
    report = validate_model(load_scenario(args.scenario).model)
    if report.ok:
        print("ok")
        return EXIT_OK
    for violation in report.violations:
        print(f"violation: {violation}")
    return EXIT_VALIDATION


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    delta = scenario.delta if args.delta is None else args.delta
    solution = _solve(scenario.model, delta)
    _print_solution(solution)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    delta = scenario.delta if args.delta is None else args.delta
    solution = _solve(scenario.model, delta)
    config = SimulationConfig(sample_count=args.samples, seed=args.seed)
    mc = monte_carlo_costs(
        scenario.model, solution.sender, solution.receiver, solution.malicious,
        delta, config,
    )
    print(f"delta = {delta:g}, samples = {mc.sample_count}, seed = {args.seed}")
    print(
        f"receiver_mse:  closed = {solution.receiver_mse:.9g}  "
        f"monte-carlo = {mc.costs.receiver_mse:.9g} +- {mc.receiver_se:.3g}"
    )
    print(
        f"malicious_mse: closed = {solution.malicious_mse:.9g}  "
        f"monte-carlo = {mc.costs.malicious_mse:.9g} +- {mc.malicious_se:.3g}"
    )
    return EXIT_OK


def _cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    delta = scenario.delta if args.delta is None else args.delta
    model = scenario.model

    if args.policy is not None:
        sender = _load_policy_file(args.policy)
        moments = message_moments(model, sender)
        receiver, malicious = lmmse_gains(model, moments)
        breakdown = costs_from_moments(model, moments, delta)
        candidate = EquilibriumSolution(
            sender=sender,
            receiver=receiver,
            malicious=malicious,
            receiver_mse=breakdown.receiver_mse,
            malicious_mse=breakdown.malicious_mse,
            sender_cost=breakdown.sender_cost,
            delta=delta,
        )
    else:
        candidate = _solve(model, delta)

    failed = False
    sender_report = check_sender_deviation(
        model, candidate, delta, trials=args.trials, seed=args.seed
    )
    print(
        f"sender deviation:      {'pass' if sender_report.passed else 'FAIL'} "
        f"(best improvement {sender_report.best_improvement:.3e}, "
        f"{sender_report.trials} trials)"
    )
    failed |= not sender_report.passed

    moments = message_moments(model, candidate.sender)
    estimator_report = check_estimator_optimality(
        model, moments, candidate.receiver, candidate.malicious, seed=args.seed
    )
    print(
        f"estimator optimality:  {'pass' if estimator_report.passed else 'FAIL'} "
        f"(worst player {estimator_report.tested_player}, "
        f"best improvement {estimator_report.best_improvement:.3e})"
    )
    failed |= not estimator_report.passed

    separated = check_coalition_separation(model, candidate, delta, weight=1.0)
    print(f"coalition separation:  {'pass' if separated else 'FAIL'}")
    failed |= not separated

    if args.restarts > 0:
        oracle = oracle_solve(model, delta, restarts=args.restarts, seed=args.seed)
        margin = candidate.sender_cost - oracle.sender_cost
        beaten = margin > 1e-6 * max(1.0, abs(candidate.sender_cost))
        print(
            f"oracle comparison:     {'FAIL' if beaten else 'pass'} "
            f"(oracle cost {oracle.sender_cost:.9g}, "
            f"candidate cost {candidate.sender_cost:.9g})"
        )
        failed |= beaten

    return EXIT_VERIFICATION if failed else EXIT_OK


def _cmd_sweep_delta(args) -> int:
    scenario = load_scenario(args.scenario)
    grid = _parse_grid(args.grid) if args.grid else list(DEFAULT_DELTA_GRID)
    config = SimulationConfig(sample_count=args.samples, seed=args.seed)
    records = run_delta_sweep(scenario, grid, simulate=args.simulate, config=config)
    last = records[-1]
    print(f"{len(records)} sweep points, delta in [{records[0].delta:g}, {last.delta:g}]")
    print(
        f"at delta = {last.delta:g}: receiver_mse = {last.receiver_mse_closed:.6g}, "
        f"malicious_mse = {last.malicious_mse_closed:.6g}"
    )
    if args.out:
        write_sweep_csv(records, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_sweep_grid(args) -> int:
    scenario = load_scenario(args.scenario)
    delta_grid = _parse_grid(args.delta_grid)
    vxw_grid = _parse_grid(args.vxw_grid)
    records = run_correlation_grid(scenario, delta_grid, vxw_grid)
    feasible = sum(1 for r in records if r.feasible)
    print(f"{len(records)} grid cells ({feasible} feasible)")
    if args.out:
        write_grid_csv(records, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="privacy-game",
        description="Solve, verify and sweep equilibria of the Gaussian privacy game.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("solve", help="solve the equilibrium for a scenario")
    p.add_argument("scenario")
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo check of the closed-form costs")
    p.add_argument("scenario")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="deviation, separation and oracle checks")
    p.add_argument("scenario")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", default=None, help="JSON policy file to verify instead of solving")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sweep-delta", help="sweep the privacy ratio, write CSV")
    p.add_argument("scenario")
    p.add_argument("--grid", default=None, help="a:b:step or comma-separated values")
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep_delta)

    p = sub.add_parser("sweep-grid", help="sweep privacy ratio x correlation, write CSV")
    p.add_argument("scenario")
    p.add_argument("--delta-grid", required=True)
    p.add_argument("--vxw-grid", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep_grid)

    return parser


def cli_main(argv=None) -> int:
    """Entry point; returns the process exit code.

    0 = success, 1 = validation failure, 2 = verification failure
    (a deviation improved on the candidate or the oracle beat the solver),
    3 = usage, I/O or parse error.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    try:
        return args.func(args)
    except ModelValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DegenerateMessageError as exc:
        print(f"degenerate policy: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ScenarioFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
