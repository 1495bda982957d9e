"""Command-line front end: feasibility checks, runs, sweeps, re-plotting.

Verbs:
  check  load a scenario, report feasibility and the operator spectra
  run    integrate a scenario; write the trajectory table, summary, plots
  sweep  run several scenarios on a process pool with isolated outputs
  plot   re-render figures from a saved trajectory table

Trajectory tables are comma-separated with one row per integration step and
17-significant-digit formatting; the header names every column by vertex id
and component, in the canonical block ordering (vertices ascending, agents
before targets).
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfg
from ._kernels import IMPLEMENTATION
from .plots import emit_plots
from .simulator import (
    BoundQuantities,
    Scenario,
    TrajectoryLog,
    compute_bound_quantities,
    formation_residual_split,
    integrate,
    verify_bound,
)

_HEADER_COMMENT = "# columns: time, then per-vertex blocks in ascending vertex id (agents, then targets)"


def write_trajectory(log: TrajectoryLog, path) -> None:
    """Write the log as delimited text, one row per step.

    Control columns are padded with zeros up to each agent's state
    dimension so every agent contributes four equally sized column groups.
    """
    path = Path(path)
    names = ["time"]
    for group in ("q", "qstar", "e"):
        for vid, dim in zip(log.agent_ids, log.agent_dims):
            names += [f"{group}:v{vid}[{c}]" for c in range(dim)]
    for vid, dim in zip(log.agent_ids, log.agent_dims):
        names += [f"u:v{vid}[{c}]" for c in range(dim)]
    for vid, dim in zip(log.target_ids, log.target_dims):
        names += [f"p:v{vid}[{c}]" for c in range(dim)]
    names += ["enorm", "bound"]

    padded_u = np.zeros((len(log), sum(log.agent_dims)))
    src = 0
    dst = 0
    for dim, cdim in zip(log.agent_dims, log.control_dims):
        padded_u[:, dst:dst + cdim] = log.control[:, src:src + cdim]
        src += cdim
        dst += dim

    table = np.column_stack([
        log.times,
        log.agent_states,
        log.extension,
        log.error,
        padded_u,
        log.target_states,
        log.error_norm,
        log.bound,
    ])
    with path.open("w") as fh:
        fh.write(_HEADER_COMMENT + "\n")
        fh.write(",".join(names) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_trajectory(path) -> TrajectoryLog:
    """Rebuild a log from a trajectory table.

    Disagreement and energy are not stored in the table and come back as
    NaN columns.
    """
    path = Path(path)
    with path.open() as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    lines = [ln for ln in lines if not ln.startswith("#")]
    if len(lines) < 2:
        raise ValueError(f"{path}: trajectory table has no data rows")
    names = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if data.shape[1] != len(names):
        raise ValueError(f"{path}: row width {data.shape[1]} does not match header ({len(names)})")

    def group_layout(prefix: str) -> tuple[tuple[int, ...], tuple[int, ...], list[int]]:
        ids: list[int] = []
        dims: list[int] = []
        cols: list[int] = []
        for k, n in enumerate(names):
            if not n.startswith(prefix + ":v"):
                continue
            vid = int(n[len(prefix) + 2:n.index("[")])
            if not ids or ids[-1] != vid:
                ids.append(vid)
                dims.append(0)
            dims[-1] += 1
            cols.append(k)
        return tuple(ids), tuple(dims), cols

    agent_ids, agent_dims, q_cols = group_layout("q")
    _, _, qstar_cols = group_layout("qstar")
    _, _, e_cols = group_layout("e")
    _, _, u_cols = group_layout("u")
    target_ids, target_dims, p_cols = group_layout("p")
    nan_col = np.full((data.shape[0], sum(agent_dims)), np.nan)
    return TrajectoryLog(
        times=data[:, names.index("time")],
        agent_states=data[:, q_cols],
        target_states=data[:, p_cols],
        extension=data[:, qstar_cols],
        error=data[:, e_cols],
        disagreement=nan_col.copy(),
        control=data[:, u_cols],
        error_norm=data[:, names.index("enorm")],
        bound=data[:, names.index("bound")],
        energy=np.full(data.shape[0], np.nan),
        agent_ids=agent_ids,
        target_ids=target_ids,
        agent_dims=agent_dims,
        target_dims=target_dims,
        control_dims=agent_dims,
    )


@dataclass
class RunSummary:
    """Flat record of one run, written as ``key: value`` lines."""

    name: str
    feasible: bool
    obstruction_dimension: int
    lambda_min: float
    sigma_max_coupling: float
    f_bar: float
    omega_bar: float
    mu: float
    k_min: float
    chi: float
    radius_ultimate: float
    radius_initial: float
    gain_condition: bool
    e0_norm: float
    e0_in_initial_set: bool
    bound_applicable: bool
    bound_violations: int
    trajectory_in_domain: bool
    ultimately_bounded: bool | None
    terminal_error: float
    formation_residual: float | None
    sensing_lag: float | None
    steps: int
    kernel: str
    wall_seconds: float

    def as_lines(self) -> list[str]:
        out = []
        for key, value in self.__dict__.items():
            if isinstance(value, float):
                out.append(f"{key}: {value:.17g}")
            else:
                out.append(f"{key}: {value}")
        return out


def write_summary(summary: RunSummary, path) -> None:
    Path(path).write_text("\n".join(summary.as_lines()) + "\n")


def _infeasibility_message(loaded: cfg.LoadedScenario) -> str:
    return (
        f"scenario {loaded.scenario.name!r} is ill-posed: the relative cohomology "
        f"with respect to the targets has dimension {loaded.obstruction.dimension} "
        "(some agent directions are unconstrained by the targets), so no unique "
        "harmonic extension exists"
    )


def run_scenario(loaded: cfg.LoadedScenario, out_dir, plots: bool = True) -> tuple[RunSummary, int]:
    """Integrate one loaded scenario and persist its outputs.

    Returns the summary and an exit status (0 only when the run completed
    with no applicable-bound violations).
    """
    scenario = loaded.scenario
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not loaded.feasible:
        raise cfg.ConfigError(_infeasibility_message(loaded))

    started = time.perf_counter()
    quantities = compute_bound_quantities(scenario)
    log = integrate(scenario, quantities)
    report = verify_bound(log, quantities, t0=scenario.t0)
    shape_residual, sensing_lag = formation_residual_split(
        scenario, log.agent_states[-1], log.target_states[-1]
    )
    wall = time.perf_counter() - started

    summary = RunSummary(
        name=scenario.name,
        feasible=True,
        obstruction_dimension=0,
        lambda_min=quantities.lambda_min,
        sigma_max_coupling=quantities.sigma_max_coupling,
        f_bar=quantities.f_bar,
        omega_bar=quantities.omega_bar,
        mu=quantities.mu,
        k_min=quantities.k_min,
        chi=quantities.chi,
        radius_ultimate=quantities.radius_ultimate,
        radius_initial=quantities.radius_initial,
        gain_condition=quantities.gain_condition,
        e0_norm=report.e0_norm,
        e0_in_initial_set=report.e0_in_initial_set,
        bound_applicable=report.applicable,
        bound_violations=report.violation_count,
        trajectory_in_domain=report.trajectory_in_domain,
        ultimately_bounded=report.ultimately_bounded,
        terminal_error=report.terminal_error,
        formation_residual=shape_residual,
        sensing_lag=sensing_lag,
        steps=len(log) - 1,
        kernel=IMPLEMENTATION,
        wall_seconds=wall,
    )

    if loaded.trajectory_path:
        write_trajectory(log, out_dir / loaded.trajectory_path)
    if loaded.summary_path:
        write_summary(summary, out_dir / loaded.summary_path)
    if plots and loaded.plots_enabled:
        emit_plots(log, out_dir)

    failed = report.applicable and report.violation_count > 0
    return summary, (1 if failed else 0)


def _apply_overrides(raw: dict, args) -> dict:
    integ = raw.setdefault("integration", {})
    if getattr(args, "h", None) is not None:
        integ["step"] = args.h
    if getattr(args, "horizon", None) is not None:
        integ["horizon"] = args.horizon
    if getattr(args, "seed", None) is not None:
        integ["seed"] = args.seed
    return raw


def _cmd_check(args) -> int:
    loaded = cfg.load_scenario(args.config)
    scenario = loaded.scenario
    prob = scenario.problem
    print(f"scenario: {scenario.name}")
    print(f"vertices: {prob.sheaf.graph.vertex_count} "
          f"({prob.agent_count} agents, {prob.target_count} targets), "
          f"edges: {len(prob.sheaf.graph.edges)}")
    print(f"feasible: {loaded.feasible}")
    print(f"obstruction_dimension: {loaded.obstruction.dimension}")
    print(f"lambda_min_H: {prob.smallest_interaction_eigenvalue:.17g}")
    print(f"sigma_max_B: {prob.largest_coupling_singular_value:.17g}")
    if not loaded.feasible:
        print(_infeasibility_message(loaded), file=sys.stderr)
        return 3
    return 0


def _cmd_run(args) -> int:
    raw = _apply_overrides(cfg.load_config(args.config), args)
    loaded = cfg.scenario_from_dict(raw, name_hint=Path(args.config).stem)
    summary, status = run_scenario(loaded, args.out, plots=not args.no_plots)
    for line in summary.as_lines():
        print(line)
    return status


def _sweep_worker(params: tuple[str, str, bool]) -> tuple[str, int, str]:
    path, out_dir, no_plots = params
    try:
        loaded = cfg.load_scenario(path)
        _, status = run_scenario(loaded, out_dir, plots=not no_plots)
        return path, status, "ok" if status == 0 else "bound violations"
    except Exception as exc:  # worker boundary: report, do not crash the pool
        return path, 2, str(exc)


def _cmd_sweep(args) -> int:
    jobs = []
    for path in args.configs:
        name = Path(path).stem
        jobs.append((path, str(Path(args.out) / name), args.no_plots))
    worst = 0
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path, status, note in pool.map(_sweep_worker, jobs):
            print(f"{path}: exit {status} ({note})")
            worst = max(worst, status)
    return worst


def _cmd_plot(args) -> int:
    log = read_trajectory(args.trajectory)
    paths = emit_plots(log, args.out)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sheaftrack",
        description="Decentralized multi-target tracking on cellular sheaves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="feasibility and operator spectra only")
    check.add_argument("--config", required=True, help="scenario YAML path")
    check.set_defaults(func=_cmd_check)

    run = sub.add_parser("run", help="integrate a scenario and write outputs")
    run.add_argument("--config", required=True, help="scenario YAML path")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--h", type=float, default=None, help="integration step override")
    run.add_argument("--horizon", type=float, default=None, help="horizon override")
    run.add_argument("--seed", type=int, default=None, help="seed override")
    run.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run several scenarios on a worker pool")
    sweep.add_argument("--configs", nargs="+", required=True, help="scenario YAML paths")
    sweep.add_argument("--out", default="out", help="root output directory")
    sweep.add_argument("--jobs", type=int, default=None, help="worker count")
    sweep.add_argument("--no-plots", action="store_true")
    sweep.set_defaults(func=_cmd_sweep)

    plot = sub.add_parser("plot", help="re-render figures from a trajectory table")
    plot.add_argument("--trajectory", required=True, help="trajectory CSV path")
    plot.add_argument("--out", default="out", help="output directory")
    plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
