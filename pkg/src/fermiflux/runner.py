"""Run scenarios and parameter sweeps, writing CSV, JSON and SVG outputs.

Output files of :func:`run`:

``trajectory.csv``
    ``t``, then ``T_j, mu_j, x_j, J_j, P_j, Y_j`` per reservoir (1-based),
    then ``sigma, sum_N, sum_E`` and ``omega_tilde_a_b`` per pair. Floats are
    written with 17 significant digits; a singular crossover is ``none``.
``events.json``
    List of events, reservoir and mode indices 1-based.
``summary.json``
    Solver equilibrium, trajectory limit, cooling depth, residuals, drift,
    integrator statistics and wall time.
``plot_T.svg``, ``plot_mu.svg``
    Optional, see :mod:`fermiflux.plotting`.

A ``slot-check`` scenario writes only ``summary.json``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import SLOT_RTOL
from .dynamics import Trajectory, integrate
from .equilibrium import EquilibriumPoint, solve_equilibrium
from .errors import (
    EXIT_INVARIANT,
    EXIT_OK,
    IntegrityError,
    InvalidInputError,
    ScenarioError,
    SommerfeldDomainError,
    StiffnessError,
    exit_status,
)
from .flows import entropy_production_arrays
from .scenario import Scenario, load_scenario, tomllib, with_parameter

FLOAT_FORMAT = ".17g"


def _f(v) -> str:
    return format(float(v), FLOAT_FORMAT)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")


@dataclass
class RunResult:
    """Outcome of :func:`run`; ``status`` is the process exit status."""

    status: int
    summary: dict
    trajectory: Trajectory | None = None
    equilibrium: EquilibriumPoint | None = None
    files: list[Path] = field(default_factory=list)


def trajectory_header(traj: Trajectory) -> list[str]:
    cols = ["t"]
    for j in range(1, traj.n_reservoirs + 1):
        cols += [f"T_{j}", f"mu_{j}", f"x_{j}", f"J_{j}", f"P_{j}", f"Y_{j}"]
    cols += ["sigma", "sum_N", "sum_E"]
    cols += [f"omega_tilde_{a + 1}_{b + 1}" for a, b in traj.pairs]
    return cols


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    n = traj.n_reservoirs
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(traj))
        for i in range(len(traj.t)):
            row = [_f(traj.t[i])]
            for j in range(n):
                row += [_f(v[i, j]) for v in (traj.T, traj.mu, traj.x, traj.J, traj.P, traj.Y)]
            row += [_f(traj.sigma[i]), _f(traj.sum_N[i]), _f(traj.sum_E[i])]
            row += ["none" if math.isnan(v) else _f(v) for v in traj.omega_tilde[i]]
            w.writerow(row)
    return path


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Columns of a ``trajectory.csv`` as float arrays (``none`` becomes NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[np.nan if v == "none" else float(v) for v in r] for r in body]).reshape(len(body), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def event_records(traj: Trajectory) -> list[dict]:
    out = []
    for e in traj.events:
        d = e.to_dict()
        d["reservoirs"] = [i + 1 for i in e.reservoirs]
        d["modes"] = [k + 1 for k in e.modes]
        out.append(d)
    return out


def _relative(a, b):
    return abs(a - b) / abs(b)


def trajectory_summary(scenario: Scenario, traj: Trajectory, eq: EquilibriumPoint) -> dict:
    T_lim, mu_lim = traj.limit()
    ratio, t_min = traj.min_temperature_ratio()
    cold = int(np.argmin([r.temperature for r in scenario.reservoirs]))
    drift_N, drift_E = traj.conservation_drift()
    last = traj.steps
    counts = {}
    for e in traj.events:
        counts[e.kind] = counts.get(e.kind, 0) + 1
    return {
        "name": scenario.name,
        "kind": scenario.kind,
        "termination": traj.termination,
        "t_final": traj.t_final,
        "T_eq": eq.T_eq,
        "mu_eq": eq.mu_eq,
        "solver": {
            "T_eq": eq.T_eq,
            "mu_eq": eq.mu_eq,
            "N_total": eq.N_total,
            "E_total": eq.E_total,
            "residual": eq.residual,
            "iterations": eq.iterations,
        },
        "trajectory_limit": {"T": T_lim, "mu": mu_lim},
        "limit_relative_difference": {"T": _relative(T_lim, eq.T_eq), "mu": _relative(mu_lim, eq.mu_eq)},
        "max_initial_T": max(r.temperature for r in scenario.reservoirs),
        "min_ratio": ratio,
        "min_ratio_time": t_min,
        "cold_reservoir": cold + 1,
        "residuals": {
            "equilibrium_solver": eq.residual,
            "final_sigma": float(last.sigma[-1]),
            "final_max_abs_J": float(np.max(np.abs(traj.J[-1]))),
            "final_max_abs_P": float(np.max(np.abs(traj.P[-1]))),
        },
        "conservation_drift": {"N": drift_N, "E": drift_E},
        "min_sigma_over_tolerance": float(np.min(last.sigma / np.where(last.slot_tolerance > 0, last.slot_tolerance, np.inf))),
        "event_counts": counts,
        "error_estimate": traj.error_estimate,
        "stats": traj.stats,
        "wall_time": traj.stats.get("wall_time"),
    }


def slot_check_summary(scenario: Scenario) -> dict:
    heat = np.array(scenario.slot_check.heat)
    T = np.array(scenario.slot_check.temperature)
    sigma = entropy_production_arrays(heat, T)
    tol = SLOT_RTOL * float(np.max(np.abs(heat / T)))
    return {
        "name": scenario.name,
        "kind": scenario.kind,
        "sum_heat": math.fsum(heat),
        "sum_heat_over_T": -sigma,
        "sigma": sigma,
        "slot_tolerance": tol,
        "second_law_holds": bool(sigma >= -tol),
    }


def run(scenario: Scenario | str | os.PathLike, out_dir, plots: bool | None = None) -> RunResult:
    """Integrate a scenario and write its outputs into ``out_dir``.

    Returns a :class:`RunResult` whose ``status`` is 0, or 4 when a
    ``slot-check`` scenario violates the second law. Integration errors are
    re-raised after the partial trajectory has been written.
    """
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    if scenario.kind == "slot-check":
        summary = slot_check_summary(scenario)
        summary["wall_time"] = time.perf_counter() - t0
        path = out / "summary.json"
        _write_json(path, summary)
        status = EXIT_OK if summary["second_law_holds"] else EXIT_INVARIANT
        return RunResult(status, summary, files=[path])

    eq = solve_equilibrium(scenario.reservoirs, x_min=scenario.options.x_min)
    try:
        traj = integrate(scenario.system, scenario.reservoirs, scenario.options)
    except (IntegrityError, SommerfeldDomainError, StiffnessError) as exc:
        partial = getattr(exc, "trajectory", None)
        if partial is not None:
            summary = trajectory_summary(scenario, partial, eq)
            summary["error"] = {"type": type(exc).__name__, "message": str(exc), "exit_status": exit_status(exc)}
            summary["wall_time"] = time.perf_counter() - t0
            write_trajectory_csv(partial, out / "trajectory.csv")
            _write_json(out / "events.json", event_records(partial))
            _write_json(out / "summary.json", summary)
        raise

    summary = trajectory_summary(scenario, traj, eq)
    summary["wall_time"] = time.perf_counter() - t0
    files = [
        write_trajectory_csv(traj, out / "trajectory.csv"),
        out / "events.json",
        out / "summary.json",
    ]
    _write_json(files[1], event_records(traj))
    _write_json(files[2], summary)
    if scenario.plots if plots is None else plots:
        from .plotting import plot_trajectory

        files += plot_trajectory(traj, out, eq.T_eq, eq.mu_eq, scenario.name)
    return RunResult(EXIT_OK, summary, traj, eq, files)


# --- sweeps -----------------------------------------------------------------

SWEEP_FIELDS = (
    "status",
    "exit_status",
    "error",
    "termination",
    "T_eq",
    "mu_eq",
    "limit_T",
    "limit_mu",
    "min_ratio",
    "min_ratio_time",
    "drift_N",
    "drift_E",
    "n_events",
    "wall_time",
)


def load_grid(path) -> dict[str, list]:
    """Read a TOML grid file: a ``[grid]`` table mapping parameter paths to value lists.

    Paths are those of :func:`fermiflux.scenario.with_parameter`, quoted
    because of the brackets, for example
    ``"reservoir[2].chemical_potential" = [16.0, 17.0, 18.0]``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(str(exc), path=path) from exc
    unknown = set(doc) - {"grid"}
    if unknown:
        raise ScenarioError(f"unknown top-level key(s) {sorted(unknown)}", path=path)
    grid = doc.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ScenarioError("missing or empty [grid] table", path=path, field="grid")
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ScenarioError("expected a non-empty list of values", path=path, field=f"grid.{key}")
    return grid


def grid_points(grid: dict[str, list]) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _sweep_point(args):
    template, point, point_dir = args
    row = dict.fromkeys(SWEEP_FIELDS, "")
    try:
        scenario = template
        for key, value in point.items():
            scenario = with_parameter(scenario, key, value)
        result = run(scenario, point_dir, plots=False)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a row
        try:
            code = exit_status(exc)
        except Exception:  # noqa: BLE001
            code = 1
        row.update(status="error", exit_status=code, error=f"{type(exc).__name__}: {exc}")
        return row
    s = result.summary
    row.update(status="ok" if result.status == EXIT_OK else "violation", exit_status=result.status)
    if scenario.kind == "slot-check":
        return row
    row.update(
        termination=s["termination"],
        T_eq=s["T_eq"],
        mu_eq=s["mu_eq"],
        limit_T=s["trajectory_limit"]["T"],
        limit_mu=s["trajectory_limit"]["mu"],
        min_ratio=s["min_ratio"],
        min_ratio_time=s["min_ratio_time"],
        drift_N=s["conservation_drift"]["N"],
        drift_E=s["conservation_drift"]["E"],
        n_events=sum(s["event_counts"].values()),
        wall_time=s["wall_time"],
    )
    return row


def sweep(template: Scenario | str | os.PathLike, grid, out_dir, jobs: int = 1) -> list[dict]:
    """Run every point of a parameter grid; one row per point in ``sweep.csv``.

    ``grid`` is a mapping of parameter paths to value lists or the path of a
    grid file. Each point's run outputs go to ``out_dir/point_NNNN`` (without
    plots). A failing point is recorded with its exit status and message and
    the sweep continues. Returns the rows in grid order.
    """
    if not isinstance(template, Scenario):
        template = load_scenario(template)
    if not isinstance(grid, dict):
        grid = load_grid(grid)
    if jobs < 1:
        raise InvalidInputError(f"jobs must be at least 1, got {jobs}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = grid_points(grid)
    tasks = [(template, p, out / f"point_{i:04d}") for i, p in enumerate(points)]
    if jobs == 1 or len(tasks) == 1:
        results = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_sweep_point, tasks))

    keys = list(grid)
    rows = []
    for i, (p, r) in enumerate(zip(points, results)):
        rows.append({"point": i, **p, **r})
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["point", *keys, *SWEEP_FIELDS])
        w.writeheader()
        for row in rows:
            w.writerow({k: _f(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows
