"""Benchmark harness: parameter sweeps, run records, and performance profiles.

Records are plain rows (CSV-friendly); profiles follow the standard
best-ratio construction: for solver s on instance i the ratio is
``metric_{i,s} / min_s' metric_{i,s'}`` and the curve value at theta is the
fraction of instances solved within that ratio.
"""

from __future__ import annotations

import csv
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dnnsdp import DnnSdpProblem, solve_dnnsdp
from .errors import ConfigError, GadmmError
from .solver import SolverConfig, Status

__all__ = [
    "RunRecord",
    "ProfileCurve",
    "run_one",
    "run_suite",
    "performance_profile",
    "write_records_csv",
    "read_records_csv",
    "write_profile_csv",
    "write_report_json",
    "RECORD_FIELDS",
    "WORKERS_ENV",
]

RECORD_FIELDS = ["instance", "method", "param", "iterations", "eta", "time_s", "status"]
WORKERS_ENV = "GADMM_WORKERS"


@dataclass
class RunRecord:
    """One benchmark cell: an (instance, method, parameter) combination."""

    instance: str
    method: str
    param: float
    iterations: int
    eta: float
    time_s: float
    status: str
    residuals: dict | None = None
    objective: float | None = None


@dataclass
class ProfileCurve:
    """Fraction of instances solved within each performance ratio."""

    label: str
    thetas: np.ndarray
    fractions: np.ndarray


def _cell_config(method: str, param: float, base: SolverConfig | None) -> SolverConfig:
    base = base if base is not None else SolverConfig()
    if method == "gadmm":
        return replace(base, rho=float(param))
    if method == "spadmm":
        return replace(base, tau=float(param))
    if method == "scheme12":
        return replace(base, rho=float(param))
    raise ConfigError(f"unknown method {method!r}")


def run_one(instance_id: str, problem: DnnSdpProblem, method: str, param: float,
            base_config: SolverConfig | None = None, alpha: float | None = None) -> RunRecord:
    """Solve one cell cold (no factorization reuse across cells)."""
    try:
        config = _cell_config(method, param, base_config)
        start = time.perf_counter()
        it, res, report = solve_dnnsdp(problem, method=method, config=config, alpha=alpha)
        elapsed = time.perf_counter() - start
        from .dnnsdp import primal_objective

        return RunRecord(
            instance=instance_id,
            method=method,
            param=float(param),
            iterations=report.iterations,
            eta=float(res.worst),
            time_s=elapsed,
            status=report.status.value,
            residuals=res.as_dict(),
            objective=primal_objective(problem, it),
        )
    except GadmmError as exc:
        return RunRecord(
            instance=instance_id,
            method=method,
            param=float(param),
            iterations=0,
            eta=float("inf"),
            time_s=0.0,
            status=f"error: {exc}",
        )


def run_suite(instances, cells, base_config: SolverConfig | None = None,
              alpha: float | None = None, workers: int | None = None) -> list[RunRecord]:
    """Run every (instance, method, param) cell and collect the records.

    ``instances`` is a sequence of (id, problem-or-loader); a loader is a
    zero-argument callable so unreadable instances become error records
    instead of aborting the suite.  Worker count comes from the environment
    (``GADMM_WORKERS``) unless given; cells always solve single-threaded.
    """
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = []
    for inst_id, source in instances:
        for method, param in cells:
            jobs.append((inst_id, source, method, param))

    def work(job):
        inst_id, source, method, param = job
        try:
            problem = source() if callable(source) else source
        except Exception as exc:
            return RunRecord(inst_id, method, float(param), 0, float("inf"), 0.0,
                             f"error: {exc}")
        return run_one(inst_id, problem, method, param, base_config, alpha)

    if workers <= 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, jobs))


def performance_profile(records, metric: str = "time") -> list[ProfileCurve]:
    """Best-ratio profile across solvers (method:param pairs).

    Unsolved cells get ratio +inf; instances where every solver failed are
    dropped with a warning.
    """
    if metric not in ("time", "iterations"):
        raise ConfigError(f"unknown metric {metric!r}")
    key = "time_s" if metric == "time" else "iterations"
    solvers = sorted({f"{r.method}:{r.param:g}" for r in records})
    by_instance: dict[str, dict[str, float]] = {}
    for r in records:
        label = f"{r.method}:{r.param:g}"
        value = getattr(r, key)
        solved = r.status == Status.CONVERGED.value
        by_instance.setdefault(r.instance, {})[label] = float(value) if solved else np.inf

    ratios: dict[str, list[float]] = {s: [] for s in solvers}
    kept = 0
    for inst, row in by_instance.items():
        best = min(row.get(s, np.inf) for s in solvers)
        if not np.isfinite(best):
            warnings.warn(f"instance {inst!r}: every solver failed; dropped from the profile")
            continue
        kept += 1
        best = max(best, 1e-12)
        for s in solvers:
            val = row.get(s, np.inf)
            ratios[s].append(val / best if np.isfinite(val) else np.inf)
    if kept == 0:
        raise ConfigError("no instance was solved by any solver")

    finite = sorted({r for rs in ratios.values() for r in rs if np.isfinite(r)} | {1.0})
    thetas = np.array(finite)
    curves = []
    for s in solvers:
        rs = np.array(ratios[s])
        fractions = np.array([(rs <= t).sum() / kept for t in thetas])
        curves.append(ProfileCurve(label=s, thetas=thetas, fractions=fractions))
    return curves


# ---------------------------------------------------------------------------
# record IO


def write_records_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [r.instance, r.method, repr(float(r.param)), r.iterations,
                 repr(float(r.eta)), repr(float(r.time_s)), r.status]
            )


def read_records_csv(path) -> list[RunRecord]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RECORD_FIELDS:
            raise ConfigError(f"unexpected record header {header!r}")
        for row in reader:
            records.append(
                RunRecord(
                    instance=row[0],
                    method=row[1],
                    param=float(row[2]),
                    iterations=int(row[3]),
                    eta=float(row[4]),
                    time_s=float(row[5]),
                    status=row[6],
                )
            )
    return records


def write_profile_csv(curves, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solver", "theta", "fraction"])
        for curve in curves:
            for t, frac in zip(curve.thetas, curve.fractions):
                writer.writerow([curve.label, repr(float(t)), repr(float(frac))])


def write_report_json(records, path):
    """Full JSON report including per-cell residual breakdowns."""
    payload = {
        "format": "gadmm-report",
        "version": 1,
        "records": [
            {
                "instance": r.instance,
                "method": r.method,
                "param": r.param,
                "iterations": r.iterations,
                "eta": r.eta,
                "time_s": r.time_s,
                "status": r.status,
                "residuals": r.residuals,
                "objective": r.objective,
            }
            for r in records
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
