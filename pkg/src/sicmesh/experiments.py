"""Scheme x policy sweeps with model-vs-simulation comparison reports.

A plan enumerates (topology, threshold, allocation scheme, reception
policy) cells.  Each cell solves its allocation, evaluates the analytic
aggregate throughput, runs replicated simulations, and lands as one CSV
row (plus a JSON mirror carrying everything).  Cells are independent and
may run on a thread pool; outputs are written atomically and ordered
deterministically, so a re-run with the same seed is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

import numpy as np

from .allocation import (
    AllocationResult,
    AnnealingConfig,
    OptimizationProblem,
    allocate_best_path,
    allocate_fmp,
    solve_tofra,
)
from .network import RELAY, POLICY_VARIANTS, Scenario, builtin_topology
from .simulator import SimConfig, replicate
from .throughput import DEFAULT_MC_SAMPLES

SCHEMES = ("tofra", "fmp", "bp_e2e", "bp_wb")

CSV_COLUMNS = [
    "topo", "gamma", "scheme", "policy", "q1", "q2",
    "aat_num", "aat_sim", "aat_sim_std",
    "delay_f1", "delay_f2", "qratio_R", "retx_frac_2d",
]


@dataclass(frozen=True)
class ExperimentPlan:
    topologies: Tuple[int, ...] = (1, 2, 3)
    gammas: Tuple[float, ...] = (0.5, 2.0)
    schemes: Tuple[str, ...] = SCHEMES
    policies: Tuple[str, ...] = POLICY_VARIANTS
    seed: int = 0
    n_replications: int = 10
    n_slots: int = 20_000
    out_dir: Optional[str] = None
    mc_samples: int = DEFAULT_MC_SAMPLES
    workers: int = 1
    sic_fallback: bool = True

    def __post_init__(self):
        for name in ("topologies", "gammas", "schemes", "policies"):
            if not getattr(self, name):
                raise ValueError(f"plan field {name} must be non-empty")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        bad = set(self.policies) - set(POLICY_VARIANTS)
        if bad:
            raise ValueError(f"unknown policies {sorted(bad)}")

    def cells(self) -> List[Tuple[int, float, str, str]]:
        return [
            (t, g, s, p)
            for t in self.topologies
            for g in self.gammas
            for s in self.schemes
            for p in self.policies
        ]


@dataclass
class CellResult:
    topo: int
    gamma: float
    scheme: str
    policy: str
    rates: Dict[str, float]
    aux_rates: Dict[str, float]
    aat_num: float
    aat_sim: float
    aat_sim_std: float
    flow_sim_throughput: Dict[str, float]
    flow_delay: Dict[str, Optional[float]]
    flow_drops: Dict[str, float]
    relay_ratio: Dict[str, float]
    retx_fraction: Dict[str, float]
    link_delivery_ratio: Dict[str, float]
    mean_queue: Dict[str, float]
    feasible: bool
    deviation: Optional[float]
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"topo{self.topo}_g{_fmt(self.gamma)}_{self.scheme}_{self.policy}"


@dataclass
class ComparisonReport:
    rows: List[CellResult]
    errors: List[Tuple[str, str]]
    mean_tofra_deviation: Optional[float]
    plan: ExperimentPlan

    def ok(self) -> bool:
        return not self.errors


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _cell_seed(plan_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([plan_seed, index]).generate_state(1)[0])


def solve_cell_allocation(
    scenario: Scenario,
    scheme: str,
    seed: int,
    mc_samples: int = DEFAULT_MC_SAMPLES,
) -> AllocationResult:
    cfg = AnnealingConfig(seed=seed)
    if scheme == "tofra":
        return solve_tofra(OptimizationProblem(scenario, mc_samples), cfg)
    if scheme == "fmp":
        return allocate_fmp(scenario, mc_samples)
    if scheme == "bp_e2e":
        return allocate_best_path(scenario, "e2e", cfg, mc_samples)
    if scheme == "bp_wb":
        return allocate_best_path(scenario, "widest_bottleneck", cfg, mc_samples)
    raise ValueError(f"unknown scheme {scheme!r}")


def run_cell(plan: ExperimentPlan, index: int, cell: Tuple[int, float, str, str]) -> CellResult:
    topo, gamma, scheme, policy = cell
    scenario = builtin_topology(topo, gamma, policy)
    alloc_seed = _cell_seed(plan.seed, index)
    result = solve_cell_allocation(scenario, scheme, alloc_seed, plan.mc_samples)

    sim_cfg = SimConfig(
        scenario,
        result.allocation,
        n_slots=plan.n_slots,
        seed=_cell_seed(plan.seed, index + 10_000),
        sic_fallback=plan.sic_fallback,
    )
    runs, summary = replicate(sim_cfg, plan.n_replications)

    relays = sorted(n.id for n in scenario.nodes if n.role == RELAY)
    retx = {}
    delivery = {}
    queues = {}
    for link in scenario.links():
        retx["-".join(link)] = float(np.mean([m.links[link].retx_fraction for m in runs]))
        attempts = sum(m.links[link].attempts for m in runs)
        successes = sum(m.links[link].successes for m in runs)
        delivery["-".join(link)] = successes / attempts if attempts else math.nan
    for node in scenario.tx_capable_ids():
        queues[node] = float(np.mean([m.mean_queue[node] for m in runs]))

    aat_num = result.predicted_aat
    deviation = abs(aat_num - summary.aat_mean) / aat_num if aat_num > 0 else None
    return CellResult(
        topo=topo,
        gamma=gamma,
        scheme=scheme,
        policy=policy,
        rates=dict(result.allocation.rates),
        aux_rates=dict(result.allocation.aux_rates),
        aat_num=aat_num,
        aat_sim=summary.aat_mean,
        aat_sim_std=summary.aat_std,
        flow_sim_throughput=dict(summary.flow_throughput_mean),
        flow_delay=dict(summary.flow_delay_mean),
        flow_drops={f: float(np.mean([m.flows[f].dropped for m in runs])) for f in scenario.flows()},
        relay_ratio={r: summary.relay_ratio_mean[r] for r in relays},
        retx_fraction=retx,
        link_delivery_ratio=delivery,
        mean_queue=queues,
        feasible=result.feasible,
        deviation=deviation,
        metadata=dict(result.metadata),
    )


def run_plan(plan: ExperimentPlan) -> ComparisonReport:
    """Execute every cell; cell failures are recorded, not raised."""
    cells = plan.cells()
    rows: List[Optional[CellResult]] = [None] * len(cells)
    errors: List[Tuple[str, str]] = []

    def work(k: int):
        return k, run_cell(plan, k, cells[k])

    def record_error(k: int, exc: BaseException):
        t, g, s, p = cells[k]
        errors.append((f"topo{t}_g{_fmt(g)}_{s}_{p}", "".join(traceback.format_exception_only(exc)).strip()))

    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            futures = [pool.submit(work, k) for k in range(len(cells))]
        for k, future in enumerate(futures):
            exc = future.exception()
            if exc is not None:
                record_error(k, exc)
            else:
                idx, row = future.result()
                rows[idx] = row
    else:
        for k in range(len(cells)):
            try:
                _, rows[k] = work(k)
            except Exception as exc:
                record_error(k, exc)

    done = [r for r in rows if r is not None]
    tofra_devs = [r.deviation for r in done if r.scheme == "tofra" and r.deviation is not None]
    report = ComparisonReport(
        rows=done,
        errors=errors,
        mean_tofra_deviation=float(np.mean(tofra_devs)) if tofra_devs else None,
        plan=plan,
    )
    if plan.out_dir:
        write_report(report, plan.out_dir, timestamp=True)
    return report


# -- serialization -----------------------------------------------------------


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf"
        return _fmt(v)
    return str(v)


def row_record(row: CellResult) -> Dict[str, object]:
    """The flat CSV view of a cell: first two flows in path order."""
    flows = sorted(row.rates)  # f1, f2 ordering for the built-ins
    q = [row.rates[f] for f in flows]
    delays = [row.flow_delay.get(f) for f in flows]
    ratio = next(iter(row.relay_ratio.values()), None)
    retx_2d = row.retx_fraction.get("2-d")
    return {
        "topo": row.topo,
        "gamma": _fmt(row.gamma),
        "scheme": row.scheme,
        "policy": row.policy,
        "q1": q[0] if q else None,
        "q2": q[1] if len(q) > 1 else None,
        "aat_num": row.aat_num,
        "aat_sim": row.aat_sim,
        "aat_sim_std": row.aat_sim_std,
        "delay_f1": delays[0] if delays else None,
        "delay_f2": delays[1] if len(delays) > 1 else None,
        "qratio_R": ratio,
        "retx_frac_2d": retx_2d,
    }


def report_csv(report: ComparisonReport, timestamp: bool = False) -> str:
    buf = io.StringIO()
    if timestamp:
        buf.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        record = row_record(row)
        writer.writerow([_csv_value(record[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _jsonable(v):
    """Recursively replace non-finite floats; keeps the JSON strict."""
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def report_json(report: ComparisonReport) -> str:
    payload = {
        "plan": {
            "topologies": list(report.plan.topologies),
            "gammas": list(report.plan.gammas),
            "schemes": list(report.plan.schemes),
            "policies": list(report.plan.policies),
            "seed": report.plan.seed,
            "n_replications": report.plan.n_replications,
            "n_slots": report.plan.n_slots,
            "mc_samples": report.plan.mc_samples,
            "relay_model_note": "analytic relay attempt rate 2/(CW+2) approximates the simulator's uniform-[0,CW] backoff",
        },
        "mean_tofra_deviation": report.mean_tofra_deviation,
        "errors": [{"cell": c, "error": e} for c, e in report.errors],
        "cells": [_jsonable(asdict(row)) for row in report.rows],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def _atomic_write(path: str, data: str):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_report(report: ComparisonReport, out_dir: str, timestamp: bool = True):
    _atomic_write(os.path.join(out_dir, "results.csv"), report_csv(report, timestamp=timestamp))
    _atomic_write(os.path.join(out_dir, "results.json"), report_json(report))
    for row in report.rows:
        cell_json = json.dumps(_jsonable(asdict(row)), indent=2, sort_keys=True)
        _atomic_write(os.path.join(out_dir, "cells", f"{row.name}.json"), cell_json)
