"""Command-line interface.

Subcommands: ``analyze`` (analytic throughput for a given allocation),
``optimize`` (run an allocator), ``simulate`` (slot simulator),
``compare`` (full scheme x policy sweep with CSV/JSON reports),
``calibrate`` (recover reference-topology distances), ``oracle``
(grid-search and Monte-Carlo validation modes).

Exit codes: 0 success, 1 numeric or cell failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

import numpy as np

from .allocation import (
    AnnealingConfig,
    OptimizationProblem,
    grid_search_oracle,
    solve_tofra,
)
from .calibration import calibrate_topology1
from .channel import (
    ChannelParams,
    ReceptionPolicy,
    TransmitterState,
    success_prob_ian,
    success_prob_mc,
    success_prob_sic,
    success_prob_solo,
)
from .experiments import (
    SCHEMES,
    ExperimentPlan,
    report_csv,
    report_json,
    run_plan,
    solve_cell_allocation,
    write_report,
    _fmt,
)
from .network import POLICY_VARIANTS, Scenario, builtin_topology, load_scenario_file
from .simulator import SimConfig, replicate
from .throughput import DEFAULT_MC_SAMPLES, FlowAllocation, model_for


def _add_scenario_args(p: argparse.ArgumentParser):
    p.add_argument("--scenario", help="TOML scenario file (overrides --topology)")
    p.add_argument("--topology", type=int, choices=(1, 2, 3), help="built-in topology index")
    p.add_argument("--gamma", type=float, default=0.5, help="SINR threshold (built-in topologies)")
    p.add_argument("--policy", choices=POLICY_VARIANTS, default="ian", help="interference handling")


def _add_output_args(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timestamp", action="store_true", help="suppress the CSV timestamp header")


def _scenario_from(args) -> Scenario:
    if args.scenario:
        return load_scenario_file(args.scenario)
    if args.topology is None:
        raise SystemExit2("either --scenario or --topology is required")
    return builtin_topology(args.topology, args.gamma, args.policy)


class SystemExit2(Exception):
    """Usage error discovered after argparse."""


def _emit(records: List[Dict[str, object]], args) -> None:
    """Write a uniform table as CSV or JSON to --out or stdout."""
    if args.format == "json":
        text = json.dumps([_clean_rec(r) for r in records], indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        if not args.no_timestamp:
            buf.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        cols = list(records[0].keys()) if records else []
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in records:
            writer.writerow([_cell(r[c]) for c in cols])
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf"
        return _fmt(v)
    return str(v)


def _clean_rec(r: Dict[str, object]) -> Dict[str, object]:
    out = {}
    for k, v in r.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = "nan" if math.isnan(v) else "inf"
        out[k] = v
    return out


def _rates_from(args, scenario: Scenario) -> FlowAllocation:
    flows = list(scenario.flows())
    if args.rates:
        vals = [float(x) for x in args.rates.split(",")]
        if len(vals) != len(flows):
            raise SystemExit2(f"--rates needs {len(flows)} comma-separated values for flows {flows}")
        return FlowAllocation(dict(zip(flows, vals)))
    return FlowAllocation({f: scenario.node(scenario.path_of_flow(f).source).tx_prob for f in flows})


# -- subcommands -------------------------------------------------------------


def cmd_analyze(args) -> int:
    scenario = _scenario_from(args)
    alloc = _rates_from(args, scenario)
    model = model_for(scenario, args.mc_samples)
    records = []
    for (i, j), value in sorted(model.all_link_throughputs(alloc.rates).items()):
        records.append({"kind": "link", "name": f"{i}-{j}", "value": value})
    for path in scenario.paths:
        records.append({"kind": "path", "name": path.flow, "value": model.path_throughput(alloc.rates, path)})
    records.append({"kind": "aggregate", "name": "aat_num", "value": model.aggregate_throughput(alloc.rates)})
    records.append({"kind": "meta", "name": "monte_carlo_used", "value": model.used_monte_carlo})
    _emit(records, args)
    return 0


def cmd_optimize(args) -> int:
    scenario = _scenario_from(args)
    result = solve_cell_allocation(scenario, args.scheme, args.seed, args.mc_samples)
    records = [{"key": f"q_{f}", "value": q} for f, q in sorted(result.allocation.rates.items())]
    records += [{"key": f"qprime_{f}", "value": q} for f, q in sorted(result.allocation.aux_rates.items())]
    records += [
        {"key": "objective", "value": result.objective},
        {"key": "aat_num", "value": result.predicted_aat},
        {"key": "scheme", "value": result.scheme},
        {"key": "feasible", "value": result.feasible},
    ]
    _emit(records, args)
    return 0


def cmd_simulate(args) -> int:
    scenario = _scenario_from(args)
    if args.scheme:
        alloc = solve_cell_allocation(scenario, args.scheme, args.seed, args.mc_samples).allocation
    else:
        alloc = _rates_from(args, scenario)
    cfg = SimConfig(
        scenario,
        alloc,
        n_slots=args.slots,
        seed=args.seed,
        max_retransmits=args.max_retransmits,
        contention_window=args.contention_window,
        sic_fallback=not args.strict_sic,
        collect_trace=bool(args.trace),
    )
    runs, summary = replicate(cfg, args.reps)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["slot", "node", "event", "packet_id", "outcome"])
            for row in runs[0].trace:
                writer.writerow(row)
    records = [{"key": "aat_sim", "value": summary.aat_mean}, {"key": "aat_sim_std", "value": summary.aat_std}]
    for f in sorted(summary.flow_throughput_mean):
        records.append({"key": f"throughput_{f}", "value": summary.flow_throughput_mean[f]})
        records.append({"key": f"delay_{f}", "value": summary.flow_delay_mean[f]})
    for r, ratio in sorted(summary.relay_ratio_mean.items()):
        records.append({"key": f"qratio_{r}", "value": ratio})
    for (i, j) in sorted(scenario.links()):
        retx = float(np.mean([m.links[(i, j)].retx_fraction for m in runs]))
        records.append({"key": f"retx_frac_{i}-{j}", "value": retx})
    _emit(records, args)
    return 0


def cmd_compare(args) -> int:
    plan = ExperimentPlan(
        topologies=tuple(int(t) for t in args.topologies.split(",")),
        gammas=tuple(float(g) for g in args.gammas.split(",")),
        schemes=tuple(args.schemes.split(",")),
        policies=tuple(args.policies.split(",")),
        seed=args.seed,
        n_replications=args.reps,
        n_slots=args.slots,
        mc_samples=args.mc_samples,
        workers=args.workers,
    )
    report = run_plan(plan)
    if args.out_dir:
        write_report(report, args.out_dir, timestamp=not args.no_timestamp)
    if args.format == "json":
        text = report_json(report)
    else:
        text = report_csv(report, timestamp=not args.no_timestamp)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if report.mean_tofra_deviation is not None:
        print(f"# mean TOFRA model-vs-sim deviation: {report.mean_tofra_deviation:.4%}", file=sys.stderr)
    for cell, err in report.errors:
        print(f"# cell {cell} failed: {err}", file=sys.stderr)
    return 0 if report.ok() else 1


def cmd_calibrate(args) -> int:
    res = calibrate_topology1()
    records = [{"key": k, "value": v} for k, v in sorted(res.distances.items())]
    for row in res.checks:
        records.append({"key": f"check_{row['name']}", "value": row["achieved"]})
        records.append({"key": f"residual_{row['name']}", "value": row["achieved"] - row["target"]})
    _emit(records, args)
    return 0


def cmd_oracle(args) -> int:
    if args.mode == "grid":
        scenario = _scenario_from(args)
        problem = OptimizationProblem(scenario, args.mc_samples)
        grid = grid_search_oracle(problem, args.resolution)
        sa = solve_tofra(problem, AnnealingConfig(seed=args.seed))
        records = [{"key": f"grid_q_{f}", "value": q} for f, q in sorted(grid.allocation.rates.items())]
        records += [
            {"key": "grid_objective", "value": grid.objective},
            {"key": "annealing_objective", "value": sa.objective},
            {"key": "objective_gap", "value": abs(grid.objective - sa.objective)},
        ]
        _emit(records, args)
        return 0

    # mode == "mc": randomized cross-validation of the closed forms
    rng = np.random.default_rng(args.seed)
    worst = {"solo": 0.0, "ian": 0.0, "sic": 0.0}
    ch = ChannelParams(path_loss_exponent=3.0, noise_power=1.0)
    for k in range(args.points):
        gamma = float(rng.uniform(0.05, 2.5))
        p1, p2 = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0))
        r1, r2 = float(rng.uniform(0.6, 1.4)), float(rng.uniform(0.6, 1.4))
        tx = TransmitterState(p1, gamma, (0.0, 0.0))
        it = TransmitterState(p2, gamma, (0.0, r1 + r2))
        rx = (0.0, r1)
        cases = {
            "solo": (success_prob_solo(tx, rx, ch), [], ReceptionPolicy("ian")),
            "ian": (success_prob_ian(tx, it, rx, ch), [it], ReceptionPolicy("ian")),
            "sic": (success_prob_sic(tx, it, rx, ch), [it], ReceptionPolicy("sic", ("0",))),
        }
        for name, (closed, interferers, policy) in cases.items():
            est, se = success_prob_mc(
                tx, interferers, policy, rx, ch, args.samples, seed=args.seed + 7919 * k, cancel_ids=("0",)
            )
            z = abs(est - closed) / max(se, 1e-12)
            worst[name] = max(worst[name], z)
    records = [{"key": f"max_sigma_{name}", "value": z} for name, z in sorted(worst.items())]
    records.append({"key": "points", "value": args.points})
    records.append({"key": "samples", "value": args.samples})
    records.append({"key": "pass_4sigma", "value": all(z <= 4.0 for z in worst.values())})
    _emit(records, args)
    return 0 if all(z <= 4.0 for z in worst.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sicmesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analytic link/path/aggregate throughput for an allocation")
    _add_scenario_args(p)
    _add_output_args(p)
    p.add_argument("--rates", help="comma-separated source rates in path order")
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", help="run a flow allocator")
    _add_scenario_args(p)
    _add_output_args(p)
    p.add_argument("--scheme", choices=SCHEMES, default="tofra")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="run the slot simulator")
    _add_scenario_args(p)
    _add_output_args(p)
    p.add_argument("--rates", help="comma-separated source rates in path order")
    p.add_argument("--scheme", choices=SCHEMES, help="derive rates by running this allocator first")
    p.add_argument("--slots", type=int, default=20_000)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-retransmits", type=int, default=3)
    p.add_argument("--contention-window", type=int, default=5)
    p.add_argument("--strict-sic", action="store_true", help="joint-success SIC (no fallback decode)")
    p.add_argument("--trace", help="write the first replication's per-slot event trace CSV here")
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="full scheme x policy sweep with reports")
    _add_output_args(p)
    p.add_argument("--topologies", default="1,2,3")
    p.add_argument("--gammas", default="0.5,2.0")
    p.add_argument("--schemes", default=",".join(SCHEMES))
    p.add_argument("--policies", default=",".join(POLICY_VARIANTS))
    p.add_argument("--slots", type=int, default=20_000)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.add_argument("--out-dir", help="directory for results.csv/results.json/cells/*.json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="recover reference-topology distances from operating points")
    _add_output_args(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle", help="grid-search / Monte-Carlo validation")
    _add_scenario_args(p)
    _add_output_args(p)
    p.add_argument("--mode", choices=("grid", "mc"), default="grid")
    p.add_argument("--resolution", type=float, default=0.01)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        parser.exit(2, f"error: {exc}\n")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
