"""Flow-rate allocators.

The main solver maximizes the sum over flows of the delivered rate —
bottleneck link throughput for single-link paths, the auxiliary injected
rate q' for multi-hop paths — subject to box constraints on all rates, the
bounded-delay constraint (a path's first-link throughput may not exceed
any downstream link's throughput), and q' itself being limited by every
link of its path.  Given the source rates, the optimal q' of a path is
exactly its bottleneck throughput, so that inner maximization is done in
closed form and the search runs over source rates only.

The objective is discontinuous at zero source rates (an idle path's relay
stops interfering), so the search uses simulated annealing with proposals
clipped to [0,1]; clipping puts point mass on the boundary, which is where
several optima live.  An exhaustive grid scan serves as the optimizer's
oracle for low-dimensional problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Mapping, Optional, Sequence, Tuple

import numpy as np

from .network import DESTINATION, SOURCE, Scenario
from .throughput import (
    DEFAULT_MC_SAMPLES,
    FlowAllocation,
    ThroughputModel,
    model_for,
)

FEAS_EPS = 1e-9


@dataclass(frozen=True)
class AnnealingConfig:
    """Geometric-cooling schedule.  Defaults suit a box-constrained problem
    of at most a handful of dimensions; everything is overridable."""

    initial_temperature: float = 1.0
    cooling_factor: float = 0.95
    iterations_per_temperature: int = 200
    restarts: int = 8
    proposal_step: float = 0.05
    constraint_penalty_weight: float = 10.0
    seed: int = 0
    min_temperature: float = 1e-4
    penalty_temperature: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.cooling_factor < 1.0:
            raise ValueError(f"cooling_factor must lie in (0,1), got {self.cooling_factor}")
        for name in ("initial_temperature", "iterations_per_temperature", "restarts",
                     "proposal_step", "constraint_penalty_weight", "min_temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AllocationResult:
    allocation: FlowAllocation
    objective: float
    predicted_aat: float
    path_throughputs: Mapping[str, float]
    link_throughputs: Mapping[Tuple[str, str], float]
    feasible: bool
    violation: float
    scheme: str
    metadata: Mapping[str, object] = field(default_factory=dict)


class OptimizationProblem:
    """The flow-allocation problem over a fixed scenario.

    ``fixed_zero`` pins the named flows to rate 0 (used by the single-path
    baselines).  Feasibility refers to the bounded-delay constraint; the
    box constraints hold by construction.
    """

    def __init__(
        self,
        scenario: Scenario,
        mc_samples: int = DEFAULT_MC_SAMPLES,
        fixed_zero: FrozenSet[str] = frozenset(),
        scale_interferer_by_receiver: bool = False,
    ):
        self.scenario = scenario
        self.model = model_for(scenario, mc_samples, scale_interferer_by_receiver)
        self.flows = list(scenario.flows())
        unknown = set(fixed_zero) - set(self.flows)
        if unknown:
            raise ValueError(f"fixed_zero names unknown flows {sorted(unknown)}")
        self.fixed_zero = frozenset(fixed_zero)
        self.free_flows = [f for f in self.flows if f not in self.fixed_zero]
        self._fast = _FastEvaluator(self.model)

    def rates_from_vector(self, x: Sequence[float]) -> Dict[str, float]:
        rates = {f: 0.0 for f in self.flows}
        for f, v in zip(self.free_flows, x):
            rates[f] = float(v)
        return rates

    def evaluate_vector(self, x: Sequence[float]) -> Tuple[float, float]:
        """(objective, bounded-delay violation) for a free-rate vector."""
        return self._fast.evaluate([self.rates_from_vector(x)[f] for f in self.flows])

    def result(self, rates: Mapping[str, float], scheme: str, metadata: Optional[dict] = None) -> AllocationResult:
        links = self.model.all_link_throughputs(rates)
        path_thr = {p.flow: min(links[l] for l in p.links) for p in self.scenario.paths}
        aux = {p.flow: path_thr[p.flow] for p in self.scenario.paths if len(p) > 1}
        objective = sum(path_thr.values())
        violation = _s2_violation(self.scenario, links)
        meta = dict(metadata or {})
        if self.model.used_monte_carlo:
            meta["monte_carlo_subsets"] = True
            meta["mc_samples"] = self.model.mc_samples
        return AllocationResult(
            allocation=FlowAllocation(dict(rates), aux),
            objective=objective,
            predicted_aat=objective,
            path_throughputs=path_thr,
            link_throughputs=links,
            feasible=violation <= 1e-6,
            violation=violation,
            scheme=scheme,
            metadata=meta,
        )


def _s2_violation(scenario: Scenario, links: Mapping[Tuple[str, str], float]) -> float:
    viol = 0.0
    for path in scenario.paths:
        if len(path) <= 1:
            continue
        first = links[path.links[0]]
        for l in path.links:
            viol += max(0.0, first - links[l])
    return viol


class _FastEvaluator:
    """Flattened scenario for tight annealing loops: per link, the subset
    probability table plus integer-coded activity sources."""

    # node coding: (0, flow_idx, _) source; (1, flow_idx, q_relay) relay; (2, _, _) destination

    def __init__(self, model: ThroughputModel):
        scenario = model.scenario
        self.flow_index = {f: k for k, f in enumerate(scenario.flows())}

        def code(node_id: str):
            node = scenario.node(node_id)
            if node.role == DESTINATION:
                return (2, 0, 0.0)
            k = self.flow_index[scenario.path_of_node(node_id).flow]
            if node.role == SOURCE:
                return (0, k, 0.0)
            return (1, k, node.tx_prob)

        next_hop = model._next_hop
        self.scale = model.scale_interferer_by_receiver
        self.links: Dict[Tuple[str, str], tuple] = {}
        for link, table in model.tables.items():
            i, j = link
            acts = []
            for n in table.interferers:
                nxt = next_hop.get(n)
                acts.append((code(n), code(nxt) if (self.scale and nxt) else None))
            self.links[link] = (code(i), code(j), list(table.subset_probs), acts)
        self.paths = [(len(p) > 1, [p.links[0]] + list(p.links[1:]), p.flow) for p in scenario.paths]

    @staticmethod
    def _q(code: tuple, x: Sequence[float]) -> float:
        kind, k, q_relay = code
        if kind == 0:
            return x[k]
        if kind == 1:
            return q_relay if x[k] > 0.0 else 0.0
        return 0.0

    def link_value(self, link: Tuple[str, str], x: Sequence[float]) -> float:
        code_i, code_j, probs, acts = self.links[link]
        q_pair = self._q(code_i, x) * (1.0 - self._q(code_j, x))
        if q_pair == 0.0:
            return 0.0
        vals = probs
        for code_n, code_next in acts:
            a = self._q(code_n, x)
            if code_next is not None:
                a *= 1.0 - self._q(code_next, x)
            off = 1.0 - a
            vals = [off * vals[m] + a * vals[m + 1] for m in range(0, len(vals), 2)]
        return q_pair * vals[0]

    def evaluate(self, x: Sequence[float]) -> Tuple[float, float]:
        objective = 0.0
        violation = 0.0
        for multihop, links, _flow in self.paths:
            values = [self.link_value(l, x) for l in links]
            objective += min(values)
            if multihop:
                first = values[0]
                for v in values:
                    violation += max(0.0, first - v)
        return objective, violation


def solve_tofra(
    problem: OptimizationProblem,
    config: Optional[AnnealingConfig] = None,
    scheme: Optional[str] = None,
) -> AllocationResult:
    """Best feasible allocation found by simulated annealing.

    Constraint handling: while the temperature exceeds
    ``penalty_temperature`` the score is objective - weight * violation,
    letting the walk cross infeasible regions; below it, infeasible
    proposals are rejected outright.  The all-zeros allocation is feasible,
    so a feasible answer always exists.  Deterministic for a fixed seed;
    restart r uses seed + r, and results merge by best objective.
    """
    cfg = config or AnnealingConfig()
    m = len(problem.free_flows)
    zeros = [0.0] * m
    best_x, (best_obj, _) = zeros, problem.evaluate_vector(zeros)

    for restart in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + restart)
        x = list(np.clip(rng.uniform(0.0, 1.0, size=m), 0.0, 1.0)) if m else []
        obj, vio = problem.evaluate_vector(x)
        if vio <= FEAS_EPS and obj > best_obj:
            best_obj, best_x = obj, list(x)

        temp = cfg.initial_temperature
        entered_strict = False
        while temp >= cfg.min_temperature and m:
            penalty_phase = temp > cfg.penalty_temperature
            if not penalty_phase and not entered_strict:
                # drop onto the best feasible point before strict rejection starts
                entered_strict = True
                if vio > FEAS_EPS:
                    x = list(best_x)
                    obj, vio = problem.evaluate_vector(x)
            for _ in range(cfg.iterations_per_temperature):
                prop = np.clip(np.array(x) + rng.normal(0.0, cfg.proposal_step, size=m), 0.0, 1.0)
                p_obj, p_vio = problem.evaluate_vector(prop)
                if p_vio <= FEAS_EPS and p_obj > best_obj:
                    best_obj, best_x = p_obj, list(prop)
                if penalty_phase:
                    delta = (p_obj - cfg.constraint_penalty_weight * p_vio) - (
                        obj - cfg.constraint_penalty_weight * vio
                    )
                else:
                    if p_vio > FEAS_EPS:
                        continue
                    delta = p_obj - obj
                if delta >= 0.0 or rng.random() < math.exp(delta / temp):
                    x, obj, vio = list(prop), p_obj, p_vio
            temp *= cfg.cooling_factor

    rates = problem.rates_from_vector(best_x)
    label = scheme or f"TOFRA-{policy_label(problem.scenario)}"
    return problem.result(rates, label, {"solver": "annealing", "seed": cfg.seed, "restarts": cfg.restarts})


def grid_search_oracle(problem: OptimizationProblem, resolution: float) -> AllocationResult:
    """Exhaustive scan of the free-rate hypercube; the independent optimum
    oracle for :func:`solve_tofra` (tests and the CLI oracle mode only)."""
    if not 0.0 < resolution <= 0.1:
        raise ValueError(f"resolution must lie in (0, 0.1], got {resolution}")
    m = len(problem.free_flows)
    if m > 4:
        raise ValueError(f"grid search supports at most 4 free flows, got {m}")
    if m == 0:
        return problem.result(problem.rates_from_vector([]), "oracle", {"resolution": resolution})

    steps = round(1.0 / resolution)
    axis = np.linspace(0.0, 1.0, steps + 1)
    if (steps + 1) ** m > 2.5e7:
        raise ValueError(f"grid of {(steps + 1) ** m:.2e} points is too large; coarsen the resolution")
    mesh = np.meshgrid(*([axis] * m), indexing="ij")
    flat = [g.ravel() for g in mesh]

    rates: Dict[str, np.ndarray] = {f: np.zeros(1) for f in problem.fixed_zero}
    for f, arr in zip(problem.free_flows, flat):
        rates[f] = arr

    model = problem.model
    objective = np.zeros_like(flat[0])
    feasible = np.ones(flat[0].shape, dtype=bool)
    for path in problem.scenario.paths:
        link_vals = [model.link_throughput_grid(rates, i, j) for i, j in path.links]
        objective = objective + np.minimum.reduce([np.broadcast_to(v, flat[0].shape) for v in link_vals])
        if len(path) > 1:
            first = link_vals[0]
            for v in link_vals:
                feasible &= first <= v + FEAS_EPS

    masked = np.where(feasible, objective, -np.inf)
    best = int(np.argmax(masked))  # first index wins ties: deterministic
    best_rates = problem.rates_from_vector([flat[k][best] for k in range(m)])
    return problem.result(best_rates, "oracle", {"resolution": resolution, "grid_points": flat[0].size})


# -- baselines ---------------------------------------------------------------


def policy_label(scenario: Scenario) -> str:
    sic_receivers = sorted(rx for rx, pol in scenario.policies if pol.mode == "sic")
    return "IAN" if not sic_receivers else f"SIC({','.join(sic_receivers)})"


def allocate_fmp(scenario: Scenario, mc_samples: int = DEFAULT_MC_SAMPLES) -> AllocationResult:
    """Full multipath: one packet per slot on every path, constraints
    ignored; the model's AAT prediction is attached for reference."""
    problem = OptimizationProblem(scenario, mc_samples)
    rates = {f: 1.0 for f in scenario.flows()}
    return problem.result(rates, "FMP", {"solver": "fixed"})


def allocate_best_path(
    scenario: Scenario,
    variant: str,
    config: Optional[AnnealingConfig] = None,
    mc_samples: int = DEFAULT_MC_SAMPLES,
) -> AllocationResult:
    """Single-path baseline: pick one path (highest end-to-end solo success
    for ``e2e``, widest bottleneck solo link for ``widest_bottleneck``),
    zero the rest, and optimize the surviving flow's rate.  Ties break
    toward the lowest path index."""
    from .network import end_to_end_success_prob, solo_link_prob

    if variant not in ("e2e", "widest_bottleneck"):
        raise ValueError(f"variant must be 'e2e' or 'widest_bottleneck', got {variant!r}")

    best_idx, best_score = 0, -1.0
    for idx, path in enumerate(scenario.paths):
        if variant == "e2e":
            score = end_to_end_success_prob(scenario, path)
        else:
            score = min(solo_link_prob(scenario, link) for link in path.links)
        if score > best_score:
            best_idx, best_score = idx, score

    chosen = scenario.paths[best_idx].flow
    fixed = frozenset(f for f in scenario.flows() if f != chosen)
    problem = OptimizationProblem(scenario, mc_samples, fixed_zero=fixed)
    label = "BP_e2e" if variant == "e2e" else "BP_wb"
    result = solve_tofra(problem, config, scheme=label)
    meta = dict(result.metadata)
    meta.update({"chosen_path": chosen, "criterion_value": best_score})
    return replace(result, metadata=meta)


def constraint_report(
    scenario: Scenario,
    allocation: FlowAllocation,
    tol: float = 1e-6,
    mc_samples: int = DEFAULT_MC_SAMPLES,
) -> Dict[str, float]:
    """Independent rate/bounded-delay audit used by tests and final
    feasibility checks.

    Recomputes link throughputs through the public per-link operation (no
    shared fast-path code) and reports the worst violation per constraint
    family; values <= tol mean satisfied.  ``mc_samples`` must match the
    solver's setting so Monte-Carlo-backed subsets resolve to the same
    cached values.
    """
    model = model_for(scenario, mc_samples)
    s1 = max((max(0.0, q - 1.0, -q) for q in allocation.rates.values()), default=0.0)
    s2 = 0.0
    s3 = max((max(0.0, q - 1.0, -q) for q in allocation.aux_rates.values()), default=0.0)
    s4 = 0.0
    for path in scenario.paths:
        thr = [model.link_throughput(allocation.rates, i, j) for i, j in path.links]
        if len(path) > 1:
            for v in thr:
                s2 = max(s2, thr[0] - v)
            qp = allocation.aux_rates.get(path.flow)
            if qp is not None:
                s4 = max(s4, qp - min(thr))
    return {"S1": s1, "S2": s2, "S3": s3, "S4": s4, "feasible": float(max(s1, s2, s3, s4) <= tol)}
