"""Shared fixtures: random scenario generation and the session-wide sweep
used by the acceptance tests."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import settings

from sicmesh.channel import SIC, ChannelParams, ReceptionPolicy
from sicmesh.network import DESTINATION, RELAY, SOURCE, Node, Path, Scenario

settings.register_profile("ci", deadline=None, derandomize=True)
settings.load_profile("ci")


def random_scenario(
    rng: np.random.Generator,
    n_flows: int | None = None,
    max_hops: int = 2,
    allow_sic: bool = True,
    unit_noise: bool | None = None,
) -> Scenario:
    """A small random scenario with disjoint paths to one destination.

    Geometry, powers and thresholds are drawn so that success
    probabilities stay informative (neither 0 nor 1).  Half the scenarios
    use the unit-noise normalization, half use realistic watt/meter
    scales, exercising the noise generalization both ways.
    """
    if unit_noise is None:
        unit_noise = bool(rng.integers(0, 2))
    if n_flows is None:
        n_flows = int(rng.integers(1, 3))

    if unit_noise:
        ch = ChannelParams(path_loss_exponent=float(rng.uniform(2.0, 4.0)), noise_power=1.0)
        scale = 1.0
        power_lo, power_hi = 0.4, 2.5
    else:
        ch = ChannelParams(path_loss_exponent=3.0, noise_power=7e-11)
        scale = 350.0
        power_lo, power_hi = 0.05, 0.3

    def draw_position(existing):
        while True:
            pos = (float(rng.uniform(0, 3 * scale)), float(rng.uniform(0, 3 * scale)))
            if all(math.dist(pos, p) > 0.15 * scale for p in existing):
                return pos

    positions = []
    nodes = []
    paths = []

    dest_pos = draw_position(positions)
    positions.append(dest_pos)
    gamma_of = lambda: float(rng.uniform(0.1, 2.5))
    nodes.append(Node("d", dest_pos, float(rng.uniform(power_lo, power_hi)), gamma_of(), DESTINATION, 0.0))

    for k in range(n_flows):
        hops = int(rng.integers(1, max_hops + 1))
        ids = [f"s{k}"] + [f"r{k}{h}" for h in range(hops - 1)] + ["d"]
        for nid in ids[:-1]:
            pos = draw_position(positions)
            positions.append(pos)
            role = SOURCE if nid.startswith("s") else RELAY
            tx_prob = float(rng.uniform(0.2, 1.0)) if role == SOURCE else float(rng.uniform(0.15, 0.45))
            nodes.append(Node(nid, pos, float(rng.uniform(power_lo, power_hi)), gamma_of(), role, tx_prob))
        paths.append(Path(f"f{k}", tuple(ids)))

    scenario = Scenario(nodes=tuple(nodes), paths=tuple(paths), channel=ch)

    policies = []
    if allow_sic:
        upstream = {j: i for p in paths for i, j in p.links}
        for node in nodes:
            if node.role == SOURCE or not rng.integers(0, 2):
                continue
            eligible = [
                n.id
                for n in nodes
                if n.can_transmit
                and n.id != node.id
                and not (node.role == RELAY and upstream.get(node.id) == n.id)
            ]
            if eligible:
                cancel = str(eligible[int(rng.integers(0, len(eligible)))])
                policies.append((node.id, ReceptionPolicy(SIC, (cancel,))))
    if policies:
        scenario = Scenario(nodes=tuple(nodes), paths=tuple(paths), channel=ch, policies=tuple(policies))
    return scenario


@pytest.fixture(scope="session")
def sweep_report():
    """TOFRA + FMP sweep over all topologies, thresholds and policies;
    shared by the acceptance criteria that read Table-II-style cells."""
    import time

    from sicmesh.experiments import ExperimentPlan, run_plan

    plan = ExperimentPlan(
        topologies=(1, 2, 3),
        gammas=(0.5, 2.0),
        schemes=("tofra", "fmp"),
        policies=("ian", "sic_r", "sic_rd"),
        seed=20260810,
        n_replications=10,
        n_slots=20_000,
    )
    start = time.monotonic()
    report = run_plan(plan)
    report.wall_time = time.monotonic() - start
    return report
