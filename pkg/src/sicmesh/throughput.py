"""Analytic average-throughput model.

Per-link throughput enumerates the on/off patterns of the link's
interferers: each pattern contributes its Bernoulli probability times the
link success probability given exactly that set of concurrent
transmitters.  Success probabilities come from the channel closed forms
wherever one exists; subsets that mix a cancelable interferer with
additional noise interferers (or cancel more than one) have no closed form
and are evaluated once by seeded Monte-Carlo, then cached.

Transmission/activity probabilities follow the pairing rules: a
transmitter is throttled by its receiver's own transmissions (half-duplex)
and a relay on a path carrying zero flow neither transmits nor interferes.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .channel import (
    IAN,
    SIC,
    ReceptionPolicy,
    TransmitterState,
    success_prob_ian_multi,
    success_prob_mc,
    success_prob_sic,
)
from .network import DESTINATION, SOURCE, Scenario, ScenarioError, interferer_set

MAX_INTERFERERS = 20
DEFAULT_MC_SAMPLES = 1_000_000

RateMap = Mapping[str, float]


@dataclass(frozen=True)
class FlowAllocation:
    """Per-flow source rates, plus the auxiliary injected rate q' that the
    optimizer reports for multi-hop paths (bounded by every link's
    throughput along the path)."""

    rates: Mapping[str, float]
    aux_rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for flow, q in self.rates.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"flow {flow}: rate must lie in [0,1], got {q}")
        for flow, q in self.aux_rates.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"flow {flow}: aux rate must lie in [0,1], got {q}")

    def rate(self, flow: str) -> float:
        return self.rates[flow]


def effective_tx_prob(scenario: Scenario, rates: RateMap, node_id: str) -> float:
    """Activity probability q'' of a node under the given source rates.

    Sources transmit at their flow rate; relays at their fixed probability,
    but only when their path carries positive flow; destinations never.
    """
    node = scenario.node(node_id)
    if node.role == DESTINATION:
        return 0.0
    flow = scenario.path_of_node(node_id).flow
    if node.role == SOURCE:
        return rates[flow]
    return node.tx_prob if rates[flow] > 0.0 else 0.0


def pair_prob(scenario: Scenario, allocation: FlowAllocation, i: str, j: str) -> float:
    """Probability that i transmits while j is able to receive.

    q''_i when j is a destination (it never transmits), otherwise
    q''_i * (1 - q''_j) to account for the half-duplex receiver.
    """
    q_i = effective_tx_prob(scenario, allocation.rates, i)
    q_j = effective_tx_prob(scenario, allocation.rates, j)
    return q_i * (1.0 - q_j)


# -- per-subset success probabilities --------------------------------------

_MC_CACHE: Dict[tuple, float] = {}
_MC_LOCK = threading.Lock()


def _mc_seed(key: tuple) -> int:
    digest = hashlib.sha256(repr(key).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _cached_mc_prob(
    gamma_tx: float,
    mu_tx: float,
    cancel: Sequence[Tuple[float, float]],
    noise_mu: Sequence[float],
    n_samples: int,
) -> float:
    """Strict-SIC success probability by Monte-Carlo, memoized.

    All mean received powers ``mu`` are pre-divided by the noise power, so
    the cache key is scale-free.  The seed derives from the key, keeping
    results reproducible across processes.
    """
    key = (
        float(gamma_tx).hex(),
        float(mu_tx).hex(),
        tuple((float(g).hex(), float(m).hex()) for g, m in cancel),
        tuple(sorted(float(m).hex() for m in noise_mu)),
        n_samples,
    )
    with _MC_LOCK:
        if key in _MC_CACHE:
            return _MC_CACHE[key]

    # canonical geometry: receiver at origin, all transmitters at unit
    # distance, power = mu, noise power 1
    from .channel import ChannelParams

    ch = ChannelParams(path_loss_exponent=1.0, noise_power=1.0)

    def place(k: int) -> Tuple[float, float]:
        angle = 2.0 * np.pi * (k + 1) / 64.0
        return (float(np.cos(angle)), float(np.sin(angle)))

    tx = TransmitterState(mu_tx, gamma_tx, place(0))
    interferers = []
    ids = []
    for n, (g, m) in enumerate(cancel):
        interferers.append(TransmitterState(m, g, place(n + 1)))
        ids.append(f"c{n}")
    for n, m in enumerate(noise_mu):
        interferers.append(TransmitterState(m, 0.0, place(n + 1 + len(cancel))))
        ids.append(f"n{n}")
    policy = ReceptionPolicy(SIC, tuple(f"c{n}" for n in range(len(cancel))))
    p, _ = success_prob_mc(
        tx,
        interferers,
        policy,
        (0.0, 0.0),
        ch,
        n_samples=n_samples,
        seed=_mc_seed(key),
        cancel_ids=ids,
        sic_fallback=False,
    )
    with _MC_LOCK:
        _MC_CACHE[key] = p
    return p


def link_success_prob(
    scenario: Scenario,
    i: str,
    j: str,
    active_interferers: Iterable[str],
    mc_samples: int = DEFAULT_MC_SAMPLES,
) -> Tuple[float, bool]:
    """Success probability of link (i,j) given the set of concurrently
    active interferers.  Returns (probability, used_monte_carlo).

    Receiver policy semantics: cancelable transmitters listed before the
    intended one are decoded and subtracted first (strict joint success);
    everything else is noise.  An intended transmitter that leads the
    cancel order is simply decoded first, i.e. against all interference.
    """
    ch = scenario.channel
    rx = scenario.node(j).position
    tx = scenario.node(i).tx_state()
    actives = list(active_interferers)
    policy = scenario.policy_for(j)

    if policy.mode == IAN:
        to_cancel: List[str] = []
    elif i in policy.cancel_set:
        before = policy.cancel_set[: policy.cancel_set.index(i)]
        to_cancel = [c for c in before if c in actives]
    else:
        to_cancel = [c for c in policy.cancel_set if c in actives]

    noise_ids = [x for x in actives if x not in to_cancel]
    noise_states = [scenario.node(x).tx_state() for x in noise_ids]

    if not to_cancel:
        return success_prob_ian_multi(tx, noise_states, rx, ch), False
    if len(to_cancel) == 1 and not noise_ids:
        return success_prob_sic(tx, scenario.node(to_cancel[0]).tx_state(), rx, ch), False

    # mixed or multi-cancel subset: no closed form
    from .channel import _mean_rx_power  # shared distance/power helper

    n0 = ch.noise_power
    mu_tx = _mean_rx_power(tx, rx, ch) / n0
    cancel = [
        (scenario.node(c).sinr_threshold, _mean_rx_power(scenario.node(c).tx_state(), rx, ch) / n0)
        for c in to_cancel
    ]
    noise_mu = [_mean_rx_power(s, rx, ch) / n0 for s in noise_states]
    return _cached_mc_prob(tx.sinr_threshold, mu_tx, cancel, noise_mu, mc_samples), True


# -- the per-link throughput tables ----------------------------------------


@dataclass(frozen=True)
class LinkThroughputModel:
    """Frozen per-link data: ordered interferers and the success
    probability for every one of their 2^L activity patterns (bit n of the
    pattern index selects interferer n)."""

    link: Tuple[str, str]
    interferers: Tuple[str, ...]
    subset_probs: Tuple[float, ...]
    mc_subsets: Tuple[int, ...]  # pattern indices that required Monte-Carlo


class ThroughputModel:
    """Precompiled throughput evaluator for one scenario.

    Building the model computes every per-subset success probability once
    (including any Monte-Carlo fills); evaluating throughput for a given
    allocation is then a cheap multilinear contraction.  Instances are
    immutable after construction and safe to share across threads.
    """

    def __init__(
        self,
        scenario: Scenario,
        mc_samples: int = DEFAULT_MC_SAMPLES,
        scale_interferer_by_receiver: bool = False,
    ):
        self.scenario = scenario
        self.mc_samples = mc_samples
        self.scale_interferer_by_receiver = scale_interferer_by_receiver
        self.tables: Dict[Tuple[str, str], LinkThroughputModel] = {}
        self._next_hop: Dict[str, str] = {}
        for path in scenario.paths:
            for a, b in path.links:
                self._next_hop[a] = b
        for link in scenario.links():
            self.tables[link] = self._build_table(link)

    def _build_table(self, link: Tuple[str, str]) -> LinkThroughputModel:
        i, j = link
        interferers = interferer_set(self.scenario, link)
        if len(interferers) > MAX_INTERFERERS:
            raise ScenarioError(
                f"link {link}: {len(interferers)} interferers exceed the enumeration cap of {MAX_INTERFERERS}"
            )
        probs = []
        mc_used = []
        for pattern in range(1 << len(interferers)):
            active = [interferers[n] for n in range(len(interferers)) if pattern >> n & 1]
            p, used_mc = link_success_prob(self.scenario, i, j, active, self.mc_samples)
            probs.append(p)
            if used_mc:
                mc_used.append(pattern)
        return LinkThroughputModel(link, interferers, tuple(probs), tuple(mc_used))

    @property
    def used_monte_carlo(self) -> bool:
        return any(t.mc_subsets for t in self.tables.values())

    # -- scalar evaluation -------------------------------------------------

    def activity(self, rates: RateMap, node_id: str):
        """Interferer-side activity: q'' (optionally throttled by the
        interferer's own receiver, for sensitivity studies)."""
        q = effective_tx_prob(self.scenario, rates, node_id)
        if self.scale_interferer_by_receiver:
            nxt = self._next_hop.get(node_id)
            if nxt is not None:
                q *= 1.0 - effective_tx_prob(self.scenario, rates, nxt)
        return q

    def link_throughput(self, rates: RateMap, i: str, j: str) -> float:
        table = self.tables[(i, j)]
        q_pair = effective_tx_prob(self.scenario, rates, i) * (
            1.0 - effective_tx_prob(self.scenario, rates, j)
        )
        if q_pair == 0.0:
            return 0.0
        acts = [self.activity(rates, n) for n in table.interferers]
        return q_pair * _contract(list(table.subset_probs), acts)

    def path_throughput(self, rates: RateMap, path) -> float:
        return min(self.link_throughput(rates, i, j) for i, j in path.links)

    def aggregate_throughput(self, rates: RateMap) -> float:
        return sum(self.path_throughput(rates, path) for path in self.scenario.paths)

    def all_link_throughputs(self, rates: RateMap) -> Dict[Tuple[str, str], float]:
        return {link: self.link_throughput(rates, *link) for link in self.tables}

    # -- vectorized evaluation (used by the grid-search oracle) -------------

    def link_throughput_grid(self, rates: Mapping[str, np.ndarray], i: str, j: str) -> np.ndarray:
        table = self.tables[(i, j)]
        q_i = self._grid_q(rates, i)
        q_j = self._grid_q(rates, j)
        acts = [self._grid_activity(rates, n) for n in table.interferers]
        return q_i * (1.0 - q_j) * _contract(list(table.subset_probs), acts)

    def _grid_q(self, rates: Mapping[str, np.ndarray], node_id: str):
        node = self.scenario.node(node_id)
        if node.role == DESTINATION:
            return 0.0
        flow = self.scenario.path_of_node(node_id).flow
        if node.role == SOURCE:
            return rates[flow]
        return np.where(rates[flow] > 0.0, node.tx_prob, 0.0)

    def _grid_activity(self, rates: Mapping[str, np.ndarray], node_id: str):
        q = self._grid_q(rates, node_id)
        if self.scale_interferer_by_receiver:
            nxt = self._next_hop.get(node_id)
            if nxt is not None:
                q = q * (1.0 - self._grid_q(rates, nxt))
        return q


def _contract(vals: list, acts: Sequence) -> float:
    """Expectation of the pattern-indexed table over independent Bernoulli
    activities: fold out one interferer (one index bit) at a time."""
    for a in acts:
        off = 1.0 - a
        vals = [off * vals[k] + a * vals[k + 1] for k in range(0, len(vals), 2)]
    return vals[0]


# -- module-level operations over a shared model cache ----------------------

_MODEL_CACHE: Dict[tuple, ThroughputModel] = {}
_MODEL_LOCK = threading.Lock()


def model_for(
    scenario: Scenario,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    scale_interferer_by_receiver: bool = False,
) -> ThroughputModel:
    key = (scenario, mc_samples, scale_interferer_by_receiver)
    with _MODEL_LOCK:
        model = _MODEL_CACHE.get(key)
    if model is None:
        model = ThroughputModel(scenario, mc_samples, scale_interferer_by_receiver)
        with _MODEL_LOCK:
            if len(_MODEL_CACHE) > 128:
                _MODEL_CACHE.clear()
            _MODEL_CACHE[key] = model
    return model


def link_throughput(scenario: Scenario, allocation: FlowAllocation, i: str, j: str) -> float:
    """Average packets/slot delivered over link (i,j) under the allocation."""
    return model_for(scenario).link_throughput(allocation.rates, i, j)


def path_throughput(scenario: Scenario, allocation: FlowAllocation, path) -> float:
    """Bottleneck (minimum) link throughput along the path."""
    return model_for(scenario).path_throughput(allocation.rates, path)


def aggregate_throughput(scenario: Scenario, allocation: FlowAllocation) -> float:
    """Sum of per-path bottleneck throughputs (the AAT)."""
    return model_for(scenario).aggregate_throughput(allocation.rates)
