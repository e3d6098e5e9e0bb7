"""Discrete-slot simulator of the random-access MAC.

Per slot: backlogged sources transmit their head packet with probability
equal to their flow rate (retransmissions follow the same rule, keeping
the attempt probability at the model's q); relays transmit when their
uniform-[0,CW] backoff counter reaches zero and redraw it after every
attempt; fresh Rayleigh gains are drawn per (transmitter, receiver) pair;
each non-transmitting receiver applies its reception policy to the full
set of concurrent transmissions and may decode several packets at once.
Successes are acknowledged instantly and dequeued; a packet that fails
more than ``max_retransmits`` times is dropped.  Half-duplex nodes never
receive while transmitting.

A run is strictly sequential and deterministic for a fixed seed.
Replications and sweeps are independent and may execute concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Set, Tuple

import numpy as np

from .channel import ReceptionPolicy
from .network import DESTINATION, RELAY, SOURCE, Scenario
from .throughput import FlowAllocation

DEFAULT_SLOTS = 20_000
DEFAULT_MAX_RETRANSMITS = 3
DEFAULT_CONTENTION_WINDOW = 5


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    allocation: FlowAllocation
    n_slots: int = DEFAULT_SLOTS
    max_retransmits: int = DEFAULT_MAX_RETRANSMITS
    contention_window: int = DEFAULT_CONTENTION_WINDOW
    seed: int = 0
    # On a failed cancelation the receiver still tries the intended packet
    # with the interferer left in the noise; disable to validate against
    # the joint-success closed form.
    sic_fallback: bool = True
    collect_trace: bool = False

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError(f"n_slots must be >= 1, got {self.n_slots}")
        if self.max_retransmits < 0:
            raise ValueError(f"max_retransmits must be >= 0, got {self.max_retransmits}")
        if self.contention_window < 0:
            raise ValueError(f"contention_window must be >= 0, got {self.contention_window}")
        missing = set(self.scenario.flows()) - set(self.allocation.rates)
        if missing:
            raise ValueError(f"allocation missing rates for flows {sorted(missing)}")


@dataclass
class LinkStats:
    attempts: int = 0
    successes: int = 0
    retransmissions: int = 0

    @property
    def retx_fraction(self) -> float:
        return self.retransmissions / self.attempts if self.attempts else 0.0


@dataclass
class FlowStats:
    injected: int = 0
    delivered: int = 0
    dropped: int = 0
    delay_total: int = 0

    def mean_delay(self) -> Optional[float]:
        return self.delay_total / self.delivered if self.delivered else None


@dataclass
class SimMetrics:
    n_slots: int
    links: Dict[Tuple[str, str], LinkStats]
    flows: Dict[str, FlowStats]
    mean_queue: Dict[str, float]
    in_queue_end: Dict[str, int]
    trace: List[Tuple[int, str, str, str, str]] = field(default_factory=list)

    def link_rate(self, link: Tuple[str, str]) -> float:
        return self.links[link].successes / self.n_slots

    def flow_throughput(self, flow: str) -> float:
        return self.flows[flow].delivered / self.n_slots

    def aggregate_throughput(self) -> float:
        return sum(self.flow_throughput(f) for f in self.flows)

    def relay_throughput_ratio(self, relay: str) -> float:
        """Inflow/outflow delivered-rate ratio at a relay; above one means
        the queue grows without bound."""
        t_in = sum(s.successes for l, s in self.links.items() if l[1] == relay)
        t_out = sum(s.successes for l, s in self.links.items() if l[0] == relay)
        if t_out == 0:
            return math.inf if t_in > 0 else math.nan
        return t_in / t_out


def sic_receive(
    receiver_id: str,
    rx_powers: Mapping[str, float],
    thresholds: Mapping[str, float],
    policy: ReceptionPolicy,
    noise_power: float,
    sic_fallback: bool = True,
) -> Set[str]:
    """Transmitters decoded by one receiver in one slot.

    IAN: every transmitter is tested against all others as noise.  SIC:
    cancel-list members are attempted in order against the not-yet
    subtracted residual and removed from it when decoded; remaining
    transmitters are then tested against what is left.  Decoded cancel
    targets are reported too: whether a decoded packet was addressed to
    this receiver is the caller's concern.
    """
    residual = noise_power + sum(rx_powers.values())
    decoded: Set[str] = set()
    blocked = False
    for c in policy.cancel_set:
        if c not in rx_powers:
            continue
        p_c = rx_powers[c]
        if p_c / (residual - p_c) >= thresholds[c]:
            decoded.add(c)
            residual -= p_c
        elif not sic_fallback:
            blocked = True
    if blocked:
        return decoded
    for t, p_t in rx_powers.items():
        if t in decoded:
            continue
        if p_t / (residual - p_t) >= thresholds[t]:
            decoded.add(t)
    return decoded


@dataclass
class _Packet:
    flow: str
    seq: int
    first_slot: int
    retries: int = 0

    @property
    def pid(self) -> str:
        return f"{self.flow}#{self.seq}"


def run_sim(config: SimConfig) -> SimMetrics:
    """Simulate ``n_slots`` slots and collect per-link/per-flow metrics."""
    sc = config.scenario
    rng = np.random.default_rng(config.seed)
    cw = config.contention_window

    sources = sorted(n.id for n in sc.nodes if n.role == SOURCE)
    relays = sorted(n.id for n in sc.nodes if n.role == RELAY)
    receivers_all = sorted(n.id for n in sc.nodes if n.role in (RELAY, DESTINATION))
    rates = {s: config.allocation.rates[sc.path_of_node(s).flow] for s in sources}
    next_hop: Dict[str, str] = {}
    for path in sc.paths:
        for a, b in path.links:
            next_hop[a] = b
    thresholds = {n.id: n.sinr_threshold for n in sc.nodes}
    from .channel import _mean_rx_power

    mean_power: Dict[Tuple[str, str], float] = {}
    for tx in sc.nodes:
        if not tx.can_transmit:
            continue
        for rx in sc.nodes:
            if rx.id != tx.id and rx.role in (RELAY, DESTINATION):
                mean_power[(tx.id, rx.id)] = _mean_rx_power(tx.tx_state(), rx.position, sc.channel)

    head: Dict[str, Optional[_Packet]] = {s: None for s in sources}
    seq_counter: Dict[str, int] = {s: 0 for s in sources}
    queues: Dict[str, List[_Packet]] = {r: [] for r in relays}
    backoff: Dict[str, int] = {r: 0 for r in relays}

    links = {link: LinkStats() for link in sc.links()}
    flows = {p.flow: FlowStats() for p in sc.paths}
    queue_accum = {n.id: 0 for n in sc.nodes if n.can_transmit}
    trace: List[Tuple[int, str, str, str, str]] = []

    for slot in range(config.n_slots):
        # 1. transmission decisions
        transmitting: Dict[str, _Packet] = {}
        draws = rng.random(len(sources))
        for s, u in zip(sources, draws):
            if u < rates[s]:
                if head[s] is None:
                    pkt = _Packet(sc.path_of_node(s).flow, seq_counter[s], slot)
                    seq_counter[s] += 1
                    head[s] = pkt
                    flows[pkt.flow].injected += 1
                transmitting[s] = head[s]
        for r in relays:
            if queues[r] and backoff[r] == 0:
                transmitting[r] = queues[r][0]

        tx_ids = sorted(transmitting)
        rx_ids = [n for n in receivers_all if n not in transmitting]

        # 2. fading draws, one exponential gain per (tx, rx) pair
        gains = rng.exponential(size=(len(tx_ids), len(rx_ids))) if tx_ids and rx_ids else None

        # 3. reception
        decoded_by: Dict[str, Set[str]] = {}
        for cj, rx in enumerate(rx_ids):
            powers = {
                t: mean_power[(t, rx)] * gains[ci, cj] for ci, t in enumerate(tx_ids)
            }
            if powers:
                decoded_by[rx] = sic_receive(
                    rx, powers, thresholds, sc.policy_for(rx), sc.channel.noise_power, config.sic_fallback
                )

        # 4. outcomes, in transmitter order
        arrivals: List[Tuple[str, _Packet]] = []
        for t in tx_ids:
            pkt = transmitting[t]
            hop = next_hop[t]
            link = (t, hop)
            links[link].attempts += 1
            if pkt.retries > 0:
                links[link].retransmissions += 1
            success = hop in decoded_by and t in decoded_by[hop]
            if success:
                links[link].successes += 1
                if t in head and head[t] is pkt:
                    head[t] = None
                else:
                    queues[t].pop(0)
                if sc.node(hop).role == DESTINATION:
                    flows[pkt.flow].delivered += 1
                    flows[pkt.flow].delay_total += slot - pkt.first_slot + 1
                    if config.collect_trace:
                        trace.append((slot, hop, "deliver", pkt.pid, "success"))
                else:
                    arrivals.append((hop, pkt))
                if config.collect_trace:
                    trace.append((slot, t, "tx", pkt.pid, "success"))
            else:
                pkt.retries += 1
                if config.collect_trace:
                    trace.append((slot, t, "tx", pkt.pid, "fail"))
                if pkt.retries > config.max_retransmits:
                    flows[pkt.flow].dropped += 1
                    if t in head and head[t] is pkt:
                        head[t] = None
                    else:
                        queues[t].pop(0)
                    if config.collect_trace:
                        trace.append((slot, t, "drop", pkt.pid, "retry_limit"))

        # 5. relay backoff bookkeeping: redraw after an attempt, count down
        # otherwise, and draw fresh on empty->nonempty transitions
        for r in relays:
            if r in transmitting:
                backoff[r] = int(rng.integers(0, cw + 1))
            elif queues[r] and backoff[r] > 0:
                backoff[r] -= 1
        for hop, pkt in arrivals:
            pkt.retries = 0
            was_empty = not queues[hop]
            queues[hop].append(pkt)
            if was_empty:
                backoff[hop] = int(rng.integers(0, cw + 1))
            if config.collect_trace:
                trace.append((slot, hop, "enqueue", pkt.pid, "forward"))

        # 6. queue-length sampling at slot end
        for s in sources:
            queue_accum[s] += 1 if head[s] is not None else 0
        for r in relays:
            queue_accum[r] += len(queues[r])

    in_queue_end: Dict[str, int] = {f: 0 for f in flows}
    for s in sources:
        if head[s] is not None:
            in_queue_end[head[s].flow] += 1
    for r in relays:
        for pkt in queues[r]:
            in_queue_end[pkt.flow] += 1

    return SimMetrics(
        n_slots=config.n_slots,
        links=links,
        flows=flows,
        mean_queue={n: acc / config.n_slots for n, acc in queue_accum.items()},
        in_queue_end=in_queue_end,
        trace=trace,
    )


@dataclass(frozen=True)
class ReplicationSummary:
    n: int
    aat_mean: float
    aat_std: float
    flow_throughput_mean: Mapping[str, float]
    flow_throughput_std: Mapping[str, float]
    flow_delay_mean: Mapping[str, Optional[float]]
    relay_ratio_mean: Mapping[str, float]


def replicate(config: SimConfig, n_replications: int) -> Tuple[List[SimMetrics], ReplicationSummary]:
    """Run ``n_replications`` independent simulations (seed + i) and report
    per-metric means and standard deviations."""
    if n_replications < 1:
        raise ValueError("n_replications must be >= 1")
    from dataclasses import replace as _replace

    runs = [run_sim(_replace(config, seed=config.seed + i)) for i in range(n_replications)]
    flows = list(runs[0].flows)
    relays = sorted(n.id for n in config.scenario.nodes if n.role == RELAY)

    aats = np.array([m.aggregate_throughput() for m in runs])
    f_thr = {f: np.array([m.flow_throughput(f) for m in runs]) for f in flows}
    delays = {}
    for f in flows:
        vals = [m.flows[f].mean_delay() for m in runs if m.flows[f].mean_delay() is not None]
        delays[f] = float(np.mean(vals)) if vals else None
    ratios = {}
    for r in relays:
        vals = [m.relay_throughput_ratio(r) for m in runs]
        finite = [v for v in vals if math.isfinite(v)]
        ratios[r] = float(np.mean(finite)) if finite else (math.inf if any(math.isinf(v) for v in vals) else math.nan)

    summary = ReplicationSummary(
        n=n_replications,
        aat_mean=float(aats.mean()),
        aat_std=float(aats.std(ddof=1)) if n_replications > 1 else 0.0,
        flow_throughput_mean={f: float(v.mean()) for f, v in f_thr.items()},
        flow_throughput_std={f: float(v.std(ddof=1)) if n_replications > 1 else 0.0 for f, v in f_thr.items()},
        flow_delay_mean=delays,
        relay_ratio_mean=ratios,
    )
    return runs, summary
