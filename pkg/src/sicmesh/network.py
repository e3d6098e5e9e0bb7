"""Static topology: nodes, disjoint source-routed paths, reception policies.

A Scenario is immutable once built and hashable, so evaluation layers can
cache derived structures against it.  Scenarios come from three places:
programmatic construction, the TOML config loader, or the built-in
four-node topologies whose distances were recovered by calibration
(see calibration.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import tomli

from .channel import (
    IAN,
    SIC,
    ChannelParams,
    Point,
    ReceptionPolicy,
    TransmitterState,
    distance,
    success_prob_solo,
)

SOURCE = "source"
RELAY = "relay"
DESTINATION = "destination"

# Mean attempt rate of a saturated relay running uniform-[0,CW] backoff with
# CW = 5: one transmission every E[backoff]+1 = 3.5 slots.
DEFAULT_CONTENTION_WINDOW = 5
DEFAULT_RELAY_TX_PROB = 2.0 / (DEFAULT_CONTENTION_WINDOW + 2)


class ScenarioError(ValueError):
    """Scenario construction or config-file validation failure."""


@dataclass(frozen=True)
class Node:
    """A network node.  ``tx_prob`` is the flow rate for sources (a default
    that allocations override), the fixed transmission probability for
    relays, and must be 0 for destinations."""

    id: str
    position: Point
    power: float
    sinr_threshold: float
    role: str
    tx_prob: float = 1.0

    def __post_init__(self):
        if not self.id:
            raise ScenarioError("node id must be non-empty")
        if self.role not in (SOURCE, RELAY, DESTINATION):
            raise ScenarioError(f"node {self.id}: role must be source/relay/destination, got {self.role!r}")
        if not 0.0 <= self.tx_prob <= 1.0:
            raise ScenarioError(f"node {self.id}: tx_prob must lie in [0,1], got {self.tx_prob}")
        if self.role == DESTINATION and self.tx_prob != 0.0:
            raise ScenarioError(f"node {self.id}: destination tx_prob must be 0, got {self.tx_prob}")
        if not self.power > 0:
            raise ScenarioError(f"node {self.id}: power must be > 0, got {self.power}")
        if self.sinr_threshold < 0:
            raise ScenarioError(f"node {self.id}: sinr_threshold must be >= 0, got {self.sinr_threshold}")

    @property
    def can_transmit(self) -> bool:
        return self.role in (SOURCE, RELAY)

    def tx_state(self) -> TransmitterState:
        return TransmitterState(self.power, self.sinr_threshold, self.position)


@dataclass(frozen=True)
class Path:
    """Ordered node ids from a flow's source to its destination."""

    flow: str
    nodes: Tuple[str, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ScenarioError(f"path {self.flow}: needs at least two nodes, got {list(self.nodes)}")
        if len(set(self.nodes)) != len(self.nodes):
            raise ScenarioError(f"path {self.flow}: repeated node in {list(self.nodes)}")

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def destination(self) -> str:
        return self.nodes[-1]

    @property
    def links(self) -> Tuple[Tuple[str, str], ...]:
        return tuple(zip(self.nodes[:-1], self.nodes[1:]))

    def __len__(self) -> int:
        return len(self.links)


@dataclass(frozen=True)
class Scenario:
    """Topology + flows + channel + per-receiver reception policies.

    ``interferer_overrides`` optionally replaces the derived interferer set
    of specific links, e.g. to drop a far-away transmitter the way a
    back-of-envelope analysis would.  By default every transmit-capable
    node other than the link endpoints interferes.
    """

    nodes: Tuple[Node, ...]
    paths: Tuple[Path, ...]
    channel: ChannelParams = ChannelParams()
    policies: Tuple[Tuple[str, ReceptionPolicy], ...] = ()
    interferer_overrides: Tuple[Tuple[Tuple[str, str], Tuple[str, ...]], ...] = ()

    _by_id: Dict[str, Node] = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        by_id: Dict[str, Node] = {}
        for node in self.nodes:
            if node.id in by_id:
                raise ScenarioError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node
        object.__setattr__(self, "_by_id", by_id)
        self._validate()

    # -- validation ------------------------------------------------------

    def _validate(self):
        seen_flows = set()
        used: Dict[str, str] = {}
        for path in self.paths:
            if path.flow in seen_flows:
                raise ScenarioError(f"duplicate flow id {path.flow!r}")
            seen_flows.add(path.flow)
            for nid in path.nodes:
                if nid not in self._by_id:
                    raise ScenarioError(f"path {path.flow}: unknown node {nid!r}")
            if self.node(path.source).role != SOURCE:
                raise ScenarioError(f"path {path.flow}: first node {path.source!r} must have role source")
            if self.node(path.destination).role != DESTINATION:
                raise ScenarioError(f"path {path.flow}: last node {path.destination!r} must have role destination")
            for nid in path.nodes[1:-1]:
                if self.node(nid).role != RELAY:
                    raise ScenarioError(f"path {path.flow}: intermediate node {nid!r} must have role relay")
            # paths of distinct flows share at most the destination
            for nid in path.nodes[:-1]:
                if nid in used:
                    raise ScenarioError(
                        f"path {path.flow}: node {nid!r} already used by path {used[nid]} (paths must be disjoint)"
                    )
                used[nid] = path.flow

        on_path = {nid for path in self.paths for nid in path.nodes[:-1]}
        for node in self.nodes:
            if node.can_transmit and self.paths and node.id not in on_path:
                raise ScenarioError(f"node {node.id!r} can transmit but belongs to no path")

        for a in self.nodes:
            for b in self.nodes:
                if a.id < b.id and distance(a.position, b.position) == 0.0:
                    raise ScenarioError(f"nodes {a.id!r} and {b.id!r} are co-located at {a.position}")

        for rx_id, policy in self.policies:
            if rx_id not in self._by_id:
                raise ScenarioError(f"policy: unknown receiver {rx_id!r}")
            if self.node(rx_id).role == SOURCE:
                raise ScenarioError(f"policy: receiver {rx_id!r} is a source and never receives")
            for cid in policy.cancel_set:
                if cid not in self._by_id:
                    raise ScenarioError(f"policy for {rx_id!r}: unknown cancel_set node {cid!r}")
                if cid == rx_id:
                    raise ScenarioError(f"policy for {rx_id!r}: cancel_set contains the receiver itself")
                if not self.node(cid).can_transmit:
                    raise ScenarioError(f"policy for {rx_id!r}: cancel_set node {cid!r} cannot transmit")
                # at a relay, the upstream transmitter is the intended signal;
                # declaring it cancelable is a configuration mistake.  At the
                # destination, decode-first-and-keep is legitimate reception.
                if (cid, rx_id) in self.links() and self.node(rx_id).role == RELAY:
                    raise ScenarioError(
                        f"policy for {rx_id!r}: cancel_set contains its intended transmitter {cid!r}"
                    )

        for link, ids in self.interferer_overrides:
            if link not in self.links():
                raise ScenarioError(f"interferer override references unknown link {link}")
            for nid in ids:
                if nid not in self._by_id or not self.node(nid).can_transmit:
                    raise ScenarioError(f"interferer override for {link}: invalid node {nid!r}")

    # -- lookups ---------------------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise ScenarioError(f"unknown node {node_id!r}") from None

    def links(self) -> Tuple[Tuple[str, str], ...]:
        return tuple(link for path in self.paths for link in path.links)

    def path_of_flow(self, flow: str) -> Path:
        for path in self.paths:
            if path.flow == flow:
                return path
        raise ScenarioError(f"unknown flow {flow!r}")

    def path_of_node(self, node_id: str) -> Path:
        """The path a non-destination node belongs to."""
        for path in self.paths:
            if node_id in path.nodes[:-1]:
                return path
        raise ScenarioError(f"node {node_id!r} is not on any path")

    def policy_for(self, receiver_id: str) -> ReceptionPolicy:
        for rx_id, policy in self.policies:
            if rx_id == receiver_id:
                return policy
        return ReceptionPolicy(IAN)

    def flows(self) -> Tuple[str, ...]:
        return tuple(path.flow for path in self.paths)

    def tx_capable_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.can_transmit))


def interferer_set(scenario: Scenario, link: Tuple[str, str]) -> Tuple[str, ...]:
    """Nodes whose transmissions interfere with packets sent over ``link``.

    Every transmit-capable node other than the link endpoints, ordered by
    node id.  Whether a listed node actually interferes in a given slot is
    an activity question (a relay on an idle path never transmits); that is
    resolved by the throughput layer, not here.
    """
    if link not in scenario.links():
        raise ScenarioError(f"unknown link {link}")
    for olink, ids in scenario.interferer_overrides:
        if olink == link:
            return tuple(sorted(ids))
    i, j = link
    return tuple(sorted(n.id for n in scenario.nodes if n.can_transmit and n.id not in (i, j)))


def end_to_end_success_prob(scenario: Scenario, path: Path) -> float:
    """Product over the path's links of the interference-free success
    probability."""
    prob = 1.0
    for i, j in path.links:
        tx = scenario.node(i).tx_state()
        prob *= success_prob_solo(tx, scenario.node(j).position, scenario.channel)
    return prob


def solo_link_prob(scenario: Scenario, link: Tuple[str, str]) -> float:
    i, j = link
    return success_prob_solo(scenario.node(i).tx_state(), scenario.node(j).position, scenario.channel)


# -- built-in topologies --------------------------------------------------
#
# Four nodes: sources 1 and 2, relay R, destination d.  Flow f1 runs over
# 1-R-d, flow f2 over 2-d.  Topology 1 uses the distances recovered from
# the published operating points (calibration.py; frozen here so scenario
# construction stays cheap and exact).  Topologies 2 and 3 keep the same
# structure with hand-picked distances: topology 2 moves the relay closer
# to the destination, topology 3 moves the destination next to source 2.

TOPOLOGY_DISTANCES: Dict[int, Dict[str, float]] = {
    1: {"r_1R": 400.745137058383, "r_2R": 150.11229056947417,
        "r_2d": 429.25200491377666, "r_Rd": 401.6286760435297},
    2: {"r_1R": 400.745137058383, "r_2R": 150.11229056947417,
        "r_2d": 429.25200491377666, "r_Rd": 310.0},
    3: {"r_1R": 520.0, "r_2R": 223.0, "r_2d": 260.0, "r_Rd": 300.0},
}

BUILTIN_POWER = 0.1
POLICY_VARIANTS = ("ian", "sic_r", "sic_rd")
POLICY_LABELS = {"ian": "IAN", "sic_r": "SIC(R)", "sic_rd": "SIC(R,d)"}


def _place_nodes(d: Dict[str, float]) -> Dict[str, Point]:
    """2D embedding of the four-node distance set.

    d at the origin, R and 1 on the positive x axis (1 beyond R, which
    maximizes its distance from d), and 2 at the intersection of the
    circles around d and R.
    """
    r_rd, r_1r, r_2d, r_2r = d["r_Rd"], d["r_1R"], d["r_2d"], d["r_2R"]
    if abs(r_2d - r_rd) > r_2r or r_2d + r_rd < r_2r:
        raise ScenarioError(f"distances {d} violate the triangle inequality for node 2")
    x2 = (r_rd ** 2 + r_2d ** 2 - r_2r ** 2) / (2.0 * r_rd)
    y2 = (r_2d ** 2 - x2 ** 2) ** 0.5
    return {
        "d": (0.0, 0.0),
        "R": (r_rd, 0.0),
        "1": (r_rd + r_1r, 0.0),
        "2": (x2, y2),
    }


def builtin_topology(
    index: int,
    gamma: float,
    policy: str = "ian",
    relay_tx_prob: float = DEFAULT_RELAY_TX_PROB,
) -> Scenario:
    """One of the three reference topologies at the given SINR threshold.

    ``policy`` selects how interference is handled: ``ian`` everywhere,
    ``sic_r`` (the relay cancels the cross-traffic source), or ``sic_rd``
    (additionally, the destination decodes its strongest arrival first and
    subtracts it before the weaker one).
    """
    if index not in TOPOLOGY_DISTANCES:
        raise ScenarioError(f"topology index must be one of {sorted(TOPOLOGY_DISTANCES)}, got {index}")
    if policy not in POLICY_VARIANTS:
        raise ScenarioError(f"policy must be one of {POLICY_VARIANTS}, got {policy!r}")

    dists = TOPOLOGY_DISTANCES[index]
    pos = _place_nodes(dists)
    nodes = (
        Node("1", pos["1"], BUILTIN_POWER, gamma, SOURCE, tx_prob=1.0),
        Node("2", pos["2"], BUILTIN_POWER, gamma, SOURCE, tx_prob=1.0),
        Node("R", pos["R"], BUILTIN_POWER, gamma, RELAY, tx_prob=relay_tx_prob),
        Node("d", pos["d"], BUILTIN_POWER, gamma, DESTINATION, tx_prob=0.0),
    )
    paths = (Path("f1", ("1", "R", "d")), Path("f2", ("2", "d")))

    policies = []
    if policy in ("sic_r", "sic_rd"):
        policies.append(("R", ReceptionPolicy(SIC, ("2",))))
    if policy == "sic_rd":
        # decode-first order at d: strongest mean received power first
        first = "R" if dists["r_Rd"] <= dists["r_2d"] else "2"
        policies.append(("d", ReceptionPolicy(SIC, (first,))))

    return Scenario(nodes=nodes, paths=paths, channel=ChannelParams(), policies=tuple(policies))


# -- config files ----------------------------------------------------------

_NODE_FIELDS = {"id", "position", "power", "sinr_threshold", "role", "tx_prob"}


def load_scenario(config_text: str) -> Scenario:
    """Parse a TOML scenario description.

    Sections: ``[channel]`` (path_loss_exponent, noise_power), ``[[nodes]]``
    (id, position = [x, y], power, sinr_threshold, role, tx_prob),
    ``[[paths]]`` (flow, nodes), ``[[policies]]`` (receiver, mode, cancel),
    and optional ``[[interferer_overrides]]`` (link = [i, j], nodes).
    Parse errors cite line numbers; validation errors cite field names.
    """
    try:
        raw = tomli.loads(config_text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"config parse error: {exc}") from None

    def need(table: dict, key: str, where: str):
        if key not in table:
            raise ScenarioError(f"{where}: missing required field {key!r}")
        return table[key]

    ch_raw = raw.get("channel", {})
    channel = ChannelParams(
        path_loss_exponent=float(ch_raw.get("path_loss_exponent", 3.0)),
        noise_power=float(ch_raw.get("noise_power", 7e-11)),
    )

    nodes = []
    for k, tbl in enumerate(raw.get("nodes", [])):
        where = f"nodes[{k}]"
        unknown = set(tbl) - _NODE_FIELDS
        if unknown:
            raise ScenarioError(f"{where}: unknown fields {sorted(unknown)}")
        pos = need(tbl, "position", where)
        if not (isinstance(pos, list) and len(pos) == 2):
            raise ScenarioError(f"{where}: position must be [x, y], got {pos!r}")
        role = need(tbl, "role", where)
        nodes.append(
            Node(
                id=str(need(tbl, "id", where)),
                position=(float(pos[0]), float(pos[1])),
                power=float(need(tbl, "power", where)),
                sinr_threshold=float(need(tbl, "sinr_threshold", where)),
                role=role,
                tx_prob=float(tbl.get("tx_prob", 0.0 if role == DESTINATION else 1.0)),
            )
        )
    if not nodes:
        raise ScenarioError("config defines no [[nodes]]")

    paths = []
    for k, tbl in enumerate(raw.get("paths", [])):
        where = f"paths[{k}]"
        paths.append(Path(flow=str(need(tbl, "flow", where)), nodes=tuple(str(n) for n in need(tbl, "nodes", where))))
    if not paths:
        raise ScenarioError("config defines no [[paths]]")

    policies = []
    for k, tbl in enumerate(raw.get("policies", [])):
        where = f"policies[{k}]"
        mode = str(need(tbl, "mode", where)).lower()
        cancel = tuple(str(c) for c in tbl.get("cancel", []))
        policies.append((str(need(tbl, "receiver", where)), ReceptionPolicy(mode, cancel)))

    overrides = []
    for k, tbl in enumerate(raw.get("interferer_overrides", [])):
        where = f"interferer_overrides[{k}]"
        link = need(tbl, "link", where)
        if not (isinstance(link, list) and len(link) == 2):
            raise ScenarioError(f"{where}: link must be [i, j]")
        overrides.append(((str(link[0]), str(link[1])), tuple(str(n) for n in need(tbl, "nodes", where))))

    return Scenario(
        nodes=tuple(nodes),
        paths=tuple(paths),
        channel=channel,
        policies=tuple(policies),
        interferer_overrides=tuple(overrides),
    )


def load_scenario_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())
