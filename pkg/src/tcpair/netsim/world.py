"""Deterministic discrete-event simulation of the roadside-unit vehicle network.

Every SenseTick runs the layer pipeline (sense, localize, profile, contract,
VLAN, ledger); GossipTick replicates chains between radio-adjacent RSUs;
MoveTick handles supplication and handoff; ExpiryTick prunes profiles.
Events are ordered by (time, sequence number) so a seed fixes the whole run.
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from tcpair.errors import ConfigError, DegenerateGeometry, OutOfRange
from tcpair.identity import (
    SIM_GROUP,
    BehaviorProfile,
    KeyPair,
    Observation,
    current_rules,
    derive_host_tag,
    generate_keypair,
    ingest_observation,
    parse_mac,
    parse_oui,
    prune_expired,
    reclassify,
    run_access_pipeline,
)
from tcpair.ledger import (
    EvalContext,
    GrantState,
    Ledger,
    MobilityClass,
    PayloadKind,
    Route,
    append_block,
    encode_authors,
    evaluate_contract,
    gossip_round,
    new_chain,
    record_route,
)
from tcpair.ledger.chain import Block, HostIdentityTag
from tcpair.netsim.scenario import Scenario, validate_scenario
from tcpair.rng import SplitMix64
from tcpair.spectrum import (
    AirInterface,
    Owner,
    PeeringStatus,
    TargetPolicy,
    Vlan,
    VlanTable,
    distance,
    gaussian_noise,
    in_mutual_range,
    invert_rssi,
    localize,
    rssi_at,
    sense,
    supplicate,
)

MOVE, GOSSIP, SENSE, EXPIRY = "MoveTick", "GossipTick", "SenseTick", "ExpiryTick"


@dataclass(frozen=True)
class TraceRecord:
    timestamp_ms: int
    kind: str
    node_id: str
    detail: str

    def line(self) -> str:
        return f"{self.timestamp_ms}\t{self.kind}\t{self.node_id}\t{self.detail}"


@dataclass
class RsuNode:
    interface: AirInterface
    keypair: KeyPair
    tag: HostIdentityTag
    ledger: Ledger
    vlans: VlanTable

    @property
    def rsu_id(self) -> str:
        return self.interface.interface_id

    @property
    def network_id(self) -> str:
        return self.interface.network_id


@dataclass
class MunicipalityState:
    network_id: str
    rsu_ids: list[str]
    profiles: dict[HostIdentityTag, BehaviorProfile] = field(default_factory=dict)
    # hosts this municipality granted and has not since pruned
    granted: dict[HostIdentityTag, int] = field(default_factory=dict)
    last_denial: dict[HostIdentityTag, tuple[str, ...]] = field(default_factory=dict)
    counters: dict[str, int] = field(
        default_factory=lambda: dict.fromkeys(
            ("grants", "denials", "handoffs_in", "localizations", "revocations", "internet_deliveries"), 0
        )
    )


@dataclass
class Handoff:
    time_ms: int
    mac: str
    from_rsu: str
    to_rsu: str
    after_propagation: bool
    without_reauth: Optional[bool] = None


@dataclass
class DeviceState:
    mac: str
    mac_bytes: bytes
    rogue: bool
    legit: bool
    keypair: KeyPair
    tag: HostIdentityTag
    polyline: tuple[tuple[float, float], ...]
    speed_mps: float
    start_ms: int
    cumulative: list[float] = field(default_factory=list)
    serving: Optional[str] = None
    # network of the last recorded route
    routed_network: Optional[str] = None
    pending_handoff: Optional[Handoff] = None

    def __post_init__(self):
        acc = [0.0]
        for a, b in zip(self.polyline, self.polyline[1:]):
            acc.append(acc[-1] + math.dist(a, b))
        self.cumulative = acc

    def position_at(self, t_ms: int) -> Optional[tuple[float, float]]:
        """Ground-truth position, or None when not on the road at ``t_ms``."""
        if self.rogue:
            return self.polyline[0]
        if t_ms < self.start_ms:
            return None
        s = self.speed_mps * (t_ms - self.start_ms) / 1000.0
        total = self.cumulative[-1]
        if s > total:
            return None
        i = min(bisect.bisect_right(self.cumulative, s) - 1, len(self.polyline) - 2)
        seg = self.cumulative[i + 1] - self.cumulative[i]
        f = 0.0 if seg == 0 else (s - self.cumulative[i]) / seg
        (x0, y0), (x1, y1) = self.polyline[i], self.polyline[i + 1]
        return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))


@dataclass
class MetricsReport:
    grants: int = 0
    denials: int = 0
    revocations: int = 0
    handoffs_total: int = 0
    handoffs_without_reauth: int = 0
    handoffs_after_propagation: int = 0
    handoffs_after_propagation_without_reauth: int = 0
    gossip_rounds: int = 0
    gossip_rounds_to_full_propagation: dict[str, int] = field(default_factory=dict)
    max_propagation_rounds: int = 0
    orphaned_blocks: int = 0
    frames_sent: int = 0
    internet_deliveries: int = 0
    rogue_routed_deliveries: int = 0
    localization_events: int = 0
    localization_rmse_m: float = 0.0
    per_municipality: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class World:
    def __init__(self, scenario: Scenario, *, trace: bool = False):
        self.scenario = scenario
        self.clock_ms = 0
        self.trace_enabled = trace
        self.trace: list[TraceRecord] = []
        self.queue: list[tuple[int, int, str]] = []
        self._seq = 0
        self.nodes: dict[str, RsuNode] = {}
        self.municipalities: dict[str, MunicipalityState] = {}
        self.devices: list[DeviceState] = []
        self.adjacency: dict[str, set[str]] = {}
        self.oui_allowlist = frozenset(parse_oui(o) for o in scenario.oui_allowlist)
        self.noise = None
        self.handoff_log: list[Handoff] = []
        self.delivery_log: list[tuple[int, str, str, str, bool]] = []
        # block digest -> (gossip round at authoring, kind, host)
        self._pending: dict[bytes, tuple[int, PayloadKind, HostIdentityTag]] = {}
        self.grant_propagated_at: dict[HostIdentityTag, int] = {}
        self._loc_sq_err = 0.0
        self.metrics = MetricsReport()

    # -- event queue -------------------------------------------------------

    def schedule(self, time_ms: int, kind: str) -> None:
        heapq.heappush(self.queue, (time_ms, self._seq, kind))
        self._seq += 1

    def _emit(self, kind: str, node_id: str, detail: str, out: list) -> None:
        rec = TraceRecord(self.clock_ms, kind, node_id, detail)
        out.append(rec)
        if self.trace_enabled:
            self.trace.append(rec)

    @property
    def chain_id(self) -> str:
        return self.scenario.chain_id

    # -- helpers -----------------------------------------------------------

    def device_interface(self, dev: DeviceState, pos) -> AirInterface:
        owner = Owner.Device if dev.rogue else Owner.Vehicle
        return AirInterface(dev.mac, owner, pos, self.scenario.vehicle_tx_power_dbm)

    def _track(self, node: RsuNode, before: int) -> list[Block]:
        new = node.ledger.chain(self.chain_id).blocks[before:]
        self._register(new)
        self._check_propagation()
        return new

    def _register(self, blocks) -> None:
        for block in blocks:
            self._pending[block.digest] = (self.metrics.gossip_rounds, block.payload_kind, block.payload[:16])

    def _check_propagation(self) -> None:
        done = []
        for digest, (authored, kind, host) in self._pending.items():
            if all(n.ledger.has_digest(self.chain_id, digest) for n in self.nodes.values()):
                done.append(digest)
                rounds = self.metrics.gossip_rounds - authored
                hist = self.metrics.gossip_rounds_to_full_propagation
                hist[str(rounds)] = hist.get(str(rounds), 0) + 1
                self.metrics.max_propagation_rounds = max(self.metrics.max_propagation_rounds, rounds)
                if kind == PayloadKind.AccessGrant:
                    self.grant_propagated_at[host] = self.clock_ms
        for digest in done:
            del self._pending[digest]

    def _record_route(self, node: RsuNode, dev: DeviceState) -> None:
        """Update the serving node's route store; crossing into another network also goes on-chain."""
        route = Route(dev.tag, node.network_id, node.rsu_id, self.clock_ms)
        if dev.routed_network not in (None, node.network_id):
            before = len(node.ledger.chain(self.chain_id))
            node.ledger.append(self.chain_id, PayloadKind.RouteRecord, route.encode(), self.clock_ms, node.tag)
            self._track(node, before)
        record_route(node.ledger, route)
        dev.routed_network = node.network_id

    def _muni_of(self, rsu_id: str) -> MunicipalityState:
        return self.municipalities[self.nodes[rsu_id].network_id]

    # -- handlers ----------------------------------------------------------

    def _on_move(self, out: list) -> None:
        s = self.scenario
        rsus = [self.nodes[r].interface for r in sorted(self.nodes)]
        for dev in self.devices:
            pos = dev.position_at(self.clock_ms)
            if pos is None:
                if dev.serving is not None:
                    self.nodes[dev.serving].vlans.release(dev.tag)
                    self._emit("depart", dev.serving, dev.mac, out)
                    dev.serving = None
                    dev.pending_handoff = None
                continue
            iface = self.device_interface(dev, pos)
            heard = sense(iface, rsus, s.path_loss, self.noise, sensitivity_dbm=s.sensitivity_dbm, timestamp_ms=self.clock_ms)
            candidates = []
            for m in heard:
                rsu = self.nodes[m.subject_id].interface
                back = rssi_at(iface.tx_power_dbm, s.path_loss, distance(pos, rsu.position), self.noise())
                if back > s.sensitivity_dbm:
                    candidates.append((m.rssi_dbm, m.subject_id))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            current = dev.serving
            current_rssi = next((r for r, i in candidates if i == current), None)
            if current is not None and current_rssi is not None:
                best_rssi, best_id = candidates[0]
                if best_id == current or best_rssi < current_rssi + s.handoff_hysteresis_db:
                    continue
                candidates = [c for c in candidates if c[1] != current]
            target = None
            for _, rsu_id in candidates:
                rsu = self.nodes[rsu_id].interface
                policy = TargetPolicy.OpenSsid if rsu.ssid_open else TargetPolicy.Closed
                try:
                    state = supplicate(iface, rsu, policy, s.path_loss, sensitivity_dbm=s.sensitivity_dbm)
                except OutOfRange:
                    continue
                if state.status is PeeringStatus.Registered:
                    target = rsu_id
                    break
            if target is None:
                if current is not None and current_rssi is None:
                    self.nodes[current].vlans.release(dev.tag)
                    self._emit("coverage-lost", current, dev.mac, out)
                    dev.serving = None
                    dev.pending_handoff = None
                continue
            self._attach(dev, target, out)

    def _attach(self, dev: DeviceState, target: str, out: list) -> None:
        previous = dev.serving
        if previous is not None:
            self.nodes[previous].vlans.release(dev.tag)
        node = self.nodes[target]
        node.vlans.admit(dev.tag, self.clock_ms)
        dev.serving = target
        dev.pending_handoff = None
        state, _ = node.ledger.grant_state(dev.tag, self.chain_id, self.clock_ms)
        routed = state is GrantState.Active
        if routed:
            node.vlans.set(dev.tag, Vlan.Routed, self.clock_ms)
        if previous is None:
            self._emit("supplicate", target, f"{dev.mac} vlan={'Routed' if routed else 'NullRoute'}", out)
            return
        m = self.metrics
        m.handoffs_total += 1
        self._muni_of(target).counters["handoffs_in"] += 1
        h = Handoff(self.clock_ms, dev.mac, previous, target, dev.tag in self.grant_propagated_at)
        if h.after_propagation:
            m.handoffs_after_propagation += 1
        self.handoff_log.append(h)
        if routed:
            self._resolve_handoff(h, True)
            self._record_route(node, dev)
        else:
            dev.pending_handoff = h
        self._emit("handoff", target, f"{dev.mac} from={previous} routed={routed}", out)

    def _resolve_handoff(self, h: Handoff, without_reauth: bool) -> None:
        h.without_reauth = without_reauth
        if without_reauth:
            self.metrics.handoffs_without_reauth += 1
            if h.after_propagation:
                self.metrics.handoffs_after_propagation_without_reauth += 1

    def _on_sense(self, out: list) -> None:
        s = self.scenario
        now = self.clock_ms
        active = []
        for dev in self.devices:
            pos = dev.position_at(now)
            if pos is not None:
                active.append((dev, pos))
        env = [self.device_interface(dev, pos) for dev, pos in active]
        heard: dict[str, list[tuple[str, float]]] = {}
        for rsu_id in sorted(self.nodes):
            node = self.nodes[rsu_id]
            for m in sense(node.interface, env, s.path_loss, self.noise, sensitivity_dbm=s.sensitivity_dbm, timestamp_ms=now):
                heard.setdefault(m.subject_id, []).append((rsu_id, m.rssi_dbm))

        for net in sorted(self.municipalities):
            muni = self.municipalities[net]
            members = set(muni.rsu_ids)
            for dev, true_pos in active:
                entries = [e for e in heard.get(dev.mac, ()) if e[0] in members]
                if not entries:
                    continue
                estimate = None
                if len(entries) >= 3:
                    anchors = [
                        (self.nodes[r].interface.position, invert_rssi(rssi, s.vehicle_tx_power_dbm, s.path_loss))
                        for r, rssi in entries
                    ]
                    try:
                        estimate = localize(anchors)
                    except DegenerateGeometry:
                        estimate = None
                    if estimate is not None:
                        self._loc_sq_err += math.dist(estimate, true_pos) ** 2
                        self.metrics.localization_events += 1
                        muni.counters["localizations"] += 1
                profile = muni.profiles.get(dev.tag)
                if profile is None:
                    profile = BehaviorProfile.new(dev.tag, dev.mac_bytes, now, s.profile_expiry_ms)
                    self._emit("profile-new", net, dev.mac, out)
                for rsu_id, rssi in entries:
                    obs = Observation(dev.tag, dev.mac_bytes, rsu_id, rssi, estimate, now)
                    profile = ingest_observation(profile, obs, s.retention)
                muni.profiles[dev.tag] = reclassify(profile, s.classifier)

        for dev, _ in active:
            if dev.serving is None:
                continue
            self._serve(dev, out)

    def _serve(self, dev: DeviceState, out: list) -> None:
        s = self.scenario
        now = self.clock_ms
        node = self.nodes[dev.serving]
        muni = self.municipalities[node.network_id]
        state, _ = node.ledger.grant_state(dev.tag, self.chain_id, now)
        vlan = node.vlans.vlan_of(dev.tag)
        pending = dev.pending_handoff
        if state is GrantState.Active and vlan is Vlan.NullRoute:
            node.vlans.set(dev.tag, Vlan.Routed, now)
            self._record_route(node, dev)
            self._emit("vlan", node.rsu_id, f"{dev.mac} Routed (on-chain grant)", out)
            if pending is not None:
                self._resolve_handoff(pending, now - pending.time_ms <= s.sense_period_ms)
                dev.pending_handoff = pending = None
        elif state in (GrantState.Revoked, GrantState.Expired) and vlan is Vlan.Routed:
            node.vlans.set(dev.tag, Vlan.NullRoute, now)
            self._emit("vlan", node.rsu_id, f"{dev.mac} NullRoute ({state.value})", out)
        if pending is not None:
            # First SenseTick since the handoff passed without an on-chain grant.
            self._resolve_handoff(pending, False)
            dev.pending_handoff = None

        if node.vlans.vlan_of(dev.tag) is Vlan.NullRoute:
            self._maybe_authorize(dev, node, muni, state, out)

        routed = node.vlans.vlan_of(dev.tag) is Vlan.Routed
        self.metrics.frames_sent += 1
        if routed:
            self.metrics.internet_deliveries += 1
            muni.counters["internet_deliveries"] += 1
            if dev.rogue:
                self.metrics.rogue_routed_deliveries += 1
        self.delivery_log.append((now, dev.mac, node.rsu_id, "Routed" if routed else "NullRoute", routed))

    def _maybe_authorize(self, dev, node: RsuNode, muni: MunicipalityState, state: GrantState, out: list) -> None:
        profile = muni.profiles.get(dev.tag)
        if profile is None or profile.mobility_class is MobilityClass.Unknown:
            return
        # A grant issued by this municipality may not have reached this replica
        # yet; it may still see nothing, or an older revocation.
        if state is not GrantState.Active and dev.tag in muni.granted:
            return
        now = self.clock_ms
        ctx = EvalContext(now, self.oui_allowlist)
        chain = node.ledger.chain(self.chain_id)
        preview = evaluate_contract(current_rules(chain), profile, ctx)
        if not preview.granted and preview.failed_predicates == muni.last_denial.get(dev.tag):
            return
        before = len(chain)
        decision = run_access_pipeline(
            profile, ctx, node.ledger, self.chain_id,
            author=node.tag, network_id=node.network_id, interface_id=node.rsu_id,
        )
        self._track(node, before)
        if decision.granted:
            self.metrics.grants += 1
            muni.counters["grants"] += 1
            muni.granted[dev.tag] = now
            muni.last_denial.pop(dev.tag, None)
            node.vlans.set(dev.tag, Vlan.Routed, now)
            self._emit("grant", node.rsu_id, dev.mac, out)
        else:
            self.metrics.denials += 1
            muni.counters["denials"] += 1
            muni.last_denial[dev.tag] = decision.failed_predicates
            self._emit("deny", node.rsu_id, f"{dev.mac} failed={','.join(decision.failed_predicates)}", out)

    def _on_gossip(self, out: list) -> None:
        ledgers = {rid: n.ledger for rid, n in self.nodes.items()}
        authors = {rid: n.tag for rid, n in self.nodes.items()}
        results = gossip_round(ledgers, self.adjacency, authors=authors, now_ms=self.clock_ms)
        self.metrics.gossip_rounds += 1
        for rid in sorted(results):
            r = results[rid]
            tag = self.nodes[rid].tag
            for block in r.orphans:
                if block.header.author == tag and self._pending.pop(block.digest, None) is not None:
                    self.metrics.orphaned_blocks += 1
            self._register(r.reappended)
            if r.orphans:
                self._emit("fork", rid, f"orphans={len(r.orphans)} reappended={len(r.reappended)}", out)
        self._check_propagation()

    def _on_expiry(self, out: list) -> None:
        now = self.clock_ms
        for net in sorted(self.municipalities):
            muni = self.municipalities[net]
            node = self.nodes[muni.rsu_ids[0]]
            chain = node.ledger.chain(self.chain_id)
            before = len(chain)
            pruned = prune_expired(muni.profiles, now, chain, node.tag)
            if not pruned:
                continue
            self._track(node, before)
            for tag in pruned:
                muni.granted.pop(tag, None)
                muni.last_denial.pop(tag, None)
                self.grant_propagated_at.pop(tag, None)
                self.metrics.revocations += 1
                muni.counters["revocations"] += 1
                self._emit("prune", node.rsu_id, tag.hex(), out)

    # -- driver ------------------------------------------------------------

    def step(self) -> list[TraceRecord]:
        if not self.queue:
            raise IndexError("event queue is empty")
        time_ms, _, kind = heapq.heappop(self.queue)
        self.clock_ms = max(self.clock_ms, time_ms)
        out: list[TraceRecord] = []
        self._emit(kind, "-", "", out)
        s = self.scenario
        if kind == MOVE:
            self._on_move(out)
            self.schedule(time_ms + s.move_period_ms, MOVE)
        elif kind == GOSSIP:
            self._on_gossip(out)
            self.schedule(time_ms + s.gossip_period_ms, GOSSIP)
        elif kind == SENSE:
            self._on_sense(out)
            self.schedule(time_ms + s.sense_period_ms, SENSE)
        elif kind == EXPIRY:
            self._on_expiry(out)
            self.schedule(time_ms + s.expiry_period_ms, EXPIRY)
        return out

    def run_until(self, end_ms: int) -> None:
        while self.queue and self.queue[0][0] < end_ms:
            self.step()
        self.clock_ms = max(self.clock_ms, end_ms)

    def gossip_diameter(self) -> int:
        """Largest BFS eccentricity over the RSU gossip graph (per connected component)."""
        best = 0
        for src in self.nodes:
            dist = {src: 0}
            frontier = [src]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in sorted(self.adjacency[u]):
                        if v not in dist:
                            dist[v] = dist[u] + 1
                            nxt.append(v)
                frontier = nxt
            best = max(best, max(dist.values()))
        return best

    def report(self) -> MetricsReport:
        m = self.metrics
        n = m.localization_events
        m.localization_rmse_m = math.sqrt(self._loc_sq_err / n) if n else 0.0
        m.per_municipality = {net: dict(st.counters) for net, st in sorted(self.municipalities.items())}
        m.gossip_rounds_to_full_propagation = dict(
            sorted(m.gossip_rounds_to_full_propagation.items(), key=lambda kv: int(kv[0]))
        )
        return m


def build_world(scenario: Scenario, *, trace: bool = False) -> World:
    validate_scenario(scenario)
    world = World(scenario, trace=trace)
    s = scenario
    rng = SplitMix64(s.seed)
    world.noise = gaussian_noise(np.random.default_rng(rng.derive()), s.path_loss.noise_sigma_db)

    rsus = s.rsus()
    tags = []
    for rsu in rsus:
        kp = generate_keypair(rng.derive(), SIM_GROUP)
        tag = derive_host_tag(kp.public_key, SIM_GROUP)
        tags.append(tag)
        world.nodes[rsu.interface_id] = RsuNode(
            rsu, kp, tag, Ledger(s.cache_capacity), VlanTable(rsu.interface_id)
        )
    if len(set(tags)) != len(tags):
        raise ConfigError("seed", "RSU host identity collision; choose another seed")

    genesis = new_chain(s.chain_id, tags[0], encode_authors(tags), 0)
    genesis_chain = genesis.copy()
    append_block(genesis_chain, PayloadKind.ContractRules, s.rules.encode(), 0, tags[0])
    for node in world.nodes.values():
        node.ledger.install(genesis_chain.copy())

    for m in s.municipalities:
        world.municipalities[m.network_id] = MunicipalityState(m.network_id, [r.interface_id for r in m.rsus])

    world.adjacency = {rid: set() for rid in world.nodes}
    if s.gossip_adjacency is not None:
        for a, b in s.gossip_adjacency:
            world.adjacency[a].add(b)
            world.adjacency[b].add(a)
    else:
        ids = sorted(world.nodes)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if in_mutual_range(world.nodes[a].interface, world.nodes[b].interface, s.path_loss, s.sensitivity_dbm):
                    world.adjacency[a].add(b)
                    world.adjacency[b].add(a)

    allow = world.oui_allowlist
    for v in s.vehicles:
        kp = generate_keypair(rng.derive(), SIM_GROUP)
        mac = parse_mac(v.mac)
        world.devices.append(
            DeviceState(
                v.mac, mac, False, v.is_legit_manufacturer, kp, derive_host_tag(kp.public_key, SIM_GROUP),
                v.route_polyline, v.speed_mps, v.start_ms,
            )
        )
    for r in s.rogue_devices:
        kp = generate_keypair(rng.derive(), SIM_GROUP)
        mac = parse_mac(r.mac)
        world.devices.append(
            DeviceState(
                r.mac, mac, True, mac[:3] in allow, kp, derive_host_tag(kp.public_key, SIM_GROUP),
                (r.position,), 0.0, 0,
            )
        )

    for kind in (MOVE, GOSSIP, SENSE, EXPIRY):
        world.schedule(0, kind)
    return world


def simulate(scenario: Scenario, *, trace: bool = False) -> World:
    world = build_world(scenario, trace=trace)
    world.run_until(scenario.duration_ms)
    world.report()
    return world


def run(scenario: Scenario, *, trace: bool = False) -> MetricsReport:
    return simulate(scenario, trace=trace).metrics
