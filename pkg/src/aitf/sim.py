"""Deterministic discrete-event simulator.

Data traffic is a fluid: every flow is on or off at each point of its path
and carries a constant integer rate. State changes travel along the path as
events delayed by the link delays, so a filter installed at a router takes
effect downstream one propagation delay later. AITF control messages are
individual events routed over the same delays.

The victims' access link is where goodput is measured: it shares its
capacity between good and attack traffic in proportion to the offered
rates.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import ScenarioConfig
from .core import (
    AitfMessage,
    AntiSpoofStamp,
    FlowLabel,
    MessageType,
    NodeId,
    Packet,
    PacketKind,
    SourceGateway,
    SourceHost,
    stamp_packet,
)
from .protocol import AitfRouter, AttackerBehavior, AttackerHost, GatewayBehavior, VictimHost
from .topology import FAST_ETHERNET, Topology, generate_topology

log = logging.getLogger(__name__)

REPRESENTATIVE_PACKET_BITS = 8000


class SimulationError(RuntimeError):
    """A runtime invariant was violated."""


@dataclass(frozen=True)
class FlowSpec:
    src: NodeId
    dst: NodeId
    rate: int
    kind: PacketKind
    policy: Optional[AttackerBehavior] = None
    start_at: float = 0.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("flow rate must be positive")


@dataclass(frozen=True)
class GoodputSample:
    t: float
    victim: NodeId
    good_bps: int
    attack_bps: int
    vgw_filters: int
    shadow_entries: int
    requests_cum: int
    escalations_cum: int


class Flow:
    """Run-time state of one flow along its path of routers (last one is the victims' gateway)."""

    __slots__ = (
        "id", "spec", "label", "packet", "stamp", "routers", "delays", "prev", "in_on", "out_on",
        "block", "t_last", "in_bits", "drop_bits", "emitting", "paused_until", "egress",
    )

    def __init__(self, fid, spec, packet, routers, delays):
        self.id = fid
        self.spec = spec
        self.label = FlowLabel(spec.dst, SourceHost(spec.src))
        self.packet = packet
        self.stamp = packet.stamp
        self.routers = routers
        self.delays = delays
        self.prev = [spec.src] + routers[:-1]
        n = len(routers)
        self.in_on = [False] * n
        self.out_on = [False] * n
        self.block = [None] * n
        self.t_last = [0.0] * n
        self.in_bits = [0.0] * n
        self.drop_bits = [0.0] * n
        self.emitting = False
        self.paused_until = -math.inf
        # (on, off) intervals of the flow entering the access link
        self.egress: list = []

    @property
    def rate(self) -> int:
        return self.spec.rate

    @property
    def is_attack(self) -> bool:
        return self.spec.kind is PacketKind.ATTACK


def share_link(good_bps: float, attack_bps: float, capacity_bps: float) -> tuple[float, float]:
    """Delivered (good, attack) rates on a link shared in proportion to the offered load."""
    total = good_bps + attack_bps
    if total <= capacity_bps or total == 0:
        return good_bps, attack_bps
    scale = capacity_bps / total
    return good_bps * scale, attack_bps * scale


class AccessLink:
    """Integrates delivered good/attack bits on a victim's access link."""

    def __init__(self, capacity_bps: float):
        self.capacity = capacity_bps
        self.good_rate = 0
        self.attack_rate = 0
        self.last = 0.0
        self.good_bits = 0.0
        self.attack_bits = 0.0
        self.total_good_bits = 0.0
        self.total_attack_bits = 0.0
        self.offered_attack_bits = 0.0
        self.window_offered_attack = 0.0

    def advance(self, now: float) -> None:
        dt = now - self.last
        if dt > 0:
            good, attack = share_link(self.good_rate, self.attack_rate, self.capacity)
            self.good_bits += good * dt
            self.attack_bits += attack * dt
            self.total_good_bits += good * dt
            self.total_attack_bits += attack * dt
            self.offered_attack_bits += self.attack_rate * dt
            self.window_offered_attack += self.attack_rate * dt
            self.last = now

    def take(self) -> tuple[float, float]:
        bits = self.good_bits, self.attack_bits
        self.good_bits = self.attack_bits = 0.0
        self.window_offered_attack = 0.0
        return bits


def measure_goodput(link: AccessLink, window: float) -> tuple[float, float]:
    """Average delivered (good, attack) bps over the window just ended; resets the window."""
    if window <= 0:
        raise ValueError("window must be positive")
    good, attack = link.take()
    return good / window, attack / window


def filtering_response_time(flow: Flow, first_request: Optional[float], T: float) -> float:
    """Time from the first request naming ``flow`` until its last bit entered the access link.

    Resumptions after the filtering window are ignored. Returns ``inf`` if the
    flow was still flowing at the end of the window (or was never requested).
    """
    if first_request is None:
        return math.inf
    horizon = first_request + T
    last_off = None
    for on, off in flow.egress:
        if on >= horizon:
            break
        if off is None or off >= horizon:
            return math.inf
        last_off = off
    if last_off is None or last_off < first_request:
        return 0.0
    return last_off - first_request


@dataclass
class VictimSummary:
    victim: NodeId
    first_request_s: float
    restoration_s: float
    median_response_s: float
    max_response_s: float
    unresolved_flows: int
    peak_vgw_filters: int
    peak_shadow_entries: int
    dropped_bits: int
    requests_sent: int
    escalations: int


@dataclass
class RunResult:
    samples: list
    summary: list
    sim: "Simulation" = field(repr=False)


class Simulation:
    def __init__(self, config: ScenarioConfig, topology: Optional[Topology] = None):
        self.config = config
        self.params = config.protocol
        self.topo = topology or generate_topology(config.topology)
        self.rng = random.Random(config.run.seed)
        self.now = 0.0
        self._events: list = []
        self._seq = itertools.count()
        self.host_delay = dict(self.topo.host_delay)
        self.nodes: dict[NodeId, object] = {}
        self.routers: dict[NodeId, AitfRouter] = {}
        self.victims: dict[NodeId, VictimHost] = {}
        self.links: dict[NodeId, AccessLink] = {}
        # attack bps reaching each access link per measurement window, before link sharing
        self.attack_arrivals: dict[NodeId, list] = {}
        self.flows: list[Flow] = []
        self._flow_by_label: dict[FlowLabel, Flow] = {}
        self._index: dict[NodeId, dict] = {}
        self._by_prev: dict[tuple, list] = {}
        self._blocked: dict[NodeId, dict] = {}
        self._disconnected: dict[NodeId, set] = {}
        self.disconnect_bits: dict[NodeId, float] = {}
        self.samples: list[GoodputSample] = []
        self.messages_sent = 0
        self._peak_filters = 0
        self._peak_shadow = 0
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        cfg, topo = self.config, self.topo
        key_rng = random.Random(cfg.run.seed * 7919 + 17)
        vr = topo.victim_router
        victim_hosts = topo.hosts_of(vr)[: cfg.victims.count]
        if cfg.victims.access_delay is not None:
            for v in victim_hosts:
                self.host_delay[v] = cfg.victims.access_delay
        attacker_gws = self._pick_gateways(len(victim_hosts))
        gw_policy = {}
        for gws in attacker_gws:
            for g in gws:
                gw_policy[g] = cfg.attack.gateway_policy
        for r in range(topo.n_domains):
            behavior = GatewayBehavior.COOPERATIVE if r == vr else gw_policy.get(r, GatewayBehavior.COOPERATIVE)
            router = AitfRouter(
                r, self.params, self, key_rng.randbytes(16), behavior,
                customers=frozenset(topo.hosts_of(r)), deployed=r in topo.deployed,
            )
            self.routers[r] = self.nodes[r] = router
            self._index[r] = {}
            self._blocked[r] = {}
            self._disconnected[r] = set()
            self.disconnect_bits[r] = 0.0
        paced = cfg.victims.request_mode == "paced"
        for v in victim_hosts:
            self.victims[v] = self.nodes[v] = VictimHost(v, vr, self.params, self, paced=paced)
            self.links[v] = AccessLink(cfg.victims.access_bps)
            self.attack_arrivals[v] = []

        free = {r: [h for h in topo.hosts_of(r)] for r in topo.edge_routers}
        free[vr] = [h for h in free[vr] if h not in self.victims]
        specs = []
        a = cfg.attack
        rate = int(a.total_bps // a.n_attackers)
        if rate > FAST_ETHERNET:
            raise SimulationError("per-attacker rate exceeds the fastest host link")
        for v, gws in zip(victim_hosts, attacker_gws):
            for k in range(a.n_attackers):
                if k < a.local_attackers:
                    router = vr
                else:
                    router = gws[(k - a.local_attackers) % len(gws)]
                host = self._take_host(free, router, rate)
                self.nodes[host] = AttackerHost(host, a.attacker_policy, self.params, self)
                specs.append(FlowSpec(host, v, rate, PacketKind.ATTACK, a.attacker_policy, a.start_at))
        g = cfg.good
        if cfg.victims.baseline_goodput_bps > 0:
            good_rate = int(cfg.victims.baseline_goodput_bps // g.n_sources)
            attack_domains = sorted({r for gws in attacker_gws for r in gws})
            clean = [r for r in topo.edge_routers if r != vr and r not in set(attack_domains)] or [
                r for r in topo.edge_routers if r != vr
            ]
            for v, gws in zip(victim_hosts, attacker_gws):
                n_co = round(g.colocated_fraction * g.n_sources)
                own = sorted(gws)
                for k in range(g.n_sources):
                    pool = own if k < n_co else clean
                    router = pool[self.rng.randrange(len(pool))]
                    host = self._take_host(free, router, good_rate, pool)
                    specs.append(FlowSpec(host, v, good_rate, PacketKind.GOOD))
        for spec in specs:
            self._add_flow(spec)

    def _pick_gateways(self, n_victims: int) -> list:
        topo, a = self.topo, self.config.attack
        candidates = [r for r in topo.edge_routers if r != topo.victim_router]
        self.rng.shuffle(candidates)
        n = a.n_gateways or len(candidates)
        out = []
        for k in range(n_victims):
            start = (k * n) % len(candidates)
            rotated = candidates[start:] + candidates[:start]
            out.append(rotated[:n])
        return out

    def _take_host(self, free: dict, router: NodeId, rate: int, fallback=None) -> NodeId:
        routers = [router] + [r for r in (fallback or []) if r != router]
        for r in routers:
            hosts = free.get(r, [])
            for i, h in enumerate(hosts):
                if self.topo.host_bps[h] >= rate:
                    return hosts.pop(i)
        raise SimulationError(
            f"edge domain {router} has no free host with {rate} bps capacity; raise topology.hosts_per_edge"
        )

    def _add_flow(self, spec: FlowSpec) -> Flow:
        topo = self.topo
        src_router = topo.router_of(spec.src)
        routers = topo.path_to_victim(src_router)
        delays = [self.host_delay[spec.src]] + [
            topo.router_delay(routers[i - 1], routers[i]) for i in range(1, len(routers))
        ]
        packet = Packet(spec.src, spec.dst, REPRESENTATIVE_PACKET_BITS, spec.kind)
        packet = stamp_packet(
            packet, routers[:-1], self.params.mode, self.params.false_id_prob, self.rng, list(topo.edge_routers)
        )
        flow = Flow(len(self.flows), spec, packet, routers, delays)
        self.flows.append(flow)
        self._flow_by_label[flow.label] = flow
        keys = [flow.label]
        if packet.stamp.first_gateway is not None:
            keys.append(FlowLabel(spec.dst, SourceGateway(packet.stamp.first_gateway)))
        for i, r in enumerate(routers):
            index = self._index[r]
            for key in keys:
                index.setdefault(key, []).append((flow, i))
            self._by_prev.setdefault((r, flow.prev[i]), []).append((flow, i))
        self.schedule(spec.start_at, self._emit, flow, True)
        return flow

    # -- event queue ------------------------------------------------------------

    def schedule(self, t: float, fn: Callable, *args) -> None:
        heapq.heappush(self._events, (t, next(self._seq), fn, args))

    def call_at(self, t: float, fn: Callable, *args) -> None:
        owner = getattr(fn, "__self__", None)
        self.schedule(t, self._timer, owner, fn, args)

    def _timer(self, owner, fn, args, now: float) -> None:
        out = fn(*args, now)
        if out:
            for msg in out:
                self.send(msg, owner.id, now)

    # -- control plane ------------------------------------------------------------

    def delay(self, a: NodeId, b: NodeId) -> float:
        topo = self.topo
        ra, rb = topo.router_of(a), topo.router_of(b)
        d = topo.router_delay(ra, rb)
        if a != ra:
            d += self.host_delay[a]
        if b != rb:
            d += self.host_delay[b]
        return d

    def one_way_delay(self, a: NodeId, b: NodeId) -> float:
        return self.delay(a, b)

    def send(self, msg: AitfMessage, at: NodeId, now: float) -> None:
        nxt = msg.target
        if msg.type is MessageType.SYN_ACK and self.topo.is_router(at):
            target_router = self.topo.router_of(msg.target)
            if at != target_router:
                # travels towards the addressed host and is seen by that host's gateway first
                nxt = target_router
        self.messages_sent += 1
        self.schedule(now + self.delay(at, nxt), self._deliver, nxt, msg)

    def inject(self, msg: AitfMessage, at: NodeId, t: float) -> None:
        """Send ``msg`` from node ``at`` at time ``t`` (used to model forgers)."""
        self.schedule(t, lambda now: self.send(msg, at, now))

    def _deliver(self, node: NodeId, msg: AitfMessage, now: float) -> None:
        handler = self.nodes.get(node)
        if handler is None:
            return
        for out in handler.on_message(msg, now):
            self.send(out, node, now)

    def stamp_for(self, router: NodeId, label: FlowLabel) -> Optional[AntiSpoofStamp]:
        flow = self._flow_by_label.get(label)
        return None if flow is None else flow.stamp

    # -- data plane ---------------------------------------------------------------

    def _emit(self, flow: Flow, on: bool, now: float) -> None:
        if flow.emitting == on:
            return
        flow.emitting = on
        self.schedule(now + flow.delays[0], self._arrive, flow, 0, on)

    def pause(self, host: NodeId, label: FlowLabel, now: float, duration: float) -> None:
        flow = self._flow_by_label.get(label)
        if flow is None or flow.spec.src != host:
            return
        until = now + duration
        if until > flow.paused_until:
            flow.paused_until = until
            self.schedule(until, self._resume, flow)
        self._emit(flow, False, now)

    def _resume(self, flow: Flow, now: float) -> None:
        if now >= flow.paused_until:
            self._emit(flow, True, now)

    def _arrive(self, flow: Flow, i: int, on: bool, now: float) -> None:
        self._account(flow, i, now)
        flow.in_on[i] = on
        self._update(flow, i, now)

    def _account(self, flow: Flow, i: int, now: float) -> None:
        dt = now - flow.t_last[i]
        if dt > 0 and flow.in_on[i]:
            bits = flow.rate * dt
            flow.in_bits[i] += bits
            blocker = flow.block[i]
            if blocker is not None:
                flow.drop_bits[i] += bits
                if blocker == "disconnected":
                    self.disconnect_bits[flow.routers[i]] += bits
                else:
                    blocker.hit_bits += bits
        flow.t_last[i] = now

    def _blocker(self, flow: Flow, i: int, now: float):
        r = flow.routers[i]
        if flow.prev[i] in self._disconnected[r]:
            return "disconnected"
        table = self.routers[r].table
        if not table.entries:
            return None
        return table.lookup(flow.packet, now)

    def _update(self, flow: Flow, i: int, now: float) -> None:
        self._account(flow, i, now)
        r = flow.routers[i]
        blocker = self._blocker(flow, i, now) if flow.in_on[i] else None
        flow.block[i] = blocker
        if blocker is None:
            self._blocked[r].pop((flow.id, i), None)
        else:
            self._blocked[r][(flow.id, i)] = (flow, i)
        out = flow.in_on[i] and blocker is None
        if out == flow.out_on[i]:
            return
        flow.out_on[i] = out
        if i + 1 < len(flow.routers):
            self.schedule(now + flow.delays[i + 1], self._arrive, flow, i + 1, out)
        else:
            self._egress(flow, out, now)

    def _egress(self, flow: Flow, on: bool, now: float) -> None:
        victim = flow.spec.dst
        link = self.links[victim]
        link.advance(now)
        delta = flow.rate if on else -flow.rate
        if flow.is_attack:
            link.attack_rate += delta
            if on:
                flow.egress.append([now, None])
            elif flow.egress:
                flow.egress[-1][1] = now
            host = self.victims[victim]
            self.schedule(
                now + self.host_delay[victim], self._observe, host, flow.label, flow.rate if on else 0
            )
        else:
            link.good_rate += delta

    def _observe(self, host: VictimHost, label: FlowLabel, bps: int, now: float) -> None:
        for msg in host.observe(label, bps, now):
            self.send(msg, host.id, now)

    def filters_changed(self, router: NodeId, label: FlowLabel, now: float) -> None:
        for flow, i in self._index[router].get(label, ()):
            self._update(flow, i, now)

    def settle_hits(self, router: NodeId, now: float) -> None:
        for flow, i in list(self._blocked[router].values()):
            self._account(flow, i, now)

    def disconnect(self, router: NodeId, customer: NodeId, now: float) -> None:
        self._disconnected[router].add(customer)
        for flow, i in self._by_prev.get((router, customer), ()):
            self._update(flow, i, now)

    # -- measurement ------------------------------------------------------------

    def _tick(self, k: int, now: float) -> None:
        dt = self.config.run.measurement_interval
        start = (k - 1) * dt
        vgw = self.routers[self.topo.victim_router]
        filters = len(vgw.table)
        shadow = vgw.vgw_shadow.size(now)
        self._peak_filters = max(self._peak_filters, filters)
        self._peak_shadow = max(self._peak_shadow, shadow)
        for v, link in self.links.items():
            link.advance(now)
            self.attack_arrivals[v].append(link.window_offered_attack / dt)
            good, attack = measure_goodput(link, dt)
            if good > link.capacity * (1 + 1e-9) or good + attack > link.capacity * (1 + 1e-9):
                raise SimulationError(f"access link of {v} delivered more than its capacity at t={now}")
            self.samples.append(
                GoodputSample(
                    round(start, 6), v, int(round(good)), int(round(attack)), filters, shadow,
                    self.victims[v].requests_sent, vgw.escalations_by_victim.get(v, 0),
                )
            )
        if k * dt < self.config.run.duration - 1e-9:
            self.schedule((k + 1) * dt, self._tick, k + 1)

    def run(self) -> RunResult:
        dt = self.config.run.measurement_interval
        duration = self.config.run.duration
        self.schedule(dt, self._tick, 1)
        events = self._events
        while events:
            t, _, fn, args = events[0]
            if t > duration + 1e-9:
                break
            heapq.heappop(events)
            self.now = t
            fn(*args, t)
        self.now = duration
        for flow in self.flows:
            for i in range(len(flow.routers)):
                self._account(flow, i, duration)
        for link in self.links.values():
            link.advance(duration)
        return RunResult(self.samples, self.summarize(), self)

    # -- reporting --------------------------------------------------------------

    def attack_flows(self, victim: Optional[NodeId] = None) -> list[Flow]:
        return [f for f in self.flows if f.is_attack and (victim is None or f.spec.dst == victim)]

    def blocked_attack_fraction(self, victim: NodeId, t0: float, t1: float) -> float:
        """Share of the attack sent towards ``victim`` that did not reach its access link in ``[t0, t1)``.

        Traffic an attacker holds back after a request counts as blocked.
        """
        dt = self.config.run.measurement_interval
        arrivals = self.attack_arrivals[victim]
        window = arrivals[int(round(t0 / dt)) : int(round(t1 / dt))]
        if not window:
            raise ValueError("empty measurement window")
        offered = sum(f.rate for f in self.attack_flows(victim))
        return 1.0 - (sum(window) / len(window)) / offered

    def preserved_bandwidth(self, victim: NodeId, t0: float, t1: float) -> float:
        """Access bandwidth not taken by undesired traffic, averaged over ``[t0, t1)``."""
        dt = self.config.run.measurement_interval
        window = self.attack_arrivals[victim][int(round(t0 / dt)) : int(round(t1 / dt))]
        if not window:
            raise ValueError("empty measurement window")
        capacity = self.links[victim].capacity
        return sum(capacity - min(capacity, a) for a in window) / len(window)

    def summarize(self) -> list[VictimSummary]:
        rows = []
        baseline = self.config.victims.baseline_goodput_bps
        T = self.params.T
        vgw = self.routers[self.topo.victim_router]
        for v, host in self.victims.items():
            first = host.first_request_at
            restoration = math.inf
            if first is not None:
                for s in self.samples:
                    if s.victim == v and s.t >= first - 1e-9 and s.good_bps >= 0.95 * baseline:
                        restoration = s.t - first
                        break
            times = sorted(
                filtering_response_time(f, host.first_request.get(f.label), T) for f in self.attack_flows(v)
            )
            finite = [x for x in times if math.isfinite(x)]
            dropped = sum(sum(f.drop_bits) for f in self.flows if f.spec.dst == v)
            rows.append(
                VictimSummary(
                    victim=v,
                    first_request_s=first if first is not None else math.nan,
                    restoration_s=restoration,
                    median_response_s=finite[len(finite) // 2] if finite else math.inf,
                    max_response_s=times[-1] if times else math.inf,
                    unresolved_flows=len(times) - len(finite),
                    peak_vgw_filters=vgw.table.peak,
                    peak_shadow_entries=vgw.vgw_shadow.peak,
                    dropped_bits=int(round(dropped)),
                    requests_sent=host.requests_sent,
                    escalations=vgw.escalations_by_victim.get(v, 0),
                )
            )
        return rows


def run(scenario: ScenarioConfig, topology: Optional[Topology] = None) -> RunResult:
    return Simulation(scenario, topology).run()
