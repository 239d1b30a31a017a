"""AITF role state machines: victim host, border router (victim's gateway and
attacker's gateway roles), and attacker host.

Handlers return the messages they emit; the caller (normally the simulator)
delivers them. Timers, data-plane notifications and topology knowledge go
through the ``net`` object each role is constructed with, see :class:`Network`.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .core import (
    MAX_LABELS_PER_MESSAGE,
    AitfMessage,
    AntiSpoofStamp,
    FlowLabel,
    MessageType,
    NodeId,
    SourceGateway,
    SourceHost,
    StampMode,
    make_nonce,
    nonce_epoch,
    verify_nonce,
)
from .filters import InstallResult, ShadowTable, ShadowVerdict, WireFilterTable

log = logging.getLogger(__name__)


class AttackerBehavior(enum.Enum):
    COMPLIANT = "compliant"
    ONOFF = "onoff"
    DEAF = "deaf"


class GatewayBehavior(enum.Enum):
    COOPERATIVE = "cooperative"
    ONOFF = "onoff"
    UNRESPONSIVE = "unresponsive"


class SanctionPolicy(enum.Enum):
    DISCONNECT = "disconnect"
    PERSISTENT_FILTER = "persistent_filter"


class Phase(enum.Enum):
    SYN_SENT = "syn_sent"
    ESTABLISHED = "established"
    FAILED = "failed"


class Resolution(enum.Enum):
    PENDING = "pending"
    REMOTE_BLOCKED = "remote_blocked"
    LOCALLY_BLOCKED = "locally_blocked"
    UNRESOLVABLE = "unresolvable"


class Admission(enum.Enum):
    ADMITTED = "admitted"
    DROPPED = "dropped"


@dataclass
class ProtocolParams:
    R: float = 1000.0
    R_max: Optional[float] = None
    T: float = 120.0
    T_tmp: float = 1.0
    grace_period: float = 0.5
    sanction: SanctionPolicy = SanctionPolicy.DISCONNECT
    mode: StampMode = StampMode.MINIMAL
    false_id_prob: float = 0.0
    vgw_capacity: int = 10000
    escalated_ttl: float = math.inf
    first_detect_delay: float = 1.0
    recur_detect_delay: float = 0.1
    max_labels: int = MAX_LABELS_PER_MESSAGE


class Network(Protocol):
    """Services a role needs from its environment."""

    def call_at(self, t: float, fn: Callable, *args) -> None: ...

    def filters_changed(self, router: NodeId, label: FlowLabel, now: float) -> None: ...

    def settle_hits(self, router: NodeId, now: float) -> None: ...

    def stamp_for(self, router: NodeId, label: FlowLabel) -> Optional[AntiSpoofStamp]: ...

    def one_way_delay(self, a: NodeId, b: NodeId) -> float: ...

    def disconnect(self, router: NodeId, customer: NodeId, now: float) -> None: ...

    def pause(self, host: NodeId, label: FlowLabel, now: float, duration: float) -> None: ...


@dataclass
class FilteringContract:
    """Token bucket enforcing a peer's maximum filtering-request rate."""

    peer: NodeId
    rate: float
    burst: Optional[float] = None
    tokens: Optional[float] = None
    last_refill: float = 0.0
    admitted: int = 0
    dropped: int = 0

    def __post_init__(self):
        if self.burst is None:
            self.burst = self.rate * 1.0
        if self.tokens is None:
            self.tokens = self.burst

    def refill(self, now: float) -> None:
        if now > self.last_refill:
            self.tokens = min(self.burst, self.tokens + (now - self.last_refill) * self.rate)
            self.last_refill = now

    def admit(self, n_labels: int, now: float) -> Admission:
        if n_labels < 1:
            raise ValueError("n_labels must be >= 1")
        self.refill(now)
        # float slack so that a peer pacing itself with an identical bucket is never dropped
        if self.tokens + 1e-9 >= n_labels:
            self.tokens = max(0.0, self.tokens - n_labels)
            self.admitted += n_labels
            return Admission.ADMITTED
        self.dropped += n_labels
        return Admission.DROPPED


def contract_admit(contract: FilteringContract, n_labels: int, now: float) -> Admission:
    return contract.admit(n_labels, now)


@dataclass
class HandshakeState:
    peer_gateway: NodeId
    labels: list
    phase: Phase
    sent_at: float
    retries_left: int = 1


@dataclass
class EscalationRecord:
    label: FlowLabel
    round: int
    resolution: Resolution = Resolution.PENDING


def _chunks(seq, n):
    for i in range(0, len(seq), n):
        yield seq[i : i + n]


class VictimHost:
    """Detects undesired flows and sends rate-limited filtering requests to its gateway."""

    def __init__(self, node_id: NodeId, gateway: NodeId, params: ProtocolParams, net: Network, paced: bool = False):
        self.id = node_id
        self.gateway = gateway
        self.params = params
        self.net = net
        self.pump_interval = 0.01
        # paced victims spread requests evenly instead of spending a full second's budget at once
        burst = max(1.0, params.R * self.pump_interval) if paced else params.R
        self.bucket = FilteringContract(gateway, params.R, burst=burst)
        self.arriving: dict[FlowLabel, float] = {}
        self.requested: set[FlowLabel] = set()
        self.first_request: dict[FlowLabel, float] = {}
        self._queue: list = []
        self._queued: set[FlowLabel] = set()
        self._seq = itertools.count()
        self._pump_at: Optional[float] = None
        self.requests_sent = 0
        self.first_request_at: Optional[float] = None
        self.reaction_at: Optional[float] = None

    def observe(self, label: FlowLabel, bps: float, now: float) -> list[AitfMessage]:
        """Flow ``label`` started (bps > 0) or stopped (bps == 0) arriving."""
        if bps <= 0:
            self.arriving.pop(label, None)
            return []
        self.arriving[label] = bps
        if label in self.requested:
            at = now + self.params.recur_detect_delay
        elif self.reaction_at is None or now > self.reaction_at:
            # the victim reacts to an attack as a whole; flows seen before it reacts are all included
            at = now + self.params.first_detect_delay
            if self.reaction_at is None:
                self.reaction_at = at
        else:
            at = self.reaction_at
        self.net.call_at(at, self._detected, label)
        return []

    def _detected(self, label: FlowLabel, now: float) -> list[AitfMessage]:
        if label not in self.arriving or label in self._queued:
            return []
        self._enqueue(label, self.arriving[label], now)
        return self._pump(now)

    def _enqueue(self, label: FlowLabel, bps: float, now: float) -> None:
        self._queued.add(label)
        heapq.heappush(self._queue, (-bps, now, next(self._seq), label))

    def victim_on_attack_detected(self, flows, now: float) -> list[AitfMessage]:
        """Queue ``flows`` (pairs of label and bandwidth) and send what the rate budget allows now."""
        for label, bps in flows:
            if label not in self._queued:
                self._enqueue(label, bps, now)
        return self._pump(now)

    def _pump(self, now: float, scheduled: bool = False) -> list[AitfMessage]:
        if scheduled:
            self._pump_at = None
        self.bucket.refill(now)
        n = min(int(self.bucket.tokens + 1e-9), len(self._queue))
        out = []
        if n:
            labels = []
            for _ in range(n):
                *_, label = heapq.heappop(self._queue)
                self._queued.discard(label)
                labels.append(label)
            self.bucket.tokens = max(0.0, self.bucket.tokens - n)
            for label in labels:
                self.requested.add(label)
                self.first_request.setdefault(label, now)
            if self.first_request_at is None:
                self.first_request_at = now
            self.requests_sent += n
            out = [AitfMessage.request(chunk, self.id, self.gateway) for chunk in _chunks(labels, self.params.max_labels)]
        if self._queue and self._pump_at is None:
            self._pump_at = now + self.pump_interval
            self.net.call_at(self._pump_at, self._scheduled_pump)
        return out

    def _scheduled_pump(self, now: float) -> list[AitfMessage]:
        return self._pump(now, scheduled=True)

    def on_message(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        # victims ignore stray SYN/ACKs (the gateway should have intercepted them)
        return []


class AttackerHost:
    """Source of an undesired flow; reacts to requests relayed by its gateway."""

    def __init__(self, node_id: NodeId, behavior: AttackerBehavior, params: ProtocolParams, net: Network):
        self.id = node_id
        self.behavior = behavior
        self.params = params
        self.net = net
        self.requests_received = 0

    def on_message(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        if msg.type is not MessageType.REQUEST:
            return []
        self.requests_received += len(msg.flow_labels)
        if self.behavior is AttackerBehavior.DEAF:
            return []
        pause = self.params.T if self.behavior is AttackerBehavior.COMPLIANT else self.params.T_tmp
        for label in msg.flow_labels:
            self.net.pause(self.id, label, now, pause)
        return []


@dataclass
class RouterStats:
    requests_received: int = 0
    requests_dropped: int = 0
    table_full: int = 0
    syns_sent: int = 0
    synacks_sent: int = 0
    acks_sent: int = 0
    bad_nonces: int = 0
    handshakes_established: int = 0
    agw_filters_installed: int = 0
    escalations: int = 0
    unresolvable: int = 0
    sanctions: int = 0
    expired_hit_bits: float = 0.0


class AitfRouter:
    """Border router running both the victim's-gateway and attacker's-gateway algorithms.

    A single wire-speed table serves both roles; shadow records are kept per role.
    """

    def __init__(
        self,
        node_id: NodeId,
        params: ProtocolParams,
        net: Network,
        secret_key: bytes,
        behavior: GatewayBehavior = GatewayBehavior.COOPERATIVE,
        customers: frozenset = frozenset(),
        capacity: Optional[int] = None,
        deployed: bool = True,
    ):
        self.id = node_id
        self.params = params
        self.net = net
        self.key = secret_key
        self.behavior = behavior if deployed else GatewayBehavior.UNRESPONSIVE
        self.deployed = deployed
        self.customers = customers
        self.table = WireFilterTable(params.vgw_capacity if capacity is None else capacity)
        budget = params.R_max * params.T if params.R_max else None
        self.vgw_shadow = ShadowTable(params.T, entry_budget=budget)
        self.agw_shadow = ShadowTable(params.T)
        self.contracts: dict[NodeId, FilteringContract] = {}
        self.aggregate_contract = FilteringContract(node_id, params.R_max) if params.R_max else None
        self.handshakes: dict[FlowLabel, HandshakeState] = {}
        self.escalations: dict[FlowLabel, EscalationRecord] = {}
        self.escalations_by_victim: dict[NodeId, int] = defaultdict(int)
        self.gateway_for: dict[FlowLabel, NodeId] = {}
        self.probation: set[FlowLabel] = set()
        self.customer_of: dict[FlowLabel, NodeId] = {}
        self.stats = RouterStats()
        self._syn_seen: dict[FlowLabel, float] = {}

    # -- dispatch ---------------------------------------------------------

    def on_message(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        kind = msg.type
        if kind is MessageType.REQUEST:
            if msg.origin in self.customers:
                return self.vgw_on_victim_request(msg, now)
            return self.on_provider_request(msg, now)
        if kind is MessageType.SYN:
            return self.agw_on_syn(msg, now)
        if kind is MessageType.SYN_ACK:
            return self.vgw_intercept_synack(msg, now)
        return self.agw_on_ack(msg, now)

    # -- wire table helpers -------------------------------------------------

    def _install(self, label: FlowLabel, now: float, ttl: float) -> InstallResult:
        result = self.table.install(label, now, ttl)
        if result is InstallResult.TABLE_FULL:
            self.stats.table_full += 1
            return result
        if math.isfinite(ttl):
            self.net.call_at(now + ttl, self._on_expiry)
        self.net.filters_changed(self.id, label, now)
        return result

    def _on_expiry(self, now: float) -> list[AitfMessage]:
        self.net.settle_hits(self.id, now)
        for entry in self.table.expire_entries(now):
            self.stats.expired_hit_bits += entry.hit_bits
            self.net.filters_changed(self.id, entry.label, now)
            if entry.label in self.probation:
                self.probation.discard(entry.label)
                if entry.hit_bits > 0:
                    self._sanction(entry.label, now)
        return []

    def total_hit_bits(self) -> float:
        """Bits dropped by this router's filters over the run, expired ones included."""
        return self.stats.expired_hit_bits + sum(e.hit_bits for e in self.table.entries.values())

    def _sanction(self, label: FlowLabel, now: float) -> None:
        culprit = self.customer_of.get(label)
        if culprit is None:
            return
        self.stats.sanctions += 1
        if self.params.sanction is SanctionPolicy.DISCONNECT:
            log.info("router %d disconnects %d for %s", self.id, culprit, label)
            self.net.disconnect(self.id, culprit, now)
        else:
            self._install(label, now, self.params.T)

    # -- victim's gateway -----------------------------------------------------

    def contract_for(self, victim: NodeId) -> FilteringContract:
        contract = self.contracts.get(victim)
        if contract is None:
            contract = self.contracts[victim] = FilteringContract(victim, self.params.R)
        return contract

    def vgw_on_victim_request(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        n = len(msg.flow_labels)
        self.stats.requests_received += n
        if contract_admit(self.contract_for(msg.origin), n, now) is Admission.DROPPED:
            self.stats.requests_dropped += n
            return []
        if self.aggregate_contract and contract_admit(self.aggregate_contract, n, now) is Admission.DROPPED:
            self.stats.requests_dropped += n
            return []
        syns: dict[tuple, list] = defaultdict(list)
        out = []
        for label in msg.flow_labels:
            out += self._vgw_handle_label(label, now, syns)
        return out + self._send_syns(syns, now)

    def _vgw_handle_label(self, label: FlowLabel, now: float, syns: dict) -> list[AitfMessage]:
        verdict = self.vgw_shadow.shadow_check(label, now)
        if verdict is ShadowVerdict.SECOND_STRIKE:
            return self.escalate(label, now)
        self._install(label, now, self.params.T_tmp)
        if label.is_aggregate:
            # a recurring aggregate: replay the handshake with the router already chosen for it
            peer = self.gateway_for.get(label)
        else:
            stamp = self.net.stamp_for(self.id, label)
            if stamp is None or not stamp.present:
                # legacy path: nobody upstream can be asked
                self._install(label, now, self.params.escalated_ttl)
                self.escalations[label] = EscalationRecord(label, 0, Resolution.LOCALLY_BLOCKED)
                return []
            peer = stamp.first_gateway
            self.gateway_for[label] = peer
        if peer is None:
            return self.escalate(label, now)
        hs = self.handshakes.get(label)
        if verdict is ShadowVerdict.FIRST_STRIKE:
            # second chance for the gateway that broke the agreement
            retries = 0
        else:
            retries = 1
        if hs is None or verdict is not ShadowVerdict.FIRST_STRIKE or hs.retries_left > 0:
            syns[(peer, self._victim_of(label))].append(label)
            self.handshakes[label] = HandshakeState(peer, [label], Phase.SYN_SENT, now, retries)
            return []
        return self.escalate(label, now)

    @staticmethod
    def _victim_of(label: FlowLabel) -> NodeId:
        return label.dst if isinstance(label.dst, int) else label.dst.network

    def _send_syns(self, syns: dict, now: float) -> list[AitfMessage]:
        out = []
        for (peer, _victim), labels in syns.items():
            for chunk in _chunks(labels, self.params.max_labels):
                for label in chunk:
                    self.handshakes[label].labels = list(chunk)
                out.append(AitfMessage.syn_msg(chunk, self.id, peer))
                self.stats.syns_sent += 1
                self.net.call_at(now + self.params.grace_period, self._grace_expired, tuple(chunk), now)
        return out

    def _grace_expired(self, labels: tuple, sent_at: float, now: float) -> list[AitfMessage]:
        out = []
        for label in labels:
            hs = self.handshakes.get(label)
            if hs is None or hs.phase is not Phase.SYN_SENT or hs.sent_at != sent_at:
                continue
            hs.phase = Phase.FAILED
            out += self.escalate(label, now)
        return out

    def vgw_intercept_synack(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        labels = list(msg.flow_labels)
        hs = self.handshakes.get(labels[0])
        if hs is None or hs.phase is not Phase.SYN_SENT or hs.peer_gateway != msg.origin or hs.labels != labels:
            # not ours: pass it on towards the addressed host
            return [msg]
        for label in labels:
            state = self.handshakes.get(label)
            if state is not None:
                state.phase = Phase.ESTABLISHED
            record = self.escalations.get(label)
            if record is not None and record.resolution is Resolution.PENDING:
                record.resolution = Resolution.REMOTE_BLOCKED
        self.stats.handshakes_established += 1
        self.stats.acks_sent += 1
        return [AitfMessage.ack_msg(labels, msg.nonce, self.id, msg.origin)]

    def vgw_monitor_agreement(self, label: FlowLabel, now: float) -> list[AitfMessage]:
        """React to an undesired flow that reappeared while its shadow is alive."""
        syns: dict[tuple, list] = defaultdict(list)
        out = self._vgw_handle_label(label, now, syns)
        return out + self._send_syns(syns, now)

    def escalate(self, label: FlowLabel, now: float) -> list[AitfMessage]:
        victim = self._victim_of(label)
        self.stats.escalations += 1
        self.escalations_by_victim[victim] += 1
        if label.is_aggregate:
            # already a gateway aggregate: only a local block is left
            return self._escalate_locally(label, label, 1, now)
        stamp = self.net.stamp_for(self.id, label)
        agw = self.gateway_for.get(label)
        if agw is None and stamp is not None:
            agw = stamp.first_gateway
        if agw is None:
            return self._escalate_locally(label, label, 0, now)
        wide = label.widened(agw)
        if self.table.has_room or wide in self.table:
            return self._escalate_locally(label, wide, 1, now)
        deeper = self._deeper_router(stamp, agw)
        if deeper is not None:
            self.escalations[wide] = EscalationRecord(wide, 1, Resolution.PENDING)
            self.escalations.setdefault(label, EscalationRecord(label, 0)).resolution = Resolution.PENDING
            self.gateway_for[wide] = deeper
            self.vgw_shadow.shadow_check(wide, now)
            self._install(wide, now, self.params.T_tmp)
            self.handshakes[wide] = HandshakeState(deeper, [wide], Phase.SYN_SENT, now, 1)
            return self._send_syns({(deeper, victim): [wide]}, now)
        return self._escalate_locally(label, wide, 1, now)

    def _deeper_router(self, stamp: Optional[AntiSpoofStamp], agw: NodeId) -> Optional[NodeId]:
        if self.params.mode is not StampMode.WIDE or stamp is None or not stamp.full_path:
            return None
        path = list(stamp.full_path)
        if agw not in path:
            return None
        for router in path[path.index(agw) + 1 :]:
            if router != self.id:
                return router
        return None

    def _escalate_locally(self, label: FlowLabel, block: FlowLabel, rnd: int, now: float) -> list[AitfMessage]:
        result = self._install(block, now, self.params.escalated_ttl)
        resolution = Resolution.UNRESOLVABLE if result is InstallResult.TABLE_FULL else Resolution.LOCALLY_BLOCKED
        if resolution is Resolution.UNRESOLVABLE:
            self.stats.unresolvable += 1
        self.escalations[label] = EscalationRecord(label, rnd, resolution)
        if block != label:
            self.escalations[block] = EscalationRecord(block, rnd, resolution)
        return []

    # -- attacker's gateway ---------------------------------------------------

    def agw_on_syn(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        if self.behavior is GatewayBehavior.UNRESPONSIVE:
            return []
        victim = self._victim_of(msg.flow_labels[0])
        if self.behavior is GatewayBehavior.ONOFF:
            for label in msg.flow_labels:
                self._syn_seen[label] = now
        nonce = make_nonce(self.key, victim, msg.flow_labels, nonce_epoch(now))
        self.stats.synacks_sent += 1
        return [AitfMessage.syn_ack(msg.flow_labels, nonce, self.id, victim)]

    def agw_on_ack(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        if self.behavior is GatewayBehavior.UNRESPONSIVE:
            return []
        victim = self._victim_of(msg.flow_labels[0])
        if not verify_nonce(self.key, victim, msg.flow_labels, msg.nonce, now):
            self.stats.bad_nonces += 1
            return []
        out = []
        for label in msg.flow_labels:
            if self.behavior is GatewayBehavior.ONOFF:
                self._onoff_pause(label, msg.origin, now)
                continue
            verdict = self.agw_shadow.shadow_check(label, now)
            result = self._install(label, now, self.params.T_tmp)
            if result is InstallResult.TABLE_FULL:
                continue
            self.stats.agw_filters_installed += 1
            culprit = label.src.host if isinstance(label.src, SourceHost) else label.src.gateway
            self.customer_of[label] = culprit
            if verdict is not ShadowVerdict.NOT_SHADOWED:
                self.probation.add(label)
            out.append(AitfMessage.request([label], self.id, culprit))
        return out

    def _onoff_pause(self, label: FlowLabel, requester: NodeId, now: float) -> None:
        # pretend to cooperate, then resume so that traffic reaches the requester
        # exactly when its temporary filter (installed as the SYN left) lapses
        syn_at = self._syn_seen.pop(label, now)
        delay = self.net.one_way_delay(self.id, requester)
        resume_at = syn_at - 2 * delay + self.params.T_tmp
        if resume_at > now:
            self.table.install(label, now, resume_at - now)
            self.net.call_at(resume_at, self._on_expiry)
            self.net.filters_changed(self.id, label, now)

    def on_provider_request(self, msg: AitfMessage, now: float) -> list[AitfMessage]:
        """A request naming this router as the attacker (escalated aggregate)."""
        if self.behavior is not GatewayBehavior.COOPERATIVE:
            return []
        for label in msg.flow_labels:
            self._install(label, now, self.params.T)
        return []
