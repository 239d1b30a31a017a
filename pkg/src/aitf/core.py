"""Domain types shared across the package: flow labels, packets, AITF messages,
nonces and the anti-spoofing stamp oracle."""

from __future__ import annotations

import enum
import hashlib
import random
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

NodeId = int

NONCE_BITS = 64
MAX_LABELS_PER_MESSAGE = 64
NONCE_EPOCH_S = 8.0


class MessageError(ValueError):
    """Raised when an AITF message has an illegal field combination."""


@dataclass(frozen=True)
class Prefix:
    """An edge network, identified by its border router, plus the hosts behind it."""

    network: NodeId
    members: frozenset = field(default_factory=frozenset, compare=False)
    length: int = 24

    def __contains__(self, node: NodeId) -> bool:
        return node in self.members


@dataclass(frozen=True)
class SourceHost:
    host: NodeId


@dataclass(frozen=True)
class SourceGateway:
    """All traffic forwarded by ``gateway`` (identified through the packet stamp)."""

    gateway: NodeId


Destination = Union[NodeId, Prefix]
SourceKind = Union[SourceHost, SourceGateway]


@dataclass(frozen=True)
class FlowLabel:
    dst: Destination
    src: SourceKind

    def __post_init__(self):
        if not isinstance(self.src, (SourceHost, SourceGateway)):
            raise TypeError(f"flow label source must be SourceHost or SourceGateway, got {self.src!r}")

    @property
    def is_aggregate(self) -> bool:
        return isinstance(self.src, SourceGateway)

    def widened(self, gateway: NodeId) -> "FlowLabel":
        return FlowLabel(self.dst, SourceGateway(gateway))

    def matches(self, packet: "Packet") -> bool:
        return flow_label_matches(self, packet)

    def key(self) -> tuple:
        """Stable tuple encoding, used for hashing into nonces and for sorting."""
        dst = ("P", self.dst.network, self.dst.length) if isinstance(self.dst, Prefix) else ("H", self.dst)
        src = ("h", self.src.host) if isinstance(self.src, SourceHost) else ("g", self.src.gateway)
        return dst + src

    def __str__(self) -> str:
        dst = f"net{self.dst.network}/{self.dst.length}" if isinstance(self.dst, Prefix) else str(self.dst)
        if isinstance(self.src, SourceHost):
            return f"{self.src.host}->{dst}"
        return f"gw{self.src.gateway}=>{dst}"


class PacketKind(enum.Enum):
    GOOD = "good"
    ATTACK = "attack"
    CONTROL = "control"


class StampMode(enum.Enum):
    MINIMAL = "minimal"
    WIDE = "wide"


@dataclass(frozen=True)
class AntiSpoofStamp:
    first_gateway: Optional[NodeId] = None
    full_path: Optional[tuple] = None

    @property
    def present(self) -> bool:
        return self.first_gateway is not None


NO_STAMP = AntiSpoofStamp()


@dataclass(frozen=True)
class Packet:
    src: NodeId
    dst: NodeId
    size_bits: int
    kind: PacketKind
    stamp: AntiSpoofStamp = NO_STAMP
    payload: Optional["AitfMessage"] = None

    def __post_init__(self):
        if self.size_bits <= 0:
            raise ValueError("size_bits must be positive")
        if self.kind is PacketKind.CONTROL and self.payload is None:
            raise ValueError("control packets carry an AITF message")


class MessageType(enum.Enum):
    REQUEST = "request"
    SYN = "syn"
    SYN_ACK = "syn/ack"
    ACK = "ack"


@dataclass(frozen=True)
class AitfMessage:
    flow_labels: tuple
    syn: bool
    ack: bool
    nonce: int
    origin: NodeId
    target: NodeId

    def __post_init__(self):
        if not self.flow_labels:
            raise MessageError("flow_labels must be non-empty")
        if len(self.flow_labels) > MAX_LABELS_PER_MESSAGE:
            raise MessageError(f"at most {MAX_LABELS_PER_MESSAGE} labels per message")
        if not 0 <= self.nonce < 2**NONCE_BITS:
            raise MessageError("nonce out of range")
        if not self.ack and self.nonce != 0:
            # SYN and plain requests carry no nonce
            raise MessageError(f"{self.type.value} message must have nonce 0")

    @property
    def type(self) -> MessageType:
        if self.syn:
            return MessageType.SYN_ACK if self.ack else MessageType.SYN
        return MessageType.ACK if self.ack else MessageType.REQUEST

    @classmethod
    def request(cls, labels: Iterable[FlowLabel], origin: NodeId, target: NodeId) -> "AitfMessage":
        return cls(tuple(labels), False, False, 0, origin, target)

    @classmethod
    def syn_msg(cls, labels: Iterable[FlowLabel], origin: NodeId, target: NodeId) -> "AitfMessage":
        return cls(tuple(labels), True, False, 0, origin, target)

    @classmethod
    def syn_ack(cls, labels, nonce: int, origin: NodeId, target: NodeId) -> "AitfMessage":
        return cls(tuple(labels), True, True, nonce, origin, target)

    @classmethod
    def ack_msg(cls, labels, nonce: int, origin: NodeId, target: NodeId) -> "AitfMessage":
        return cls(tuple(labels), False, True, nonce, origin, target)

    @classmethod
    def decode(cls, fields: dict) -> "AitfMessage":
        """Build a message from raw field values, rejecting illegal flag/nonce combinations."""
        try:
            syn, ack = fields["syn"], fields["ack"]
            if syn not in (0, 1, True, False) or ack not in (0, 1, True, False):
                raise MessageError("SYN and ACK are 1-bit flags")
            return cls(
                tuple(fields["flow_labels"]),
                bool(syn),
                bool(ack),
                int(fields["nonce"]),
                fields["origin"],
                fields["target"],
            )
        except KeyError as exc:
            raise MessageError(f"missing field {exc.args[0]}") from None


def flow_label_matches(label: FlowLabel, packet: Packet) -> bool:
    dst = label.dst
    if isinstance(dst, Prefix):
        if packet.dst not in dst:
            return False
    elif packet.dst != dst:
        return False
    src = label.src
    if isinstance(src, SourceHost):
        return packet.src == src.host
    return packet.stamp.first_gateway == src.gateway


def nonce_epoch(now: float, epoch_s: float = NONCE_EPOCH_S) -> int:
    return int(now // epoch_s)


def make_nonce(secret_key: bytes, victim: NodeId, labels: Sequence[FlowLabel], epoch: int) -> int:
    """Keyed 64-bit cookie over (victim, labels, epoch); zero is never returned."""
    if len(secret_key) != 16:
        raise ValueError("secret_key must be 128 bits")
    h = hashlib.blake2b(key=secret_key, digest_size=8)
    h.update(struct.pack(">qq", victim, epoch))
    for label in labels:
        h.update(repr(label.key()).encode())
        h.update(b";")
    nonce = int.from_bytes(h.digest(), "big")
    return nonce or 1


def verify_nonce(
    secret_key: bytes,
    victim: NodeId,
    labels: Sequence[FlowLabel],
    nonce: int,
    now: float,
    epoch_s: float = NONCE_EPOCH_S,
) -> bool:
    """Stateless check: accepts cookies from the current or the previous epoch."""
    epoch = nonce_epoch(now, epoch_s)
    return any(make_nonce(secret_key, victim, labels, e) == nonce for e in (epoch, epoch - 1))


def stamp_packet(
    packet: Packet,
    path: Sequence[NodeId],
    mode: StampMode,
    false_id_prob: float = 0.0,
    rng: Optional[random.Random] = None,
    border_routers: Sequence[NodeId] = (),
) -> Packet:
    """Attach the anti-spoofing oracle's verdict.

    ``path`` lists the border routers crossed, source side first. In minimal
    mode the first router is reported, except with probability
    ``false_id_prob`` a different router drawn from ``border_routers``.
    """
    if not 0.0 <= false_id_prob < 1.0:
        raise ValueError("false_id_prob must be in [0, 1)")
    if not path:
        return replace(packet, stamp=NO_STAMP)
    if mode is StampMode.WIDE:
        return replace(packet, stamp=AntiSpoofStamp(path[0], tuple(path)))
    first = path[0]
    if false_id_prob > 0.0:
        rng = rng or random.Random()
        if rng.random() < false_id_prob:
            others = [r for r in border_routers if r != first]
            if others:
                first = rng.choice(others)
    return replace(packet, stamp=AntiSpoofStamp(first, None))
