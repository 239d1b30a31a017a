import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aitf.core import (
    NO_STAMP,
    AitfMessage,
    AntiSpoofStamp,
    FlowLabel,
    MessageError,
    MessageType,
    Packet,
    PacketKind,
    Prefix,
    SourceGateway,
    SourceHost,
    StampMode,
    flow_label_matches,
    make_nonce,
    nonce_epoch,
    stamp_packet,
    verify_nonce,
)

V, W = 1, 2
A, B = 3, 4
R1, R2 = 10, 11
KEY = bytes(range(16))


def pkt(src, dst, first_gw=None):
    stamp = AntiSpoofStamp(first_gw) if first_gw is not None else NO_STAMP
    return Packet(src, dst, 1000, PacketKind.ATTACK, stamp)


def test_exact_host_match():
    assert flow_label_matches(FlowLabel(V, SourceHost(A)), pkt(A, V))


def test_source_mismatch():
    assert not flow_label_matches(FlowLabel(V, SourceHost(A)), pkt(B, V))


def test_gateway_label_matches_stamped_packet():
    assert flow_label_matches(FlowLabel(V, SourceGateway(R1)), pkt(A, V, R1))
    assert not flow_label_matches(FlowLabel(V, SourceGateway(R1)), pkt(A, V, R2))
    assert not flow_label_matches(FlowLabel(V, SourceGateway(R1)), pkt(A, V))


def _denotation(label, hosts, gateways):
    """Set of (src, dst, first_gw) triples a label stands for, built from its definition."""
    dsts = label.dst.members if isinstance(label.dst, Prefix) else {label.dst}
    out = set()
    for src, dst, gw in itertools.product(hosts, hosts, gateways):
        if dst not in dsts:
            continue
        if isinstance(label.src, SourceHost) and src == label.src.host:
            out.add((src, dst, gw))
        if isinstance(label.src, SourceGateway) and gw == label.src.gateway:
            out.add((src, dst, gw))
    return out


def test_matching_agrees_with_enumeration_on_toy_topology():
    hosts = [V, A, B]
    gateways = [None, R1, R2]
    net = Prefix(R2, frozenset({V, A}))
    dsts = hosts + [net]
    labels = [FlowLabel(d, SourceHost(h)) for d in dsts for h in hosts]
    labels += [FlowLabel(d, SourceGateway(g)) for d in dsts for g in (R1, R2)]
    checked = 0
    for label in labels:
        allowed = _denotation(label, hosts, gateways)
        for src, dst, gw in itertools.product(hosts, hosts, gateways):
            assert flow_label_matches(label, pkt(src, dst, gw)) == ((src, dst, gw) in allowed)
            checked += 1
    assert checked == len(labels) * 27


@given(st.integers(0, 50), st.integers(0, 50), st.integers(100, 110))
def test_aggregation_is_monotone(src, dst, gw):
    p = pkt(src, dst, gw)
    assert flow_label_matches(FlowLabel(dst, SourceHost(src)), p)
    assert flow_label_matches(FlowLabel(dst, SourceGateway(gw)), p)


def test_label_requires_a_source_variant():
    with pytest.raises(TypeError):
        FlowLabel(V, A)


def test_packet_validation():
    with pytest.raises(ValueError):
        Packet(A, V, 0, PacketKind.GOOD)


# -- messages ------------------------------------------------------------------


def test_message_types():
    labels = [FlowLabel(V, SourceHost(A))]
    assert AitfMessage.request(labels, V, R1).type is MessageType.REQUEST
    assert AitfMessage.syn_msg(labels, R1, R2).type is MessageType.SYN
    assert AitfMessage.syn_ack(labels, 5, R2, V).type is MessageType.SYN_ACK
    assert AitfMessage.ack_msg(labels, 5, R1, R2).type is MessageType.ACK


def _fields(**kw):
    base = dict(flow_labels=[FlowLabel(V, SourceHost(A))], syn=0, ack=0, nonce=0, origin=V, target=R1)
    base.update(kw)
    return base


@pytest.mark.parametrize(
    "bad",
    [
        dict(flow_labels=[]),
        dict(flow_labels=[FlowLabel(V, SourceHost(A))] * 65),
        dict(syn=2),
        dict(ack=-1),
        dict(syn=1, nonce=7),
        dict(nonce=3),
        dict(ack=1, nonce=2**64),
        dict(ack=1, nonce=-1),
    ],
)
def test_decode_rejects_illegal_combinations(bad):
    with pytest.raises(MessageError):
        AitfMessage.decode(_fields(**bad))


def test_decode_rejects_missing_field():
    fields = _fields()
    del fields["nonce"]
    with pytest.raises(MessageError):
        AitfMessage.decode(fields)


@pytest.mark.parametrize("syn,ack", [(0, 0), (1, 0), (1, 1), (0, 1)])
def test_decode_accepts_the_four_legal_types(syn, ack):
    msg = AitfMessage.decode(_fields(syn=syn, ack=ack, nonce=9 if ack else 0))
    assert (msg.syn, msg.ack) == (bool(syn), bool(ack))


# -- nonces --------------------------------------------------------------------


def test_nonce_is_deterministic():
    labels = [FlowLabel(V, SourceHost(A))]
    assert make_nonce(KEY, V, labels, 3) == make_nonce(KEY, V, labels, 3)
    assert make_nonce(KEY, V, labels, 3) != 0


def test_nonce_epoch_collisions():
    rng = random.Random(5)
    labels = [FlowLabel(V, SourceHost(A))]
    collisions = 0
    for _ in range(10_000):
        e = rng.randrange(2**40)
        collisions += make_nonce(KEY, V, labels, e) == make_nonce(KEY, V, labels, e + 1)
    assert collisions == 0


def test_nonce_victim_collisions():
    rng = random.Random(6)
    labels = [FlowLabel(V, SourceHost(A))]
    collisions = 0
    for _ in range(10_000):
        v1, v2 = rng.sample(range(2**31), 2)
        collisions += make_nonce(KEY, v1, labels, 0) == make_nonce(KEY, v2, labels, 0)
    assert collisions == 0


def test_verify_accepts_current_and_previous_epoch_only():
    labels = [FlowLabel(V, SourceHost(A))]
    nonce = make_nonce(KEY, V, labels, nonce_epoch(10.0))
    assert verify_nonce(KEY, V, labels, nonce, 10.0)
    assert verify_nonce(KEY, V, labels, nonce, 17.9)
    assert not verify_nonce(KEY, V, labels, nonce, 24.0)
    assert not verify_nonce(KEY, W, labels, nonce, 10.0)
    assert not verify_nonce(KEY, V, [FlowLabel(V, SourceHost(B))], nonce, 10.0)


def test_verify_rejects_nonces_from_other_keys():
    rng = random.Random(7)
    labels = [FlowLabel(V, SourceHost(A))]
    for _ in range(256):
        other = rng.randbytes(16)
        if other == KEY:
            continue
        assert not verify_nonce(KEY, V, labels, make_nonce(other, V, labels, 0), 1.0)


def test_nonce_key_length_enforced():
    with pytest.raises(ValueError):
        make_nonce(b"short", V, [], 0)


# -- stamps --------------------------------------------------------------------


def test_minimal_stamp_without_errors():
    p = stamp_packet(pkt(A, V), [R1, R2], StampMode.MINIMAL)
    assert p.stamp.first_gateway == R1 and p.stamp.full_path is None


def test_wide_stamp_carries_full_path():
    p = stamp_packet(pkt(A, V), [R1, R2], StampMode.WIDE)
    assert p.stamp.full_path == (R1, R2) and p.stamp.first_gateway == R1


def test_empty_path_is_legacy_traffic():
    assert not stamp_packet(pkt(A, V), [], StampMode.MINIMAL).stamp.present


def test_misattribution_rate():
    rng = random.Random(11)
    routers = list(range(10, 60))
    base = pkt(A, V)
    wrong = sum(stamp_packet(base, [R1, 20], StampMode.MINIMAL, 0.1, rng, routers).stamp.first_gateway != R1 for _ in range(100_000))
    assert abs(wrong / 100_000 - 0.1) <= 0.01


def test_false_id_prob_range():
    with pytest.raises(ValueError):
        stamp_packet(pkt(A, V), [R1], StampMode.MINIMAL, 1.0)
