"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import random
import time

import pytest

from aitf import analytics
from aitf.cli import main
from aitf.config import bundled_scenario, parse_scenario
from aitf.core import AitfMessage, FlowLabel, Packet, PacketKind, SourceHost
from aitf.experiments import B_V, SWEEP_POINTS, run_point
from aitf.filters import WireFilterTable
from aitf.sim import Simulation
from conftest import ACCEPTANCE_LINES
from oracles import replay_random_sequence

MBPS = 1e6


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def timed_run(name, duration=None):
    cfg = parse_scenario(bundled_scenario(name))
    if duration is not None:
        cfg.run.duration = duration
    sim = Simulation(cfg)
    start = time.perf_counter()
    result = sim.run()
    return sim, result, time.perf_counter() - start


def series(result, victim):
    return [s for s in result.samples if s.victim == victim]


def dips(samples, threshold, after):
    """(start, length) of each run of samples with goodput below ``threshold``."""
    out, start = [], None
    dt = samples[1].t - samples[0].t
    for s in samples:
        if s.t < after:
            continue
        low = s.good_bps < threshold
        if low and start is None:
            start = s.t
        elif not low and start is not None:
            out.append((start, round(s.t - start, 6)))
            start = None
    if start is not None:
        out.append((start, round(samples[-1].t + dt - start, 6)))
    return out


def test_criterion_1_cooperative_restoration():
    sim, result, runtime = timed_run("scenario1")
    times = [row.restoration_s for row in result.summary]
    ok = all(t <= 0.020 for t in times) and runtime < 30
    report(1, ok, f"restoration {[round(t * 1000, 1) for t in times]} ms (<= 20), runtime {runtime:.2f} s (< 30)")


def test_criterion_2_onoff_gateways_two_dips():
    sim, result, runtime = timed_run("scenario2")
    baseline = sim.config.victims.baseline_goodput_bps
    T_tmp = sim.config.protocol.T_tmp
    details, ok = [], runtime < 60
    for row in result.summary:
        samples = series(result, row.victim)
        restored_at = row.first_request_s + row.restoration_s
        found = dips(samples, 0.95 * baseline, restored_at)
        lengths = [length for _, length in found]
        spacing = [b[0] - a[0] for a, b in zip(found, found[1:])]
        tail = [s.good_bps for s in samples if s.t >= samples[-1].t - 1.0]
        final = sum(tail) / len(tail)
        ok &= len(found) == 2
        ok &= all(abs(length - 0.100) <= 0.020 + 1e-9 for length in lengths)
        ok &= all(abs(gap - T_tmp) <= 0.2 for gap in spacing)
        ok &= final >= 0.9 * baseline
        details.append(
            f"victim {row.victim}: {len(found)} dips of {[round(l * 1000) for l in lengths]} ms "
            f"spaced {[round(g, 3) for g in spacing]} s, final {final / baseline:.1%}"
        )
    report(2, ok, "; ".join(details) + f"; runtime {runtime:.1f} s (< 60)")


def test_criterion_3_rate_limited_restoration():
    sim, result, _ = timed_run("scenario3")
    T_tmp = sim.config.protocol.T_tmp
    ok, details = True, []
    for row in result.summary:
        samples = series(result, row.victim)
        # the last request wave leaves the victim when the request counter stops moving
        last_wave = next(s.t for s in samples if s.requests_cum == row.requests_sent)
        settle = last_wave + T_tmp + 0.1
        peak = max(s.vgw_filters for s in samples)
        after = max(s.vgw_filters for s in samples if s.t >= settle)
        ok &= abs(row.restoration_s - 5.0) <= 0.5 and after <= 0.01 * peak
        details.append(f"victim {row.victim}: restored after {row.restoration_s:.2f} s, filters peak {peak}, {after} from {settle:.2f} s")
    report(3, ok, "; ".join(details))


@pytest.fixture(scope="module")
def scenario4():
    return timed_run("scenario4")


def test_criterion_4_blocked_fraction(scenario4):
    sim, result, runtime = scenario4
    p = sim.config.protocol
    target = p.R * p.T / sim.config.attack.n_attackers
    t0, t1 = 130.0, sim.config.run.duration
    fractions = [sim.blocked_attack_fraction(v, t0, t1) for v in sim.victims]
    capacity = p.vgw_capacity
    worst = max(s.vgw_filters for s in result.samples)
    ok = all(abs(f - target) <= 0.05 for f in fractions) and worst <= capacity
    report(
        4, ok,
        f"blocked {[round(f, 3) for f in fractions]} vs {target:.2f} +- 0.05 over [{t0:.0f}, {t1:.0f}) s; "
        f"max vgw filters {worst} <= {capacity}; runtime {runtime:.0f} s",
    )


def test_criterion_5_analytics_exact():
    base = dict(B_v=100 * MBPS, B_att=100 * MBPS, N_att=10**6, T=600)
    sixty = analytics.preserved_bandwidth(analytics.AttackProfile(R=1000, **base))
    hundred = analytics.preserved_bandwidth(analytics.AttackProfile(R=2000, **base))
    bounds = analytics.filter_count_bounds(2000, 1.0, 160_000)
    ok = sixty == 60 * MBPS and hundred == 100 * MBPS and bounds == (2000, 160_000)
    report(5, ok, f"preserved {sixty / MBPS:g} / {hundred / MBPS:g} Mbps, filter bounds {bounds}")


def test_criterion_6_formula_vs_simulation():
    results = [run_point(*point) for point in SWEEP_POINTS]
    slack = 0.05 * B_V
    worst = min(results, key=lambda r: r.margin_bps)
    ok = all(r.simulated_bps >= r.bound_bps - slack for r in results)
    report(
        6, ok,
        f"{len(results)} runs, worst margin {worst.margin_bps / MBPS:+.2f} Mbps at "
        f"(R={worst.R}, T={worst.T}, N={worst.N_att}); allowed -{slack / MBPS:g} Mbps",
    )


def test_criterion_7_filter_store_properties():
    n = 100_000
    for seed in range(n):
        replay_random_sequence(seed, n_ops=20)
    # exact half-open boundaries at awkward float times
    rng = random.Random(99)
    label = FlowLabel(1, SourceHost(2))
    packet = Packet(2, 1, 1000, PacketKind.ATTACK)
    boundary_checks = 0
    for _ in range(1000):
        t0, ttl = rng.uniform(0, 1e4), rng.uniform(1e-6, 100)
        table = WireFilterTable(1)
        table.install(label, t0, ttl)
        end = t0 + ttl
        just_before = math.nextafter(end, -math.inf)
        assert table.filter_packet(packet, t0) is not None
        assert table.filter_packet(packet, just_before) is not None
        assert table.filter_packet(packet, end) is None
        assert table.expire(just_before) == []
        assert table.expire(end) == [label]
        boundary_checks += 1
    report(7, True, f"{n} random op sequences replay-equivalent, capacity held; {boundary_checks} boundary expiries exact")


def test_criterion_8_handshake_forgery():
    cfg = parse_scenario(bundled_scenario("scenario1"))
    cfg.run.duration = 1.9  # forgery happens before any real request
    sim = Simulation(cfg)
    rng = random.Random(8)
    victims = list(sim.victims)
    flows = [f for f in sim.flows if f.stamp.first_gateway is not None]
    vgw = sim.topo.victim_router
    forger = next(h for h in sim.topo.hosts_of(sim.topo.n_core + 1) if h not in sim.nodes)
    attempts = 10_000
    for k in range(attempts):
        flow = rng.choice(flows)
        agw = flow.stamp.first_gateway
        labels = [flow.label]
        t = rng.uniform(0.0, 1.5)
        kind = k % 3
        if kind == 0:  # blind ACK with a guessed nonce, claiming to be the victim's gateway
            sim.inject(AitfMessage.ack_msg(labels, rng.randrange(1, 2**64), vgw, agw), forger, t)
        elif kind == 1:  # SYN now, guessed ACK shortly after (the real SYN/ACK goes to the victim's side)
            sim.inject(AitfMessage.syn_msg(labels, vgw, agw), forger, t)
            sim.inject(AitfMessage.ack_msg(labels, rng.randrange(1, 2**64), vgw, agw), forger, t + 0.3)
        else:  # spoofed SYN/ACK towards a victim
            sim.inject(AitfMessage.syn_ack(labels, rng.randrange(1, 2**64), agw, rng.choice(victims)), forger, t)
    sim.run()
    installed = sum(r.stats.agw_filters_installed for r in sim.routers.values())
    in_tables = sum(len(r.table) for r in sim.routers.values())
    acks = sum(r.stats.acks_sent for r in sim.routers.values())

    legit_sim, legit, _ = timed_run("scenario1")
    vgw_router = legit_sim.routers[legit_sim.topo.victim_router]
    requested = sum(len(h.requested) for h in legit_sim.victims.values())
    established = vgw_router.stats.handshakes_established
    agw_installed = sum(r.stats.agw_filters_installed for r in legit_sim.routers.values())
    ok = installed == 0 and in_tables == 0 and acks == 0 and established == vgw_router.stats.syns_sent and agw_installed == requested
    report(
        8, ok,
        f"{attempts} forged attempts: {installed} filters installed, {acks} ACKs elicited; "
        f"legitimate: {established}/{vgw_router.stats.syns_sent} handshakes, {agw_installed}/{requested} labels filtered",
    )


@pytest.mark.parametrize("name,duration", [("scenario1", None), ("scenario2", None), ("scenario3", None), ("scenario4", 20.0)])
def test_criterion_9_determinism(name, duration, tmp_path):
    extra = ["--duration", str(duration)] if duration else []
    for d in ("a", "b"):
        assert main(["run", "--scenario", name, "--out", str(tmp_path / d), "--seed", "3", *extra]) == 0
    same = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("timeseries.csv", "summary.csv")
    )
    report(9, same, f"{name}: two runs with seed 3 byte-identical")
