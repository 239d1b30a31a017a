"""Small programmatic scenarios for formula-vs-simulation comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytics import AttackProfile, preserved_bandwidth
from .config import AttackParams, GoodParams, RunParams, ScenarioConfig, TopologyParams, VictimParams
from .protocol import GatewayBehavior, ProtocolParams
from .sim import Simulation

B_V = 100e6
B_ATT = 100e6
ATTACK_START = 1.0

# (R, T, N_att): R·T/N_att spans 0.1 .. 1.33
SWEEP_POINTS = [
    (2, 20, 400), (2, 20, 100), (2, 40, 100), (2, 40, 60),
    (5, 10, 500), (5, 20, 500), (5, 20, 200), (5, 40, 150),
    (10, 10, 500), (10, 20, 500), (10, 20, 1000), (10, 10, 150),
    (20, 10, 1000), (20, 20, 1000), (20, 10, 200), (20, 20, 2000),
    (4, 30, 600), (8, 15, 300), (3, 25, 250), (15, 12, 900),
]


def mini_scenario(R: float, T: float, N_att: int, seed: int = 1, gateway_policy: str = "cooperative") -> ScenarioConfig:
    """One victim on a 70-domain topology, attack of ``N_att`` compliant sources totalling 100 Mbps."""
    n_edge = 60
    hosts = math.ceil(N_att / (n_edge - 1)) + 12
    cfg = ScenarioConfig(
        topology=TopologyParams(n_edge_domains=n_edge, n_core_domains=10, hosts_per_edge=hosts, seed=seed),
        victims=VictimParams(count=1, access_bps=B_V, baseline_goodput_bps=50e6, access_delay=0.005),
        good=GoodParams(n_sources=20),
        attack=AttackParams(n_attackers=N_att, total_bps=B_ATT, start_at=ATTACK_START),
        protocol=ProtocolParams(R=R, T=T),
        run=RunParams(duration=steady_window(T)[1], seed=seed),
        name=f"mini_R{R}_T{T}_N{N_att}",
    )
    cfg.attack.gateway_policy = GatewayBehavior(gateway_policy)
    return cfg.validate()


def steady_window(T: float) -> tuple[float, float]:
    """Averaging window: starts once the first requested flows have come back, lasts 1.5 T."""
    start = ATTACK_START + 1.0 + T + 5.0
    return start, start + 1.5 * T


@dataclass
class SweepResult:
    R: float
    T: float
    N_att: int
    bound_bps: float
    simulated_bps: float
    blocked_fraction: float

    @property
    def margin_bps(self) -> float:
        return self.simulated_bps - self.bound_bps


def run_point(R: float, T: float, N_att: int, seed: int = 1) -> SweepResult:
    cfg = mini_scenario(R, T, N_att, seed)
    sim = Simulation(cfg)
    sim.run()
    victim = next(iter(sim.victims))
    t0, t1 = steady_window(T)
    bound = preserved_bandwidth(AttackProfile(B_v=B_V, B_att=B_ATT, N_att=N_att, R=R, T=T))
    return SweepResult(
        R, T, N_att, bound, sim.preserved_bandwidth(victim, t0, t1), sim.blocked_attack_fraction(victim, t0, t1)
    )
