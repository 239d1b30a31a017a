"""Closed-form performance model: preserved/lost victim bandwidth, per-flow
loss, filter and shadow-memory requirements.

Bandwidths are in bits/s, times in seconds, rates in requests/s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional


@dataclass(frozen=True)
class AttackProfile:
    B_v: float
    B_att: float
    N_att: int
    R: float
    T: float
    T_tmp: float = 1.0
    T_fr: float = 0.0
    N_agw: int = 0
    R_max: Optional[float] = None
    X: Optional[int] = None

    def __post_init__(self):
        for name in ("B_v", "B_att", "N_att", "R", "T", "T_tmp", "T_fr", "N_agw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.X is not None and self.X > self.N_att:
            raise ValueError("X must not exceed N_att")
        if self.T < 10 * self.T_tmp:
            warnings.warn(f"filtering window T={self.T} is not much larger than T_tmp={self.T_tmp}", stacklevel=2)

    @property
    def blockable_flows(self) -> float:
        """Flows the victim can keep blocked at once (R requests/s, each lasting T)."""
        return self.R * self.T


def preserved_bandwidth(profile: AttackProfile) -> float:
    """Lower bound on the victim bandwidth left to legitimate traffic."""
    p = profile
    if p.N_att == 0 or p.B_att == 0:
        return p.B_v
    if p.blockable_flows >= p.N_att:
        return p.B_v
    preserved = p.B_v - p.B_att * (1 - p.blockable_flows / p.N_att)
    return min(p.B_v, max(0.0, preserved))


def lost_bandwidth_bound(profile: AttackProfile) -> float:
    """Upper bound on the victim bandwidth consumed by undesired flows."""
    p = profile
    if p.N_att == 0:
        return 0.0
    blocked = min(p.blockable_flows, p.N_att)
    lost = p.B_att * (1 - blocked / p.N_att)
    return min(p.B_v, max(0.0, lost))


class PerFlowLoss(NamedTuple):
    exact: float
    approx: float
    relative_gap: float


def per_flow_consumed_bandwidth(B_att_i: float, T_fr: float, T: float) -> PerFlowLoss:
    """Bandwidth a flow still consumes when each request takes ``T_fr`` to bite and lasts ``T``.

    The flow is on for ``T_fr`` out of every ``T + T_fr``. ``approx`` drops
    ``T_fr`` from the denominator; ``relative_gap`` is ``(approx - exact) / approx``,
    which equals ``T_fr / (T + T_fr)``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if T_fr < 0:
        raise ValueError("T_fr must be nonnegative")
    exact = B_att_i * T_fr / (T + T_fr)
    approx = B_att_i * T_fr / T
    gap = (approx - exact) / approx if approx else 0.0
    return PerFlowLoss(exact, approx, gap)


def lost_bandwidth_requested(B_att: float, N_att: int, X: int, T_fr: float, T: float) -> float:
    """Lost bandwidth when ``X`` of ``N_att`` equal-rate flows are requested (exact per-flow form)."""
    if N_att == 0:
        return 0.0
    per_flow = B_att / N_att
    requested = X * per_flow
    return B_att - requested + X * per_flow_consumed_bandwidth(per_flow, T_fr, T).exact


def filter_count_bounds(R_max: float, T_tmp: float, N_agw: int) -> tuple[float, int]:
    """(best case, worst case) filters the victim's gateway needs."""
    return R_max * T_tmp, N_agw


def shadow_entry_requirement(R_max: float, T: float) -> float:
    return R_max * T


def filtering_response_time_estimate(one_way_delay: float, compromised_routers: int = 0, T_tmp: float = 1.0):
    """Common-case response time and the spike times induced by on-off routers.

    Each compromised router on the path is given two chances, so it causes two
    spikes spaced ``T_tmp`` apart.
    """
    spikes = []
    for k in range(compromised_routers):
        base = 2 * k * T_tmp
        spikes += [base + T_tmp, base + 2 * T_tmp]
    return one_way_delay, spikes


def discrete_lost_bandwidth(profile: AttackProfile, horizon: float, dt: float = 0.01, warmup: Optional[float] = None) -> float:
    """Brute-force oracle: step ``N_att`` equal flows through time and average the leaked bandwidth.

    The victim names one new (or resumed) flow every ``1/R`` seconds, oldest
    first; a named flow goes silent after ``T_fr`` and stays silent for ``T``.
    Averages the leaked rate over ``[warmup, horizon)``.
    """
    p = profile
    if p.N_att == 0:
        return 0.0
    per_flow = p.B_att / p.N_att
    warmup = p.T if warmup is None else warmup
    blocked_until = [-math.inf] * p.N_att
    silent_from = [math.inf] * p.N_att
    queue = list(range(p.N_att))
    credit = 0.0
    steps = int(round(horizon / dt))
    lost = 0.0
    counted = 0
    for k in range(steps):
        t = k * dt
        credit += p.R * dt
        while credit >= 1 and queue:
            f = queue.pop(0)
            credit -= 1
            silent_from[f] = t + p.T_fr
            blocked_until[f] = t + p.T_fr + p.T
        credit = min(credit, max(1.0, p.R))
        leaking = 0
        for f in range(p.N_att):
            if silent_from[f] <= t < blocked_until[f]:
                continue
            leaking += 1
            if blocked_until[f] <= t and blocked_until[f] != -math.inf:
                # flow resumed after its window: it has to be named again
                blocked_until[f] = -math.inf
                silent_from[f] = math.inf
                queue.append(f)
        if t >= warmup:
            lost += leaking * per_flow
            counted += 1
    return lost / counted if counted else 0.0
