"""Scenario configuration: a sectioned key=value file parsed into dataclasses.

Sections are ``[topology]``, ``[victims]``, ``[good]``, ``[attack]``,
``[protocol]`` and ``[run]``. Every key has a default except the ``[attack]``
section, which must be present. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .core import StampMode
from .protocol import AttackerBehavior, GatewayBehavior, ProtocolParams, SanctionPolicy


class ConfigError(ValueError):
    pass


class Deployment(enum.Enum):
    FULL = "full"
    EDGE = "edge"
    INITIAL = "initial"


@dataclass
class TopologyParams:
    n_edge_domains: int = 550
    n_core_domains: int = 50
    hosts_per_edge: int = 64
    deployment: Deployment = Deployment.EDGE
    deployment_fraction: float = 1.0
    host_delay_min: float = 0.005
    host_delay_max: float = 0.015
    mean_router_delay: float = 0.1
    thin_fraction: float = 0.2
    extra_core_links: int = 2
    seed: int = 1


@dataclass
class VictimParams:
    count: int = 2
    access_bps: float = 100e6
    baseline_goodput_bps: float = 50e6
    access_delay: Optional[float] = None
    request_mode: str = "burst"


@dataclass
class GoodParams:
    n_sources: int = 50
    colocated_fraction: float = 0.0


@dataclass
class AttackParams:
    n_attackers: int = 100
    total_bps: float = 1e9
    n_gateways: int = 0
    attacker_policy: AttackerBehavior = AttackerBehavior.COMPLIANT
    gateway_policy: GatewayBehavior = GatewayBehavior.COOPERATIVE
    start_at: float = 1.0
    local_attackers: int = 0


@dataclass
class RunParams:
    duration: float = 10.0
    seed: int = 1
    measurement_interval: float = 0.01


@dataclass
class ScenarioConfig:
    topology: TopologyParams = field(default_factory=TopologyParams)
    victims: VictimParams = field(default_factory=VictimParams)
    good: GoodParams = field(default_factory=GoodParams)
    attack: AttackParams = field(default_factory=AttackParams)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    run: RunParams = field(default_factory=RunParams)
    name: str = "scenario"

    def validate(self) -> "ScenarioConfig":
        t, v, g, a, p, r = self.topology, self.victims, self.good, self.attack, self.protocol, self.run
        _positive("topology.n_edge_domains", t.n_edge_domains)
        _positive("topology.n_core_domains", t.n_core_domains)
        _positive("topology.hosts_per_edge", t.hosts_per_edge)
        _unit("topology.deployment_fraction", t.deployment_fraction)
        _unit("topology.thin_fraction", t.thin_fraction)
        if not 0 < t.host_delay_min <= t.host_delay_max:
            raise ConfigError("topology.host_delay_min: must satisfy 0 < host_delay_min <= host_delay_max")
        _positive("topology.mean_router_delay", t.mean_router_delay)
        if t.n_edge_domains < 2:
            raise ConfigError("topology.n_edge_domains: need the victims' domain plus at least one other")
        _positive("victims.count", v.count)
        if v.count > t.hosts_per_edge:
            raise ConfigError("victims.count: must fit in one edge domain (<= topology.hosts_per_edge)")
        _positive("victims.access_bps", v.access_bps)
        _nonneg("victims.baseline_goodput_bps", v.baseline_goodput_bps)
        if v.baseline_goodput_bps > v.access_bps:
            raise ConfigError("victims.baseline_goodput_bps: must not exceed victims.access_bps")
        if v.access_delay is not None:
            _positive("victims.access_delay", v.access_delay)
        if v.request_mode not in ("burst", "paced"):
            raise ConfigError("victims.request_mode: must be 'burst' or 'paced'")
        _nonneg("good.n_sources", g.n_sources)
        if v.baseline_goodput_bps > 0 and g.n_sources == 0:
            raise ConfigError("good.n_sources: must be positive when baseline goodput is nonzero")
        _unit("good.colocated_fraction", g.colocated_fraction)
        _positive("attack.n_attackers", a.n_attackers)
        _positive("attack.total_bps", a.total_bps)
        _nonneg("attack.n_gateways", a.n_gateways)
        if a.n_gateways > t.n_edge_domains - 1:
            raise ConfigError("attack.n_gateways: cannot exceed the number of non-victim edge domains")
        _nonneg("attack.start_at", a.start_at)
        _nonneg("attack.local_attackers", a.local_attackers)
        if a.local_attackers > a.n_attackers:
            raise ConfigError("attack.local_attackers: must be <= attack.n_attackers")
        _positive("protocol.R", p.R)
        if p.R_max is not None:
            _positive("protocol.R_max", p.R_max)
        _positive("protocol.T", p.T)
        _nonneg("protocol.T_tmp", p.T_tmp)
        if not p.T_tmp < p.T:
            raise ConfigError("protocol.T_tmp: must satisfy T_tmp < T")
        _positive("protocol.grace_period", p.grace_period)
        _nonneg("protocol.vgw_capacity", p.vgw_capacity)
        if not 0 <= p.false_id_prob < 1:
            raise ConfigError("protocol.false_id_prob: must be in [0, 1)")
        _positive("protocol.escalated_ttl", p.escalated_ttl)
        _nonneg("protocol.first_detect_delay", p.first_detect_delay)
        _nonneg("protocol.recur_detect_delay", p.recur_detect_delay)
        _positive("run.duration", r.duration)
        _positive("run.measurement_interval", r.measurement_interval)
        return self


def _positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name}: must be > 0 (got {value})")


def _nonneg(name, value):
    if not value >= 0:
        raise ConfigError(f"{name}: must be >= 0 (got {value})")


def _unit(name, value):
    if not 0 <= value <= 1:
        raise ConfigError(f"{name}: must be in [0, 1] (got {value})")


# protocol params live in the protocol module; the file names them like this
_PROTOCOL_KEYS = {
    "R": "R",
    "R_max": "R_max",
    "T": "T",
    "T_tmp": "T_tmp",
    "grace_period": "grace_period",
    "sanction": "sanction",
    "antispoof_mode": "mode",
    "false_id_prob": "false_id_prob",
    "vgw_capacity": "vgw_capacity",
    "escalated_ttl": "escalated_ttl",
    "first_detect_delay": "first_detect_delay",
    "recur_detect_delay": "recur_detect_delay",
}

_SECTIONS = {
    "topology": TopologyParams,
    "victims": VictimParams,
    "good": GoodParams,
    "attack": AttackParams,
    "protocol": ProtocolParams,
    "run": RunParams,
}

_ENUMS = {
    "deployment": Deployment,
    "attacker_policy": AttackerBehavior,
    "gateway_policy": GatewayBehavior,
    "sanction": SanctionPolicy,
    "mode": StampMode,
}


def _convert(section: str, key: str, attr: str, raw: str, default):
    name = f"{section}.{key}"
    raw = raw.strip()
    try:
        if attr in _ENUMS:
            return _ENUMS[attr](raw.lower())
        if raw.lower() in ("none", "") and (default is None or attr == "access_delay"):
            return None
        if raw.lower() in ("inf", "infinity", "end"):
            return math.inf
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int) and not isinstance(default, bool):
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if isinstance(default, str):
            return raw
        return float(raw)
    except ValueError:
        choices = ""
        if attr in _ENUMS:
            choices = " (one of: " + ", ".join(m.value for m in _ENUMS[attr]) + ")"
        raise ConfigError(f"{name}: invalid value {raw!r}{choices}") from None


def parse_scenario_text(text: str, name: str = "scenario") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from None
    unknown = [s for s in parser.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}]")
    if not parser.has_section("attack"):
        raise ConfigError("attack: missing required section [attack]")
    parts = {}
    for section, cls in _SECTIONS.items():
        obj = cls()
        if parser.has_section(section):
            fields = {f.name for f in dataclasses.fields(cls)}
            for key, raw in parser.items(section):
                attr = _PROTOCOL_KEYS.get(key, key) if section == "protocol" else key
                if attr not in fields or (section == "protocol" and key not in _PROTOCOL_KEYS):
                    raise ConfigError(f"{section}.{key}: unknown key")
                setattr(obj, attr, _convert(section, key, attr, raw, getattr(obj, attr)))
        parts[section] = obj
    return ScenarioConfig(name=name, **parts).validate()


def parse_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario_text(path.read_text(), name=path.stem)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package, e.g. ``scenario1``."""
    from importlib import resources

    stem = name if name.endswith(".cfg") else name + ".cfg"
    return Path(str(resources.files("aitf") / "scenarios" / stem))
