"""Synthetic AITF-domain topology: core domains, edge domains, hosts.

Each domain is represented by a single border router. Router ids are
``0..n_domains-1`` (core domains first), host ids follow.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import networkx as nx

from .config import ConfigError, Deployment, TopologyParams
from .core import NodeId

OC192 = 10e9
OC48 = 2.488e9
FAST_ETHERNET = 100e6
THIN_ETHERNET = 10e6


@dataclass
class Link:
    a: NodeId
    b: NodeId
    capacity_bps: float
    delay_s: float


@dataclass
class Topology:
    n_core: int
    n_edge: int
    links: list
    host_router: dict
    host_delay: dict
    host_bps: dict
    deployed: frozenset
    victim_router: NodeId
    params: Optional[TopologyParams] = field(default=None, repr=False)

    def __post_init__(self):
        self.graph = nx.Graph()
        self.graph.add_nodes_from(range(self.n_domains))
        for link in self.links:
            self.graph.add_edge(link.a, link.b, delay=link.delay_s, capacity=link.capacity_bps)
        self._to_victim = None
        self._hosts_by_router: dict[NodeId, list] = {}
        for host, router in self.host_router.items():
            self._hosts_by_router.setdefault(router, []).append(host)

    @property
    def n_domains(self) -> int:
        return self.n_core + self.n_edge

    @property
    def core_routers(self) -> range:
        return range(self.n_core)

    @property
    def edge_routers(self) -> range:
        return range(self.n_core, self.n_domains)

    def is_router(self, node: NodeId) -> bool:
        return 0 <= node < self.n_domains

    def router_of(self, node: NodeId) -> NodeId:
        return node if self.is_router(node) else self.host_router[node]

    def hosts_of(self, router: NodeId) -> list:
        return self._hosts_by_router.get(router, [])

    def _victim_paths(self):
        if self._to_victim is None:
            dist, paths = nx.single_source_dijkstra(self.graph, self.victim_router, weight="delay")
            self._to_victim = (dist, paths)
        return self._to_victim

    def path_to_victim(self, router: NodeId) -> list:
        """Routers crossed from ``router`` to the victims' router, both ends included."""
        _, paths = self._victim_paths()
        return list(reversed(paths[router]))

    def router_delay(self, a: NodeId, b: NodeId) -> float:
        if a == b:
            return 0.0
        if b == self.victim_router:
            return self._victim_paths()[0][a]
        if a == self.victim_router:
            return self._victim_paths()[0][b]
        return _pair_delay(self, min(a, b), max(a, b))

    def delay(self, a: NodeId, b: NodeId) -> float:
        """One-way delay between any two nodes (hosts or routers)."""
        ra, rb = self.router_of(a), self.router_of(b)
        d = self.router_delay(ra, rb)
        if a != ra:
            d += self.host_delay[a]
        if b != rb:
            d += self.host_delay[b]
        return d

    def mean_victim_path_delay(self) -> float:
        dist, _ = self._victim_paths()
        edges = [dist[r] for r in self.edge_routers if r != self.victim_router]
        return sum(edges) / len(edges)

    def to_json(self) -> str:
        doc = {
            "n_core": self.n_core,
            "n_edge": self.n_edge,
            "victim_router": self.victim_router,
            "deployed": sorted(self.deployed),
            "links": [asdict(link) for link in self.links],
            "hosts": [[h, self.host_router[h], self.host_delay[h], self.host_bps[h]] for h in sorted(self.host_router)],
        }
        return json.dumps(doc, sort_keys=True)


@lru_cache(maxsize=65536)
def _pair_delay(topo: Topology, a: NodeId, b: NodeId) -> float:
    return nx.dijkstra_path_length(topo.graph, a, b, weight="delay")


Topology.__hash__ = object.__hash__


def generate_topology(params: TopologyParams) -> Topology:
    """Build a reproducible topology whose router-path delays average ``mean_router_delay``."""
    if params.n_core_domains < 1 or params.n_edge_domains < 2:
        raise ConfigError("topology: need >= 1 core domain and >= 2 edge domains (the victims' and one more)")
    if params.hosts_per_edge < 1:
        raise ConfigError("topology.hosts_per_edge: must be >= 1")
    rng = random.Random(params.seed)
    n_core, n_edge = params.n_core_domains, params.n_edge_domains
    raw = []
    # core: random tree with preferential attachment plus a few shortcuts
    degree = [0] * n_core
    for c in range(1, n_core):
        weights = [d + 1 for d in degree[:c]]
        parent = rng.choices(range(c), weights=weights)[0]
        raw.append([parent, c, rng.choice((OC192, OC48)), rng.uniform(0.5, 1.5)])
        degree[parent] += 1
        degree[c] += 1
    existing = {(min(a, b), max(a, b)) for a, b, *_ in raw}
    for _ in range(params.extra_core_links * n_core if n_core > 2 else 0):
        a, b = rng.sample(range(n_core), 2)
        key = (min(a, b), max(a, b))
        if key not in existing:
            existing.add(key)
            raw.append([key[0], key[1], rng.choice((OC192, OC48)), rng.uniform(0.5, 1.5)])
    for e in range(n_core, n_core + n_edge):
        provider = rng.randrange(n_core)
        raw.append([provider, e, rng.choice((OC192, OC48)), rng.uniform(0.5, 1.5)])

    victim_router = n_core
    # scale router-link delays so that paths towards the victims' router hit the target mean
    probe = nx.Graph()
    for a, b, _, d in raw:
        probe.add_edge(a, b, delay=d)
    dist = nx.single_source_dijkstra_path_length(probe, victim_router, weight="delay")
    others = [dist[r] for r in range(n_core, n_core + n_edge) if r != victim_router]
    scale = params.mean_router_delay / (sum(others) / len(others))
    links = [Link(a, b, cap, round(d * scale, 9)) for a, b, cap, d in raw]

    host_router, host_delay, host_bps = {}, {}, {}
    next_id = n_core + n_edge
    for e in range(n_core, n_core + n_edge):
        for _ in range(params.hosts_per_edge):
            host_router[next_id] = e
            host_delay[next_id] = round(rng.uniform(params.host_delay_min, params.host_delay_max), 9)
            host_bps[next_id] = THIN_ETHERNET if rng.random() < params.thin_fraction else FAST_ETHERNET
            next_id += 1

    deployed = _deployment(params, rng, n_core, n_edge, victim_router)
    return Topology(n_core, n_edge, links, host_router, host_delay, host_bps, frozenset(deployed), victim_router, params)


def _deployment(params: TopologyParams, rng: random.Random, n_core: int, n_edge: int, victim_router: NodeId) -> set:
    edges = [r for r in range(n_core, n_core + n_edge) if r != victim_router]
    if params.deployment is Deployment.FULL:
        return set(range(n_core + n_edge))
    if params.deployment is Deployment.EDGE:
        k = round(params.deployment_fraction * len(edges))
        return {victim_router, *rng.sample(edges, k)}
    # initial deployment: the victims' site plus a fraction of edge networks (at least one)
    k = max(1, round(params.deployment_fraction * len(edges)))
    return {victim_router, *sorted(edges)[:k]}
