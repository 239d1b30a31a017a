import networkx as nx
import pytest

from aitf.config import ConfigError, Deployment, TopologyParams
from aitf.topology import FAST_ETHERNET, OC48, OC192, THIN_ETHERNET, generate_topology

SMALL = dict(n_edge_domains=60, n_core_domains=10, hosts_per_edge=8)


def test_same_seed_same_topology():
    a = generate_topology(TopologyParams(**SMALL, seed=4))
    b = generate_topology(TopologyParams(**SMALL, seed=4))
    assert a.to_json() == b.to_json()
    assert a.to_json() != generate_topology(TopologyParams(**SMALL, seed=5)).to_json()


def test_connected_with_expected_link_classes():
    topo = generate_topology(TopologyParams(**SMALL))
    assert nx.is_connected(topo.graph)
    assert {l.capacity_bps for l in topo.links} <= {OC192, OC48}
    assert set(topo.host_bps.values()) <= {FAST_ETHERNET, THIN_ETHERNET}


def test_delay_averages_at_six_hundred_domains():
    topo = generate_topology(TopologyParams(n_edge_domains=550, n_core_domains=50, hosts_per_edge=16))
    hosts = list(topo.host_router)
    rtt = 2 * sum(topo.host_delay[h] for h in hosts) / len(hosts)
    assert rtt == pytest.approx(0.020, abs=0.002)
    assert topo.mean_victim_path_delay() == pytest.approx(0.100, rel=0.10)


def test_paths_end_at_the_victims_router():
    topo = generate_topology(TopologyParams(**SMALL))
    for r in topo.edge_routers:
        path = topo.path_to_victim(r)
        assert path[0] == r and path[-1] == topo.victim_router
    h = topo.hosts_of(topo.n_core + 3)[0]
    v = topo.hosts_of(topo.victim_router)[0]
    assert topo.delay(h, v) == pytest.approx(topo.host_delay[h] + topo.router_delay(topo.n_core + 3, topo.victim_router) + topo.host_delay[v])


def test_initial_deployment_has_two_networks():
    params = TopologyParams(**SMALL, deployment=Deployment.INITIAL, deployment_fraction=1 / 59)
    topo = generate_topology(params)
    assert len(topo.deployed) == 2 and topo.victim_router in topo.deployed


def test_full_and_edge_deployment():
    full = generate_topology(TopologyParams(**SMALL, deployment=Deployment.FULL))
    assert full.deployed == frozenset(range(full.n_domains))
    edge = generate_topology(TopologyParams(**SMALL, deployment=Deployment.EDGE))
    assert edge.deployed == frozenset(edge.edge_routers)


@pytest.mark.parametrize("bad", [dict(n_core_domains=0), dict(n_edge_domains=1), dict(hosts_per_edge=0)])
def test_inconsistent_params_rejected(bad):
    with pytest.raises(ConfigError):
        generate_topology(TopologyParams(**{**SMALL, **bad}))
