"""Shared fixtures and topology builders for the test suite."""

import random
import string

import pytest

from oxp.controller import Controller
from oxp.dataplane import DATA, IPV4, OTHER, PacketHeader
from oxp.gateway.config import builtin_data
from oxp.topology import ConnectPoint

# Extra non-link ports per device so every builder leaves edge ports free.
EDGE_PORTS = 4


def topo_doc_from_edges(names, edges):
    """Topology document with deterministic port assignment.

    Link ports are dealt per device in edge order starting at 1; every
    device then gets EDGE_PORTS spare ports on top.  Returns (document,
    port map keyed by (device, neighbor)).
    """
    degree = {name: 0 for name in names}
    ports = {}
    links = []
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
        ports[(a, b)] = degree[a]
        ports[(b, a)] = degree[b]
        links.append({"a": f"{a}/{degree[a]}", "b": f"{b}/{degree[b]}"})
    document = {
        "devices": [
            {"id": name, "ports": degree[name] + EDGE_PORTS} for name in names
        ],
        "links": links,
    }
    return document, ports


def edge_cp(topo, device, index=0) -> ConnectPoint:
    """index-th free edge port on a device."""
    found = 0
    for port in range(1, topo.devices[device].ports + 1):
        cp = ConnectPoint(device, port)
        if topo.is_edge_port(cp):
            if found == index:
                return cp
            found += 1
    raise AssertionError(f"no free edge port #{index} on {device}")


def line_doc(n=3):
    names = list(string.ascii_uppercase[:n])
    edges = list(zip(names, names[1:]))
    return topo_doc_from_edges(names, edges)[0]


def diamond_doc():
    # A-B-D and A-C-D: two disjoint 2-hop paths.
    return topo_doc_from_edges(
        ["A", "B", "C", "D"], [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]
    )[0]


def random_connected_edges(rng: random.Random, names):
    """Random spanning tree plus a few extra edges."""
    nodes = list(names)
    rng.shuffle(nodes)
    edges = set()
    for i in range(1, len(nodes)):
        other = nodes[rng.randrange(i)]
        edges.add(tuple(sorted((nodes[i], other))))
    extra = rng.randrange(0, len(nodes))
    for _ in range(extra):
        a, b = rng.sample(names, 2)
        edges.add(tuple(sorted((a, b))))
    return sorted(edges)


def l2_header(vlan=None, **kw):
    return PacketHeader(
        eth_src=kw.get("eth_src", "02:00:00:00:00:01"),
        eth_dst=kw.get("eth_dst", "02:00:00:00:00:02"),
        vlan=vlan,
        eth_type=OTHER,
    )


def ip_header(ip_dst, ip_src="10.255.0.1", vlan=None, l4=DATA, **kw):
    return PacketHeader(
        eth_src=kw.get("eth_src", "02:00:00:00:00:01"),
        eth_dst=kw.get("eth_dst", "02:00:00:00:00:02"),
        vlan=vlan,
        eth_type=IPV4,
        ip_src=ip_src,
        ip_dst=ip_dst,
        l4_kind=l4,
    )


@pytest.fixture
def gts7():
    controller = Controller()
    controller.load_topology(builtin_data("gts7"))
    return controller


@pytest.fixture
def line3():
    controller = Controller()
    controller.load_topology(line_doc(3))
    return controller


@pytest.fixture
def diamond():
    controller = Controller()
    controller.load_topology(diamond_doc())
    return controller
