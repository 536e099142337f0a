"""Shared test oracles, kept independent of the code under test."""

import time
from collections import deque

import pytest

SESSION_START = time.monotonic()


def bfs_distances(topology, start):
    """Hop counts from start over the raw link list (independent of routing)."""
    adjacency = {}
    for link in topology.links:
        adjacency.setdefault(link.a, set()).add(link.b)
        adjacency.setdefault(link.b, set()).add(link.a)
    dist = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for peer in adjacency.get(node, ()):
            if peer not in dist:
                dist[peer] = dist[node] + 1
                queue.append(peer)
    return dist


def is_connected(topology):
    some_node = next(iter(topology.nodes))
    return len(bfs_distances(topology, some_node)) == len(topology.nodes)


def destination_tree_ok(topology, rules, dst_ip):
    """Oracle: dst-only core rules for dst_ip are acyclic with out-degree <= 1."""
    next_hop = {}
    for core in topology.core_switches():
        dst_rules = [
            e for e in rules.entries_at(core)
            if e.rule.match_src is None and e.rule.match_dst == dst_ip
        ]
        if len(dst_rules) > 1:
            return False
        if dst_rules:
            peer, _ = topology.peer(core, dst_rules[0].rule.out_port)
            next_hop[core] = peer
    for start in next_hop:
        seen = {start}
        node = start
        while node in next_hop:
            node = next_hop[node]
            if node in seen:
                return False
            seen.add(node)
    return True


@pytest.fixture(scope="session")
def session_start():
    return SESSION_START
