"""Scrubber detour: throttle suspicious flows through an added switch.

The scrubber hangs off the target server's edge switch behind two links:
edge port 200 feeds the scrubber (its port 1), and the scrubber's port 201
returns into edge port 201 over the throttled link (0.1 Mbit/s = 12 500
bytes/s, queue of 1000 packets). Per suspicious flow, the edge switch's
per-flow rule toward the server is deleted and replaced by a redirect to
port 200 at priority 30001; the scrubber loops the flow back at 30002; a
shared ingress-qualified rule (in from port 201, priority 40003) hands the
returning traffic to the server's port. The replacing redirect inherits the
deleted rule's counters, so polled totals never step backwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .analytics.detect import DetectionReport
from .routing import BASE_PRIORITY, FlowKey, FlowRule, RuleTable, forward, MISS
from .telemetry import ip_key
from .topology import (
    HOST_PORT,
    SCRUBBER_OUT_PORT,
    SCRUBBER_RETURN_PORT,
    Link,
    NodeId,
    Topology,
    attach_switch,
)

SCRUBBER_CAPACITY_BPS = 12_500.0  # 0.1 Mbit/s
SCRUBBER_QUEUE_CAP = 1000
REDIRECT_PRIORITY = 30001
LOOP_PRIORITY = 30002
RETURN_PRIORITY = 40003
MAX_SCRUBBERS = 100


class MitigationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RuleEdit:
    op: str  # "delete" | "add"
    rule: FlowRule

    def to_dict(self) -> dict:
        return {"op": self.op, **self.rule.dump()}


@dataclass
class MitigationPlan:
    scrubber: NodeId
    attach_to: NodeId
    links: list[Link]
    rule_edits: list[RuleEdit]
    target: str
    suspicious_sources: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scrubber": self.scrubber.name,
            "attach_to": self.attach_to.name,
            "links": [
                {
                    "a": l.a.name,
                    "a_port": l.a_port,
                    "b": l.b.name,
                    "b_port": l.b_port,
                    "capacity": l.capacity,
                    "queue_cap": l.queue_cap,
                }
                for l in self.links
            ],
            "rule_edits": [e.to_dict() for e in self.rule_edits],
            "target": self.target,
            "suspicious_sources": self.suspicious_sources,
        }


def plan_scrubber(
    report: DetectionReport, topology: Topology, rules: RuleTable
) -> MitigationPlan:
    """Plan the detour for every suspicious flow of an attack verdict."""
    if not report.attack:
        raise MitigationError("mitigation requires an attack verdict")
    if not report.suspicious_sources:
        raise MitigationError("no suspicious sources to mitigate")

    serial = len(topology.scrubbers())
    if serial >= MAX_SCRUBBERS:
        raise MitigationError("scrubber serial numbers exhausted")
    scrubber = NodeId.scrubber(serial)

    server_host = topology.host_of_ip.get(report.target)
    if server_host is None:
        raise MitigationError(f"unknown target {report.target}")
    edge = topology.edge_of_host(server_host)
    used = topology.used_ports(edge)
    if SCRUBBER_OUT_PORT in used or SCRUBBER_RETURN_PORT in used:
        raise MitigationError(f"{edge} already has a scrubber attached")

    links = [
        Link(edge, SCRUBBER_OUT_PORT, scrubber, 1),
        Link(
            scrubber,
            SCRUBBER_RETURN_PORT,
            edge,
            SCRUBBER_RETURN_PORT,
            capacity=SCRUBBER_CAPACITY_BPS,
            queue_cap=SCRUBBER_QUEUE_CAP,
        ),
    ]

    server_port = topology.port_toward(edge, server_host)
    edits: list[RuleEdit] = []
    for src in sorted(report.suspicious_sources, key=ip_key):
        existing = rules.find(edge, src, report.target, BASE_PRIORITY)
        if existing is None:
            raise MitigationError(
                f"no rule for suspicious flow {src}->{report.target} on {edge}"
            )
        edits.append(RuleEdit("delete", existing.rule))
        edits.append(
            RuleEdit(
                "add",
                FlowRule(edge, src, report.target, SCRUBBER_OUT_PORT, REDIRECT_PRIORITY),
            )
        )
        if len(edits) == 2:
            # One shared return rule per plan: traffic re-entering on the
            # scrubber port goes out the server's original port.
            edits.append(
                RuleEdit(
                    "add",
                    FlowRule(
                        edge,
                        None,
                        report.target,
                        server_port,
                        RETURN_PRIORITY,
                        in_port=SCRUBBER_RETURN_PORT,
                    ),
                )
            )
        edits.append(
            RuleEdit(
                "add",
                FlowRule(
                    scrubber, src, report.target, SCRUBBER_RETURN_PORT, LOOP_PRIORITY
                ),
            )
        )

    return MitigationPlan(
        scrubber,
        edge,
        links,
        edits,
        report.target,
        sorted(report.suspicious_sources, key=ip_key),
    )


def apply(
    plan: MitigationPlan, topology: Topology, rules: RuleTable
) -> tuple[Topology, RuleTable]:
    """Apply a plan atomically: everything is validated before any mutation."""
    if plan.scrubber in topology.nodes:
        raise MitigationError(f"{plan.scrubber} already exists")
    claimed: set[tuple[NodeId, int]] = set()
    for link in plan.links:
        for node, port in link.endpoints():
            if node != plan.scrubber and node not in topology.nodes:
                raise MitigationError(f"link endpoint {node} missing")
            if (node, port) in claimed or (
                node != plan.scrubber and port in topology.used_ports(node)
            ):
                raise MitigationError(f"port {port} on {node} unavailable")
            claimed.add((node, port))

    # Dry-run the edit sequence against the current table.
    pending: dict[tuple, bool] = {}
    for edit in plan.rule_edits:
        r = edit.rule
        ident = (r.switch, r.match_src, r.match_dst, r.priority)
        exists = pending.get(ident, rules.find(*ident) is not None)
        if edit.op == "delete" and not exists:
            raise MitigationError(f"cannot delete missing rule {r.dump()}")
        if edit.op == "add" and exists:
            raise MitigationError(f"cannot add duplicate rule {r.dump()}")
        pending[ident] = edit.op == "add"

    attach_switch(topology, plan.scrubber, plan.links)
    removed: dict[tuple[NodeId, str | None, str], tuple[int, int]] = {}
    for edit in plan.rule_edits:
        r = edit.rule
        if edit.op == "delete":
            entry = rules.delete(r.switch, r.match_src, r.match_dst, r.priority)
            removed[(r.switch, r.match_src, r.match_dst)] = (entry.packets, entry.bytes)
        else:
            entry = rules.install(r)
            inherited = removed.pop((r.switch, r.match_src, r.match_dst), None)
            if inherited is not None:
                entry.packets, entry.bytes = inherited
    return topology, rules


def trace_path(topology: Topology, rules: RuleTable, key: FlowKey) -> list[NodeId]:
    """Node sequence a packet for ``key`` takes, by walking the rule table.

    Raises if the walk MISSes or exceeds the switch count (a loop).
    """
    src_host = topology.host_of_ip.get(key.src)
    dst_host = topology.host_of_ip.get(key.dst)
    if src_host is None or dst_host is None:
        raise MitigationError(f"unknown endpoint in {key.src}->{key.dst}")
    node, in_port = topology.peer(src_host, HOST_PORT)
    path = [src_host]
    limit = sum(1 for n in topology.nodes if n.is_switch) + 2
    while node.is_switch:
        path.append(node)
        if len(path) > limit:
            raise MitigationError(f"forwarding loop for {key.src}->{key.dst}: {path}")
        port = forward(rules, node, key, in_port)
        if port is MISS:
            raise MitigationError(f"MISS at {node} for {key.src}->{key.dst}")
        node, in_port = topology.peer(node, port)
    path.append(node)
    return path
