import json

import pytest

from sdnsim.analytics import DetectionReport
from sdnsim.mitigation import (
    LOOP_PRIORITY,
    REDIRECT_PRIORITY,
    RETURN_PRIORITY,
    SCRUBBER_CAPACITY_BPS,
    MitigationError,
    MitigationPlan,
    RuleEdit,
    apply,
    plan_scrubber,
    trace_path,
)
from sdnsim.routing import BASE_PRIORITY, FlowKey, FlowRule, RuleTable, handle_packet_in
from sdnsim.simnet import SimConfig, TrafficKind, TrafficProfile, run
from sdnsim.topology import NodeId, NodeKind, build_grid


def attack_state(suspicious_hosts, legit_hosts=("h1s1",)):
    topo = build_grid(3, 4, 3)
    server = NodeId.host(0, 0)
    topo.server = server
    rules = RuleTable()
    server_ip = topo.ip_of[server]
    suspicious_ips = []
    for name in suspicious_hosts:
        slot, _, edge = name[1:].partition("s")
        host = NodeId.host(int(edge), int(slot))
        ip = topo.ip_of[host]
        suspicious_ips.append(ip)
        handle_packet_in(rules, topo, FlowKey(ip, server_ip))
    legit_ips = []
    for name in legit_hosts:
        slot, _, edge = name[1:].partition("s")
        ip = topo.ip_of[NodeId.host(int(edge), int(slot))]
        legit_ips.append(ip)
        handle_packet_in(rules, topo, FlowKey(ip, server_ip))
    report = DetectionReport(
        target=server_ip,
        aggregate_byte_rate=1e6,
        threshold=1e4,
        attack=True,
        suspicious_sources=sorted(suspicious_ips),
    )
    return topo, rules, report, server_ip, suspicious_ips, legit_ips


def test_single_flow_plan_shape():
    topo, rules, report, server_ip, (attacker_ip,), _ = attack_state(["h1s3"])
    plan = plan_scrubber(report, topo, rules)
    assert plan.scrubber == NodeId.scrubber(0)
    assert plan.scrubber.name == "s200"
    assert plan.attach_to == topo.edge_of_host(topo.server)

    deletes = [e for e in plan.rule_edits if e.op == "delete"]
    adds = [e for e in plan.rule_edits if e.op == "add"]
    assert len(deletes) == 1 and len(adds) == 3
    assert [e.rule.priority for e in adds] == [
        REDIRECT_PRIORITY,
        RETURN_PRIORITY,
        LOOP_PRIORITY,
    ]
    redirect, turn, loop = (e.rule for e in adds)
    assert deletes[0].rule.priority == BASE_PRIORITY
    assert redirect.out_port == 200
    assert turn.in_port == 201
    assert turn.match_src is None
    assert turn.out_port == deletes[0].rule.out_port  # original server port
    assert loop.switch.kind is NodeKind.SCRUBBER
    assert loop.out_port == 201


def test_throttled_return_link_parameters():
    topo, rules, report, *_ = attack_state(["h1s3"])
    plan = plan_scrubber(report, topo, rules)
    unconstrained, throttled = plan.links
    assert not unconstrained.constrained
    assert throttled.capacity == 12_500.0
    assert throttled.queue_cap == 1000


def test_plan_requires_attack_verdict():
    topo, rules, report, *_ = attack_state(["h1s3"])
    report.attack = False
    with pytest.raises(MitigationError):
        plan_scrubber(report, topo, rules)
    report.attack = True
    report.suspicious_sources = []
    with pytest.raises(MitigationError):
        plan_scrubber(report, topo, rules)


def test_five_flows_one_scrubber_and_single_detour_each():
    names = ["h1s3", "h2s5", "h0s7", "h1s9", "h2s2"]
    topo, rules, report, server_ip, suspicious_ips, legit_ips = attack_state(names)
    plan = plan_scrubber(report, topo, rules)
    assert len([e for e in plan.rule_edits if e.op == "delete"]) == 5
    # 5 redirects + 5 loops + 1 shared return rule
    assert len([e for e in plan.rule_edits if e.op == "add"]) == 11

    apply(plan, topo, rules)
    assert len(topo.scrubbers()) == 1
    for ip in suspicious_ips:
        path = trace_path(topo, rules, FlowKey(ip, server_ip))
        assert sum(1 for n in path if n.kind is NodeKind.SCRUBBER) == 1
        assert path[-1] == topo.server


def test_legit_paths_and_reverse_paths_untouched():
    topo, rules, report, server_ip, suspicious_ips, legit_ips = attack_state(
        ["h1s3", "h2s5"], legit_hosts=("h1s1", "h0s4")
    )
    legit_keys = [FlowKey(ip, server_ip) for ip in legit_ips]
    reverse_keys = [FlowKey(server_ip, ip) for ip in suspicious_ips + legit_ips]
    before = {k: trace_path(topo, rules, k) for k in legit_keys + reverse_keys}
    plan = plan_scrubber(report, topo, rules)
    apply(plan, topo, rules)
    for key, path in before.items():
        assert trace_path(topo, rules, key) == path


def test_same_edge_attacker_detours_once():
    topo, rules, report, server_ip, (attacker_ip,), _ = attack_state(["h2s0"])
    plan = plan_scrubber(report, topo, rules)
    apply(plan, topo, rules)
    path = trace_path(topo, rules, FlowKey(attacker_ip, server_ip))
    names = [n.name for n in path]
    assert names == ["h2s0", "e0", "s200", "e0", "h0s0"]


def test_apply_is_atomic_on_bad_plan():
    topo, rules, report, server_ip, *_ = attack_state(["h1s3"])
    plan = plan_scrubber(report, topo, rules)
    plan.rule_edits.append(
        RuleEdit(
            "delete",
            FlowRule(NodeId.edge(1), "10.0.9.9", server_ip, 1, BASE_PRIORITY),
        )
    )
    topo_before = topo.to_dict()
    rules_before = rules.dump()
    with pytest.raises(MitigationError):
        apply(plan, topo, rules)
    assert topo.to_dict() == topo_before
    assert rules.dump() == rules_before


def test_apply_rejects_double_scrubber():
    topo, rules, report, *_ = attack_state(["h1s3"])
    plan = plan_scrubber(report, topo, rules)
    apply(plan, topo, rules)
    with pytest.raises(MitigationError):
        plan_scrubber(report, topo, rules)


def test_redirect_inherits_deleted_rule_counters():
    topo, rules, report, server_ip, (attacker_ip,), _ = attack_state(["h1s3"])
    edge = topo.edge_of_host(topo.server)
    entry = rules.find(edge, attacker_ip, server_ip, BASE_PRIORITY)
    entry.packets, entry.bytes = 123, 45_600
    plan = plan_scrubber(report, topo, rules)
    apply(plan, topo, rules)
    redirect = rules.find(edge, attacker_ip, server_ip, REDIRECT_PRIORITY)
    assert (redirect.packets, redirect.bytes) == (123, 45_600)


def test_mitigated_attacker_is_throttled_while_legit_flows_match_control():
    def scenario():
        topo = build_grid(3, 4, 3)
        server = NodeId.host(0, 0)
        topo.server = server
        attacker = NodeId.host(3, 1)
        legit = NodeId.host(1, 1)
        profiles = {
            server: TrafficProfile(TrafficKind.SERVER, request_size=1000, response_size=1000),
            attacker: TrafficProfile(TrafficKind.ATTACKER, 100.0, 1000, 1000),
            legit: TrafficProfile(TrafficKind.LEGIT, 5.0, 1000, 1000),
        }
        cfg = SimConfig(duration=10.0, poll_interval=5.0, attack_start=0.0)
        rules = RuleTable()
        server_ip = topo.ip_of[server]
        a_ip, l_ip = topo.ip_of[attacker], topo.ip_of[legit]
        handle_packet_in(rules, topo, FlowKey(a_ip, server_ip))
        handle_packet_in(rules, topo, FlowKey(l_ip, server_ip))
        return topo, rules, profiles, cfg, server_ip, a_ip, l_ip

    # control: no mitigation
    topo, rules, profiles, cfg, server_ip, a_ip, l_ip = scenario()
    control = run(topo, rules, profiles, cfg)
    assert control.flows[(a_ip, server_ip)].delivered_bytes == 100_000 * 10

    # mitigated: scrubber applied before traffic starts
    topo, rules, profiles, cfg, server_ip, a_ip, l_ip = scenario()
    report = DetectionReport(server_ip, 1e6, 1e3, True, suspicious_sources=[a_ip])
    apply(plan_scrubber(report, topo, rules), topo, rules)
    mitigated = run(topo, rules, profiles, cfg)

    throttled = mitigated.flows[(a_ip, server_ip)]
    assert throttled.delivered_bytes <= SCRUBBER_CAPACITY_BPS * cfg.duration
    assert throttled.delivered_bytes < control.flows[(a_ip, server_ip)].delivered_bytes
    # the legitimate flow is byte-for-byte identical to the control run
    for key in ((l_ip, server_ip), (server_ip, l_ip)):
        assert mitigated.flows[key].to_dict() == control.flows[key].to_dict()


def test_scrubber_serials_exhaust_at_one_hundred():
    topo, rules, report, *_ = attack_state(["h1s3"])
    for serial in range(100):
        topo.add_node(NodeId.scrubber(serial))
    with pytest.raises(MitigationError, match="exhausted"):
        plan_scrubber(report, topo, rules)


def test_plan_serialization_is_stable():
    topo, rules, report, *_ = attack_state(["h1s3", "h2s5"])
    plan = plan_scrubber(report, topo, rules)
    assert json.dumps(plan.to_dict()) == json.dumps(plan.to_dict())
    assert plan.to_dict()["scrubber"] == "s200"
