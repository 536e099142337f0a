"""Scenario runner: config validation, orchestration, artifact output.

A scenario is a flat JSON document (unknown keys are rejected so typos in
sweep scripts fail loudly). ``run`` executes it and writes two artifacts
into the output directory: ``stats.csv`` (the raw poll samples) and
``report.json`` (rule dumps, per-poll analytics, mitigation plan, final
tallies). Both are byte-stable for a fixed config and seed.

Exit codes: 0 clean run, 2 configuration problems, 3 internal invariant
violations.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import analytics, mitigation, simnet, telemetry
from .routing import RoutingError, RuleTable
from .simnet import SimConfig, SimulationError, TrafficKind, TrafficProfile, legit_rate
from .telemetry import CounterRegressionError, StatStore
from .topology import NodeId, TopologyError, build_grid, parse_host_name

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

DEFAULTS = {
    "grid_n": 3,
    "grid_m": 4,
    "hosts_per_edge": 3,
    "server_edge": 0,
    "server_slot": 0,
    "client_matrix": 5,
    "base_rate": 2.0,
    "request_bytes": 200,
    "response_bytes": 1000,
    "attackers": [],
    "attacker_rate": None,
    "attack_start": 20.0,
    "duration": 60.0,
    "tick": 1.0,
    "poll_interval": 5.0,
    "seed": 1,
    "threshold": None,
    "k_clusters": 5,
    "bandwidth": None,
    "output_dir": "out",
}


@dataclass
class ScenarioConfig:
    grid_n: int
    grid_m: int
    hosts_per_edge: int
    server_edge: int
    server_slot: int
    client_matrix: int
    base_rate: float
    request_bytes: int
    response_bytes: int
    attackers: list[str]
    attacker_rate: float
    attack_start: float
    duration: float
    tick: float
    poll_interval: float
    seed: int
    threshold: float
    k_clusters: int
    bandwidth: float | None
    output_dir: str
    designed_legit_aggregate: float = field(default=0.0)

    def to_dict(self) -> dict:
        return {
            "grid_n": self.grid_n,
            "grid_m": self.grid_m,
            "hosts_per_edge": self.hosts_per_edge,
            "server_edge": self.server_edge,
            "server_slot": self.server_slot,
            "client_matrix": self.client_matrix,
            "base_rate": self.base_rate,
            "request_bytes": self.request_bytes,
            "response_bytes": self.response_bytes,
            "attackers": list(self.attackers),
            "attacker_rate": self.attacker_rate,
            "attack_start": self.attack_start,
            "duration": self.duration,
            "tick": self.tick,
            "poll_interval": self.poll_interval,
            "seed": self.seed,
            "threshold": self.threshold,
            "k_clusters": self.k_clusters,
            "bandwidth": self.bandwidth,
            "output_dir": self.output_dir,
            "designed_legit_aggregate": self.designed_legit_aggregate,
        }


def matrix_rates(n_clients: int, k_matrix: int, base: float) -> list[float]:
    """Rates for n clients laid over the K x K triangular matrix, in order.

    Clients beyond K*K wrap around to the start of the matrix.
    """
    rates = []
    for t in range(n_clients):
        pos = t % (k_matrix * k_matrix)
        rates.append(legit_rate(pos // k_matrix, pos % k_matrix, k_matrix, base))
    return rates


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_config(raw: dict) -> tuple[ScenarioConfig | None, list[str]]:
    """Validate and fully default a raw config document.

    Returns either a resolved config and no errors, or None plus the
    complete list of violations.
    """
    errors: list[str] = []
    if not isinstance(raw, dict):
        return None, ["config document must be a JSON object"]
    for key in raw:
        if key not in DEFAULTS:
            errors.append(f"unknown field: {key}")

    values = dict(DEFAULTS)
    values.update({k: v for k, v in raw.items() if k in DEFAULTS})

    def number(name, minimum=None, integer=False, nullable=False):
        v = values[name]
        if v is None:
            if nullable:
                return None
            errors.append(f"{name} must be set")
            return None
        if not _is_number(v) or (integer and not isinstance(v, int)):
            errors.append(f"{name} must be {'an integer' if integer else 'a number'}")
            return None
        if minimum is not None and v < minimum:
            errors.append(f"{name} must be >= {minimum}")
            return None
        return v

    n = number("grid_n", minimum=2, integer=True)
    m = number("grid_m", minimum=2, integer=True)
    k = number("hosts_per_edge", minimum=1, integer=True)
    server_edge = number("server_edge", minimum=0, integer=True)
    server_slot = number("server_slot", minimum=0, integer=True)
    k_matrix = number("client_matrix", minimum=1, integer=True)
    base_rate = number("base_rate", minimum=1e-9)
    request_bytes = number("request_bytes", minimum=1, integer=True)
    response_bytes = number("response_bytes", minimum=1, integer=True)
    attacker_rate = number("attacker_rate", minimum=1e-9, nullable=True)
    attack_start = number("attack_start", minimum=0)
    duration = number("duration", minimum=0)
    tick = number("tick", minimum=1e-9)
    poll_interval = number("poll_interval", minimum=1e-9)
    seed = number("seed", minimum=0, integer=True)
    threshold = number("threshold", minimum=1e-9, nullable=True)
    k_clusters = number("k_clusters", minimum=1, integer=True)
    bandwidth = number("bandwidth", minimum=1e-9, nullable=True)

    output_dir = values["output_dir"]
    if not isinstance(output_dir, str) or not output_dir:
        errors.append("output_dir must be a non-empty string")

    if tick is not None:
        for name, value in (("duration", duration), ("poll_interval", poll_interval)):
            if value is None:
                continue
            ratio = value / tick
            if abs(ratio - round(ratio)) > 1e-9:
                errors.append(f"{name} must be a multiple of tick")

    edge_count = 2 * n + 2 * m - 4 if n is not None and m is not None else None
    if edge_count is not None and server_edge is not None and server_edge >= edge_count:
        errors.append(f"server_edge must be < {edge_count}")
    if k is not None and server_slot is not None and server_slot >= k:
        errors.append(f"server_slot must be < {k}")

    attackers = values["attackers"]
    if not isinstance(attackers, list) or not all(isinstance(a, str) for a in attackers):
        errors.append("attackers must be a list of host names")
        attackers = []
    else:
        seen = set()
        for name in attackers:
            if name in seen:
                errors.append(f"duplicate attacker: {name}")
            seen.add(name)
            try:
                host = parse_host_name(name)
            except TopologyError:
                errors.append(f"bad attacker host name: {name}")
                continue
            u, slot = host.index
            if edge_count is not None and (u >= edge_count or (k is not None and slot >= k)):
                errors.append(f"attacker {name} outside the grid")
            elif (
                server_edge is not None
                and server_slot is not None
                and (u, slot) == (server_edge, server_slot)
            ):
                errors.append(f"attacker {name} is the server")

    if errors:
        return None, errors

    n_hosts = k * edge_count
    n_legit = n_hosts - 1 - len(attackers)
    rates = matrix_rates(n_legit, k_matrix, base_rate)
    designed = sum(rates) * request_bytes
    if attacker_rate is None:
        # Default: 10x the triangular profile's top rate.
        attacker_rate = 10.0 * base_rate * (2 * k_matrix - 1)
    if threshold is None:
        threshold = 10.0 * designed
    cfg = ScenarioConfig(
        n, m, k, server_edge, server_slot, k_matrix, float(base_rate),
        request_bytes, response_bytes, list(attackers), float(attacker_rate),
        float(attack_start), float(duration), float(tick), float(poll_interval),
        seed, float(threshold), k_clusters,
        float(bandwidth) if bandwidth is not None else None, output_dir,
    )
    cfg.designed_legit_aggregate = designed
    return cfg, []


def build_scenario(cfg: ScenarioConfig):
    """Materialize topology, rule table and traffic profiles from a config."""
    topo = build_grid(cfg.grid_n, cfg.grid_m, cfg.hosts_per_edge)
    server = NodeId.host(cfg.server_edge, cfg.server_slot)
    topo.server = server
    attackers = {parse_host_name(name) for name in cfg.attackers}
    topo.attackers = attackers

    profiles: dict[NodeId, TrafficProfile] = {
        server: TrafficProfile(
            TrafficKind.SERVER,
            request_size=cfg.request_bytes,
            response_size=cfg.response_bytes,
        )
    }
    legit = [h for h in topo.hosts() if h != server and h not in attackers]
    for rate, host in zip(matrix_rates(len(legit), cfg.client_matrix, cfg.base_rate), legit):
        profiles[host] = TrafficProfile(
            TrafficKind.LEGIT, rate, cfg.request_bytes, cfg.response_bytes
        )
    for host in sorted(attackers):
        profiles[host] = TrafficProfile(
            TrafficKind.ATTACKER, cfg.attacker_rate, cfg.request_bytes, cfg.response_bytes
        )

    sim_cfg = SimConfig(
        tick=cfg.tick,
        duration=cfg.duration,
        seed=cfg.seed,
        attack_start=cfg.attack_start,
        poll_interval=cfg.poll_interval,
    )
    return topo, RuleTable(), profiles, sim_cfg


class ScenarioPipeline:
    """Per-poll analytics, detection and one-shot mitigation."""

    def __init__(self, cfg: ScenarioConfig, topo):
        self.cfg = cfg
        self.server_ip = topo.ip_of[topo.server]
        self.server_edge = topo.edge_of_host(topo.server).name
        self.store = StatStore()
        self.prev_clustering: analytics.Clustering | None = None
        self.polls: list[dict] = []
        self.plan: mitigation.MitigationPlan | None = None
        self.mitigation_time: float | None = None

    def match_radius(self) -> float:
        # Cluster-history matching: a tenth of the largest known centroid
        # magnitude, floored at 1 to survive all-idle polls.
        radius = 1.0
        if self.prev_clustering is not None:
            for centroid in self.prev_clustering.centroids:
                radius = max(radius, 0.1 * math.hypot(*centroid))
        return radius

    def on_poll(self, state, t: float, samples) -> None:
        deltas = telemetry.delta(self.store, samples)
        entry: dict = {"t": t, "deltas": [d.to_dict() for d in deltas]}

        # Detection looks at the target's own edge switch so the two polled
        # edges of a flow are not double-counted.
        local = [d for d in deltas if d.switch == self.server_edge]
        agg = telemetry.aggregate_by_destination(local).get(self.server_ip, (0, 0))
        byte_rate = agg[1] / self.cfg.poll_interval
        entry["aggregate"] = {
            "packets": agg[0],
            "bytes": agg[1],
            "byte_rate": byte_rate,
        }

        vectors = analytics.build_features(local, self.server_ip, self.cfg.poll_interval)
        entry["features"] = [v.to_dict() for v in vectors]
        clustering = None
        report = None
        if vectors:
            k = min(self.cfg.k_clusters, len(vectors))
            clustering = analytics.kmeans(vectors, k, seed=self.cfg.seed)
            report = analytics.detect(
                byte_rate, self.cfg.threshold, clustering, self.server_ip
            )
            up_rates = [v.byte_rate_up for v in vectors]
            if len(up_rates) >= 2:
                entry["gaussian"] = [
                    c.to_dict()
                    for c in analytics.decompose_gaussian_1d(up_rates, self.cfg.bandwidth)
                ]
            else:
                entry["gaussian"] = None
            if self.prev_clustering is not None:
                entry["new_clusters"] = analytics.compare_clusterings(
                    self.prev_clustering, clustering, self.match_radius()
                )
            else:
                entry["new_clusters"] = None
            self.prev_clustering = clustering
        else:
            entry["gaussian"] = None
            entry["new_clusters"] = None
        entry["clustering"] = clustering.to_dict() if clustering else None
        entry["detection"] = report.to_dict() if report else None
        self.polls.append(entry)

        if report is None or not report.attack:
            return
        if self.plan is not None:
            state.record.events.append(
                {"t": t, "event": "attack_verdict_repeated", "target": self.server_ip}
            )
            return
        state.record.events.append(
            {"t": t, "event": "attack_detected", "target": self.server_ip,
             "suspicious": report.suspicious_sources}
        )
        if not report.suspicious_sources:
            return
        self.plan = mitigation.plan_scrubber(report, state.topology, state.rules)
        mitigation.apply(self.plan, state.topology, state.rules)
        self.mitigation_time = t
        state.record.events.append(
            {"t": t, "event": "mitigation_applied", "scrubber": self.plan.scrubber.name}
        )


def run_scenario(cfg: ScenarioConfig) -> int:
    """Run one scenario and write stats.csv and report.json."""
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    topo, rules, profiles, sim_cfg = build_scenario(cfg)
    pipeline = ScenarioPipeline(cfg, topo)
    try:
        record = simnet.run(topo, rules, profiles, sim_cfg, on_poll=pipeline.on_poll)
    except (SimulationError, CounterRegressionError, RoutingError,
            TopologyError, mitigation.MitigationError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    telemetry.write_stats_csv(record.samples, out_dir / "stats.csv")
    report = {
        "config": cfg.to_dict(),
        "topology": topo.to_dict(),
        "polls": pipeline.polls,
        "mitigation": pipeline.plan.to_dict() if pipeline.plan else None,
        "mitigation_time": pipeline.mitigation_time,
        "rules_final": rules.dump(),
        "run": record.to_dict(),
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def reference_template() -> dict:
    """The stock scenario: 3x4 grid, 3 hosts per edge, 10 attackers at t=20."""
    template = dict(DEFAULTS)
    template["attackers"] = [f"h2s{u}" for u in range(10)]
    return template


TEMPLATES = {"reference": reference_template}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdnsim",
        description="Deterministic SDN volumetric-attack simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario config")
    run_p.add_argument("--config", required=True, help="path to a JSON scenario")
    run_p.add_argument("--out", help="output directory (overrides config)")
    run_p.add_argument("--seed", type=int, help="seed (overrides config)")

    init_p = sub.add_parser("init-config", help="emit a scenario template")
    init_p.add_argument("--template", default="reference", choices=sorted(TEMPLATES))
    init_p.add_argument("--out", help="write to a file instead of stdout")

    args = parser.parse_args(argv)

    if args.command == "init-config":
        text = json.dumps(TEMPLATES[args.template](), indent=2) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    try:
        text = Path(args.config).read_text()
        raw = json.loads(text) if text.strip() else {}
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.out is not None:
        raw["output_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed

    cfg, errors = validate_config(raw)
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run_scenario(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
