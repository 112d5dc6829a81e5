"""Scenario runner and measurement.

A scenario file names a topology, a timed request script, flows, a failure
schedule and substrate settings. ``run_scenario`` plays it on the virtual
clock through the whole stack and returns the stage log and a report whose
pass/fail verdicts come only from the expectations declared in the file.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from greyfiber.errors import MalformedLog, MissingRecovery, ScenarioError, SchemaError
from greyfiber.eventlog import STAGE_ORDER, EventLog
from greyfiber.ggc import GGC, Disposition, StageCosts
from greyfiber.glsc import GLSC, MonitorPolicy
from greyfiber.request import LeaseWindow, ResourceRequest
from greyfiber.sim import Priority, RealtimeDriver, SimDriver, Simulator
from greyfiber.substrate import (
    FailureSpec,
    Flow,
    FlowModelParams,
    OspfTimers,
    RateTrace,
    Substrate,
    bytes_transferred,
    get_profile,
    mean_rate,
    pair_key,
)
from greyfiber.topology import TopologyGraph, split_by_seller

logger = logging.getLogger(__name__)

CATEGORIES = {
    "accept_bid": "exchange",
    "auction": "exchange",
    "winner_notify": "protocol",
    "graph_query": "control",
    "admissibility": "control",
    "config_generation": "config_generation",
    "config_push": "protocol",
    "circuit_setup": "circuit_creation",
    "circuit_ack": "protocol",
    "counter_update": "control",
    "buyer_notify": "protocol",
}


# scenario description --------------------------------------------------------

@dataclass(frozen=True)
class RequestSpec:
    at: float
    request: ResourceRequest
    standby: bool = False


@dataclass
class Scenario:
    name: str
    topology: dict
    horizon: float
    requests: list[RequestSpec] = field(default_factory=list)
    flows: list[Flow] = field(default_factory=list)
    failures: list[FailureSpec] = field(default_factory=list)
    profile: str = "ideal"
    flow_params: FlowModelParams = field(default_factory=FlowModelParams)
    ospf: OspfTimers | None = None
    monitor: MonitorPolicy = field(default_factory=MonitorPolicy)
    glsc_backup: bool = True
    mechanism: str = "GSP"
    costs: StageCosts = field(default_factory=StageCosts)
    seed: int = 0
    start: float = 0.0
    measure: tuple[float, float] | None = None
    random_requests: dict | None = None
    expectations: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        times = [r.at for r in self.requests] + [f.stop for f in self.flows]
        times += [f.fail_at for f in self.failures] + [f.repair_at for f in self.failures if f.repair_at is not None]
        if any(t > self.horizon for t in times):
            raise ScenarioError(f"{self.name}: horizon {self.horizon} does not cover every scripted event")
        early = [t for t in [r.at for r in self.requests] + [f.start for f in self.flows] if t < self.start]
        if early:
            raise ScenarioError(f"{self.name}: events before the start time {self.start}")
        get_profile(self.profile)
        for e in self.expectations:
            if e.get("kind") not in EXPECTATION_KINDS:
                raise ScenarioError(f"{self.name}: unknown expectation kind {e.get('kind')!r}")


def _scenario_dir() -> Path:
    return Path(str(resources.files("greyfiber") / "scenarios"))


def list_scenarios() -> list[str]:
    return sorted(p.stem for p in _scenario_dir().glob("*.json"))


def resolve_scenario_path(ref: str | Path) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    bundled = _scenario_dir() / f"{ref}.json"
    if bundled.exists():
        return bundled
    raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")


def _request_from(obj: Mapping[str, Any]) -> RequestSpec:
    body = {k: v for k, v in obj.items() if k not in ("at", "standby")}
    req = ResourceRequest.from_json(body)
    return RequestSpec(float(obj.get("at", req.time.start)), req, bool(obj.get("standby", False)))


def scenario_from_dict(obj: Mapping[str, Any], base: Path | None = None) -> Scenario:
    try:
        topo = obj["topology"]
        if isinstance(topo, str):
            path = (base / topo) if base is not None else Path(topo)
            topo = json.loads(path.read_text())
        sub = dict(obj.get("substrate", {}))
        params = FlowModelParams(float(sub.get("efficiency", 1.0)), float(sub.get("warmup", 0.0)),
                                 bool(sub.get("ramp", False)), int(sub.get("ramp_steps", 10)))
        ospf = OspfTimers(**obj["ospf"]) if obj.get("ospf") else None
        mon = obj.get("monitor", {})
        monitor = MonitorPolicy(float(mon.get("interval", 1.0)), str(mon.get("probe", "ping")),
                                float(mon.get("phase", 0.0)), float(mon.get("rtt", 0.001)))
        flows = [Flow(str(f["id"]), str(f["src"]), str(f["dst"]), float(f["start"]), float(f["stop"]),
                      float(f.get("demand_bps", math.inf))) for f in obj.get("flows", [])]
        failures = [FailureSpec(str(f["link"]), float(f["fail_at"]),
                                None if f.get("repair_at") is None else float(f["repair_at"]))
                    for f in obj.get("failures", [])]
        measure = obj.get("measure")
        sc = Scenario(
            name=str(obj["name"]),
            topology=dict(topo),
            horizon=float(obj["horizon"]),
            requests=[_request_from(r) for r in obj.get("requests", [])],
            flows=flows,
            failures=failures,
            profile=str(sub.get("profile", "ideal")),
            flow_params=params,
            ospf=ospf,
            monitor=monitor,
            glsc_backup=bool(obj.get("glsc_backup", True)),
            mechanism=str(obj.get("mechanism", "GSP")),
            costs=StageCosts.from_json(obj.get("costs")),
            seed=int(obj.get("seed", 0)),
            start=float(obj.get("start", 0.0)),
            measure=None if measure is None else (float(measure[0]), float(measure[1])),
            random_requests=obj.get("random_requests"),
            expectations=list(obj.get("expectations", [])),
        )
    except (KeyError, TypeError, ValueError, OSError, SchemaError) as exc:
        raise ScenarioError(f"invalid scenario: {exc!r}") from exc
    sc.validate()
    return sc


def load_scenario(ref: str | Path) -> Scenario:
    path = resolve_scenario_path(ref)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(obj, path.parent)


# the assembled stack ---------------------------------------------------------

@dataclass
class Stack:
    sim: Simulator | None
    driver: SimDriver | RealtimeDriver
    topology: TopologyGraph
    ggc: GGC
    substrate: Substrate
    glscs: dict[str, GLSC]


def build_stack(topology_doc: Mapping, *, profile: str = "ideal", params: FlowModelParams = FlowModelParams(),
                ospf: OspfTimers | None = None, monitor: MonitorPolicy = MonitorPolicy(),
                glsc_backup: bool = True, mechanism: str = "GSP", costs: StageCosts = StageCosts(),
                start: float = 0.0, log: EventLog | None = None, realtime: bool = False) -> Stack:
    """Wire GGC, one GLSC per site and the substrate on a fresh virtual clock.

    Sellers register their own fragments, so the graph is built through the
    normal registration path. With ``realtime`` the stack runs on the wall
    clock instead and ``sim`` is None.
    """
    if realtime:
        sim, driver = None, RealtimeDriver()
    else:
        sim = Simulator(start)
        driver = SimDriver(sim)
    topology = TopologyGraph()
    ggc = GGC(topology, driver=driver, costs=costs, mechanism=mechanism, log=log or EventLog())
    substrate = Substrate(driver, topology, profile, params, ospf)
    sites = sorted({n["site"] for n in topology_doc["nodes"]})
    glscs = {}
    for site in sites:
        g = GLSC(site, topology, substrate, driver, policy=monitor, backup=glsc_backup,
                 notify=lambda kind, payload, s=site: ggc.receive(s, kind, payload), log=ggc.log)
        ggc.attach_glsc(g)
        glscs[site] = g
    fragments = split_by_seller(topology_doc)
    if fragments:
        for seller in sorted(fragments):
            ggc.register_seller(seller, fragments[seller])
    else:
        topology.merge_document(topology_doc)
    return Stack(sim, driver, topology, ggc, substrate, glscs)


# measurements ----------------------------------------------------------------

@dataclass(frozen=True)
class StageTimings:
    exchange: float = 0.0
    config_generation: float = 0.0
    circuit_creation: float = 0.0
    protocol: float = 0.0
    control: float = 0.0
    client_request_total: float = 0.0

    @property
    def internal(self) -> float:
        """Everything the control plane spends outside substrate circuit creation."""
        return self.client_request_total - self.circuit_creation

    def to_json(self) -> dict:
        out = {f.name: round(getattr(self, f.name), 9) for f in fields(self)}
        out["internal"] = round(self.internal, 9)
        return out


def overhead_breakdown(log: EventLog) -> dict[str, StageTimings]:
    """Per-request durations by category, for requests with pipeline records."""
    grouped: dict[str, list] = {}
    for r in log.records:
        if r.t_end < r.t_start or not (math.isfinite(r.t_start) and math.isfinite(r.t_end)):
            raise MalformedLog(f"record for {r.request_id}/{r.stage} ends before it starts")
        if r.stage in STAGE_ORDER:
            grouped.setdefault(r.request_id, []).append(r)
    out = {}
    for rid, recs in grouped.items():
        sums = {c: 0.0 for c in set(CATEGORIES.values())}
        for r in recs:
            sums[CATEGORIES[r.stage]] += r.t_end - r.t_start
        total = max(r.t_end for r in recs) - min(r.t_start for r in recs)
        out[rid] = StageTimings(client_request_total=total, **sums)
    return out


def measure_wall_overhead(topology_doc: Mapping, requests: list[ResourceRequest],
                          profile: str = "ideal") -> dict[str, StageTimings]:
    """Run requests one after another on the wall clock; timings of the granted ones."""
    stack = build_stack(topology_doc, profile=profile, realtime=True)
    try:
        for name in sorted({r.client_name for r in requests}):
            stack.ggc.register_buyer(name)
        granted = []
        for req in requests:
            out = stack.ggc.handle_resource_request(req)
            if out.disposition is Disposition.GRANTED:
                granted.append(out.request_id)
        timings = overhead_breakdown(stack.ggc.log)
        return {rid: timings[rid] for rid in granted}
    finally:
        stack.driver.cancel_all()


def stage_durations(log: EventLog, request_id: str) -> dict[str, float]:
    return {r.stage: r.t_end - r.t_start for r in log.for_request(request_id)}


@dataclass(frozen=True)
class Recovery:
    pair: tuple[str, str]
    link: str
    failed_at: float
    recovered_at: float | None

    @property
    def lag(self) -> float | None:
        return None if self.recovered_at is None else round(self.recovered_at - self.failed_at, 9)


def find_recoveries(trace: RateTrace, flows: list[Flow], failures: list[tuple[str, float]]) -> list[Recovery]:
    """For each failure, when each hit endpoint pair got its pre-failure rate back."""
    by_pair: dict[tuple[str, str], list[str]] = {}
    for f in flows:
        by_pair.setdefault(pair_key(f.src, f.dst), []).append(f.id)
    changes = trace.change_times()
    out = []
    for link, t in failures:
        for pair in sorted(by_pair):
            ids = by_pair[pair]
            before = trace.aggregate_rate_at(t - 1e-6, ids)
            if before <= 0 or trace.aggregate_rate_at(t, ids) >= before * (1 - 1e-9):
                continue
            recovered = None
            for tc in changes:
                if tc > t and trace.aggregate_rate_at(tc, ids) >= before * (1 - 1e-9):
                    recovered = tc
                    break
            out.append(Recovery(pair, link, t, recovered))
    return out


@dataclass
class Report:
    scenario: str
    seed: int
    trace: RateTrace = field(default_factory=RateTrace)
    window: tuple[float, float] = (0.0, 0.0)
    bytes_total: float = 0.0
    bytes_by_pair: dict[str, float] = field(default_factory=dict)
    recoveries: list[Recovery] = field(default_factory=list)
    stage_timings: dict[str, StageTimings] = field(default_factory=dict)
    outcomes: dict[str, dict] = field(default_factory=dict)
    script_ids: list[str] = field(default_factory=list)
    expectations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.expectations)

    def recovery_lag(self) -> float:
        lags = [r.lag for r in self.recoveries if r.lag is not None]
        if not lags:
            raise MissingRecovery(f"{self.scenario}: no recovery recorded")
        return max(lags)

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "window": list(self.window),
            "bytes_total_bits": self.bytes_total,
            "bytes_by_pair_bits": self.bytes_by_pair,
            "recoveries": [{"pair": list(r.pair), "link": r.link, "failed_at": r.failed_at,
                            "recovered_at": r.recovered_at, "lag_s": r.lag} for r in self.recoveries],
            "stage_timings": {rid: t.to_json() for rid, t in sorted(self.stage_timings.items())},
            "outcomes": self.outcomes,
            "script_ids": self.script_ids,
            "expectations": self.expectations,
            "passed": self.passed,
        }


def compare_backups(report_gf: Report, report_ospf: Report) -> float:
    """Speedup of local backup over OSPF failover: OSPF lag / GreyFiber lag."""
    gf, ospf = report_gf.recovery_lag(), report_ospf.recovery_lag()
    if gf <= 0:
        raise MissingRecovery(f"{report_gf.scenario}: non-positive recovery lag {gf}")
    return ospf / gf


# expectations ----------------------------------------------------------------

def _close(observed: float, expected: float, spec: Mapping) -> bool:
    if "rel_tol" in spec:
        return abs(observed - expected) <= float(spec["rel_tol"]) * abs(expected)
    return abs(observed - expected) <= float(spec.get("abs_tol", 1e-9))


def _request_ids(report: Report, ref) -> list[str]:
    if ref is None or ref == "all":
        return sorted(report.stage_timings)
    if isinstance(ref, int):
        return [report.script_ids[ref]]
    return [str(ref)]


def _timing(report: Report, rid: str, key: str) -> float:
    t = report.stage_timings[rid]
    return t.internal if key == "internal" else getattr(t, key)


def _eval_epoch_rate(report: Report, e: Mapping) -> tuple[Any, bool]:
    flows = report.trace.flows() if e.get("flow", "each") == "each" else [e["flow"]]
    obs = {f: mean_rate(report.trace, f, float(e["t0"]), float(e["t1"])) for f in flows}
    return obs, bool(obs) and all(_close(v, float(e["expected_bps"]), e) for v in obs.values())


def _eval_bytes_total(report: Report, e: Mapping) -> tuple[Any, bool]:
    t0, t1 = e.get("t0", report.window[0]), e.get("t1", report.window[1])
    obs = bytes_transferred(report.trace, float(t0), float(t1))
    return obs, _close(obs, float(e["expected_bits"]), e)


def _eval_bytes_range(report: Report, e: Mapping) -> tuple[Any, bool]:
    obs = report.bytes_total
    return obs, float(e.get("min", -math.inf)) <= obs <= float(e.get("max", math.inf))


def _eval_recovery_lag(report: Report, e: Mapping) -> tuple[Any, bool]:
    try:
        obs = report.recovery_lag()
    except MissingRecovery:
        return None, bool(e.get("expect_none", False))
    if e.get("expect_none"):
        return obs, False
    ok = True
    if "expected_s" in e:
        ok = _close(obs, float(e["expected_s"]), e)
    if "max_s" in e:
        ok = ok and obs <= float(e["max_s"]) + 1e-9
    return obs, ok


def _eval_stage_duration(report: Report, e: Mapping) -> tuple[Any, bool]:
    rids = _request_ids(report, e.get("request"))
    obs = {rid: _timing(report, rid, e["category"]) for rid in rids}
    return obs, bool(obs) and all(_close(v, float(e["expected_s"]), e) for v in obs.values())


def _eval_stage_share(report: Report, e: Mapping) -> tuple[Any, bool]:
    rids = _request_ids(report, e.get("request"))
    obs = {rid: _timing(report, rid, e["category"]) / report.stage_timings[rid].client_request_total
           for rid in rids}
    return obs, bool(obs) and all(v >= float(e["min_share"]) for v in obs.values())


def _eval_internal_total_max(report: Report, e: Mapping) -> tuple[Any, bool]:
    obs = {rid: t.internal for rid, t in sorted(report.stage_timings.items())}
    return obs, bool(obs) and all(v < float(e["max_s"]) for v in obs.values())


def _eval_granted(report: Report, e: Mapping) -> tuple[Any, bool]:
    obs = sum(1 for o in report.outcomes.values() if o["disposition"] == Disposition.GRANTED.value)
    return obs, obs == int(e["count"])


EXPECTATION_KINDS = {
    "epoch_rate": _eval_epoch_rate,
    "bytes_total": _eval_bytes_total,
    "bytes_range": _eval_bytes_range,
    "recovery_lag": _eval_recovery_lag,
    "stage_duration": _eval_stage_duration,
    "stage_share": _eval_stage_share,
    "internal_total_max": _eval_internal_total_max,
    "granted": _eval_granted,
}


def evaluate(report: Report, expectations: list[dict]) -> list[dict]:
    results = []
    for e in expectations:
        observed, ok = EXPECTATION_KINDS[e["kind"]](report, e)
        results.append({**e, "observed": observed, "passed": bool(ok)})
    return results


# running ---------------------------------------------------------------------

def random_requests(rng: random.Random, topology_doc: Mapping, spec: Mapping) -> list[RequestSpec]:
    """Seeded requests between random node pairs of the topology."""
    nodes = sorted(n["id"] for n in topology_doc["nodes"])
    out = []
    for i in range(int(spec.get("count", 10))):
        a, b = rng.sample(nodes, 2)
        at = rng.uniform(*spec.get("arrival", (0.0, 10.0)))
        req = ResourceRequest(a, b, rng.randint(1, int(spec.get("max_strands", 1))),
                              rng.randint(0, int(spec.get("max_bid", 10))),
                              LeaseWindow(round(at, 3), round(rng.uniform(*spec.get("duration", (5.0, 30.0))), 3)),
                              float(spec.get("capacity_bps", 1e6)), f"rand{i:03d}")
        out.append(RequestSpec(round(at, 3), req))
    return out


def run_scenario(scenario: Scenario | str | Path, seed: int | None = None) -> tuple[EventLog, Report]:
    sc = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    seed = sc.seed if seed is None else seed
    rng = random.Random(seed)
    stack = build_stack(sc.topology, profile=sc.profile, params=sc.flow_params, ospf=sc.ospf,
                        monitor=sc.monitor, glsc_backup=sc.glsc_backup, mechanism=sc.mechanism,
                        costs=sc.costs, start=sc.start)
    script = list(sc.requests)
    if sc.random_requests:
        script += random_requests(rng, sc.topology, sc.random_requests)
    for name in sorted({r.request.client_name for r in script}):
        stack.ggc.register_buyer(name)
    futures: list = [None] * len(script)

    def submit(i: int, spec: RequestSpec) -> None:
        futures[i] = stack.ggc.submit(spec.request, standby=spec.standby)

    for i, spec in enumerate(script):
        stack.driver.call_at(spec.at, submit, i, spec, priority=Priority.REQUEST)
    for f in sc.flows:
        stack.substrate.add_flow(f)
    stack.substrate.inject_failure(sc.failures)
    stack.sim.run(until=sc.horizon)

    window = sc.measure or (max(0.0, sc.start), sc.horizon)
    trace = stack.substrate.trace
    report = Report(sc.name, seed, trace, window)
    report.bytes_total = bytes_transferred(trace, *window)
    pairs: dict[tuple[str, str], list[str]] = {}
    for f in sc.flows:
        pairs.setdefault(pair_key(f.src, f.dst), []).append(f.id)
    report.bytes_by_pair = {f"{a}~{b}": bytes_transferred(trace, *window, ids) for (a, b), ids in sorted(pairs.items())}
    report.recoveries = find_recoveries(trace, sc.flows, stack.substrate.failures)
    report.stage_timings = overhead_breakdown(stack.ggc.log)
    report.script_ids = [f.request_id if f is not None else "" for f in futures]
    report.outcomes = {rid: o.to_json() for rid, o in sorted(stack.ggc.outcomes.items())}
    report.expectations = evaluate(report, sc.expectations)
    logger.info("scenario %s seed %d: %s", sc.name, seed, "pass" if report.passed else "FAIL")
    return stack.ggc.log, report


def write_outputs(log: EventLog, report: Report, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.write(out / "events.jsonl")
    (out / "rates.csv").write_text(report.trace.to_csv())
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    return out


# random accounting workloads -------------------------------------------------

def random_topology(rng: random.Random, n_nodes: tuple[int, int] = (3, 5)) -> dict:
    """Small connected conduit graph with a few strands per conduit."""
    n = rng.randint(*n_nodes)
    nodes = [{"id": f"n{i}", "site": f"s{i}"} for i in range(n)]
    edges = [(rng.randrange(i), i) for i in range(1, n)]
    extra = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in edges]
    edges += rng.sample(extra, min(len(extra), rng.randint(0, 2)))
    conduits, links = [], []
    for ci, (a, b) in enumerate(edges):
        ids = [f"c{ci}l{j}" for j in range(rng.randint(1, 3))]
        conduits.append({"id": f"c{ci}", "endpoints": [f"n{a}", f"n{b}"], "links": ids})
        for lid in ids:
            links.append({"id": lid, "conduit": f"c{ci}", "seller": f"seller{rng.randint(0, 1)}",
                          "max_bandwidth_bps": 10.0, "wavelength_capacity": rng.randint(1, 3)})
    return {"nodes": nodes, "conduits": conduits, "links": links}


@dataclass
class WorkloadResult:
    seed: int
    initial: dict
    final: dict
    granted: int
    rejected: int
    failures: int
    collisions: int

    @property
    def clean(self) -> bool:
        return self.initial == self.final and self.collisions == 0


def run_random_workload(seed: int, *, n_requests: tuple[int, int] = (4, 10),
                        n_failures: tuple[int, int] = (0, 3)) -> WorkloadResult:
    """Interleaved grants, expiries and link failures on a random graph.

    Invariants are checked after every event; all leases expire and all
    links are repaired before the horizon.
    """
    rng = random.Random(seed)
    doc = random_topology(rng)
    stack = build_stack(doc, profile="ideal")
    initial = stack.topology.snapshot()
    nodes = [n["id"] for n in doc["nodes"]]
    names = [f"b{i}" for i in range(rng.randint(*n_requests))]
    for name in names:
        stack.ggc.register_buyer(name)
    futures = []
    for name in names:
        a, b = rng.sample(nodes, 2)
        start = round(rng.uniform(0, 20), 3)
        submit_at = start if rng.random() < 0.7 else round(rng.uniform(0, start), 3)
        req = ResourceRequest(a, b, rng.randint(1, 2), rng.randint(0, 10),
                              LeaseWindow(start, round(rng.uniform(1, 30), 3)), float(rng.randint(1, 10)), name)
        stack.driver.call_at(submit_at, lambda r=req: futures.append(stack.ggc.submit(r)),
                             priority=Priority.REQUEST)
    link_ids = sorted(l["id"] for l in doc["links"])
    n_fail = rng.randint(*n_failures)
    schedule = []
    for lid in rng.sample(link_ids, min(n_fail, len(link_ids))):
        t = round(rng.uniform(0, 35), 3)
        schedule.append(FailureSpec(lid, t, round(t + rng.uniform(0.5, 10), 3)))
    stack.substrate.inject_failure(schedule)
    collisions = 0
    horizon = 60.0
    sim = stack.sim
    while sim.peek() is not None and sim.peek() <= horizon:
        sim.step()
        try:
            stack.topology.check_invariants()
        except AssertionError:
            collisions += 1
    stack.ggc.expire_leases(horizon)
    outcomes = [f.result() for f in futures if f.done()]
    return WorkloadResult(seed, initial, stack.topology.snapshot(),
                          sum(o.disposition is Disposition.GRANTED for o in outcomes),
                          sum(o.disposition is not Disposition.GRANTED for o in outcomes),
                          len(schedule), collisions)
