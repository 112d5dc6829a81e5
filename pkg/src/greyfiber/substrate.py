"""Simulated physical network.

Provisioning latency comes from calibrated profiles; throughput is a fluid
max-min model over the aggregate of live circuits between an endpoint pair
(parallel circuits are load-shared, so capacities add up); OSPF failover is
reduced to its timer arithmetic.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from greyfiber.errors import UnknownLink
from greyfiber.sim import Priority, quantize
from greyfiber.topology import Circuit, LinkStatus, TopologyGraph

# Circuit provision times (seconds) measured on GENI for n links.
GENI_PROVISION_TABLE: tuple[tuple[int, float], ...] = (
    (1, 19.0), (2, 22.0), (3, 21.0), (4, 25.0), (5, 24.0),
    (10, 33.0), (20, 35.0), (30, 37.0), (40, 47.0), (50, 54.0),
)
OPTICAL_ACTIVATION_S = 0.240


@dataclass(frozen=True)
class LatencyProfile:
    name: str
    constant: float = 0.0
    table: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.constant < 0 or any(v < 0 for _, v in self.table):
            raise ValueError("latency must be non-negative")


PROFILES: dict[str, LatencyProfile] = {
    "ideal": LatencyProfile("ideal"),
    "optical": LatencyProfile("optical", constant=OPTICAL_ACTIVATION_S),
    "geni": LatencyProfile("geni", table=GENI_PROVISION_TABLE),
}


def get_profile(profile: str | LatencyProfile) -> LatencyProfile:
    if isinstance(profile, LatencyProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown latency profile {profile!r}") from None


def provision_latency(profile: str | LatencyProfile, n: int) -> float:
    """Seconds to bring ``n`` links into service as one batch."""
    if n < 1:
        raise ValueError("link count must be at least 1")
    prof = get_profile(profile)
    if not prof.table:
        return prof.constant
    xs = [x for x, _ in prof.table]
    ys = [y for _, y in prof.table]
    if n <= xs[0]:
        return ys[0]
    if n >= xs[-1]:
        return ys[-1]
    i = bisect.bisect_left(xs, n)
    if xs[i] == n:
        return ys[i]
    x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
    return y0 + (y1 - y0) * (n - x0) / (x1 - x0)


@dataclass(frozen=True)
class Flow:
    id: str
    src: str
    dst: str
    start: float
    stop: float
    demand: float = math.inf

    def __post_init__(self):
        if not self.start < self.stop:
            raise ValueError(f"flow {self.id}: start must precede stop")


@dataclass(frozen=True)
class FlowModelParams:
    efficiency: float = 1.0
    warmup: float = 0.0
    ramp: bool = False
    ramp_steps: int = 10

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.warmup < 0 or self.ramp_steps < 1:
            raise ValueError("bad warmup settings")


@dataclass(frozen=True)
class OspfTimers:
    hello: float = 10.0
    dead: float = 40.0
    wait: float = 4.0

    def __post_init__(self):
        if not (0 <= self.wait <= self.dead and 0 < self.hello <= self.dead):
            raise ValueError("OSPF timers need wait <= dead and hello <= dead")


@dataclass(frozen=True)
class FailureSpec:
    link: str
    fail_at: float
    repair_at: float | None = None

    def __post_init__(self):
        if self.repair_at is not None and not self.fail_at < self.repair_at:
            raise ValueError("repair must come after the failure")


def ospf_recovery_time(timers: OspfTimers, t_fail: float) -> float:
    """Instant traffic resumes on a pre-configured backup after a failure."""
    return t_fail + (timers.dead - timers.wait)


def max_min_share(capacity: float, demands: Sequence[float]) -> list[float]:
    """Water-filling: flows under the fair level keep their demand, the rest split evenly."""
    n = len(demands)
    alloc = [0.0] * n
    if n == 0 or capacity <= 0:
        return alloc
    order = sorted(range(n), key=lambda i: demands[i])
    remaining = capacity
    for pos, idx in enumerate(order):
        level = remaining / (n - pos)
        if demands[idx] >= level:
            for rest in order[pos:]:
                alloc[rest] = level
            return alloc
        alloc[idx] = demands[idx]
        remaining -= demands[idx]
    return alloc


def fair_share_throughput(flows: Sequence[Flow], capacities: Iterable[float],
                          params: FlowModelParams = FlowModelParams()) -> dict[str, float]:
    """Per-flow rates over a bottleneck of aggregated parallel capacities."""
    total = params.efficiency * sum(c for c in capacities if c > 0)
    rates = max_min_share(total, [f.demand for f in flows])
    return {f.id: r for f, r in zip(flows, rates)}


class RateTrace:
    """Piecewise-constant per-flow rates, one row per change."""

    def __init__(self) -> None:
        self.rows: list[tuple[float, str, float]] = []
        self._last: dict[str, float] = {}

    def record(self, t: float, flow_id: str, rate: float) -> None:
        if self._last.get(flow_id) == rate:
            return
        self._last[flow_id] = rate
        self.rows.append((quantize(t), flow_id, rate))

    def flows(self) -> list[str]:
        return sorted({fid for _, fid, _ in self.rows})

    def segments(self, flow_id: str) -> list[tuple[float, float]]:
        return [(t, r) for t, fid, r in self.rows if fid == flow_id]

    def rate_at(self, flow_id: str, t: float) -> float:
        rate = 0.0
        for ts, r in self.segments(flow_id):
            if ts > t:
                break
            rate = r
        return rate

    def aggregate_rate_at(self, t: float, flow_ids: Iterable[str] | None = None) -> float:
        ids = self.flows() if flow_ids is None else flow_ids
        return sum(self.rate_at(f, t) for f in ids)

    def change_times(self) -> list[float]:
        return sorted({t for t, _, _ in self.rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "flow_id", "rate_bps"])
        for t, fid, r in self.rows:
            w.writerow([repr(t), fid, repr(r)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RateTrace":
        trace = cls()
        for row in csv.DictReader(io.StringIO(text)):
            trace.rows.append((float(row["t_s"]), row["flow_id"], float(row["rate_bps"])))
        return trace


def bytes_transferred(trace: RateTrace | Iterable[tuple[float, str, float]], t0: float, t1: float,
                      flow_ids: Iterable[str] | None = None) -> float:
    """Time-integral of the summed flow rates over ``[t0, t1]``, in bits."""
    rows = trace.rows if isinstance(trace, RateTrace) else list(trace)
    wanted = None if flow_ids is None else set(flow_ids)
    per_flow: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for t, fid, r in rows:
        if wanted is None or fid in wanted:
            per_flow[fid].append((t, r))
    total = 0.0
    for segs in per_flow.values():
        segs.sort(key=lambda s: s[0])
        for i, (ts, r) in enumerate(segs):
            te = segs[i + 1][0] if i + 1 < len(segs) else math.inf
            lo, hi = max(ts, t0), min(te, t1)
            if hi > lo:
                total += r * (hi - lo)
    return total


def mean_rate(trace: RateTrace, flow_id: str, t0: float, t1: float) -> float:
    return bytes_transferred(trace, t0, t1, [flow_id]) / (t1 - t0)


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class _LiveCircuit:
    circuit: Circuit
    pair: tuple[str, str]
    expected_sites: frozenset[str]
    confirmed: set[str] = field(default_factory=set)
    ready_at: float = -math.inf
    live: bool = False
    failed: bool = False
    standby: bool = False
    revoked: bool = False


class Substrate:
    """Physical-layer model driven by the discrete-event scheduler.

    Link status lives on the shared ``TopologyGraph``; circuits become live
    once every site at their link's ends has configured them and carry no
    traffic after their link fails, even if it is repaired later.
    """

    def __init__(self, driver, topology: TopologyGraph, profile: str | LatencyProfile = "ideal",
                 params: FlowModelParams = FlowModelParams(), ospf: OspfTimers | None = None) -> None:
        self.driver = driver
        self.topology = topology
        self.profile = get_profile(profile)
        self.params = params
        self.ospf = ospf
        self.circuits: dict[str, _LiveCircuit] = {}
        self.lease_hops: dict[str, int] = {}
        self.lease_pair: dict[str, tuple[str, str]] = {}
        self.flows: dict[str, Flow] = {}
        self.trace = RateTrace()
        self.failures: list[tuple[str, float]] = []
        self.repairs: list[tuple[str, float]] = []
        self.ospf_activations: list[tuple[tuple[str, str], float]] = []

    # provisioning -----------------------------------------------------------

    def provision_latency(self, n: int) -> float:
        return provision_latency(self.profile, n)

    def register_lease(self, lease_id: str, endpoints: tuple[str, str], n_hops: int) -> None:
        self.lease_hops[lease_id] = n_hops
        self.lease_pair[lease_id] = pair_key(*endpoints)

    def provision(self, site: str, circuits: Sequence[Circuit], latency: float, *,
                  sites: Iterable[str] | None = None, standby: bool = False) -> float:
        """Configure circuits at ``site`` (or every listed site); ready after ``latency``."""
        now = self.driver.now()
        ready = quantize(now + latency)
        confirming = {site} if sites is None else set(sites)
        for c in circuits:
            st = self.circuits.get(c.id)
            if st is None:
                st = _LiveCircuit(c, self.lease_pair[c.lease], frozenset(self.topology.link_sites(c.link)),
                                  standby=standby)
                self.circuits[c.id] = st
            st.ready_at = max(st.ready_at, ready)
        self.driver.call_at(ready, self._confirm, [c.id for c in circuits], confirming, priority=Priority.ACTIVATE)
        return latency

    def _confirm(self, circuit_ids: list[str], sites: set[str]) -> None:
        touched = set()
        for cid in circuit_ids:
            st = self.circuits.get(cid)
            if st is None or st.revoked:
                continue
            st.confirmed |= sites
            if (not st.live and st.confirmed >= st.expected_sites
                    and self.driver.now() >= st.ready_at and not st.failed):
                st.live = True
                touched.add(st.pair)
        for pair in sorted(touched):
            self.recompute(pair)

    def set_standby(self, circuit_ids: Iterable[str], standby: bool) -> None:
        touched = set()
        for cid in circuit_ids:
            st = self.circuits[cid]
            st.standby = standby
            touched.add(st.pair)
        for pair in sorted(touched):
            self.recompute(pair)

    def revoke(self, circuit_ids: Iterable[str]) -> None:
        touched = set()
        for cid in circuit_ids:
            st = self.circuits.pop(cid, None)
            if st is not None:
                st.revoked = True
                touched.add(st.pair)
        for pair in sorted(touched):
            self.recompute(pair)

    def circuit_live(self, circuit_id: str) -> bool:
        st = self.circuits.get(circuit_id)
        return bool(st and st.live and not st.failed)

    # failures ---------------------------------------------------------------

    def inject_failure(self, schedule: Iterable[FailureSpec]) -> None:
        specs = list(schedule)
        for spec in specs:
            if spec.link not in self.topology.links:
                raise UnknownLink(spec.link)
        for spec in specs:
            self.driver.call_at(spec.fail_at, self.fail_link, spec.link, priority=Priority.FAILURE)
            if spec.repair_at is not None:
                self.driver.call_at(spec.repair_at, self.repair_link, spec.link, priority=Priority.FAILURE)

    def fail_link(self, link_id: str) -> None:
        now = self.driver.now()
        self.topology.set_link_status(link_id, LinkStatus.DOWN)
        self.failures.append((link_id, now))
        touched = set()
        for st in self.circuits.values():
            if st.circuit.link == link_id and not st.failed:
                st.failed = True
                touched.add(st.pair)
        for pair in sorted(touched):
            self.recompute(pair)
            if self.ospf is not None and any(
                    s.standby and s.pair == pair and not s.failed for s in self.circuits.values()):
                self.driver.call_at(ospf_recovery_time(self.ospf, now), self._ospf_reroute, pair,
                                    priority=Priority.ACTIVATE)

    def _ospf_reroute(self, pair: tuple[str, str]) -> None:
        standby = [cid for cid, s in self.circuits.items() if s.pair == pair and s.standby and not s.failed]
        self.ospf_activations.append((pair, self.driver.now()))
        self.set_standby(standby, False)

    def repair_link(self, link_id: str) -> None:
        self.topology.set_link_status(link_id, LinkStatus.UP)
        self.repairs.append((link_id, self.driver.now()))

    # throughput -------------------------------------------------------------

    def lease_capacity(self, lease_id: str) -> float:
        per_hop: dict[int, float] = defaultdict(float)
        for st in self.circuits.values():
            c = st.circuit
            if (c.lease == lease_id and st.live and not st.failed and not st.standby
                    and self.topology.links[c.link].status is LinkStatus.UP):
                per_hop[c.hop] += c.bandwidth
        hops = self.lease_hops.get(lease_id, 0)
        if hops == 0 or len(per_hop) < hops:
            return 0.0
        return min(per_hop.values())

    def pair_capacities(self, pair: tuple[str, str]) -> list[float]:
        leases = sorted(l for l, p in self.lease_pair.items() if p == pair)
        return [self.lease_capacity(l) for l in leases]

    def add_flow(self, flow: Flow) -> None:
        self.flows[flow.id] = flow
        pair = pair_key(flow.src, flow.dst)
        self.driver.call_at(flow.start, self.recompute, pair, priority=Priority.FLOW)
        self.driver.call_at(flow.stop, self.recompute, pair, priority=Priority.FLOW)
        if self.params.ramp and self.params.warmup > 0:
            step = self.params.warmup / self.params.ramp_steps
            for i in range(1, self.params.ramp_steps):
                self.driver.call_at(flow.start + i * step, self.recompute, pair, priority=Priority.FLOW)

    def _ramp_factor(self, flow: Flow, t: float) -> float:
        if not self.params.ramp or self.params.warmup <= 0:
            return 1.0
        elapsed = t - flow.start
        if elapsed >= self.params.warmup:
            return 1.0
        step = self.params.warmup / self.params.ramp_steps
        return (math.floor(elapsed / step + 1e-9) + 1) / self.params.ramp_steps

    def recompute(self, pair: tuple[str, str]) -> dict[str, float]:
        now = self.driver.now()
        members = sorted((f for f in self.flows.values() if pair_key(f.src, f.dst) == pair),
                         key=lambda f: f.id)
        active = [f for f in members if f.start <= now < f.stop]
        rates = fair_share_throughput(active, self.pair_capacities(pair), self.params)
        for f in members:
            if f.start <= now:
                r = rates.get(f.id, 0.0) * (self._ramp_factor(f, now) if f.id in rates else 1.0)
                self.trace.record(now, f.id, r)
        return rates
