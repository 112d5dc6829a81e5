"""Global control: registration, request classification, the provisioning
pipeline, configuration generation and the lease lifecycle.

Requests arriving at the same instant form one sealed round. Requests between
the same pair of endpoints compete in one lot; the number of winning slots is
how many of them, taken in bid order, the graph can hold at once. Winners then
run the remaining stages each on their own timeline.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from collections import defaultdict
from concurrent.futures import Future
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Iterable, Mapping

from greyfiber.errors import (
    AllocationError,
    EmptyRound,
    InvalidRequest,
    LinkDown,
    UnknownNode,
    WavelengthExhausted,
)
from greyfiber.eventlog import EventLog
from greyfiber.exchange import Bid, Exchange, Mechanism, rank_bids
from greyfiber.glsc import SiteConfig
from greyfiber.request import ResourceRequest
from greyfiber.sim import Priority, SimDriver, quantize
from greyfiber.substrate import pair_key
from greyfiber.topology import CircuitAllocation, Path, TopologyGraph

logger = logging.getLogger(__name__)

HOUR = 3600.0
DAY = 24 * HOUR
YEAR = 365 * DAY


class Immediacy(str, Enum):
    REALTIME = "Realtime"
    NON_REALTIME = "NonRealtime"


class Timescale(str, Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"
    EXTRA_LARGE = "ExtraLarge"


@dataclass(frozen=True)
class ProvisionClass:
    immediacy: Immediacy
    timescale: Timescale
    backup_required: bool = False
    elastic: bool = False


def timescale_of(duration_s: float) -> Timescale:
    if duration_s < HOUR:
        return Timescale.SMALL
    if duration_s < DAY:
        return Timescale.MEDIUM
    if duration_s < YEAR:
        return Timescale.LARGE
    return Timescale.EXTRA_LARGE


def classify_request(request: ResourceRequest, now: float) -> ProvisionClass:
    immediacy = Immediacy.REALTIME if request.time.start <= now else Immediacy.NON_REALTIME
    return ProvisionClass(immediacy, timescale_of(request.time.duration_s),
                          request.backup_required, request.elastic)


@dataclass(frozen=True)
class StageCosts:
    """Virtual seconds charged per control-plane stage in simulation.

    Defaults reproduce the measured split of roughly 177 ms in the exchange
    and 124 ms of configuration generation, about 330 ms end to end.
    """

    accept_bid: float = 0.002
    auction: float = 0.175
    winner_notify: float = 0.004
    graph_query: float = 0.003
    admissibility: float = 0.001
    config_generation: float = 0.124
    config_push: float = 0.008
    circuit_ack: float = 0.008
    counter_update: float = 0.001
    buyer_notify: float = 0.004

    @classmethod
    def from_json(cls, obj: Mapping[str, float] | None) -> "StageCosts":
        if not obj:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown stage costs: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})

    def internal_total(self) -> float:
        return sum(getattr(self, f.name) for f in fields(self))


class LeaseState(str, Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    EXPIRED = "Expired"
    TORN_DOWN = "TornDown"


@dataclass
class Lease:
    id: str
    request_id: str
    buyer: str
    request: ResourceRequest
    allocation: CircuitAllocation
    price: int
    round_id: str
    start: float | None = None
    expiry: float | None = None
    state: LeaseState = LeaseState.PENDING
    handles: dict[str, str] = field(default_factory=dict)
    standby: bool = False

    @property
    def path(self) -> Path:
        # follows local repairs, which rewrite the allocation's path in place
        return self.allocation.path

    def connectivity(self) -> dict:
        return {
            "lease": self.id,
            "path": self.allocation.path.to_dict(),
            "circuits": [{"id": c.id, "link": c.link, "wavelength": c.wavelength}
                         for c in sorted(self.allocation.circuits.values(), key=lambda c: c.id)],
        }


class Disposition(str, Enum):
    GRANTED = "Granted"
    REJECTED = "Rejected"
    OUTBID = "Outbid"


@dataclass(frozen=True)
class LeaseOutcome:
    request_id: str
    disposition: Disposition
    lease: Lease | None = None
    reason: str | None = None
    payment: int | None = None
    connectivity: dict | None = None

    def to_json(self) -> dict:
        return {"request_id": self.request_id, "disposition": self.disposition.value,
                "lease": self.lease.id if self.lease else None, "reason": self.reason,
                "payment": self.payment, "connectivity": self.connectivity}


@dataclass(frozen=True)
class ConfigBundle:
    lease: str
    configs: tuple[SiteConfig, ...]

    @property
    def sites(self) -> tuple[str, ...]:
        return tuple(c.site for c in self.configs)


@dataclass(frozen=True)
class TeardownAction:
    lease: str
    sites: tuple[str, ...]
    at: float


def generate_configuration(topology: TopologyGraph, path: Path, lease: Lease) -> ConfigBundle:
    """One site config per distinct site on the path, listing that site's circuits."""
    nodes: list[str] = [path.endpoints[0]]
    for cid in path.conduits:
        a, b = topology.conduits[cid].endpoints
        nodes.append(b if a == nodes[-1] else a)
    sites: list[str] = []
    for n in nodes:
        s = topology.nodes[n].site
        if s not in sites:
            sites.append(s)
    circuits = sorted(lease.allocation.circuits.values(), key=lambda c: (c.hop, c.link))
    window = (lease.request.time.start, lease.request.time.duration_s)
    configs = []
    for s in sites:
        local = tuple(c for c in circuits if s in topology.link_sites(c.link))
        configs.append(SiteConfig(s, lease.id, lease.allocation.id, path.endpoints, len(path.hops), local, window))
    return ConfigBundle(lease.id, tuple(configs))


class GGC:
    def __init__(self, topology: TopologyGraph | None = None, *, exchange: Exchange | None = None,
                 driver=None, costs: StageCosts = StageCosts(), mechanism: Mechanism | str = Mechanism.GSP,
                 log: EventLog | None = None) -> None:
        self.topology = topology or TopologyGraph()
        self.exchange = exchange or Exchange(link_exists=lambda l: l in self.topology.links, mechanism=mechanism)
        self.driver = driver or SimDriver()
        self.costs = costs
        self.mechanism = Mechanism(mechanism)
        self.log = log if log is not None else EventLog()
        self.glscs: dict[str, object] = {}
        self.leases: dict[str, Lease] = {}
        self.outcomes: dict[str, LeaseOutcome] = {}
        self.requests: dict[str, ResourceRequest] = {}
        self.tokens: dict[str, str] = {}
        self.sent: list[tuple[str, str, dict]] = []
        self.status: dict[str, dict] = {}
        self.escalations: list[dict] = []
        self.wall: dict[str, dict[str, float]] = defaultdict(dict)
        self._pending: list[tuple[str, ResourceRequest, Future, bool]] = []
        self._round_scheduled = False
        self._rid = itertools.count(1)
        self._lid = itertools.count(1)
        self._lock = threading.RLock()

    # wiring -----------------------------------------------------------------

    def attach_glsc(self, glsc) -> None:
        self.glscs[glsc.site] = glsc
        glsc.request_of = lambda lease: self.leases[lease].request_id if lease in self.leases else lease
        if hasattr(glsc, "log") and glsc.log is None:
            glsc.log = self.log

    def _send(self, kind: str, dest: str, payload: dict) -> None:
        self.sent.append((kind, dest, payload))

    def receive(self, site: str, kind: str, payload: dict) -> None:
        """Entry point for messages coming up from site controllers."""
        if kind == "STATUS_REPORT":
            for r in payload.get("reports", []):
                self.status[r["link"]] = r
        elif kind == "FAILURE_NOTIFY" and payload.get("leases"):
            self.on_escalation(site, payload["link"], payload["leases"])

    # registration -----------------------------------------------------------

    def register_seller(self, seller: str, fragment: Mapping) -> list[str]:
        """Merge a seller's topology fragment, list its links, forward to sites."""
        touched = self.topology.merge_document(fragment, allow_update_seller=seller)
        self.exchange.register_seller(seller)
        for lid in touched:
            link = self.topology.links[lid]
            existing = self.exchange.offering_for_link(lid)
            if existing is not None and existing.reserve != link.reserve:
                self.exchange.close_offering(existing.id)
            self.exchange.register_offering(seller, lid, link.reserve, self.driver.now())
        by_site: dict[str, list[str]] = defaultdict(list)
        for lid in touched:
            for s in self.topology.link_sites(lid):
                by_site[s].append(lid)
        for site in sorted(by_site):
            self._send("REGISTER", site, {"seller": seller, "links": by_site[site]})
            glsc = self.glscs.get(site)
            if glsc is not None:
                glsc.register_links(by_site[site])
        return sorted(by_site)

    def register_buyer(self, client_name: str) -> str:
        self.exchange.register_buyer(client_name)
        token = f"buyer-{len(self.tokens) + 1:04d}"
        self.tokens[client_name] = token
        return token

    def classify_request(self, request: ResourceRequest, now: float | None = None) -> ProvisionClass:
        return classify_request(request, self.driver.now() if now is None else now)

    # submission -------------------------------------------------------------

    def _new_request_id(self) -> str:
        return f"R{next(self._rid):04d}"

    def submit(self, request: ResourceRequest, *, standby: bool = False) -> Future:
        """Queue a request. Non-realtime ones wait until their start time."""
        fut: Future = Future()
        rid = self._new_request_id()
        fut.request_id = rid
        with self._lock:
            self.requests[rid] = request
        start = request.time.start
        if start > self.driver.now():
            self.driver.call_at(start, self._enqueue, rid, request, fut, standby, priority=Priority.REQUEST)
        else:
            self._enqueue(rid, request, fut, standby)
        return fut

    def submit_round(self, requests: Iterable[ResourceRequest]) -> list[Future]:
        entries = []
        for req in requests:
            fut: Future = Future()
            rid = self._new_request_id()
            fut.request_id = rid
            self.requests[rid] = req
            entries.append((rid, req, fut, False))
        self.driver.spawn(self._round(entries), Priority.ROUND)
        return [e[2] for e in entries]

    def _enqueue(self, rid: str, request: ResourceRequest, fut: Future, standby: bool) -> None:
        if not self.driver.virtual:
            self.driver.spawn(self._round([(rid, request, fut, standby)]))
            return
        with self._lock:
            self._pending.append((rid, request, fut, standby))
            if self._round_scheduled:
                return
            self._round_scheduled = True
        self.driver.call_at(self.driver.now(), self._close_round, priority=Priority.ROUND)

    def _close_round(self) -> None:
        with self._lock:
            entries, self._pending = self._pending, []
            self._round_scheduled = False
        if entries:
            self.driver.spawn(self._round(entries), Priority.PROCESS)

    def handle_resource_request(self, request: ResourceRequest) -> LeaseOutcome:
        fut = self.submit(request)
        if self.driver.virtual:
            self.driver.sim.run(stop=fut.done)
        return fut.result()

    def _resolve(self, fut: Future, outcome: LeaseOutcome) -> None:
        with self._lock:
            self.outcomes[outcome.request_id] = outcome
        if not fut.done():
            fut.set_result(outcome)

    # the pipeline -----------------------------------------------------------

    def _stage(self, rid: str, stage: str, t0: float, w0: float) -> None:
        self.log.append(rid, stage, quantize(t0) if self.driver.virtual else t0,
                        quantize(self.driver.now()) if self.driver.virtual else self.driver.now())
        self.wall[rid][stage] = time.perf_counter() - w0

    def _cost(self, name: str) -> float:
        return getattr(self.costs, name) if self.driver.virtual else 0.0

    def _lot_reserve(self, a: str, b: str) -> int:
        try:
            paths = self.topology.find_candidate_paths(a, b, 1, 0.0)
        except (UnknownNode, InvalidRequest):
            return 0
        if not paths:
            return 0
        total = 0
        for cid in paths[0].conduits:
            reserves = [o.reserve for l in self.topology.conduits[cid].links
                        if (o := self.exchange.offering_for_link(l)) is not None]
            total += max(reserves, default=0)
        return total

    def _supply(self, ranked: list[Bid], by_bidder: dict[str, ResourceRequest]) -> int:
        """How many of the ranked requests fit together, in bid order."""
        scratch = self.topology.copy()
        fitted = 0
        for bid in ranked:
            req = by_bidder[bid.bidder]
            adm = scratch.check_admissibility(req)
            if not adm.admissible:
                break
            try:
                scratch.allocate(adm.paths[0], req.strands_needed, req.capacity_needed, "dry-run")
            except AllocationError:
                break
            fitted += 1
        return fitted

    def _round(self, entries):
        t0, w0 = self.driver.now(), time.perf_counter()
        accepted: list[tuple[str, ResourceRequest, Future, bool]] = []
        deferred = []
        seen: set[tuple[tuple[str, str], str]] = set()
        for rid, req, fut, standby in entries:
            reason = None
            try:
                req.validate()
                self.topology.node(req.endpoint_a), self.topology.node(req.endpoint_b)
            except (InvalidRequest, UnknownNode) as exc:
                reason = f"InvalidRequest: {exc}"
            if reason is None and req.client_name not in self.exchange.buyers:
                reason = "UnregisteredBuyer"
            if reason is not None:
                self._resolve(fut, LeaseOutcome(rid, Disposition.REJECTED, reason=reason))
                continue
            key = (pair_key(req.endpoint_a, req.endpoint_b), req.client_name)
            if key in seen:
                deferred.append((rid, req, fut, standby))
                continue
            seen.add(key)
            accepted.append((rid, req, fut, standby))
        yield self._cost("accept_bid")
        for rid, *_ in accepted:
            self._stage(rid, "accept_bid", t0, w0)
        if deferred:
            self.driver.spawn(self._round(deferred), Priority.PROCESS)

        t1, w1 = self.driver.now(), time.perf_counter()
        lots: dict[tuple[str, str], list] = defaultdict(list)
        for entry in accepted:
            lots[pair_key(entry[1].endpoint_a, entry[1].endpoint_b)].append(entry)
        winners = []
        losers = []
        for pair in sorted(lots):
            items = lots[pair]
            lot_id = f"lot:{pair[0]}~{pair[1]}"
            bids = [Bid(req.client_name, lot_id, req.bid_amount, req.value, float(i))
                    for i, (_, req, _, _) in enumerate(items)]
            by_bidder = {req.client_name: req for _, req, _, _ in items}
            entry_of = {req.client_name: e for e in items for req in [e[1]]}
            reserve = self._lot_reserve(*pair)
            eligible = rank_bids(b for b in bids if b.amount >= reserve)
            k = max(1, self._supply(eligible, by_bidder))
            try:
                round_id, outcome = self.exchange.clear_lot(bids, k, reserve, self.mechanism)
            except EmptyRound:
                losers.extend((e, "BelowReserve") for e in items)
                continue
            for w in outcome.winners:
                winners.append((entry_of[w.bidder], w.payment, round_id))
            for name in outcome.losers:
                below = by_bidder[name].bid_amount < reserve
                losers.append((entry_of[name], "BelowReserve" if below else None))
            self._send("AUCTION_RESULT", "ggc", {"round": round_id, **outcome.to_json()})
        yield self._cost("auction")
        for rid, *_ in accepted:
            self._stage(rid, "auction", t1, w1)
        for (rid, req, fut, _), reason in losers:
            if reason is None:
                self._resolve(fut, LeaseOutcome(rid, Disposition.OUTBID, reason="Outbid"))
            else:
                self._resolve(fut, LeaseOutcome(rid, Disposition.REJECTED, reason=reason))
        for (rid, req, fut, standby), payment, round_id in winners:
            self.driver.spawn(self._provision(rid, req, fut, standby, payment, round_id), Priority.PROCESS)

    def _reject(self, rid: str, fut: Future, round_id: str, req: ResourceRequest, reason: str) -> None:
        self.exchange.cancel_obligation(round_id, req.client_name)
        self._resolve(fut, LeaseOutcome(rid, Disposition.REJECTED, reason=reason))

    def _provision(self, rid, req: ResourceRequest, fut: Future, standby: bool, payment: int, round_id: str):
        t, w = self.driver.now(), time.perf_counter()
        self._send("AUCTION_RESULT", "ggc", {"request_id": rid, "winner": req.client_name, "payment": payment})
        yield self._cost("winner_notify")
        self._stage(rid, "winner_notify", t, w)

        t, w = self.driver.now(), time.perf_counter()
        adm = self.topology.check_admissibility(req)
        yield self._cost("graph_query")
        self._stage(rid, "graph_query", t, w)

        t, w = self.driver.now(), time.perf_counter()
        yield self._cost("admissibility")
        self._stage(rid, "admissibility", t, w)
        if not adm.admissible:
            self._reject(rid, fut, round_id, req, adm.reason.value)
            return

        t, w = self.driver.now(), time.perf_counter()
        lease_id = f"L{next(self._lid):04d}"
        alloc = None
        candidates = list(adm.paths)
        for attempt in range(2):
            for path in candidates:
                try:
                    alloc = self.topology.allocate(path, req.strands_needed, req.capacity_needed, lease_id)
                    break
                except AllocationError:
                    continue
            if alloc is not None or attempt:
                break
            candidates = self.topology.find_candidate_paths(req.endpoint_a, req.endpoint_b,
                                                            req.strands_needed, req.capacity_needed)
        if alloc is None:
            yield self._cost("config_generation")
            self._stage(rid, "config_generation", t, w)
            self._reject(rid, fut, round_id, req, "ConcurrentDepletion")
            return
        lease = Lease(lease_id, rid, req.client_name, req, alloc, payment, round_id, standby=standby)
        with self._lock:
            self.leases[lease_id] = lease
        bundle = generate_configuration(self.topology, alloc.path, lease)
        yield self._cost("config_generation")
        self._stage(rid, "config_generation", t, w)

        t, w = self.driver.now(), time.perf_counter()
        for cfg in bundle.configs:
            self._send("CONFIG_PUSH", cfg.site, cfg.to_json())
        yield self._cost("config_push")
        self._stage(rid, "config_push", t, w)

        t, w = self.driver.now(), time.perf_counter()
        applied = []
        latency = 0.0
        try:
            for cfg in bundle.configs:
                glsc = self.glscs[cfg.site]
                handle = glsc.apply_configuration(cfg)
                applied.append((glsc, handle))
                latency = max(latency, handle.latency)
        except (LinkDown, WavelengthExhausted, KeyError) as exc:
            for glsc, handle in applied:
                glsc.teardown_circuit(handle.id)
            if alloc.live:
                self.topology.release(alloc)
            lease.state = LeaseState.TORN_DOWN
            yield 0.0
            self._stage(rid, "circuit_setup", t, w)
            self._reject(rid, fut, round_id, req, type(exc).__name__)
            return
        lease.handles = {glsc.site: handle.id for glsc, handle in applied}
        if standby:
            for glsc, _ in applied:
                glsc.substrate.set_standby(list(alloc.circuits), True)
        yield latency if self.driver.virtual else 0.0
        self._stage(rid, "circuit_setup", t, w)
        t_live = self.driver.now()

        t, w = self.driver.now(), time.perf_counter()
        yield self._cost("circuit_ack")
        self._stage(rid, "circuit_ack", t, w)

        t, w = self.driver.now(), time.perf_counter()
        for cid in set(alloc.path.conduits):
            self.topology._rederive(cid)
        yield self._cost("counter_update")
        self._stage(rid, "counter_update", t, w)

        t, w = self.driver.now(), time.perf_counter()
        lease.start = t_live
        lease.expiry = t_live + req.time.duration_s
        lease.state = LeaseState.ACTIVE
        self.driver.call_at(lease.expiry, self.expire_leases, priority=Priority.EXPIRY)
        info = lease.connectivity()
        self._send("LEASE_OUTCOME", req.client_name, {"request_id": rid, "disposition": "Granted", **info})
        yield self._cost("buyer_notify")
        self._stage(rid, "buyer_notify", t, w)
        self._resolve(fut, LeaseOutcome(rid, Disposition.GRANTED, lease, payment=payment, connectivity=info))

    def generate_configuration(self, path: Path, lease: Lease) -> ConfigBundle:
        return generate_configuration(self.topology, path, lease)

    # lifecycle --------------------------------------------------------------

    def _teardown(self, lease: Lease) -> tuple[str, ...]:
        sites = []
        for site, handle in sorted(lease.handles.items()):
            glsc = self.glscs.get(site)
            self._send("TEARDOWN", site, {"lease": lease.id, "handle": handle})
            if glsc is not None and handle in glsc.handles:
                glsc.teardown_circuit(handle)
            sites.append(site)
        lease.handles = {}
        if lease.allocation.live:
            self.topology.release(lease.allocation)
        return tuple(sites)

    def expire_leases(self, now: float | None = None) -> list[TeardownAction]:
        now = self.driver.now() if now is None else now
        actions = []
        with self._lock:
            due = [l for l in sorted(self.leases.values(), key=lambda l: l.id)
                   if l.state is LeaseState.ACTIVE and l.expiry is not None and l.expiry <= now]
            for lease in due:
                lease.state = LeaseState.EXPIRED
                actions.append(TeardownAction(lease.id, self._teardown(lease), now))
        return actions

    def teardown_lease(self, lease_id: str) -> TeardownAction:
        with self._lock:
            lease = self.leases[lease_id]
            if lease.state in (LeaseState.EXPIRED, LeaseState.TORN_DOWN):
                return TeardownAction(lease.id, (), self.driver.now())
            lease.state = LeaseState.TORN_DOWN
            return TeardownAction(lease.id, self._teardown(lease), self.driver.now())

    def on_escalation(self, site: str, link: str, lease_ids: Iterable[str]) -> None:
        for lease_id in sorted(lease_ids):
            self.driver.spawn(self._reroute(site, link, lease_id), Priority.PROCESS)

    def _reroute(self, site: str, link: str, lease_id: str):
        """Replace a lease's whole path when its site cannot repair locally."""
        t = self.driver.now()
        lease = self.leases.get(lease_id)
        record = {"site": site, "link": link, "lease": lease_id, "ts": t, "resolved": False}
        self.escalations.append(record)
        if lease is None or lease.state is not LeaseState.ACTIVE:
            return
        req = lease.request
        old = lease.allocation
        paths = self.topology.find_candidate_paths(req.endpoint_a, req.endpoint_b, req.strands_needed,
                                                   req.capacity_needed,
                                                   exclude_links={c.link for c in old.circuits.values()})
        yield self._cost("graph_query")
        new = None
        for path in paths:
            try:
                new = self.topology.allocate(path, req.strands_needed, req.capacity_needed, lease.id)
                break
            except AllocationError:
                continue
        if new is None:
            return
        staging = Lease(lease.id, lease.request_id, lease.buyer, req, new, lease.price, lease.round_id)
        bundle = generate_configuration(self.topology, new.path, staging)
        yield self._cost("config_generation")
        handles = {}
        latency = 0.0
        for cfg in bundle.configs:
            glsc = self.glscs[cfg.site]
            h = glsc.apply_configuration(cfg)
            handles[cfg.site] = h.id
            latency = max(latency, h.latency)
        yield latency if self.driver.virtual else 0.0
        if lease.state is not LeaseState.ACTIVE:
            # expired while the replacement was being set up
            for s, h in handles.items():
                self.glscs[s].teardown_circuit(h)
            if new.live:
                self.topology.release(new)
            return
        self._teardown(lease)
        lease.allocation, lease.handles = new, handles
        record["resolved"] = True
        record["restored_at"] = self.driver.now()
        self.log.append(lease.request_id, "escalation_backup", t, self.driver.now())
