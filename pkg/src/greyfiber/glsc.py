"""Local site control: configure circuits, monitor links, repair locally.

A GLSC owns the links whose conduit starts at one of its nodes. It monitors
those that carry live circuits, and when a probe finds one down it moves the
affected circuits to the next free strand of the same conduit. If the conduit
has nothing left it escalates to the global controller.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

from greyfiber.errors import LinkDown, UnknownHandle, WavelengthExhausted
from greyfiber.sim import Priority, quantize
from greyfiber.topology import Circuit, CircuitAllocation, LinkStatus, TopologyGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SiteConfig:
    site: str
    lease: str
    allocation: str
    endpoints: tuple[str, str]
    n_hops: int
    circuits: tuple[Circuit, ...]
    window: tuple[float, float]

    @property
    def links(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for c in self.circuits:
            out.setdefault(c.link, []).append(c.wavelength)
        return out

    def to_json(self) -> dict:
        return {
            "site": self.site, "lease": self.lease, "allocation": self.allocation,
            "endpoints": list(self.endpoints), "n_hops": self.n_hops,
            "circuits": [{"id": c.id, "link": c.link, "wavelength": c.wavelength,
                          "bandwidth": c.bandwidth, "lease": c.lease, "hop": c.hop} for c in self.circuits],
            "window": {"start": self.window[0], "duration_s": self.window[1]},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SiteConfig":
        circuits = tuple(Circuit(c["id"], c["link"], int(c["wavelength"]), float(c["bandwidth"]),
                                 c["lease"], int(c.get("hop", 0))) for c in obj["circuits"])
        return cls(obj["site"], obj["lease"], obj["allocation"], tuple(obj["endpoints"]), int(obj["n_hops"]),
                   circuits, (float(obj["window"]["start"]), float(obj["window"]["duration_s"])))


@dataclass(frozen=True)
class StatusReport:
    link: str
    ts: float
    rtt: float
    loss: float
    utilization: float
    stability: int

    def __post_init__(self):
        if not (0 <= self.loss <= 1 and 0 <= self.utilization <= 1):
            raise ValueError("loss and utilization are fractions")


@dataclass(frozen=True)
class FailureEvent:
    link: str
    site: str
    ts: float


@dataclass(frozen=True)
class MonitorPolicy:
    interval: float = 1.0
    probe: str = "ping"
    phase: float = 0.0
    rtt: float = 0.001

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("monitor interval must be positive")


@dataclass
class CircuitHandle:
    id: str
    site: str
    lease: str
    allocation: str
    circuit_ids: list[str]
    latency: float
    applied_at: float


@dataclass
class BackupAction:
    site: str
    link: str
    detected_at: float
    replacements: list[tuple[str, Circuit]] = field(default_factory=list)
    latency: float = 0.0
    restored_at: float | None = None
    escalated: list[str] = field(default_factory=list)
    reason: str | None = None


class GLSC:
    """Site controller working against a shared topology store and a substrate."""

    def __init__(self, site: str, topology: TopologyGraph, substrate, driver, *,
                 policy: MonitorPolicy = MonitorPolicy(), backup: bool = True,
                 notify: Callable[[str, dict], None] | None = None, log=None) -> None:
        self.site = site
        self.topology = topology
        self.substrate = substrate
        self.driver = driver
        self.policy = policy
        self.backup = backup
        self.notify = notify or (lambda kind, payload: None)
        self.log = log
        self.handles: dict[str, CircuitHandle] = {}
        self.registered_links: set[str] = set()
        self.reports: list[StatusReport] = []
        self.actions: list[BackupAction] = []
        self.sent: list[tuple[str, dict]] = []
        self._stability: dict[str, int] = {}
        self._down_reported: set[str] = set()
        self._last_probe: dict[str, float] = {}
        self._monitoring = False
        self._seq = itertools.count(1)
        self.request_of: Callable[[str], str] = lambda lease: lease

    def _send(self, kind: str, payload: dict) -> None:
        self.sent.append((kind, payload))
        self.notify(kind, payload)

    def owns(self, link_id: str) -> bool:
        return self.topology.owner_site(link_id) == self.site

    def register_links(self, link_ids) -> None:
        self.registered_links.update(link_ids)

    # configuration ----------------------------------------------------------

    def apply_configuration(self, config: SiteConfig) -> CircuitHandle:
        if config.site != self.site:
            raise ValueError(f"config for site {config.site} pushed to {self.site}")
        for c in config.circuits:
            if self.site not in self.topology.link_sites(c.link):
                raise ValueError(f"link {c.link} is not reachable from site {self.site}")
        try:
            for c in config.circuits:
                link = self.topology.link(c.link)
                if link.status is not LinkStatus.UP:
                    raise LinkDown(c.link)
                if self.topology.circuits.get(c.id) != c or c.wavelength not in link.wavelengths_in_use:
                    raise WavelengthExhausted(f"wavelength {c.wavelength} on {c.link} not reserved")
        except (LinkDown, WavelengthExhausted) as exc:
            self._send("FAILURE_NOTIFY", {"site": self.site, "lease": config.lease, "error": type(exc).__name__,
                                          "detail": str(exc)})
            raise
        self.substrate.register_lease(config.lease, config.endpoints, config.n_hops)
        latency = self.substrate.provision_latency(len(config.links)) if config.circuits else 0.0
        self.substrate.provision(self.site, config.circuits, latency)
        handle = CircuitHandle(f"{self.site}/h{next(self._seq)}", self.site, config.lease, config.allocation,
                               [c.id for c in config.circuits], latency, self.driver.now())
        self.handles[handle.id] = handle
        self._send("CONFIG_ACK", {"site": self.site, "handle": handle.id, "latency_s": latency})
        if not self._monitoring and self.driver.virtual:
            self.start_monitoring()
        return handle

    def teardown_circuit(self, handle_id: str) -> None:
        """Revoke a handle's circuits and release those this site owns. Idempotent per circuit."""
        handle = self.handles.pop(handle_id, None)
        if handle is None:
            raise UnknownHandle(handle_id)
        self.substrate.revoke(handle.circuit_ids)
        alloc = self.topology.allocations.get(handle.allocation)
        if alloc is not None:
            owned = [cid for cid, c in alloc.circuits.items() if self.owns(c.link)]
            self.topology.release_circuits(alloc, owned)
        self._send("TEARDOWN_ACK", {"site": self.site, "handle": handle_id})

    # monitoring -------------------------------------------------------------

    def monitored_links(self) -> list[str]:
        links = set()
        for h in self.handles.values():
            for cid in h.circuit_ids:
                c = self.topology.circuits.get(cid)
                if c is not None and self.owns(c.link):
                    links.add(c.link)
        return sorted(links)

    def set_interval(self, interval: float) -> None:
        self.policy = MonitorPolicy(interval, self.policy.probe, self.policy.phase, self.policy.rtt)

    def start_monitoring(self) -> None:
        """Schedule probes on the virtual clock at phase + k * interval."""
        self._monitoring = True
        now = self.driver.now()
        k = max(0, -(-(now - self.policy.phase) // self.policy.interval))
        self.driver.call_at(self.policy.phase + k * self.policy.interval, self._tick, priority=Priority.PROBE)

    def _tick(self) -> None:
        events = self.poll_monitor(self.driver.now())
        for ev in events:
            if isinstance(ev, FailureEvent):
                self.on_failure(ev)
        self.driver.call_at(quantize(self.driver.now() + self.policy.interval), self._tick, priority=Priority.PROBE)

    def poll_monitor(self, now: float) -> list[StatusReport | FailureEvent]:
        out: list[StatusReport | FailureEvent] = []
        for lid in self.monitored_links():
            last = self._last_probe.get(lid)
            if last is not None and now - last < self.policy.interval - 1e-9:
                continue
            self._last_probe[lid] = now
            link = self.topology.links[lid]
            if link.status is LinkStatus.DOWN:
                self._stability[lid] = 0
                if lid not in self._down_reported:
                    self._down_reported.add(lid)
                    out.append(FailureEvent(lid, self.site, now))
                continue
            self._down_reported.discard(lid)
            self._stability[lid] = self._stability.get(lid, 0) + 1
            used = link.max_bandwidth - link.available_bandwidth
            out.append(StatusReport(lid, now, self.policy.rtt, 0.0,
                                    min(1.0, max(0.0, used / link.max_bandwidth)), self._stability[lid]))
        reports = [r for r in out if isinstance(r, StatusReport)]
        if reports:
            self.reports.extend(reports)
            self._send("STATUS_REPORT", {"site": self.site, "ts": now, "reports": [r.__dict__ for r in reports]})
        return out

    # failure handling -------------------------------------------------------

    def _allocation_of(self, circuit_id: str) -> CircuitAllocation | None:
        for alloc in self.topology.allocations.values():
            if circuit_id in alloc.circuits:
                return alloc
        return None

    def _next_free_link(self, conduit: str, bandwidth: float, avoid: set[str]) -> str | None:
        for lid in sorted(self.topology.conduits[conduit].links):
            if lid not in avoid and self.topology.links[lid].usable(bandwidth):
                return lid
        return None

    def on_failure(self, event: FailureEvent) -> BackupAction | None:
        link_id = event.link
        if not self.owns(link_id):
            raise ValueError(f"site {self.site} does not own link {link_id}")
        affected = self.topology.circuits_on(link_id)
        if not affected:
            return None
        action = BackupAction(self.site, link_id, event.ts)
        conduit = self.topology.links[link_id].conduit
        stranded: set[str] = set()
        if self.backup:
            for c in affected:
                alloc = self._allocation_of(c.id)
                if alloc is None:
                    continue
                avoid = {x.link for x in alloc.circuits.values()}
                new_link = self._next_free_link(conduit, c.bandwidth, avoid)
                if new_link is None:
                    stranded.add(c.lease)
                    continue
                new = self.topology.reassign(alloc, c.id, new_link)
                action.replacements.append((c.id, new))
                for h in self.handles.values():
                    if c.id in h.circuit_ids:
                        h.circuit_ids[h.circuit_ids.index(c.id)] = new.id
        else:
            stranded = {c.lease for c in affected}

        if action.replacements:
            new_circuits = [new for _, new in action.replacements]
            n_links = len({c.link for c in new_circuits})
            action.latency = self.substrate.provision_latency(n_links)
            self.substrate.revoke([old for old, _ in action.replacements])
            self.substrate.provision(self.site, new_circuits, action.latency,
                                     sites=self.topology.link_sites(link_id))
            action.restored_at = quantize(event.ts + action.latency)
            self._send("PROVISION_BACKUP", {"site": self.site, "link": link_id,
                                            "circuits": [n.id for n in new_circuits], "latency_s": action.latency})
            if self.log is not None:
                for lease in sorted({n.lease for n in new_circuits}):
                    self.log.append(self.request_of(lease), "local_backup", event.ts, action.restored_at)
        if stranded:
            action.escalated = sorted(stranded)
            action.reason = "NoLocalResource" if self.backup else "BackupDisabled"
            if self.backup:
                self._send("FAILURE_NOTIFY", {"site": self.site, "link": link_id, "leases": action.escalated,
                                              "ts": event.ts})
        self.actions.append(action)
        return action
