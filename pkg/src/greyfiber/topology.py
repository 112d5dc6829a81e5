"""Physical infrastructure graph: nodes, conduits, fiber strands and circuits.

Conduits bundle fiber links between two nodes. Circuits occupy one wavelength
on one link and reserve bandwidth on it. The graph keeps per-conduit
annotations (max/available bandwidth, total/available strands) that are
re-derived after every mutation; ``check_invariants`` recomputes everything
from scratch and compares.
"""

from __future__ import annotations

import copy
import itertools
import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path as FsPath
from typing import Any, Iterable, Mapping

import networkx as nx

from greyfiber.errors import (
    ConcurrentDepletion,
    DanglingReference,
    DoubleRelease,
    DuplicateId,
    DuplicateWavelength,
    InvalidRequest,
    SchemaError,
    UnknownLink,
    UnknownNode,
    WavelengthExhausted,
)


class LinkStatus(str, Enum):
    UP = "Up"
    DOWN = "Down"


class Composition(str, Enum):
    SEQUENTIAL = "Sequential"
    PARALLEL = "Parallel"


class RejectReason(str, Enum):
    INSUFFICIENT_STRANDS = "InsufficientStrands"
    INSUFFICIENT_CAPACITY = "InsufficientCapacity"
    NO_PATH = "NoPath"


@dataclass(frozen=True)
class Node:
    id: str
    site: str
    geo: tuple[float, float] | None = None


@dataclass(frozen=True)
class Conduit:
    id: str
    endpoints: tuple[str, str]
    links: tuple[str, ...]


@dataclass
class FiberLink:
    id: str
    conduit: str
    seller: str
    max_bandwidth: float
    available_bandwidth: float
    wavelength_capacity: int
    wavelengths: tuple[int, ...]
    wavelengths_in_use: set[int] = field(default_factory=set)
    status: LinkStatus = LinkStatus.UP
    reserve: int = 0

    def free_wavelength(self) -> int | None:
        for w in self.wavelengths:
            if w not in self.wavelengths_in_use:
                return w
        return None

    def has_free_wavelength(self) -> bool:
        return len(self.wavelengths_in_use) < self.wavelength_capacity

    def usable(self, capacity: float) -> bool:
        return (self.status is LinkStatus.UP and self.has_free_wavelength()
                and self.available_bandwidth >= capacity)


@dataclass(frozen=True)
class Circuit:
    id: str
    link: str
    wavelength: int
    bandwidth: float
    lease: str
    hop: int = 0


@dataclass(frozen=True)
class Path:
    """An end-to-end route. ``hops`` holds, per conduit traversed, the links used.

    A single hop is a parallel bundle inside one conduit; several hops chain
    conduits sequentially, each hop carrying the same number of strands.
    """

    endpoints: tuple[str, str]
    hops: tuple[tuple[str, ...], ...]
    conduits: tuple[str, ...]

    @property
    def composition(self) -> Composition:
        return Composition.PARALLEL if len(self.hops) == 1 else Composition.SEQUENTIAL

    @property
    def segments(self) -> tuple[str, ...]:
        return tuple(itertools.chain.from_iterable(self.hops))

    @property
    def strands(self) -> int:
        return len(self.hops[0]) if self.hops else 0

    def to_dict(self) -> dict:
        return {"endpoints": list(self.endpoints), "hops": [list(h) for h in self.hops],
                "conduits": list(self.conduits), "composition": self.composition.value}


@dataclass
class CircuitAllocation:
    id: str
    lease: str
    path: Path
    capacity: float
    circuits: dict[str, Circuit] = field(default_factory=dict)
    live: bool = True

    def wavelengths(self) -> dict[str, int]:
        return {c.link: c.wavelength for c in self.circuits.values()}


@dataclass(frozen=True)
class ConduitAnnotation:
    max_bandwidth: float
    available_bandwidth: float
    total_strands: int
    available_strands: int


@dataclass(frozen=True)
class AdmissibilityResult:
    admissible: bool
    paths: tuple[Path, ...] = ()
    reason: RejectReason | None = None


def _require(obj: Mapping, key: str, kind: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise SchemaError(f"{kind} entry missing field {key!r}: {obj!r}")
    return obj[key]


def _parse_geo(raw) -> tuple[float, float] | None:
    if raw is None:
        return None
    if isinstance(raw, Mapping):
        return (float(raw["lat"]), float(raw["lon"]))
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return (float(raw[0]), float(raw[1]))
    raise SchemaError(f"bad geo value {raw!r}")


class TopologyGraph:
    """Mutable resource store. Mutations are serialized by one lock."""

    def __init__(self) -> None:
        self.nodes: dict[str, Node] = {}
        self.conduits: dict[str, Conduit] = {}
        self.links: dict[str, FiberLink] = {}
        self.circuits: dict[str, Circuit] = {}
        self.allocations: dict[str, CircuitAllocation] = {}
        self.annotations: dict[str, ConduitAnnotation] = {}
        self._circuit_seq = itertools.count(1)
        self._alloc_seq = itertools.count(1)
        self._lock = threading.RLock()

    # construction -----------------------------------------------------------

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "TopologyGraph":
        graph = cls()
        graph.merge_document(doc)
        return graph

    def merge_document(self, doc: Mapping[str, Any], *, allow_update_seller: str | None = None) -> list[str]:
        """Validate ``doc`` and merge it into the graph atomically.

        Returns the ids of links that were added or updated. Links already
        present may only be updated when they belong to ``allow_update_seller``.
        """
        if not isinstance(doc, Mapping):
            raise SchemaError("topology document must be an object")
        for key in ("nodes", "conduits", "links"):
            if not isinstance(doc.get(key), list):
                raise SchemaError(f"topology document needs a {key!r} array")

        with self._lock:
            nodes = dict(self.nodes)
            conduits = dict(self.conduits)
            links = {lid: copy.copy(l) for lid, l in self.links.items()}
            touched: list[str] = []

            seen: set[str] = set()
            for raw in doc["nodes"]:
                nid = str(_require(raw, "id", "node"))
                if nid in seen:
                    raise DuplicateId(f"node {nid} declared twice")
                seen.add(nid)
                node = Node(nid, str(_require(raw, "site", "node")), _parse_geo(raw.get("geo")))
                if nid in nodes and nodes[nid].site != node.site:
                    raise DuplicateId(f"node {nid} already registered at site {nodes[nid].site}")
                nodes[nid] = node

            declared_links: dict[str, list[str]] = {}
            seen = set()
            for raw in doc["conduits"]:
                cid = str(_require(raw, "id", "conduit"))
                if cid in seen:
                    raise DuplicateId(f"conduit {cid} declared twice")
                seen.add(cid)
                ends = _require(raw, "endpoints", "conduit")
                if not isinstance(ends, list) or len(ends) != 2:
                    raise SchemaError(f"conduit {cid} endpoints must be a pair")
                a, b = str(ends[0]), str(ends[1])
                if a == b:
                    raise SchemaError(f"conduit {cid} endpoints must be distinct")
                for n in (a, b):
                    if n not in nodes:
                        raise DanglingReference(f"conduit {cid} references unknown node {n}")
                member = [str(x) for x in _require(raw, "links", "conduit")]
                if not member:
                    raise SchemaError(f"conduit {cid} has no links")
                if len(set(member)) != len(member):
                    raise DuplicateId(f"conduit {cid} lists a link twice")
                if cid in conduits:
                    if conduits[cid].endpoints != (a, b):
                        raise DuplicateId(f"conduit {cid} re-declared with other endpoints")
                    merged = tuple(sorted(set(conduits[cid].links) | set(member)))
                    conduits[cid] = Conduit(cid, (a, b), merged)
                else:
                    conduits[cid] = Conduit(cid, (a, b), tuple(member))
                declared_links[cid] = member

            seen = set()
            for raw in doc["links"]:
                lid = str(_require(raw, "id", "link"))
                if lid in seen:
                    raise DuplicateId(f"link {lid} declared twice")
                seen.add(lid)
                cid = str(_require(raw, "conduit", "link"))
                if cid not in conduits:
                    raise DanglingReference(f"link {lid} references unknown conduit {cid}")
                if lid not in conduits[cid].links:
                    raise DanglingReference(f"link {lid} is not listed by conduit {cid}")
                seller = str(_require(raw, "seller", "link"))
                max_bw = float(_require(raw, "max_bandwidth_bps", "link"))
                cap = int(_require(raw, "wavelength_capacity", "link"))
                if max_bw <= 0 or cap <= 0:
                    raise SchemaError(f"link {lid} needs positive bandwidth and wavelength capacity")
                wl = raw.get("wavelengths")
                if wl is None:
                    wavelengths = tuple(range(cap))
                else:
                    wavelengths = tuple(int(w) for w in wl)
                    if len(set(wavelengths)) != len(wavelengths):
                        raise DuplicateWavelength(f"link {lid} declares a wavelength twice")
                    if len(wavelengths) != cap:
                        raise SchemaError(f"link {lid}: {len(wavelengths)} wavelengths but capacity {cap}")
                reserve = int(raw.get("reserve", 0))
                if reserve < 0:
                    raise SchemaError(f"link {lid} has a negative reserve")

                if lid in links:
                    old = links[lid]
                    if allow_update_seller is None or old.seller != allow_update_seller or seller != old.seller:
                        raise DuplicateId(f"link {lid} already registered by seller {old.seller}")
                    if old.conduit != cid:
                        raise DuplicateId(f"link {lid} cannot move between conduits")
                    used = old.max_bandwidth - old.available_bandwidth
                    if max_bw < used:
                        raise SchemaError(f"link {lid}: new capacity below bandwidth in use")
                    if not old.wavelengths_in_use <= set(wavelengths):
                        raise SchemaError(f"link {lid}: in-use wavelengths missing from update")
                    links[lid] = replace(old, max_bandwidth=max_bw, available_bandwidth=max_bw - used,
                                         wavelength_capacity=cap, wavelengths=wavelengths,
                                         wavelengths_in_use=set(old.wavelengths_in_use), reserve=reserve)
                else:
                    status = LinkStatus(raw.get("status", "Up"))
                    links[lid] = FiberLink(lid, cid, seller, max_bw, max_bw, cap, wavelengths,
                                           status=status, reserve=reserve)
                touched.append(lid)

            for cid, member in declared_links.items():
                for lid in member:
                    if lid not in links:
                        raise DanglingReference(f"conduit {cid} lists undeclared link {lid}")

            self.nodes, self.conduits, self.links = nodes, conduits, links
            for cid in self.conduits:
                self._rederive(cid)
            return touched

    def to_document(self) -> dict:
        return {
            "nodes": [{"id": n.id, "site": n.site,
                       **({"geo": {"lat": n.geo[0], "lon": n.geo[1]}} if n.geo else {})}
                      for n in self.nodes.values()],
            "conduits": [{"id": c.id, "endpoints": list(c.endpoints), "links": list(c.links)}
                         for c in self.conduits.values()],
            "links": [{"id": l.id, "conduit": l.conduit, "seller": l.seller,
                       "max_bandwidth_bps": l.max_bandwidth, "wavelength_capacity": l.wavelength_capacity,
                       "reserve": l.reserve}
                      for l in self.links.values()],
        }

    def copy(self) -> "TopologyGraph":
        with self._lock:
            clone = TopologyGraph()
            clone.nodes = dict(self.nodes)
            clone.conduits = dict(self.conduits)
            clone.links = {k: replace(v, wavelengths_in_use=set(v.wavelengths_in_use))
                           for k, v in self.links.items()}
            clone.circuits = dict(self.circuits)
            clone.allocations = {k: replace(v, circuits=dict(v.circuits)) for k, v in self.allocations.items()}
            clone.annotations = dict(self.annotations)
            clone._circuit_seq = itertools.count(next(copy.copy(self._circuit_seq)))
            clone._alloc_seq = itertools.count(next(copy.copy(self._alloc_seq)))
            return clone

    # lookups ----------------------------------------------------------------

    def link(self, link_id: str) -> FiberLink:
        try:
            return self.links[link_id]
        except KeyError:
            raise UnknownLink(link_id) from None

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def link_sites(self, link_id: str) -> tuple[str, ...]:
        """Sites at the two ends of the link's conduit (deduplicated, ordered)."""
        a, b = self.conduits[self.link(link_id).conduit].endpoints
        sa, sb = self.nodes[a].site, self.nodes[b].site
        return (sa,) if sa == sb else (sa, sb)

    def owner_site(self, link_id: str) -> str:
        """The site responsible for monitoring and repairing a link."""
        return self.link_sites(link_id)[0]

    def circuits_on(self, link_id: str) -> list[Circuit]:
        return sorted((c for c in self.circuits.values() if c.link == link_id), key=lambda c: c.id)

    def set_link_status(self, link_id: str, status: LinkStatus) -> None:
        with self._lock:
            self.link(link_id).status = LinkStatus(status)
            self._rederive(self.links[link_id].conduit)

    # derived data -----------------------------------------------------------

    def _aggregate(self, cid: str) -> ConduitAnnotation:
        members = [self.links[l] for l in self.conduits[cid].links]
        up = [l for l in members if l.status is LinkStatus.UP]
        return ConduitAnnotation(
            max_bandwidth=sum(l.max_bandwidth for l in members),
            available_bandwidth=sum(l.available_bandwidth for l in up),
            total_strands=len(members),
            available_strands=sum(1 for l in up if l.has_free_wavelength() and l.available_bandwidth > 0),
        )

    def _rederive(self, cid: str) -> None:
        self.annotations[cid] = self._aggregate(cid)

    def snapshot(self) -> dict:
        """Counter state, comparable with ``==`` across mutations."""
        with self._lock:
            return {
                "links": {lid: (l.available_bandwidth, tuple(sorted(l.wavelengths_in_use)))
                          for lid, l in sorted(self.links.items())},
                "annotations": dict(sorted(self.annotations.items())),
            }

    def check_invariants(self) -> None:
        """Recompute all counters from the circuit table; raise AssertionError on drift."""
        with self._lock:
            per_link: dict[str, list[Circuit]] = {lid: [] for lid in self.links}
            for c in self.circuits.values():
                per_link[c.link].append(c)
            for lid, link in self.links.items():
                used = sum(c.bandwidth for c in per_link[lid])
                assert abs(link.available_bandwidth - (link.max_bandwidth - used)) <= 1e-6 * max(1.0, link.max_bandwidth), \
                    f"bandwidth drift on {lid}"
                assert 0 <= link.available_bandwidth <= link.max_bandwidth + 1e-9, f"bandwidth out of range on {lid}"
                wls = [c.wavelength for c in per_link[lid]]
                assert len(wls) == len(set(wls)), f"wavelength collision on {lid}"
                assert set(wls) == link.wavelengths_in_use, f"wavelength table drift on {lid}"
                assert len(link.wavelengths_in_use) <= link.wavelength_capacity
            for cid in self.conduits:
                assert self.annotations[cid] == self._aggregate(cid), f"annotation drift on {cid}"
            for alloc in self.allocations.values():
                for cid, c in alloc.circuits.items():
                    assert self.circuits.get(cid) == c, f"allocation {alloc.id} lost circuit {cid}"

    # path search ------------------------------------------------------------

    def _conduit_multigraph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.nodes)
        for c in self.conduits.values():
            g.add_edge(*c.endpoints, key=c.id)
        return g

    def find_candidate_paths(self, src: str, dst: str, strands: int, capacity: float, *,
                             exclude_links: Iterable[str] = (), cutoff: int | None = None) -> list[Path]:
        """Paths with ``strands`` usable links per hop, in deterministic order.

        Order: fewest hops, then largest minimum free bandwidth, then the
        conduit-id sequence. Within a conduit the lowest link ids are taken.
        """
        self.node(src), self.node(dst)
        if src == dst:
            raise InvalidRequest("source and destination must differ")
        excluded = set(exclude_links)
        with self._lock:
            g = self._conduit_multigraph()
            found: list[tuple[tuple, Path]] = []
            for edge_path in nx.all_simple_edge_paths(g, src, dst, cutoff=cutoff):
                hops: list[tuple[str, ...]] = []
                conduit_ids: list[str] = []
                for _, _, cid in edge_path:
                    usable = sorted(lid for lid in self.conduits[cid].links
                                    if lid not in excluded and self.links[lid].usable(capacity))
                    if len(usable) < strands:
                        break
                    hops.append(tuple(usable[:strands]))
                    conduit_ids.append(cid)
                else:
                    path = Path((src, dst), tuple(hops), tuple(conduit_ids))
                    min_free = min(self.links[l].available_bandwidth for l in path.segments)
                    found.append(((len(hops), -min_free, tuple(conduit_ids)), path))
            found.sort(key=lambda item: item[0])
            return [p for _, p in found]

    def check_admissibility(self, request) -> AdmissibilityResult:
        """Read-only admission test for a request-like object.

        ``request`` needs ``endpoint_a``, ``endpoint_b``, ``strands_needed``
        and ``capacity_needed``.
        """
        a, b = request.endpoint_a, request.endpoint_b
        self.node(a), self.node(b)
        if a == b:
            raise InvalidRequest("endpoints must be distinct")
        if request.strands_needed < 1:
            raise InvalidRequest("strands_needed must be at least 1")
        if request.capacity_needed <= 0:
            raise InvalidRequest("capacity_needed must be positive")
        paths = self.find_candidate_paths(a, b, request.strands_needed, request.capacity_needed)
        if paths:
            return AdmissibilityResult(True, tuple(paths))
        if not nx.has_path(self._conduit_multigraph(), a, b):
            return AdmissibilityResult(False, reason=RejectReason.NO_PATH)
        if self.find_candidate_paths(a, b, request.strands_needed, 0.0):
            return AdmissibilityResult(False, reason=RejectReason.INSUFFICIENT_CAPACITY)
        return AdmissibilityResult(False, reason=RejectReason.INSUFFICIENT_STRANDS)

    # accounting -------------------------------------------------------------

    def _validate_links(self, link_ids: Iterable[str], capacity: float) -> None:
        for lid in link_ids:
            link = self.link(lid)
            if link.status is not LinkStatus.UP:
                raise ConcurrentDepletion(f"link {lid} is down")
            if link.available_bandwidth < capacity:
                raise ConcurrentDepletion(f"link {lid} has {link.available_bandwidth} b/s left")
            if not link.has_free_wavelength():
                raise WavelengthExhausted(f"link {lid} has no free wavelength")

    def _take(self, lid: str, capacity: float, lease: str, hop: int) -> Circuit:
        link = self.links[lid]
        wl = link.free_wavelength()
        circuit = Circuit(f"c{next(self._circuit_seq)}", lid, wl, capacity, lease, hop)
        link.wavelengths_in_use.add(wl)
        link.available_bandwidth -= capacity
        self.circuits[circuit.id] = circuit
        return circuit

    def _give_back(self, circuit: Circuit) -> None:
        link = self.links[circuit.link]
        link.wavelengths_in_use.discard(circuit.wavelength)
        link.available_bandwidth = min(link.max_bandwidth, link.available_bandwidth + circuit.bandwidth)
        del self.circuits[circuit.id]

    def allocate(self, path: Path, strands: int, capacity: float, lease: str) -> CircuitAllocation:
        """Commit one circuit per (strand, hop) and debit ``capacity`` on every link used.

        Re-validates every link; on failure nothing is changed.
        """
        if capacity <= 0 or strands < 1:
            raise InvalidRequest("allocation needs positive capacity and at least one strand")
        if any(len(h) != strands for h in path.hops):
            raise InvalidRequest(f"path does not carry {strands} strands on every hop")
        segs = path.segments
        if len(set(segs)) != len(segs):
            raise InvalidRequest("path uses a link twice")
        with self._lock:
            self._validate_links(segs, capacity)
            alloc = CircuitAllocation(f"a{next(self._alloc_seq)}", lease, path, capacity)
            for hop, links in enumerate(path.hops):
                for lid in links:
                    c = self._take(lid, capacity, lease, hop)
                    alloc.circuits[c.id] = c
            self.allocations[alloc.id] = alloc
            for cid in set(path.conduits):
                self._rederive(cid)
            return alloc

    def release(self, allocation: CircuitAllocation) -> None:
        with self._lock:
            if not allocation.live:
                raise DoubleRelease(f"allocation {allocation.id} already released")
            self._drop(allocation, list(allocation.circuits))

    def release_circuits(self, allocation: CircuitAllocation, circuit_ids: Iterable[str]) -> list[Circuit]:
        """Release a subset of an allocation's circuits. Already-released ids are skipped."""
        with self._lock:
            if not allocation.live:
                return []
            ids = [c for c in circuit_ids if c in allocation.circuits]
            return self._drop(allocation, ids)

    def _drop(self, allocation: CircuitAllocation, ids: list[str]) -> list[Circuit]:
        dropped = [allocation.circuits.pop(cid) for cid in ids]
        for c in dropped:
            self._give_back(c)
        for cid in {self.links[c.link].conduit for c in dropped}:
            self._rederive(cid)
        if not allocation.circuits:
            allocation.live = False
            self.allocations.pop(allocation.id, None)
        return dropped

    def reassign(self, allocation: CircuitAllocation, circuit_id: str, new_link: str) -> Circuit:
        """Move one circuit of a live allocation onto another link of the same conduit."""
        with self._lock:
            if not allocation.live or circuit_id not in allocation.circuits:
                raise DoubleRelease(f"circuit {circuit_id} is not live in {allocation.id}")
            old = allocation.circuits[circuit_id]
            if self.link(new_link).conduit != self.links[old.link].conduit:
                raise InvalidRequest("replacement link must share the conduit")
            if new_link in {c.link for c in allocation.circuits.values()}:
                raise InvalidRequest("replacement link already carries this allocation")
            self._validate_links([new_link], old.bandwidth)
            new = self._take(new_link, old.bandwidth, old.lease, old.hop)
            del allocation.circuits[circuit_id]
            self._give_back(old)
            allocation.circuits[new.id] = new
            hops = tuple(tuple(new_link if l == old.link else l for l in h) for h in allocation.path.hops)
            allocation.path = replace(allocation.path, hops=hops)
            self._rederive(self.links[new_link].conduit)
            return new


def load_topology(source: str | FsPath | Mapping[str, Any]) -> TopologyGraph:
    """Build a validated graph from a JSON file path or an already-parsed document."""
    if isinstance(source, Mapping):
        doc = source
    else:
        try:
            doc = json.loads(FsPath(source).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{source}: {exc}") from exc
    return TopologyGraph.from_document(doc)


def split_by_seller(doc: Mapping[str, Any]) -> dict[str, dict]:
    """Cut a topology document into per-seller registration fragments."""
    nodes = {n["id"]: n for n in doc["nodes"]}
    conduits = {c["id"]: c for c in doc["conduits"]}
    out: dict[str, dict] = {}
    for link in doc["links"]:
        frag = out.setdefault(link["seller"], {"nodes": [], "conduits": [], "links": []})
        frag["links"].append(link)
    for seller, frag in out.items():
        mine = {l["id"] for l in frag["links"]}
        cids = sorted({l["conduit"] for l in frag["links"]})
        for cid in cids:
            c = conduits[cid]
            frag["conduits"].append({**c, "links": [l for l in c["links"] if l in mine]})
        nids = sorted({n for cid in cids for n in conduits[cid]["endpoints"]})
        frag["nodes"] = [nodes[n] for n in nids]
    return out
