import copy
import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import chain, diamond, dumbbell, link, request
from oracles import expected_paths
from greyfiber.errors import (
    ConcurrentDepletion,
    DanglingReference,
    DoubleRelease,
    DuplicateId,
    DuplicateWavelength,
    InvalidRequest,
    SchemaError,
    UnknownNode,
    WavelengthExhausted,
)
from greyfiber.topology import (
    Composition,
    ConduitAnnotation,
    LinkStatus,
    RejectReason,
    TopologyGraph,
    load_topology,
    split_by_seller,
)


def test_load_single_link_annotation():
    g = load_topology(dumbbell(1, bw=20e6, wl=8))
    assert list(g.conduits) == ["C1"]
    assert g.annotations["C1"] == ConduitAnnotation(20e6, 20e6, 1, 1)
    assert g.nodes["A"].geo == (1.0, 2.0)
    g.check_invariants()


def test_load_from_file(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps(chain("ABC")))
    g = load_topology(p)
    assert sorted(g.nodes) == ["A", "B", "C"]


def test_bad_json_file(tmp_path):
    p = tmp_path / "t.json"
    p.write_text("{nope")
    with pytest.raises(SchemaError):
        load_topology(p)


def test_duplicate_link_id():
    doc = dumbbell(2)
    doc["links"][1]["id"] = "L1"
    with pytest.raises(DuplicateId):
        load_topology(doc)


@pytest.mark.parametrize("mutate, exc", [
    (lambda d: d["links"][0].update(conduit="nope"), DanglingReference),
    (lambda d: d["conduits"][0].update(endpoints=["A", "Z"]), DanglingReference),
    (lambda d: d["conduits"][0]["links"].append("ghost"), DanglingReference),
    (lambda d: d["links"][0].update(wavelengths=[1, 1, 2, 3, 4, 5, 6, 7]), DuplicateWavelength),
    (lambda d: d["links"][0].pop("max_bandwidth_bps"), SchemaError),
    (lambda d: d["links"][0].update(max_bandwidth_bps=0), SchemaError),
    (lambda d: d["conduits"][0].update(endpoints=["A", "A"]), SchemaError),
    (lambda d: d["conduits"][0].update(links=[]), SchemaError),
    (lambda d: d.pop("nodes"), SchemaError),
    (lambda d: d["nodes"].append({"id": "A", "site": "S9"}), DuplicateId),
])
def test_schema_violations(mutate, exc):
    doc = dumbbell(1)
    mutate(doc)
    with pytest.raises(exc):
        load_topology(doc)


def test_merge_is_atomic_on_conflict():
    g = load_topology(dumbbell(2))
    before = g.to_document()
    other = dumbbell(1)
    other["links"][0]["seller"] = "rival"
    other["links"].append(link("L9", "C1", seller="rival"))
    other["conduits"][0]["links"].append("L9")
    with pytest.raises(DuplicateId):
        g.merge_document(other, allow_update_seller="rival")
    assert g.to_document() == before


def test_same_seller_update_keeps_usage():
    g = load_topology(dumbbell(1, bw=20e6))
    path = g.find_candidate_paths("A", "B", 1, 5e6)[0]
    g.allocate(path, 1, 5e6, "x")
    update = dumbbell(1, bw=40e6)
    g.merge_document(update, allow_update_seller="acme")
    assert g.links["L1"].max_bandwidth == 40e6
    assert g.links["L1"].available_bandwidth == 35e6
    assert g.annotations["C1"].available_bandwidth == 35e6
    g.check_invariants()


def test_round_trip_document():
    doc = chain("ABCD", per_conduit=2)
    g = load_topology(doc)
    again = load_topology(g.to_document())
    assert again.snapshot() == g.snapshot()


def test_split_by_seller_covers_everything():
    doc = dumbbell(3)
    doc["links"][2]["seller"] = "other"
    parts = split_by_seller(doc)
    assert sorted(parts) == ["acme", "other"]
    g = TopologyGraph()
    for s in sorted(parts):
        g.merge_document(parts[s], allow_update_seller=s)
    assert sorted(g.links) == ["L1", "L2", "L3"]
    assert g.conduits["C1"].links == ("L1", "L2", "L3")


# path search -------------------------------------------------------------------

def test_chain_paths_match_bruteforce():
    doc = chain("ABCD", per_conduit=2)
    g = load_topology(doc)
    got = [(p.conduits, p.hops) for p in g.find_candidate_paths("A", "D", 1, 1e6)]
    assert got == expected_paths(doc, "A", "D", 1, 1e6)
    assert got == [(("AB", "BC", "CD"), (("AB-0",), ("BC-0",), ("CD-0",)))]
    path = g.find_candidate_paths("A", "D", 1, 1e6)[0]
    assert path.composition is Composition.SEQUENTIAL
    assert len(path.segments) == 3


def test_dumbbell_five_parallel():
    g = load_topology(dumbbell(5))
    paths = g.find_candidate_paths("A", "B", 5, 1e6)
    assert len(paths) == 1
    assert paths[0].composition is Composition.PARALLEL
    assert paths[0].segments == ("L1", "L2", "L3", "L4", "L5")


def test_chain_single_link_each():
    g = load_topology(chain("ABC"))
    paths = g.find_candidate_paths("A", "C", 1, 1e6)
    assert len(paths) == 1 and len(paths[0].segments) == 2


def test_diamond_tie_break_by_conduit_ids():
    doc = diamond()
    g = load_topology(doc)
    got = [p.conduits for p in g.find_candidate_paths("A", "D", 1, 1e6)]
    assert got == [("AB", "BD"), ("AC", "CD")]
    assert got == [c for c, _ in expected_paths(doc, "A", "D", 1, 1e6)]


def test_diamond_prefers_more_free_bandwidth():
    g = load_topology(diamond())
    first = g.find_candidate_paths("A", "D", 1, 1e6)[0]
    g.allocate(first, 1, 5e6, "x")
    assert g.find_candidate_paths("A", "D", 1, 1e6)[0].conduits == ("AC", "CD")


def test_unknown_node_and_same_endpoints():
    g = load_topology(dumbbell(1))
    with pytest.raises(UnknownNode):
        g.find_candidate_paths("A", "Q", 1, 1.0)
    with pytest.raises(InvalidRequest):
        g.find_candidate_paths("A", "A", 1, 1.0)


def test_path_search_is_deterministic():
    g = load_topology(chain("ABCDE", per_conduit=3))
    assert g.find_candidate_paths("A", "E", 2, 1e6) == g.find_candidate_paths("A", "E", 2, 1e6)


@st.composite
def random_graph(draw):
    n = draw(st.integers(2, 5))
    names = [f"n{i}" for i in range(n)]
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=6))
    nodes = [{"id": x, "site": f"s{x}"} for x in names]
    conduits, links = [], []
    for ci, (a, b) in enumerate(chosen):
        k = draw(st.integers(1, 3))
        ids = [f"c{ci}l{j}" for j in range(k)]
        conduits.append({"id": f"c{ci}", "endpoints": [a, b], "links": ids})
        for lid in ids:
            links.append(link(lid, f"c{ci}", bw=float(draw(st.integers(1, 10))), wl=draw(st.integers(1, 3))))
    return {"nodes": nodes, "conduits": conduits, "links": links}


@settings(max_examples=150, deadline=None)
@given(random_graph(), st.integers(1, 3), st.integers(1, 10))
def test_candidate_paths_equal_bruteforce(doc, strands, capacity):
    g = load_topology(doc)
    got = [(p.conduits, p.hops) for p in g.find_candidate_paths("n0", "n1", strands, float(capacity))]
    assert got == expected_paths(doc, "n0", "n1", strands, float(capacity))
    for p in g.find_candidate_paths("n0", "n1", strands, float(capacity)):
        assert all(len(h) == strands for h in p.hops)
        assert all(g.links[l].available_bandwidth >= capacity for l in p.segments)


# admissibility ------------------------------------------------------------------

def test_admissible_with_partially_used_conduit():
    g = load_topology(dumbbell(10, wl=1))
    first = g.find_candidate_paths("A", "B", 2, 1e6)[0]
    g.allocate(first, 2, 1e6, "x")
    free = sum(1 for l in g.links.values() if l.usable(1e6))
    assert free == 8 == g.annotations["C1"].available_strands
    res = g.check_admissibility(request(strands=3))
    assert res.admissible and res.paths[0].segments == ("L2", "L3", "L4")


def test_insufficient_strands():
    g = load_topology(dumbbell(8))
    res = g.check_admissibility(request(strands=9))
    assert not res.admissible and res.reason is RejectReason.INSUFFICIENT_STRANDS


def test_insufficient_capacity_and_no_path():
    g = load_topology(dumbbell(1, bw=1e6))
    assert g.check_admissibility(request(capacity=2e6)).reason is RejectReason.INSUFFICIENT_CAPACITY
    doc = dumbbell(1)
    doc["nodes"].append({"id": "Z", "site": "S9"})
    g2 = load_topology(doc)
    assert g2.check_admissibility(request(b="Z")).reason is RejectReason.NO_PATH


def test_admissibility_rejects_malformed_request():
    g = load_topology(dumbbell(1))
    with pytest.raises(InvalidRequest):
        g.check_admissibility(request(b="A"))
    with pytest.raises(InvalidRequest):
        g.check_admissibility(request(strands=0))
    with pytest.raises(InvalidRequest):
        g.check_admissibility(request(capacity=0))


def test_admissibility_leaves_graph_unchanged():
    g = load_topology(chain("ABC"))
    snap = g.snapshot()
    g.check_admissibility(request("A", "C"))
    assert g.snapshot() == snap


# accounting ---------------------------------------------------------------------

def test_distinct_wavelengths_on_one_link():
    g = load_topology(dumbbell(1))
    p = g.find_candidate_paths("A", "B", 1, 1e6)[0]
    a1 = g.allocate(p, 1, 1e6, "x")
    a2 = g.allocate(p, 1, 1e6, "y")
    w1, w2 = a1.wavelengths()["L1"], a2.wavelengths()["L1"]
    assert (w1, w2) == (0, 1)


def test_wavelength_exhaustion():
    g = load_topology(dumbbell(1, wl=8))
    p = g.find_candidate_paths("A", "B", 1, 1.0)[0]
    for i in range(8):
        g.allocate(p, 1, 1.0, f"x{i}")
    snap = g.snapshot()
    with pytest.raises(WavelengthExhausted):
        g.allocate(p, 1, 1.0, "x9")
    assert g.snapshot() == snap


def test_allocate_release_restores_snapshot():
    g = load_topology(chain("ABCD", per_conduit=2))
    snap = g.snapshot()
    p = g.find_candidate_paths("A", "D", 2, 3e6)[0]
    alloc = g.allocate(p, 2, 3e6, "x")
    assert len(alloc.circuits) == 6
    assert g.links["AB-0"].available_bandwidth == 17e6
    g.check_invariants()
    g.release(alloc)
    assert g.snapshot() == snap
    with pytest.raises(DoubleRelease):
        g.release(alloc)


def test_release_after_failure_keeps_status():
    g = load_topology(dumbbell(1))
    snap = g.snapshot()
    alloc = g.allocate(g.find_candidate_paths("A", "B", 1, 1e6)[0], 1, 1e6, "x")
    g.set_link_status("L1", LinkStatus.DOWN)
    g.release(alloc)
    assert g.links["L1"].status is LinkStatus.DOWN
    assert g.snapshot()["links"] == snap["links"]


def test_concurrent_depletion_is_atomic():
    g = load_topology(chain("ABC"))
    p = g.find_candidate_paths("A", "C", 1, 15e6)[0]
    g.allocate(g.find_candidate_paths("B", "C", 1, 10e6)[0], 1, 10e6, "other")
    snap = g.snapshot()
    with pytest.raises(ConcurrentDepletion):
        g.allocate(p, 1, 15e6, "x")
    assert g.snapshot() == snap


def test_allocate_rejects_bad_shapes():
    g = load_topology(dumbbell(2))
    p = g.find_candidate_paths("A", "B", 2, 1.0)[0]
    with pytest.raises(InvalidRequest):
        g.allocate(p, 1, 1.0, "x")
    with pytest.raises(InvalidRequest):
        g.allocate(p, 2, 0.0, "x")


def test_release_circuits_is_idempotent():
    g = load_topology(dumbbell(2))
    snap = g.snapshot()
    alloc = g.allocate(g.find_candidate_paths("A", "B", 2, 1.0)[0], 2, 1.0, "x")
    ids = sorted(alloc.circuits)
    assert len(g.release_circuits(alloc, ids[:1])) == 1
    assert g.release_circuits(alloc, ids[:1]) == []
    g.release_circuits(alloc, ids)
    assert not alloc.live and g.snapshot() == snap
    assert g.release_circuits(alloc, ids) == []


def test_reassign_moves_within_conduit():
    g = load_topology(dumbbell(3))
    alloc = g.allocate(g.find_candidate_paths("A", "B", 1, 1e6)[0], 1, 1e6, "x")
    (cid,) = alloc.circuits
    new = g.reassign(alloc, cid, "L3")
    assert new.link == "L3" and alloc.path.segments == ("L3",)
    assert g.links["L1"].available_bandwidth == 20e6
    g.check_invariants()
    with pytest.raises(InvalidRequest):
        g.reassign(alloc, new.id, "L3")


def test_copy_is_independent():
    g = load_topology(dumbbell(2))
    clone = g.copy()
    clone.allocate(clone.find_candidate_paths("A", "B", 1, 1.0)[0], 1, 1.0, "x")
    assert g.circuits == {} and clone.circuits
    alloc = g.allocate(g.find_candidate_paths("A", "B", 1, 1.0)[0], 1, 1.0, "y")
    assert set(alloc.circuits).isdisjoint(set()) and g.links["L2"].wavelengths_in_use == set()


def test_last_strand_race_has_one_winner():
    g = load_topology(dumbbell(1, wl=1))
    p = g.find_candidate_paths("A", "B", 1, 1.0)[0]
    results = []
    barrier = threading.Barrier(8)

    def worker(i):
        barrier.wait()
        try:
            g.allocate(p, 1, 1.0, f"x{i}")
            results.append(True)
        except (ConcurrentDepletion, WavelengthExhausted):
            results.append(False)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results.count(True) == 1
    g.check_invariants()


def test_disjoint_concurrent_allocations_both_succeed():
    g = load_topology(dumbbell(2, wl=1))
    paths = [g.find_candidate_paths("A", "B", 2, 1.0)[0]]
    hop_a, hop_b = paths[0].hops[0]
    from greyfiber.topology import Path
    pa = Path(("A", "B"), ((hop_a,),), ("C1",))
    pb = Path(("A", "B"), ((hop_b,),), ("C1",))
    out = []
    ts = [threading.Thread(target=lambda p=p: out.append(g.allocate(p, 1, 1.0, "x"))) for p in (pa, pb)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert len(out) == 2


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 2), st.integers(1, 8), st.booleans()), min_size=1, max_size=25))
def test_allocate_release_sequences_restore_counters(ops):
    g = load_topology(chain("ABC", per_conduit=3, bw=20.0, wl=3))
    snap = g.snapshot()
    live = []
    for strands, cap, release_one in ops:
        if release_one and live:
            g.release(live.pop(0))
        else:
            paths = g.find_candidate_paths("A", "C", strands, float(cap))
            if paths:
                live.append(g.allocate(paths[0], strands, float(cap), "x"))
        g.check_invariants()
    for a in live:
        g.release(a)
    assert g.snapshot() == snap
