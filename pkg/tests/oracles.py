"""Brute-force reference implementations used to derive expected values.

These deliberately avoid the package's own algorithms: paths come from a
plain DFS, auction outcomes from exhaustive ranking or welfare maximization,
fair shares from progressive filling.
"""

from __future__ import annotations

import itertools
import math


# paths -------------------------------------------------------------------------

def simple_conduit_paths(doc: dict, src: str, dst: str) -> list[tuple[str, ...]]:
    """Every simple path from src to dst as a tuple of conduit ids."""
    adj: dict[str, list[tuple[str, str]]] = {}
    for c in doc["conduits"]:
        a, b = c["endpoints"]
        adj.setdefault(a, []).append((c["id"], b))
        adj.setdefault(b, []).append((c["id"], a))
    out = []

    def dfs(node, seen, trail):
        if node == dst:
            out.append(tuple(trail))
            return
        for cid, nxt in adj.get(node, []):
            if nxt not in seen:
                dfs(nxt, seen | {nxt}, trail + [cid])

    dfs(src, {src}, [])
    return out


def expected_paths(doc: dict, src: str, dst: str, strands: int, capacity: float,
                   free_bw: dict[str, float] | None = None, up: set[str] | None = None,
                   free_wl: dict[str, int] | None = None) -> list[tuple[tuple[str, ...], tuple[tuple[str, ...], ...]]]:
    """(conduits, hops) of qualifying paths in the documented order."""
    links = {l["id"]: l for l in doc["links"]}
    conduits = {c["id"]: c for c in doc["conduits"]}
    bw = free_bw or {lid: float(l["max_bandwidth_bps"]) for lid, l in links.items()}
    up = set(links) if up is None else up
    wl = free_wl or {lid: int(l["wavelength_capacity"]) for lid, l in links.items()}
    found = []
    for cpath in simple_conduit_paths(doc, src, dst):
        hops = []
        for cid in cpath:
            ok = sorted(l for l in conduits[cid]["links"] if l in up and wl[l] > 0 and bw[l] >= capacity and bw[l] > 0)
            if len(ok) < strands:
                break
            hops.append(tuple(ok[:strands]))
        else:
            min_free = min(bw[l] for h in hops for l in h)
            found.append(((len(cpath), -min_free, cpath), (cpath, tuple(hops))))
    found.sort(key=lambda x: x[0])
    return [p for _, p in found]


# auctions ------------------------------------------------------------------------

def _preferred(a, b):
    """True if bid a outranks bid b: higher amount, then earlier, then name."""
    return (-a[1], a[2], a[0]) < (-b[1], b[2], b[0])


def gsp_oracle(bids: list[tuple[str, int, float]], k: int, reserve: int):
    """Returns (winners [(name, payment)], losers) or None for an empty round.

    Finds the ranking as the unique permutation in which every adjacent pair
    is correctly ordered, then applies the price ladder.
    """
    eligible = [b for b in bids if b[1] >= reserve]
    if not eligible:
        return None
    ranking = None
    for perm in itertools.permutations(eligible):
        if all(_preferred(perm[i], perm[i + 1]) for i in range(len(perm) - 1)):
            ranking = perm
            break
    assert ranking is not None
    winners = []
    for j in range(min(k, len(ranking))):
        lower = [b[1] for b in ranking[j + 1:]]
        pay = lower[0] if lower else reserve
        winners.append((ranking[j][0], max(pay, reserve)))
    won = {w for w, _ in winners}
    return winners, sorted(b[0] for b in bids if b[0] not in won)


def vcg_oracle(bids: list[tuple[str, int, float]], k: int, reserve: int):
    """Welfare maximization over k identical units, seller holding each unit at ``reserve``.

    Ties in welfare go to allocations with more real winners, then to the
    set whose members rank best. Payments are Clarke pivots.
    """

    def best(pool):
        choice, choice_key = (), None
        for size in range(0, min(k, len(pool)) + 1):
            for subset in itertools.combinations(pool, size):
                if any(b[1] < reserve for b in subset):
                    continue
                welfare = sum(b[1] for b in subset) + reserve * (k - size)
                ranks = tuple(sorted((-b[1], b[2], b[0]) for b in subset))
                key = (-welfare, -size, ranks)
                if choice_key is None or key < choice_key:
                    choice, choice_key = subset, key
        welfare = sum(b[1] for b in choice) + reserve * (k - len(choice))
        return choice, welfare

    chosen, _ = best(bids)
    if not chosen:
        return None
    winners = []
    for w in chosen:
        others = [b for b in bids if b[0] != w[0]]
        _, without = best(others)
        with_others = sum(b[1] for b in chosen if b[0] != w[0]) + reserve * (k - len(chosen))
        winners.append((w[0], without - with_others))
    winners.sort(key=lambda x: next((-b[1], b[2], b[0]) for b in bids if b[0] == x[0]))
    won = {w for w, _ in winners}
    return winners, sorted(b[0] for b in bids if b[0] not in won)


# fair share -------------------------------------------------------------------

def progressive_filling(capacity: float, demands: list[float], step: float | None = None) -> list[float]:
    """Raise all unfrozen flows together; freeze a flow at its demand or when capacity runs out."""
    n = len(demands)
    rates = [0.0] * n
    active = set(range(n))
    remaining = capacity
    while active and remaining > 1e-12:
        inc = min([remaining / len(active)] + [demands[i] - rates[i] for i in active])
        for i in active:
            rates[i] += inc
        remaining -= inc * len(active)
        active = {i for i in active if demands[i] - rates[i] > 1e-12}
    return rates


def integrate_piecewise(points: list[tuple[float, float]], t0: float, t1: float) -> float:
    """Integral of a right-continuous step function given as sorted (time, value)."""
    total = 0.0
    for i, (ts, v) in enumerate(points):
        te = points[i + 1][0] if i + 1 < len(points) else math.inf
        lo, hi = max(ts, t0), min(te, t1)
        if hi > lo:
            total += v * (hi - lo)
    return total
