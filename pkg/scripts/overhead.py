"""Measure internal control-plane overhead per request, on the wall clock."""

import argparse
import logging
import statistics

from greyfiber.harness import measure_wall_overhead
from greyfiber.request import LeaseWindow, ResourceRequest


def dumbbell(n):
    return {
        "nodes": [{"id": "A", "site": "S1"}, {"id": "B", "site": "S2"}],
        "conduits": [{"id": "C1", "endpoints": ["A", "B"], "links": [f"L{i + 1}" for i in range(n)]}],
        "links": [{"id": f"L{i + 1}", "conduit": "C1", "seller": "acme", "max_bandwidth_bps": 20e6,
                   "wavelength_capacity": 4} for i in range(n)],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", "--requests", type=int, default=50)
    ap.add_argument("--profile", default="ideal", choices=["ideal", "optical", "geni"])
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    reqs = [ResourceRequest("A", "B", 1, 10, LeaseWindow(0.0, 3600.0), 1e6, f"client{i}")
            for i in range(args.requests)]
    timings = measure_wall_overhead(dumbbell(args.requests), reqs, profile=args.profile)
    internal = [t.internal * 1e3 for t in timings.values()]
    print(f"{len(internal)} granted, internal overhead ms: median {statistics.median(internal):.3f}  "
          f"max {max(internal):.3f}")


if __name__ == "__main__":
    main()
