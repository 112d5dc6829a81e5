"""Per-request pipeline timings for the scaling scenario (circuits per request 1..50)."""

import argparse
import logging

from greyfiber.harness import run_scenario

SIZES = [1, 2, 3, 4, 5, 10, 20, 30, 40, 50]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    _, report = run_scenario("scaling", args.seed)
    print(f"{'n':>3} {'exchange':>9} {'config':>8} {'circuits':>9} {'total':>8} {'internal':>9}")
    for n, rid in zip(SIZES, report.script_ids):
        t = report.stage_timings[rid]
        print(f"{n:>3} {t.exchange:>9.3f} {t.config_generation:>8.3f} {t.circuit_creation:>9.3f} "
              f"{t.client_request_total:>8.3f} {t.internal:>9.3f}")


if __name__ == "__main__":
    main()
