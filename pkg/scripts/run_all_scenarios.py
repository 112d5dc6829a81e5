"""Run every bundled scenario and write its outputs under one directory."""

import argparse
import logging
from pathlib import Path

from greyfiber.harness import list_scenarios, run_scenario, write_outputs

log = logging.getLogger("run_all")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    failed = 0
    for name in list_scenarios():
        events, report = run_scenario(name, args.seed)
        out = write_outputs(events, report, args.out / name)
        log.info("wrote %s", out)
        failed += not report.passed
        print(f"{'PASS' if report.passed else 'FAIL'}  {name:<28} {len(events.records):>5} events  -> {out}")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
