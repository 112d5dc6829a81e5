"""Compare bytes delivered and recovery lag across the four outage setups."""

import argparse
import dataclasses
import logging

from greyfiber.harness import compare_backups, load_scenario, run_scenario

SETUPS = ["outage-none", "outage-nobackup", "outage-ospf", "outage-greyfiber"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--interval", type=float, default=None,
                    help="override the monitoring interval of the local backup setup")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    reports = {}
    for name in SETUPS:
        sc = load_scenario(name)
        if args.interval is not None and name == "outage-greyfiber":
            sc.monitor = dataclasses.replace(sc.monitor, interval=args.interval)
            sc.expectations = []
        reports[name] = run_scenario(sc)[1]

    print(f"{'setup':<18} {'Gb':>8} {'lag s':>8}")
    for name, r in reports.items():
        lag = r.recovery_lag() if r.recoveries and r.recoveries[0].recovered_at is not None else None
        print(f"{name:<18} {r.bytes_total / 1e9:>8.4f} {'-' if lag is None else f'{lag:.3f}':>8}")
    ratio = compare_backups(reports["outage-greyfiber"], reports["outage-ospf"])
    print(f"local backup recovers {ratio:.1f}x faster than OSPF")


if __name__ == "__main__":
    main()
