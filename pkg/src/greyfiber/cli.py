"""Command line entry points: ``greyfiber`` and ``glsc``."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from greyfiber.errors import GreyFiberError
from greyfiber.glsc import MonitorPolicy
from greyfiber.harness import list_scenarios, load_scenario, run_scenario, write_outputs
from greyfiber.protocol import Codec, ZlibCodec

log = logging.getLogger("greyfiber")


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _codec(name: str) -> Codec:
    return ZlibCodec() if name == "zlib" else Codec()


def cmd_run_scenario(args) -> int:
    scenario = load_scenario(args.scenario)
    events, report = run_scenario(scenario, args.seed)
    out = write_outputs(events, report, args.out)
    for e in report.expectations:
        print(f"{'PASS' if e['passed'] else 'FAIL'}  {e['kind']:<20} observed={e['observed']}")
    print(f"{scenario.name}: {'PASS' if report.passed else 'FAIL'} -> {out}")
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    path = Path(args.dir) / "report.json"
    if not path.exists():
        print(f"no report.json in {args.dir}", file=sys.stderr)
        return 2
    rep = json.loads(path.read_text())
    print(f"scenario {rep['scenario']}  seed {rep['seed']}  {'PASS' if rep['passed'] else 'FAIL'}")
    print(f"window {rep['window'][0]}..{rep['window'][1]} s  bytes {rep['bytes_total_bits'] / 1e9:.4f} Gb")
    for r in rep["recoveries"]:
        lag = "none" if r["lag_s"] is None else f"{r['lag_s']:.3f} s"
        print(f"failure {r['link']} at {r['failed_at']} s on {'~'.join(r['pair'])}: recovery lag {lag}")
    for rid, t in rep["stage_timings"].items():
        print(f"{rid}: exchange {t['exchange']:.3f}  config {t['config_generation']:.3f}  "
              f"circuits {t['circuit_creation']:.3f}  total {t['client_request_total']:.3f}  "
              f"internal {t['internal']:.3f}")
    for e in rep["expectations"]:
        print(f"{'PASS' if e['passed'] else 'FAIL'}  {e['kind']}")
    return 0 if rep["passed"] else 1


def _wait_forever(stop) -> None:
    done = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: done.set())
    signal.signal(signal.SIGTERM, lambda *_: done.set())
    done.wait()
    stop()


def cmd_serve_ggc(args) -> int:
    from greyfiber.service import GGCServer

    srv = GGCServer(args.host, args.port, mechanism=args.mechanism, codec=_codec(args.codec)).start()
    print(f"ggc listening on {srv.address[0]}:{srv.address[1]}", flush=True)
    _wait_forever(srv.stop)
    return 0


def cmd_serve_exchange(args) -> int:
    from greyfiber.service import ExchangeServer

    srv = ExchangeServer(args.host, args.port, mechanism=args.mechanism, codec=_codec(args.codec)).start()
    print(f"exchange listening on {srv.address[0]}:{srv.address[1]}", flush=True)
    _wait_forever(srv.stop)
    return 0


def cmd_serve_glsc(args) -> int:
    from greyfiber.service import GLSCAgent

    agent = GLSCAgent(args.site, args.ggc, profile=args.profile,
                      policy=MonitorPolicy(interval=args.monitor_interval), codec=_codec(args.codec))
    print(f"glsc {args.site} connected to {args.ggc[0]}:{args.ggc[1]}", flush=True)
    _wait_forever(agent.close)
    return 0


def _glsc_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--site", required=True)
    p.add_argument("--ggc", type=_addr, required=True, help="HOST:PORT of the global controller")
    p.add_argument("--monitor-interval", type=float, default=1.0)
    p.add_argument("--profile", default="ideal", choices=["ideal", "optical", "geni"])
    p.add_argument("--codec", default="identity", choices=["identity", "zlib"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greyfiber", description="Dark fiber exchange control plane.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-scenario", help="run a scenario on the virtual clock")
    p.add_argument("scenario", help=f"scenario file or bundled name ({', '.join(list_scenarios())})")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)

    for name, func in (("serve-ggc", cmd_serve_ggc), ("serve-exchange", cmd_serve_exchange)):
        p = sub.add_parser(name)
        p.add_argument("--host", default="127.0.0.1")
        p.add_argument("--port", type=int, default=7600 if name == "serve-ggc" else 7601)
        p.add_argument("--mechanism", default="GSP", choices=["GSP", "VCG"])
        p.add_argument("--codec", default="identity", choices=["identity", "zlib"])
        p.set_defaults(func=func)

    p = sub.add_parser("serve-glsc")
    _glsc_arguments(p)
    p.set_defaults(func=cmd_serve_glsc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except GreyFiberError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def glsc_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="glsc", description="Site controller agent.")
    _glsc_arguments(parser)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return cmd_serve_glsc(args)


if __name__ == "__main__":
    sys.exit(main())
