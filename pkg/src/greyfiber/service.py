"""Service mode on the real clock: GGC, GLSC agents and a standalone exchange
talking the framed protocol over TCP.

The GGC keeps the only topology store. For each connected site it runs a
``GLSC`` whose substrate is a proxy that forwards circuit work to the remote
agent, so local repair logic is the same code as in simulation.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

from greyfiber.errors import GreyFiberError, ProtocolError
from greyfiber.exchange import Bid, Exchange
from greyfiber.ggc import GGC
from greyfiber.glsc import GLSC, FailureEvent, MonitorPolicy
from greyfiber.protocol import Codec, Message, Peer
from greyfiber.request import ResourceRequest
from greyfiber.sim import RealtimeDriver
from greyfiber.substrate import provision_latency
from greyfiber.topology import LinkStatus, TopologyGraph

logger = logging.getLogger(__name__)


class Server:
    """Accept loop handing each connection to a ``Peer`` with one handler."""

    def __init__(self, host: str, port: int, handler, codec: Codec = Codec(), name: str = "server") -> None:
        self.handler = handler
        self.codec = codec
        self.name = name
        self.sock = socket.create_server((host, port))
        self.peers: list[Peer] = []
        self._thread = threading.Thread(target=self._accept_loop, name=f"{name}-accept", daemon=True)
        self._stopped = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    def start(self) -> "Server":
        self._thread.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stopped.is_set():
            try:
                conn, _ = self.sock.accept()
            except OSError:
                break
            peer = Peer(conn, self.handler, self.codec, name=self.name)
            self.peers.append(peer)
            peer.start()

    def serve_forever(self) -> None:
        self._accept_loop()

    def stop(self) -> None:
        self._stopped.set()
        self.sock.close()
        for p in self.peers:
            p.close()


class RemoteSubstrate:
    """Substrate interface that forwards circuit work to a GLSC agent."""

    def __init__(self, peer: Peer, profile: str = "ideal", timeout: float = 120.0) -> None:
        self.peer = peer
        self.profile = profile
        self.timeout = timeout

    def provision_latency(self, n: int) -> float:
        return provision_latency(self.profile, n)

    def register_lease(self, lease_id, endpoints, n_hops) -> None:
        pass

    def provision(self, site, circuits, latency, *, sites=None, standby=False) -> float:
        payload = {"circuits": [{"id": c.id, "link": c.link, "wavelength": c.wavelength,
                                 "bandwidth": c.bandwidth, "lease": c.lease} for c in circuits]}
        reply = self.peer.request(Message("CONFIG_PUSH", payload), self.timeout)
        return float(reply.payload.get("latency_s", latency))

    def revoke(self, circuit_ids) -> None:
        self.peer.request(Message("TEARDOWN", {"circuits": list(circuit_ids)}), self.timeout)

    def set_standby(self, circuit_ids, standby) -> None:
        pass


class GGCServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0, *, mechanism: str = "GSP",
                 codec: Codec = Codec()) -> None:
        self.topology = TopologyGraph()
        self.driver = RealtimeDriver()
        self.ggc = GGC(self.topology, driver=self.driver, mechanism=mechanism)
        self.server = Server(host, port, self.handle, codec, name="ggc")
        self._glsc_lock = threading.Lock()

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    def start(self) -> "GGCServer":
        self.server.start()
        return self

    def stop(self) -> None:
        self.driver.cancel_all()
        self.server.stop()

    def handle(self, peer: Peer, msg: Message) -> Message | None:
        p = msg.payload
        try:
            if msg.type == "REGISTER":
                site = p["site"]
                glsc = GLSC(site, self.topology, RemoteSubstrate(peer, p.get("profile", "ideal")), self.driver,
                            notify=lambda kind, payload, s=site: self.ggc.receive(s, kind, payload))
                with self._glsc_lock:
                    self.ggc.attach_glsc(glsc)
                    glsc.register_links([l for l in self.topology.links if site in self.topology.link_sites(l)])
                return msg.reply("ACK", {"site": site})
            if msg.type == "REGISTER_SELLER":
                sites = self.ggc.register_seller(p["seller"], p["fragment"])
                return msg.reply("ACK", {"sites": sites})
            if msg.type == "REGISTER_BUYER":
                return msg.reply("ACK", {"token": self.ggc.register_buyer(p["client_name"])})
            if msg.type == "RESOURCE_REQUEST":
                outcome = self.ggc.handle_resource_request(ResourceRequest.from_json(p))
                return msg.reply("LEASE_OUTCOME", outcome.to_json())
            if msg.type == "STATUS_REPORT":
                self.ggc.receive(p["site"], "STATUS_REPORT", p)
                return None
            if msg.type == "FAILURE_NOTIFY":
                site, link = p["site"], p["link"]
                self.topology.set_link_status(link, LinkStatus.DOWN)
                action = self.ggc.glscs[site].on_failure(FailureEvent(link, site, msg.ts))
                return msg.reply("ACK", {"replaced": len(action.replacements) if action else 0,
                                         "escalated": action.escalated if action else []})
        except (GreyFiberError, KeyError, ValueError) as exc:
            return msg.reply("ERROR", {"error": f"{type(exc).__name__}: {exc}"})
        return msg.reply("ERROR", {"error": f"unexpected message {msg.type}"})


class GLSCAgent:
    """Site-side agent: applies pushed circuits after the profile latency and probes links."""

    def __init__(self, site: str, ggc_addr: tuple[str, int], *, profile: str = "ideal",
                 policy: MonitorPolicy = MonitorPolicy(), codec: Codec = Codec()) -> None:
        self.site = site
        self.profile = profile
        self.policy = policy
        self.circuits: dict[str, dict] = {}
        self.link_status: dict[str, str] = {}
        self.links: set[str] = set()
        self._reported: set[str] = set()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self.peer = Peer.connect(*ggc_addr, handler=self.handle, codec=codec, name=f"glsc-{site}")
        self.peer.request(Message("REGISTER", {"site": site, "profile": profile}))
        self._monitor = threading.Thread(target=self._monitor_loop, name=f"glsc-{site}-monitor", daemon=True)
        self._monitor.start()

    def handle(self, peer: Peer, msg: Message) -> Message | None:
        p = msg.payload
        if msg.type == "REGISTER":
            with self._lock:
                self.links.update(p.get("links", []))
            return None
        if msg.type == "CONFIG_PUSH":
            circuits = p.get("circuits", [])
            latency = provision_latency(self.profile, len({c["link"] for c in circuits})) if circuits else 0.0
            time.sleep(latency)
            with self._lock:
                for c in circuits:
                    self.circuits[c["id"]] = c
                    self.link_status.setdefault(c["link"], "Up")
            return msg.reply("CONFIG_ACK", {"site": self.site, "latency_s": latency})
        if msg.type == "TEARDOWN":
            with self._lock:
                for cid in p.get("circuits", []):
                    self.circuits.pop(cid, None)
            return msg.reply("ACK", {"site": self.site})
        return msg.reply("ERROR", {"error": f"unexpected message {msg.type}"})

    def fail_link(self, link: str) -> None:
        with self._lock:
            self.link_status[link] = "Down"

    def poll(self) -> None:
        with self._lock:
            active = sorted({c["link"] for c in self.circuits.values()})
            down = [l for l in active if self.link_status.get(l) == "Down" and l not in self._reported]
            healthy = [l for l in active if self.link_status.get(l, "Up") == "Up"]
            self._reported.update(down)
        now = time.time()
        for link in down:
            try:
                self.peer.request(Message("FAILURE_NOTIFY", {"site": self.site, "link": link}))
            except ProtocolError as exc:
                logger.warning("failure report for %s not acknowledged: %s", link, exc)
        if healthy:
            reports = [{"link": l, "ts": now, "rtt": self.policy.rtt, "loss": 0.0} for l in healthy]
            self.peer.send(Message("STATUS_REPORT", {"site": self.site, "ts": now, "reports": reports}))

    def _monitor_loop(self) -> None:
        while not self._stop.wait(self.policy.interval):
            if self.peer.closed.is_set():
                break
            try:
                self.poll()
            except OSError:
                break

    def close(self) -> None:
        self._stop.set()
        self.peer.close()


class ExchangeServer:
    """Standalone auction venue."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, *, mechanism: str = "GSP",
                 codec: Codec = Codec()) -> None:
        self.exchange = Exchange(mechanism=mechanism)
        self.server = Server(host, port, self.handle, codec, name="exchange")

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    def start(self) -> "ExchangeServer":
        self.server.start()
        return self

    def stop(self) -> None:
        self.server.stop()

    def handle(self, peer: Peer, msg: Message) -> Message:
        p = msg.payload
        try:
            if msg.type == "REGISTER_SELLER":
                oid = self.exchange.register_offering(p["seller"], p["link"], int(p.get("reserve", 0)),
                                                      float(p.get("listed_at", 0.0)))
                return msg.reply("ACK", {"offering": oid})
            if msg.type == "REGISTER_BUYER":
                self.exchange.register_buyer(p["client_name"])
                return msg.reply("ACK", {"client_name": p["client_name"]})
            if msg.type == "SUBMIT_BID":
                r = self.exchange.submit_bid(Bid(p["bidder"], p["offering"], int(p["amount"]),
                                                 None if p.get("value") is None else int(p["value"]),
                                                 float(p.get("submitted_at", msg.ts))))
                return msg.reply("ACK", {"round": r.round_id, "seq": r.seq})
            if msg.type == "RUN_AUCTION":
                outcome = self.exchange.close_round(p["offerings"], p.get("k"), p.get("mechanism"))
                return msg.reply("AUCTION_RESULT", outcome.to_json())
        except (GreyFiberError, KeyError, ValueError) as exc:
            return msg.reply("ERROR", {"error": f"{type(exc).__name__}: {exc}"})
        return msg.reply("ERROR", {"error": f"unexpected message {msg.type}"})


class Client:
    """Thin buyer/seller client for a GGC or exchange server."""

    def __init__(self, host: str, port: int, codec: Codec = Codec()) -> None:
        self.peer = Peer.connect(host, port, codec=codec, name="client")

    def call(self, type: str, payload: dict, timeout: float = 120.0) -> dict:
        return self.peer.request(Message(type, payload), timeout).payload

    def close(self) -> None:
        self.peer.close()
