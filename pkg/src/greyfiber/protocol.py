"""Length-prefixed JSON messages over a stream socket.

Each frame is a 4-byte big-endian length followed by the encoded body. The
body is UTF-8 JSON passed through a ``Codec``; the default codec is the
identity, and compression or encryption can be slotted in as another codec
without touching the message layer.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import socket
import struct
import threading
import time
import zlib
from concurrent.futures import Future
from dataclasses import dataclass, field
from typing import Callable

from greyfiber.errors import ProtocolError

logger = logging.getLogger(__name__)

MESSAGE_TYPES = frozenset({
    "REGISTER", "CONFIG_PUSH", "CONFIG_ACK", "TEARDOWN", "STATUS_REPORT", "FAILURE_NOTIFY",
    "PROVISION_BACKUP", "AUCTION_RESULT",
    # client and venue traffic
    "REGISTER_SELLER", "REGISTER_BUYER", "SUBMIT_BID", "RUN_AUCTION", "RESOURCE_REQUEST",
    "LEASE_OUTCOME", "ACK", "ERROR",
})
HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024

_ids = itertools.count(1)
_prefix = os.urandom(3).hex()


def next_msg_id() -> str:
    return f"{_prefix}-{next(_ids)}"


class Codec:
    """Identity transform applied to every frame body."""

    name = "identity"

    def encode(self, data: bytes) -> bytes:
        return data

    def decode(self, data: bytes) -> bytes:
        return data


class ZlibCodec(Codec):
    name = "zlib"

    def encode(self, data: bytes) -> bytes:
        return zlib.compress(data)

    def decode(self, data: bytes) -> bytes:
        try:
            return zlib.decompress(data)
        except zlib.error as exc:
            raise ProtocolError(f"bad compressed frame: {exc}") from exc


@dataclass(frozen=True)
class Message:
    type: str
    payload: dict = field(default_factory=dict)
    msg_id: str = field(default_factory=next_msg_id)
    ts: float = field(default_factory=time.time)
    in_reply_to: str | None = None

    def __post_init__(self):
        if self.type not in MESSAGE_TYPES:
            raise ProtocolError(f"unknown message type {self.type!r}")

    def reply(self, type: str, payload: dict | None = None) -> "Message":
        return Message(type, payload or {}, in_reply_to=self.msg_id)

    def to_json(self) -> dict:
        out = {"type": self.type, "msg_id": self.msg_id, "ts": self.ts, "payload": self.payload}
        if self.in_reply_to is not None:
            out["in_reply_to"] = self.in_reply_to
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Message":
        try:
            return cls(obj["type"], dict(obj.get("payload") or {}), str(obj["msg_id"]), float(obj["ts"]),
                       obj.get("in_reply_to"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed message: {exc!r}") from exc


def encode_frame(msg: Message, codec: Codec = Codec()) -> bytes:
    body = codec.encode(json.dumps(msg.to_json(), separators=(",", ":")).encode("utf-8"))
    if len(body) > MAX_FRAME:
        raise ProtocolError("frame too large")
    return HEADER.pack(len(body)) + body


def decode_frame(body: bytes, codec: Codec = Codec()) -> Message:
    try:
        obj = json.loads(codec.decode(body).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable frame: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("frame is not a JSON object")
    return Message.from_json(obj)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ProtocolError("connection closed mid-frame")
            return None
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket, codec: Codec = Codec()) -> Message | None:
    """Next message, or None on a clean end of stream."""
    header = _recv_exact(sock, HEADER.size)
    if header is None:
        return None
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ProtocolError("frame too large")
    body = _recv_exact(sock, length)
    if body is None:
        raise ProtocolError("connection closed mid-frame")
    return decode_frame(body, codec)


class Peer:
    """One end of a connection: sends messages and matches replies by msg_id.

    Unsolicited messages go to ``handler``; if it returns a Message, that is
    sent back.
    """

    def __init__(self, sock: socket.socket, handler: Callable[["Peer", Message], Message | None] | None = None,
                 codec: Codec = Codec(), name: str = "peer") -> None:
        self.sock = sock
        self.handler = handler
        self.codec = codec
        self.name = name
        self._pending: dict[str, Future] = {}
        self._send_lock = threading.Lock()
        self._lock = threading.Lock()
        self.closed = threading.Event()
        self._reader = threading.Thread(target=self._read_loop, name=f"{name}-reader", daemon=True)

    @classmethod
    def connect(cls, host: str, port: int, handler=None, codec: Codec = Codec(), name: str = "peer") -> "Peer":
        sock = socket.create_connection((host, port))
        peer = cls(sock, handler, codec, name)
        peer.start()
        return peer

    def start(self) -> "Peer":
        self._reader.start()
        return self

    def send(self, msg: Message) -> None:
        data = encode_frame(msg, self.codec)
        with self._send_lock:
            self.sock.sendall(data)

    def request(self, msg: Message, timeout: float | None = 30.0) -> Message:
        fut: Future = Future()
        with self._lock:
            self._pending[msg.msg_id] = fut
        self.send(msg)
        reply = fut.result(timeout)
        if reply.type == "ERROR":
            raise ProtocolError(reply.payload.get("error", "remote error"))
        return reply

    def _read_loop(self) -> None:
        try:
            while True:
                msg = read_frame(self.sock, self.codec)
                if msg is None:
                    break
                if msg.in_reply_to is not None:
                    with self._lock:
                        fut = self._pending.pop(msg.in_reply_to, None)
                    if fut is not None:
                        fut.set_result(msg)
                        continue
                if self.handler is not None:
                    # handlers may block on their own requests, so they get a thread
                    threading.Thread(target=self._dispatch, args=(msg,), daemon=True).start()
        except (OSError, ProtocolError) as exc:
            logger.debug("%s reader stopped: %s", self.name, exc)
        finally:
            self.closed.set()
            with self._lock:
                pending, self._pending = self._pending, {}
            for fut in pending.values():
                if not fut.done():
                    fut.set_exception(ProtocolError("connection closed"))

    def _dispatch(self, msg: Message) -> None:
        try:
            reply = self.handler(self, msg)
        except Exception as exc:  # reported to the remote side
            logger.exception("%s failed handling %s", self.name, msg.type)
            reply = msg.reply("ERROR", {"error": f"{type(exc).__name__}: {exc}"})
        if reply is not None and not self.closed.is_set():
            try:
                self.send(reply)
            except OSError:
                pass

    def serve_forever(self) -> None:
        """Process messages on the calling thread until the stream ends."""
        self._reader.run()

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
