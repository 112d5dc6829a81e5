"""Buyer resource requests and their JSON wire form."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from greyfiber.errors import InvalidRequest, SchemaError


@dataclass(frozen=True)
class LeaseWindow:
    start: float
    duration_s: float


@dataclass(frozen=True)
class ResourceRequest:
    """``<Endpoint_A, Endpoint_B, #OfStrandsNeeded, BidAmount, Time, CapacityNeeded, ClientName>``.

    ``bid_amount`` and ``value`` are integer micro-units. ``value`` is the
    buyer's private valuation and only feeds payoff accounting.
    """

    endpoint_a: str
    endpoint_b: str
    strands_needed: int
    bid_amount: int
    time: LeaseWindow
    capacity_needed: float
    client_name: str
    value: int | None = None
    backup_required: bool = False
    elastic: bool = False

    def validate(self) -> None:
        if self.endpoint_a == self.endpoint_b:
            raise InvalidRequest("endpoints must be distinct")
        if self.time.duration_s <= 0:
            raise InvalidRequest("lease duration must be positive")
        if self.strands_needed < 1:
            raise InvalidRequest("strands_needed must be at least 1")
        if self.capacity_needed <= 0:
            raise InvalidRequest("capacity_needed must be positive")
        if self.bid_amount < 0:
            raise InvalidRequest("bid_amount must be non-negative")

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ResourceRequest":
        try:
            t = obj["time"]
            req = cls(
                endpoint_a=str(obj["endpoint_a"]),
                endpoint_b=str(obj["endpoint_b"]),
                strands_needed=int(obj["strands_needed"]),
                bid_amount=int(obj["bid_amount"]),
                time=LeaseWindow(float(t["start"]), float(t["duration_s"])),
                capacity_needed=float(obj["capacity_needed_bps"]),
                client_name=str(obj["client_name"]),
                value=None if obj.get("value") is None else int(obj["value"]),
                backup_required=bool(obj.get("backup_required", False)),
                elastic=bool(obj.get("elastic", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed resource request: {exc!r}") from exc
        req.validate()
        return req

    def to_json(self) -> dict:
        out = {
            "endpoint_a": self.endpoint_a,
            "endpoint_b": self.endpoint_b,
            "strands_needed": self.strands_needed,
            "bid_amount": self.bid_amount,
            "time": {"start": self.time.start, "duration_s": self.time.duration_s},
            "capacity_needed_bps": self.capacity_needed,
            "client_name": self.client_name,
        }
        if self.value is not None:
            out["value"] = self.value
        if self.backup_required:
            out["backup_required"] = True
        if self.elastic:
            out["elastic"] = True
        return out
