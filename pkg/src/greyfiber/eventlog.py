"""Append-only per-stage timing log, serialized as JSON lines."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from greyfiber.errors import MalformedLog

# Pipeline stages of one resource request, keyed by their step number in the
# end-to-end event sequence.
PIPELINE_STAGES: tuple[tuple[int, str], ...] = (
    (7, "accept_bid"),
    (8, "auction"),
    (9, "winner_notify"),
    (10, "graph_query"),
    (11, "admissibility"),
    (12, "config_generation"),
    (13, "config_push"),
    (14, "circuit_setup"),
    (15, "circuit_ack"),
    (16, "counter_update"),
    (17, "buyer_notify"),
)
STAGE_ORDER = {name: step for step, name in PIPELINE_STAGES}


@dataclass(frozen=True)
class StageRecord:
    request_id: str
    stage: str
    t_start: float
    t_end: float

    def to_json(self) -> str:
        return json.dumps({"request_id": self.request_id, "stage": self.stage,
                           "t_start": self.t_start, "t_end": self.t_end})


class EventLog:
    def __init__(self, records: Iterable[StageRecord] = ()) -> None:
        self._records: list[StageRecord] = list(records)
        self._lock = threading.Lock()

    def append(self, request_id: str, stage: str, t_start: float, t_end: float) -> StageRecord:
        rec = StageRecord(request_id, stage, t_start, t_end)
        with self._lock:
            self._records.append(rec)
        return rec

    @property
    def records(self) -> list[StageRecord]:
        with self._lock:
            return list(self._records)

    def __iter__(self) -> Iterator[StageRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self._records)

    def for_request(self, request_id: str) -> list[StageRecord]:
        return [r for r in self.records if r.request_id == request_id]

    def request_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.request_id, None)
        return list(seen)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(StageRecord(str(obj["request_id"]), str(obj["stage"]),
                                           float(obj["t_start"]), float(obj["t_end"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedLog(f"line {lineno}: {exc!r}") from exc
        return cls(records)

    @classmethod
    def read(cls, path: str | Path) -> "EventLog":
        return cls.from_jsonl(Path(path).read_text())
