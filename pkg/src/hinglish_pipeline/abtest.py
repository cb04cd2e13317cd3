"""HTTP service for blinded human A/B preference evaluation.

Evaluators see a prompt with two responses labelled only left/right; the
left/right assignment is randomized per item per session (seed recorded)
and never appears in any serving payload.  Choices append to a JSONL
record log, fsynced before acknowledgment, which is the source of truth:
replaying it after a crash reconstructs answered state with no duplicate
records because record ids are deterministic per (session, item).
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from fastapi import FastAPI, Response
from pydantic import BaseModel, Field

from .judge import ALL_DIMENSIONS

__all__ = [
    "AbItem",
    "AbRecord",
    "AbStore",
    "UnknownIdError",
    "AlreadyAnsweredError",
    "RatingValidationError",
    "load_items",
    "aggregate_preferences",
    "create_app",
]

DEFAULT_DIMENSIONS = tuple(d.value for d in ALL_DIMENSIONS)


class UnknownIdError(KeyError):
    pass


class AlreadyAnsweredError(RuntimeError):
    pass


class RatingValidationError(ValueError):
    pass


@dataclass(frozen=True)
class AbItem:
    item_id: str
    prompt: str
    responses: dict[str, str]

    def __post_init__(self) -> None:
        if len(self.responses) != 2:
            raise ValueError(f"item {self.item_id!r} needs exactly two systems")
        if not all(isinstance(v, str) and v for v in self.responses.values()):
            raise ValueError(f"item {self.item_id!r} has an empty response")


def load_items(path: str | Path) -> list[AbItem]:
    """Read a JSONL item file pairing each prompt with two responses."""
    items = []
    seen = set()
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        record = json.loads(line)
        item = AbItem(
            item_id=record["item_id"],
            prompt=record["prompt"],
            responses=dict(record["responses"]),
        )
        if item.item_id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate item id {item.item_id!r}")
        seen.add(item.item_id)
        items.append(item)
    return items


@dataclass(frozen=True)
class AbRecord:
    record_id: str
    session_id: str
    item_id: str
    choice: str
    resolved_system: str
    ratings: Optional[dict[str, int]]
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "session_id": self.session_id,
            "item_id": self.item_id,
            "choice": self.choice,
            "resolved_system": self.resolved_system,
            "ratings": self.ratings,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AbRecord":
        return cls(
            record_id=data["record_id"],
            session_id=data["session_id"],
            item_id=data["item_id"],
            choice=data["choice"],
            resolved_system=data["resolved_system"],
            ratings=data.get("ratings"),
            timestamp=data.get("timestamp", 0.0),
        )


@dataclass
class _Session:
    session_id: str
    evaluator: str
    item_set_id: str
    seed: int
    order: list[str]
    assignments: dict[str, dict[str, str]]
    answered: set[str] = field(default_factory=set)

    def to_snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "evaluator": self.evaluator,
            "item_set_id": self.item_set_id,
            "seed": self.seed,
            "order": list(self.order),
            "assignments": {k: dict(v) for k, v in self.assignments.items()},
        }


def aggregate_preferences(
    records: Iterable[AbRecord], systems: Iterable[str] = ()
) -> dict:
    """Per-system win counts and one-decimal preference-rate percentages."""
    records = list(records)
    wins: dict[str, int] = {s: 0 for s in systems}
    per_item: dict[str, dict[str, int]] = {}
    for record in records:
        wins[record.resolved_system] = wins.get(record.resolved_system, 0) + 1
        item = per_item.setdefault(record.item_id, {})
        item[record.resolved_system] = item.get(record.resolved_system, 0) + 1
    total = len(records)
    return {
        "n_records": total,
        "systems": {
            system: {
                "wins": count,
                "total": total,
                "preference_rate_pct": round(count / total * 100.0, 1) if total else 0.0,
            }
            for system, count in sorted(wins.items())
        },
        "items": {k: dict(sorted(v.items())) for k, v in sorted(per_item.items())},
    }


class AbStore:
    """In-memory session state over an append-only durable record log."""

    def __init__(
        self,
        item_sets: dict[str, list[AbItem]],
        log_path: str | Path,
        dimensions: tuple[str, ...] = DEFAULT_DIMENSIONS,
        master_seed: int | None = None,
        snapshot_path: str | Path | None = None,
    ) -> None:
        if not item_sets or any(not items for items in item_sets.values()):
            raise ValueError("every item set must be non-empty")
        self.item_sets = {k: list(v) for k, v in item_sets.items()}
        self.dimensions = tuple(dimensions)
        self.log_path = Path(log_path)
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self._master_seed = master_seed
        self._session_counter = 0
        self._lock = threading.Lock()
        self.sessions: dict[str, _Session] = {}
        self.records: list[AbRecord] = []
        self._record_ids: set[str] = set()
        self._restore()
        self._log_file = open(self.log_path, "a", encoding="utf-8", newline="\n")

    # -- persistence -------------------------------------------------------

    def _restore(self) -> None:
        if self.snapshot_path and self.snapshot_path.exists():
            snapshot = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            for entry in snapshot.get("sessions", []):
                session = _Session(
                    session_id=entry["session_id"],
                    evaluator=entry["evaluator"],
                    item_set_id=entry["item_set_id"],
                    seed=entry["seed"],
                    order=list(entry["order"]),
                    assignments={
                        k: dict(v) for k, v in entry["assignments"].items()
                    },
                )
                self.sessions[session.session_id] = session
            self._session_counter = snapshot.get("counter", len(self.sessions))
        if self.log_path.exists():
            for line in self.log_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = AbRecord.from_dict(json.loads(line))
                if record.record_id in self._record_ids:
                    continue  # duplicate append from a crashed writer
                self._record_ids.add(record.record_id)
                self.records.append(record)
                session = self.sessions.get(record.session_id)
                if session is not None:
                    session.answered.add(record.item_id)

    def _write_snapshot(self) -> None:
        if self.snapshot_path is None:
            return
        payload = {
            "counter": self._session_counter,
            "sessions": [s.to_snapshot() for s in self.sessions.values()],
        }
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        tmp.replace(self.snapshot_path)

    def _append_record(self, record: AbRecord) -> None:
        self._log_file.write(json.dumps(record.to_dict(), ensure_ascii=False))
        self._log_file.write("\n")
        self._log_file.flush()
        os.fsync(self._log_file.fileno())

    def close(self) -> None:
        self._log_file.close()

    # -- operations ---------------------------------------------------------

    def create_session(self, evaluator: str, item_set_id: str = "default") -> _Session:
        if not evaluator.strip():
            raise RatingValidationError("evaluator label must be non-empty")
        with self._lock:
            items = self.item_sets.get(item_set_id)
            if items is None:
                raise UnknownIdError(f"unknown item set {item_set_id!r}")
            self._session_counter += 1
            if self._master_seed is not None:
                seed = self._master_seed * 1_000_003 + self._session_counter
                session_id = f"s{self._session_counter:06d}"
            else:
                seed = random.SystemRandom().randrange(2**63)
                session_id = uuid.uuid4().hex[:16]
            rng = random.Random(seed)
            order = [item.item_id for item in items]
            rng.shuffle(order)
            assignments = {}
            for item in items:
                systems = sorted(item.responses)
                flip = rng.random() < 0.5
                assignments[item.item_id] = {
                    "left": systems[1] if flip else systems[0],
                    "right": systems[0] if flip else systems[1],
                }
            session = _Session(
                session_id=session_id,
                evaluator=evaluator,
                item_set_id=item_set_id,
                seed=seed,
                order=order,
                assignments=assignments,
            )
            self.sessions[session_id] = session
            self._write_snapshot()
            return session

    def _get_session(self, session_id: str) -> _Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownIdError(f"unknown session {session_id!r}")
        return session

    def next_item(self, session_id: str) -> dict | None:
        """Serving payload for the first unanswered item, or None when done.

        The payload is blind: it never carries system identifiers.
        """
        with self._lock:
            session = self._get_session(session_id)
            items = {i.item_id: i for i in self.item_sets[session.item_set_id]}
            for item_id in session.order:
                if item_id in session.answered:
                    continue
                item = items[item_id]
                assignment = session.assignments[item_id]
                return {
                    "item_id": item.item_id,
                    "prompt": item.prompt,
                    "left": item.responses[assignment["left"]],
                    "right": item.responses[assignment["right"]],
                    "dimensions": list(self.dimensions),
                    "answered": len(session.answered),
                    "total": len(session.order),
                }
            return None

    def submit_choice(
        self,
        session_id: str,
        item_id: str,
        choice: str,
        ratings: dict[str, int] | None = None,
    ) -> AbRecord:
        with self._lock:
            session = self._get_session(session_id)
            if item_id not in session.assignments:
                raise UnknownIdError(f"unknown item {item_id!r}")
            if item_id in session.answered:
                raise AlreadyAnsweredError(f"item {item_id!r} already answered")
            if choice not in ("left", "right"):
                raise RatingValidationError(f"choice must be left or right: {choice!r}")
            if ratings is not None:
                missing = [d for d in self.dimensions if d not in ratings]
                extra = [d for d in ratings if d not in self.dimensions]
                if missing or extra:
                    raise RatingValidationError(
                        f"ratings must cover exactly {list(self.dimensions)}"
                    )
                for dim, value in ratings.items():
                    if not isinstance(value, int) or not 1 <= value <= 5:
                        raise RatingValidationError(
                            f"rating {dim}={value!r} outside integer range [1, 5]"
                        )
            record = AbRecord(
                record_id=f"{session_id}:{item_id}",
                session_id=session_id,
                item_id=item_id,
                choice=choice,
                resolved_system=session.assignments[item_id][choice],
                ratings=dict(ratings) if ratings else None,
                timestamp=time.time(),
            )
            # Durability before acknowledgment: fsync, then mark answered.
            self._append_record(record)
            self._record_ids.add(record.record_id)
            self.records.append(record)
            session.answered.add(item_id)
            return record

    def aggregate(self) -> dict:
        with self._lock:
            systems = sorted(
                {s for items in self.item_sets.values() for i in items for s in i.responses}
            )
            return aggregate_preferences(self.records, systems)


# ---------------------------------------------------------------------------
# HTTP surface

class SessionRequest(BaseModel):
    evaluator: str = Field(min_length=1)
    item_set_id: str = "default"


class ChoiceRequest(BaseModel):
    choice: str
    ratings: Optional[dict[str, int]] = None


def create_app(store: AbStore) -> FastAPI:
    app = FastAPI(title="ab-eval")
    app.state.store = store

    @app.post("/sessions")
    def create_session(body: SessionRequest):
        try:
            session = store.create_session(body.evaluator, body.item_set_id)
        except UnknownIdError as exc:
            return Response(
                content=json.dumps({"error": str(exc)}), status_code=404,
                media_type="application/json",
            )
        except RatingValidationError as exc:
            return Response(
                content=json.dumps({"error": str(exc)}), status_code=422,
                media_type="application/json",
            )
        return {"session_id": session.session_id, "n_items": len(session.order)}

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str):
        try:
            payload = store.next_item(session_id)
        except UnknownIdError as exc:
            return Response(
                content=json.dumps({"error": str(exc)}), status_code=404,
                media_type="application/json",
            )
        if payload is None:
            return Response(status_code=204)
        return payload

    @app.post("/sessions/{session_id}/items/{item_id}/choice")
    def submit_choice(session_id: str, item_id: str, body: ChoiceRequest):
        try:
            store.submit_choice(session_id, item_id, body.choice, body.ratings)
        except UnknownIdError as exc:
            return Response(
                content=json.dumps({"error": str(exc)}), status_code=404,
                media_type="application/json",
            )
        except AlreadyAnsweredError as exc:
            return Response(
                content=json.dumps({"error": str(exc)}), status_code=409,
                media_type="application/json",
            )
        except RatingValidationError as exc:
            return Response(
                content=json.dumps({"error": str(exc)}), status_code=422,
                media_type="application/json",
            )
        session = store.sessions[session_id]
        return {
            "ok": True,
            "answered": len(session.answered),
            "total": len(session.order),
        }

    @app.get("/aggregate")
    def aggregate():
        return store.aggregate()

    return app
