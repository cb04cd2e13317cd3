"""Corpus data model, JSONL persistence, deterministic splitting, export.

A corpus file holds one dialogue per line as UTF-8 JSON with LF endings.
Dialogue ids are content hashes over (topic, persona, turn texts), which
makes deduplication and split assignment independent of file order and
of anything mutable in ``meta``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "Role",
    "Turn",
    "Dialogue",
    "CorpusManifest",
    "CorpusSplit",
    "LoadError",
    "LoadResult",
    "CorpusValidationError",
    "compute_dialogue_id",
    "load_corpus",
    "save_corpus",
    "split_corpus",
    "export_chat_format",
    "count_tokens",
]

ALTERNATION_MESSAGE = "turns must alternate starting with user"


class CorpusValidationError(ValueError):
    """A record parsed but violates a dialogue invariant."""


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Turn:
    role: Role
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusValidationError("turn text is empty after trimming")

    @property
    def word_count(self) -> int:
        return len(self.text.split())


def compute_dialogue_id(topic: str, persona: str | None, texts: Sequence[str]) -> str:
    """Hex digest of the canonical (topic, persona, turn texts) serialization."""
    payload = "\x1f".join([topic, persona or "", *texts])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Dialogue:
    id: str
    topic: str
    persona: str | None
    turns: tuple[Turn, ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.turns) < 2 or len(self.turns) % 2 != 0:
            raise CorpusValidationError("turn count must be even and at least 2")
        for i, turn in enumerate(self.turns):
            expected = Role.USER if i % 2 == 0 else Role.ASSISTANT
            if turn.role is not expected:
                raise CorpusValidationError(ALTERNATION_MESSAGE)
        expected_id = compute_dialogue_id(
            self.topic, self.persona, [t.text for t in self.turns]
        )
        if self.id != expected_id:
            raise CorpusValidationError(
                f"id {self.id!r} does not match content hash {expected_id!r}"
            )

    @classmethod
    def build(
        cls,
        topic: str,
        persona: str | None,
        turns: Sequence[Turn],
        meta: dict[str, str] | None = None,
    ) -> "Dialogue":
        """Construct a dialogue with its content-hash id filled in."""
        dialogue_id = compute_dialogue_id(topic, persona, [t.text for t in turns])
        return cls(
            id=dialogue_id,
            topic=topic,
            persona=persona,
            turns=tuple(turns),
            meta=dict(meta or {}),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "topic": self.topic,
            "persona": self.persona,
            "turns": [{"role": t.role.value, "text": t.text} for t in self.turns],
            "meta": dict(sorted(self.meta.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))


def dialogue_from_dict(record: dict) -> Dialogue:
    if not isinstance(record, dict):
        raise CorpusValidationError("record is not a JSON object")
    for key in ("id", "topic", "turns"):
        if key not in record:
            raise CorpusValidationError(f"missing required field {key!r}")
    persona = record.get("persona")
    if persona is not None and not isinstance(persona, str):
        raise CorpusValidationError("persona must be a string or null")
    raw_turns = record["turns"]
    if not isinstance(raw_turns, list):
        raise CorpusValidationError("turns must be a list")
    turns = []
    for raw in raw_turns:
        if not isinstance(raw, dict) or "role" not in raw or "text" not in raw:
            raise CorpusValidationError("each turn needs 'role' and 'text'")
        try:
            role = Role(raw["role"])
        except ValueError:
            raise CorpusValidationError(f"unknown role {raw['role']!r}") from None
        if not isinstance(raw["text"], str):
            raise CorpusValidationError("turn text must be a string")
        turns.append(Turn(role=role, text=raw["text"]))
    meta = record.get("meta") or {}
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise CorpusValidationError("meta must map strings to strings")
    return Dialogue(
        id=record["id"],
        topic=record["topic"],
        persona=persona,
        turns=tuple(turns),
        meta=dict(meta),
    )


@dataclass(frozen=True)
class LoadError:
    line_number: int
    message: str


@dataclass(frozen=True)
class LoadResult:
    dialogues: list[Dialogue]
    errors: list[LoadError]


def load_corpus(path: str | Path) -> LoadResult:
    """Read a JSONL corpus; every line is either a dialogue or an error.

    Malformed lines are collected with their line numbers, never silently
    dropped; well-formed dialogues come back in file order.
    """
    dialogues: list[Dialogue] = []
    errors: list[LoadError] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(LoadError(lineno, f"invalid JSON: {exc.msg}"))
                continue
            try:
                dialogues.append(dialogue_from_dict(record))
            except CorpusValidationError as exc:
                errors.append(LoadError(lineno, str(exc)))
    return LoadResult(dialogues=dialogues, errors=errors)


def save_corpus(dialogues: Iterable[Dialogue], path: str | Path) -> int:
    """Write dialogues as one JSON object per line; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for dialogue in dialogues:
            fh.write(dialogue.to_json())
            fh.write("\n")
            count += 1
    return count


@dataclass(frozen=True)
class CorpusManifest:
    counts: dict[str, int]
    ratios: tuple[float, float, float]
    token_total: int
    split_seed: int

    def __post_init__(self) -> None:
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("ratios must sum to 1")
        if any(n < 0 for n in self.counts.values()):
            raise ValueError("counts must be non-negative")

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts),
            "ratios": list(self.ratios),
            "token_total": self.token_total,
            "split_seed": self.split_seed,
        }


@dataclass(frozen=True)
class CorpusSplit:
    train: list[Dialogue]
    validation: list[Dialogue]
    test: list[Dialogue]
    ratios: tuple[float, float, float]
    seed: int

    def manifest(self) -> CorpusManifest:
        everything = self.train + self.validation + self.test
        return CorpusManifest(
            counts={
                "train": len(self.train),
                "validation": len(self.validation),
                "test": len(self.test),
            },
            ratios=self.ratios,
            token_total=count_tokens(everything),
            split_seed=self.seed,
        )


def _split_sort_key(dialogue_id: str, seed: int) -> str:
    return hashlib.sha256(f"{dialogue_id}\x1f{seed}".encode("utf-8")).hexdigest()


def split_corpus(
    dialogues: Sequence[Dialogue],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> CorpusSplit:
    """Deterministic, order-free partition into train/validation/test.

    Dialogues are ordered by a digest of (id, seed) and sliced at the
    cumulative floor(N * ratio) boundaries; remainder dialogues go to
    train.  Assignment therefore depends only on ids and the seed, not on
    input order.
    """
    if not dialogues:
        raise ValueError("cannot split an empty corpus")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("expected three non-negative ratios")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(dialogues)
    # Small epsilon guards against fp products like 3 * (1/3) = 0.999...
    floors = [math.floor(n * r + 1e-9) for r in ratios]
    remainder = n - sum(floors)
    n_train = floors[0] + remainder
    n_val = floors[1]
    ordered = sorted(dialogues, key=lambda d: (_split_sort_key(d.id, seed), d.id))
    return CorpusSplit(
        train=ordered[:n_train],
        validation=ordered[n_train : n_train + n_val],
        test=ordered[n_train + n_val :],
        ratios=(float(ratios[0]), float(ratios[1]), float(ratios[2])),
        seed=seed,
    )


def export_chat_format(dialogues: Iterable[Dialogue], path: str | Path) -> int:
    """Write one {"messages": [...]} record per dialogue; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for dialogue in dialogues:
            record = {
                "messages": [
                    {"role": t.role.value, "content": t.text} for t in dialogue.turns
                ]
            }
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def count_tokens(dialogues: Iterable[Dialogue]) -> int:
    """Whitespace-token total over every turn of every dialogue."""
    return sum(turn.word_count for dialogue in dialogues for turn in dialogue.turns)
