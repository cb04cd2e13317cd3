from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hinglish_pipeline.corpus import Dialogue, Role, Turn
from hinglish_pipeline.langid import Lexicons, Priority
from hinglish_pipeline.normalize import VariantTable


@pytest.fixture()
def tiny_lexicons() -> Lexicons:
    return Lexicons(
        hindi_set=frozenset(
            ["kya", "hai", "yaar", "bahut", "accha", "nahi", "matlab", "aaj", "to"]
        ),
        english_set=frozenset(
            ["scene", "bro", "plan", "time", "tension", "hello", "world", "to"]
        ),
        priority=Priority.HINDI_WINS,
    )


@pytest.fixture()
def paper_variants() -> VariantTable:
    return VariantTable({"bhot": "bahut", "bahout": "bahut"})


def make_dialogue(
    topic: str = "exam-stress",
    persona: str | None = None,
    texts: tuple[str, ...] = ("kya scene hai", "sab theek hai yaar"),
    meta: dict[str, str] | None = None,
) -> Dialogue:
    turns = [
        Turn(role=Role.USER if i % 2 == 0 else Role.ASSISTANT, text=text)
        for i, text in enumerate(texts)
    ]
    return Dialogue.build(topic=topic, persona=persona, turns=turns, meta=meta)


@pytest.fixture()
def dialogue_factory():
    return make_dialogue
