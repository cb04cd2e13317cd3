"""Token-level language tagging for romanized Hindi-English text.

Tagging is lexicon-based and deterministic: a token found in exactly one
lexicon takes that language, ties go to the configured priority, and
punctuation, numbers, URL-ish artifacts, and unknown tokens are OTHER.
The lexicons are plain word lists, so a learned tagger can later replace
this behind the same ``tag_tokens`` signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .kernels import EN_CODE, HI_CODE, OTHER_CODE
from .normalize import _strip_affix_punct

__all__ = [
    "Tag",
    "Priority",
    "TaggedToken",
    "Lexicons",
    "LexiconError",
    "load_lexicons",
    "default_lexicons",
    "tag_tokens",
    "tags_to_codes",
]


class LexiconError(ValueError):
    """Raised when a lexicon file yields no usable entries."""


class Tag(str, Enum):
    HI = "HI"
    EN = "EN"
    OTHER = "OTHER"


class Priority(str, Enum):
    HINDI_WINS = "hindi_wins"
    ENGLISH_WINS = "english_wins"


_TAG_CODES = {Tag.HI: HI_CODE, Tag.EN: EN_CODE, Tag.OTHER: OTHER_CODE}


@dataclass(frozen=True)
class TaggedToken:
    text: str
    tag: Tag
    position: int


@dataclass(frozen=True)
class Lexicons:
    hindi_set: frozenset[str]
    english_set: frozenset[str]
    priority: Priority = Priority.HINDI_WINS

    def __post_init__(self) -> None:
        if not self.hindi_set or not self.english_set:
            raise LexiconError("empty lexicon")


def _read_wordlist(path: str | Path) -> frozenset[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        words.add(line.lower())
    return frozenset(words)


def load_lexicons(
    hindi_path: str | Path,
    english_path: str | Path,
    priority: Priority | str = Priority.HINDI_WINS,
) -> Lexicons:
    """Load one-word-per-line lexicon files ('#' comments allowed)."""
    hindi = _read_wordlist(hindi_path)
    english = _read_wordlist(english_path)
    if not hindi:
        raise LexiconError(f"empty lexicon: {hindi_path}")
    if not english:
        raise LexiconError(f"empty lexicon: {english_path}")
    return Lexicons(hindi_set=hindi, english_set=english, priority=Priority(priority))


def default_lexicons(priority: Priority | str = Priority.HINDI_WINS) -> Lexicons:
    """The implementer-curated starter lexicons shipped with the package."""
    data = resources.files("hinglish_pipeline") / "data"
    with resources.as_file(data / "lexicon_hindi.txt") as hi_path, resources.as_file(
        data / "lexicon_english.txt"
    ) as en_path:
        return load_lexicons(hi_path, en_path, priority)


_ARTIFACT_PREFIXES = ("http://", "https://", "www.")


def _classify(token: str, lex: Lexicons) -> Tag:
    lowered = token.lower()
    if lowered.startswith(_ARTIFACT_PREFIXES) or token.startswith(("@", "#")):
        return Tag.OTHER
    core = _strip_affix_punct(token)[1]
    if not core:
        return Tag.OTHER
    if not any(c.isalpha() for c in core):
        return Tag.OTHER
    word = core.lower()
    in_hi = word in lex.hindi_set
    in_en = word in lex.english_set
    if in_hi and in_en:
        return Tag.HI if lex.priority is Priority.HINDI_WINS else Tag.EN
    if in_hi:
        return Tag.HI
    if in_en:
        return Tag.EN
    return Tag.OTHER


def tag_tokens(text: str, lex: Lexicons) -> list[TaggedToken]:
    """Tag every whitespace token of ``text`` in order with its position."""
    return [
        TaggedToken(text=tok, tag=_classify(tok, lex), position=i)
        for i, tok in enumerate(text.split())
    ]


def tags_to_codes(tokens: list[TaggedToken]) -> np.ndarray:
    """Map tagged tokens to the int8 codes the numeric kernels consume."""
    return np.fromiter((_TAG_CODES[t.tag] for t in tokens), dtype=np.int8, count=len(tokens))
