"""Romanized spelling canonicalization and generation-noise cleanup.

Two pure text transforms live here: ``clean_text`` strips emoji, control
characters, and excessive punctuation; ``normalize_text`` maps known
romanized spelling variants onto canonical forms via a lookup table.
Both are idempotent, and the pipeline composition is fixed as clean
first, normalize second (``clean_and_normalize``).
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

__all__ = [
    "VariantTable",
    "CleaningConfig",
    "VariantTableError",
    "load_variant_table",
    "default_variant_table",
    "normalize_text",
    "clean_text",
    "clean_and_normalize",
]


class VariantTableError(ValueError):
    """Raised for malformed or self-contradictory variant tables."""


# Emoji-bearing codepoint ranges (pictographs, emoticons, transport,
# regional indicators, dingbats, variation selectors, ZWJ, keycap).
_EMOJI_RANGES = (
    (0x1F000, 0x1F0FF),
    (0x1F1E6, 0x1F1FF),
    (0x1F300, 0x1FAFF),
    (0x2300, 0x23FF),
    (0x2600, 0x26FF),
    (0x2700, 0x27BF),
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),
    (0x200D, 0x200D),
    (0x20E3, 0x20E3),
)


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_affix_punct(token: str) -> tuple[str, str, str]:
    """Split a token into (leading punct, core, trailing punct).

    Punctuation and symbol characters are stripped from both ends only;
    internal punctuation stays part of the core.
    """
    start = 0
    end = len(token)
    while start < end and unicodedata.category(token[start])[0] in "PS":
        start += 1
    while end > start and unicodedata.category(token[end - 1])[0] in "PS":
        end -= 1
    return token[:start], token[start:end], token[end:]


@dataclass(frozen=True)
class VariantTable:
    """Variant token -> canonical token map, keys lowercased."""

    entries: dict[str, str]
    source: str = ""

    def __post_init__(self) -> None:
        for variant, canonical in self.entries.items():
            if not variant or not canonical:
                raise VariantTableError("empty variant or canonical token")
            if any(c.isspace() for c in variant) or any(c.isspace() for c in canonical):
                raise VariantTableError(
                    f"table entries must be single tokens: {variant!r} -> {canonical!r}"
                )
            if variant != variant.lower():
                raise VariantTableError(f"variant keys must be lowercased: {variant!r}")
        # No chains: a canonical's lookup form may not itself map elsewhere,
        # otherwise applying the table twice would differ from applying once.
        for variant, canonical in self.entries.items():
            lookup = _strip_affix_punct(canonical)[1].lower()
            target = self.entries.get(lookup)
            if target is not None and target != canonical:
                raise VariantTableError(
                    f"chain detected: {variant!r} -> {canonical!r} but "
                    f"{lookup!r} -> {target!r}"
                )


@dataclass(frozen=True)
class CleaningConfig:
    collapse_punct_runs_to: int = 1
    strip_emoji: bool = True
    strip_control_chars: bool = True
    collapse_whitespace: bool = True

    def __post_init__(self) -> None:
        if self.collapse_punct_runs_to < 1:
            raise ValueError("collapse_punct_runs_to must be >= 1")


DEFAULT_CLEANING = CleaningConfig()


def load_variant_table(path: str | Path) -> VariantTable:
    """Load a two-column TSV of variant<TAB>canonical pairs.

    Full-line '#' comments and blank lines are skipped.  Duplicate rows
    are deduplicated; a variant mapped to two different canonicals is an
    error, as is any chain.
    """
    path = Path(path)
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise VariantTableError(f"{path}:{lineno}: expected variant<TAB>canonical")
        variant, canonical = parts[0].strip().lower(), parts[1].strip()
        if not variant or not canonical:
            raise VariantTableError(f"{path}:{lineno}: empty column")
        existing = entries.get(variant)
        if existing is not None and existing != canonical:
            raise VariantTableError(
                f"{path}:{lineno}: conflicting duplicates for {variant!r}: "
                f"{existing!r} vs {canonical!r}"
            )
        entries[variant] = canonical
    return VariantTable(entries=entries, source=str(path))


def default_variant_table() -> VariantTable:
    """The implementer-curated starter table shipped with the package."""
    with resources.as_file(
        resources.files("hinglish_pipeline") / "data" / "variants.tsv"
    ) as path:
        return load_variant_table(path)


_WS_SPLIT = re.compile(r"(\s+)")
_SAME_CHAR_RUN = re.compile(r"(.)\1+", flags=re.DOTALL)


def normalize_text(text: str, table: VariantTable) -> str:
    """Replace each token whose lookup form is a table key by its canonical.

    Lookup strips surrounding punctuation and lowercases; the punctuation
    is re-attached around the canonical form.  Spacing and all other
    tokens are preserved, so token count never changes.
    """
    pieces = _WS_SPLIT.split(text)
    out = []
    for piece in pieces:
        if not piece or piece.isspace():
            out.append(piece)
            continue
        prefix, core, suffix = _strip_affix_punct(piece)
        canonical = table.entries.get(core.lower()) if core else None
        if canonical is None:
            out.append(piece)
        else:
            out.append(prefix + canonical + suffix)
    return "".join(out)


def clean_text(text: str, config: CleaningConfig = DEFAULT_CLEANING) -> str:
    """Remove generation noise: emoji, control chars, punctuation runs.

    Steps run in a fixed order (emoji, control chars, punctuation-run
    collapse, whitespace collapse, trim) chosen so the result is a fixed
    point of the function.
    """
    if config.strip_emoji:
        text = "".join(ch for ch in text if not _is_emoji(ch))
    if config.strip_control_chars:
        # Whitespace-class controls (tab, newline, ...) are left for the
        # whitespace pass; stripping them here would glue words together.
        text = "".join(
            ch
            for ch in text
            if ch.isspace() or unicodedata.category(ch) not in ("Cc", "Cf")
        )
    cap = config.collapse_punct_runs_to

    def _collapse(match: re.Match[str]) -> str:
        ch = match.group(1)
        run = match.group(0)
        if _is_punct(ch) and len(run) > cap:
            return ch * cap
        return run

    text = _SAME_CHAR_RUN.sub(_collapse, text)
    if config.collapse_whitespace:
        text = re.sub(r"\s+", " ", text)
    return text.strip()


def clean_and_normalize(
    text: str, table: VariantTable, config: CleaningConfig = DEFAULT_CLEANING
) -> str:
    """The fixed pipeline composition: clean first, then normalize."""
    return normalize_text(clean_text(text, config), table)
