"""Code-mixing and surface metrics over tagged tokens.

The mixing index follows the standard utterance-level formulation
1 - w_max/(N - U), where N is the token count, U the count of tokens with
no language tag, and w_max the largest per-language count.  For two
languages its range is [0, 0.5].  The switch index and trigram-repetition
ratio are companion signals; ``aggregate_corpus`` folds per-response
reports into the corpus-level bundle.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .kernels import tag_stats
from .langid import Lexicons, TaggedToken, tag_tokens, tags_to_codes

__all__ = [
    "MetricReport",
    "compute_cmi",
    "compute_switch_index",
    "compute_repetition",
    "response_report",
    "aggregate_corpus",
]


@dataclass(frozen=True)
class MetricReport:
    cmi: float
    switch_index: float
    hindi_fraction: float
    repetition: float
    length_words: float
    n_tokens: int
    n_other: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.cmi <= 0.5:
            raise ValueError(f"cmi out of [0, 0.5]: {self.cmi}")
        for name in ("switch_index", "hindi_fraction", "repetition"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {value}")
        if self.n_tokens == self.n_other and self.cmi != 0.0:
            raise ValueError("cmi must be 0 when no token carries a language tag")

    def to_dict(self) -> dict:
        return asdict(self)


def _counts(tokens: Sequence[TaggedToken]) -> tuple[int, int, int, int]:
    if not tokens:
        return 0, 0, 0, 0
    return tag_stats(tags_to_codes(list(tokens)))


def compute_cmi(tokens: Sequence[TaggedToken]) -> float:
    """Mixing index 1 - w_max/(N - U); 0 for empty or untagged-only input."""
    n_hi, n_en, n_other, _ = _counts(tokens)
    n = len(tokens)
    if n == 0 or n == n_other:
        return 0.0
    w_max = max(n_hi, n_en)
    return 1.0 - w_max / (n - n_other)


def compute_switch_index(tokens: Sequence[TaggedToken]) -> float:
    """Adjacent differing-tag pairs over the OTHER-free subsequence."""
    n_hi, n_en, _, switches = _counts(tokens)
    tagged = n_hi + n_en
    if tagged < 2:
        return 0.0
    return switches / (tagged - 1)


def compute_repetition(text: str, n: int = 3) -> float:
    """1 - distinct/total n-grams over whitespace tokens; 0 for short text."""
    if n < 1:
        raise ValueError("n must be positive")
    words = text.split()
    if len(words) < n:
        return 0.0
    total = len(words) - n + 1
    if total <= 1:
        return 0.0
    ngrams = {tuple(words[i : i + n]) for i in range(total)}
    return 1.0 - len(ngrams) / total


def response_report(text: str, lex: Lexicons, ngram: int = 3) -> MetricReport:
    """Full per-response metric bundle for one utterance."""
    tokens = tag_tokens(text, lex)
    n_hi, n_en, n_other, _ = _counts(tokens)
    tagged = n_hi + n_en
    return MetricReport(
        cmi=compute_cmi(tokens),
        switch_index=compute_switch_index(tokens),
        hindi_fraction=n_hi / tagged if tagged else 0.0,
        repetition=compute_repetition(text, n=ngram),
        length_words=len(tokens),
        n_tokens=len(tokens),
        n_other=n_other,
    )


def aggregate_corpus(reports: Iterable[MetricReport]) -> MetricReport:
    """Unweighted arithmetic mean of the fractional fields.

    ``length_words`` is averaged as a real number and reported to one
    decimal; token counters are summed.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    k = len(reports)
    return MetricReport(
        cmi=sum(r.cmi for r in reports) / k,
        switch_index=sum(r.switch_index for r in reports) / k,
        hindi_fraction=sum(r.hindi_fraction for r in reports) / k,
        repetition=sum(r.repetition for r in reports) / k,
        length_words=round(sum(r.length_words for r in reports) / k, 1),
        n_tokens=sum(r.n_tokens for r in reports),
        n_other=sum(r.n_other for r in reports),
    )
