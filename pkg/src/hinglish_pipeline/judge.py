"""Rubric-based judging of chat responses and base-vs-tuned comparison.

A judge model scores each response 1-5 (half steps allowed) on five
dimensions; verdict parsing tolerates prose around the JSON object.
``compare_systems`` reduces two verdict sets to per-dimension means,
deltas, and percent changes, rendered in the familiar
metric / base / tuned (+delta%) table layout.  Judge calls reuse the
generation pipeline's client, key pool, and backoff machinery.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from string import Template
from typing import Sequence

from .genpipe import (
    ChatClient,
    ChatHttpError,
    Clock,
    KeyPool,
    NoAvailableKeyError,
    SystemClock,
    backoff_delay,
)

__all__ = [
    "RubricDimension",
    "ALL_DIMENSIONS",
    "JudgeVerdict",
    "ComparisonReport",
    "JudgeParseError",
    "JudgeRangeError",
    "build_judge_prompt",
    "parse_verdict",
    "render_verdict",
    "compare_systems",
    "render_comparison_table",
    "run_judging",
]


class JudgeParseError(ValueError):
    pass


class JudgeRangeError(ValueError):
    pass


class RubricDimension(str, Enum):
    HINGLISH_FLUENCY = "hinglish_fluency"
    PERSONA_ADHERENCE = "persona_adherence"
    GENDER_CORRECTNESS = "gender_correctness"
    HINDI_USAGE = "hindi_usage"
    COHERENCE = "coherence"


ALL_DIMENSIONS: tuple[RubricDimension, ...] = tuple(RubricDimension)

DIMENSION_LABELS = {
    RubricDimension.HINGLISH_FLUENCY: "Hinglish Fluency",
    RubricDimension.PERSONA_ADHERENCE: "Persona Adherence",
    RubricDimension.GENDER_CORRECTNESS: "Gender Correctness",
    RubricDimension.HINDI_USAGE: "Hindi Usage",
    RubricDimension.COHERENCE: "Coherence",
}

_DIMENSION_DEFINITIONS = {
    RubricDimension.HINGLISH_FLUENCY: (
        'How naturally the response blends Hindi and English in casual, '
        'idiomatic code-switching, like "haan yaar" or "oye sun".'
    ),
    RubricDimension.PERSONA_ADHERENCE: (
        "Whether the response stays in the assigned persona and voice "
        "across the conversation."
    ),
    RubricDimension.GENDER_CORRECTNESS: (
        "Whether gender references and grammatical gender agreement stay "
        "consistent and correct."
    ),
    RubricDimension.HINDI_USAGE: (
        "Whether the amount and quality of Hindi in the mix is appropriate, "
        "neither token Hindi nor stilted textbook phrasing."
    ),
    RubricDimension.COHERENCE: (
        "Whether the response follows logically from the conversation and "
        "stays relevant across exchanges."
    ),
}


def _score_is_half_step(value: float) -> bool:
    return abs(value * 2 - round(value * 2)) < 1e-9


@dataclass(frozen=True)
class JudgeVerdict:
    scores: dict[RubricDimension, float]
    rationale: str | None = None
    judge_model: str = ""
    prompt_id: str = ""

    def __post_init__(self) -> None:
        missing = [d.value for d in ALL_DIMENSIONS if d not in self.scores]
        if missing:
            raise JudgeParseError(f"missing dimension scores: {', '.join(missing)}")
        for dim, value in self.scores.items():
            if not 1.0 <= value <= 5.0:
                raise JudgeRangeError(f"{dim.value} score {value} outside [1, 5]")
            if not _score_is_half_step(value):
                raise JudgeRangeError(
                    f"{dim.value} score {value} is not on the 0.5 grid"
                )


def _load_rubric_template() -> Template:
    text = (
        resources.files("hinglish_pipeline") / "data" / "judge_rubric.txt"
    ).read_text(encoding="utf-8")
    return Template(text)


def build_judge_prompt(
    conversation_context: str,
    response: str,
    dimensions: Sequence[RubricDimension] = ALL_DIMENSIONS,
) -> str:
    """Deterministic rubric prompt for one response."""
    if not response.strip():
        raise ValueError("response must be non-empty")
    if not dimensions:
        raise ValueError("at least one dimension is required")
    definitions = "\n".join(
        f"- {d.value}: {_DIMENSION_DEFINITIONS[d]}" for d in dimensions
    )
    schema = ", ".join(f'"{d.value}": <score>' for d in dimensions)
    return _load_rubric_template().substitute(
        context=conversation_context,
        response=response,
        dimension_definitions=definitions,
        schema_keys=schema,
    )


def _first_json_object(text: str) -> dict:
    decoder = json.JSONDecoder()
    index = text.find("{")
    while index != -1:
        try:
            value, _ = decoder.raw_decode(text, index)
        except json.JSONDecodeError:
            index = text.find("{", index + 1)
            continue
        if isinstance(value, dict):
            return value
        index = text.find("{", index + 1)
    raise JudgeParseError("no JSON object found in judge response")


def parse_verdict(
    raw: str, judge_model: str = "", prompt_id: str = ""
) -> JudgeVerdict:
    """Extract and validate the first JSON object in a judge response."""
    data = _first_json_object(raw)
    scores: dict[RubricDimension, float] = {}
    for dim in ALL_DIMENSIONS:
        if dim.value not in data:
            raise JudgeParseError(f"missing dimension scores: {dim.value}")
        value = data[dim.value]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise JudgeParseError(f"{dim.value} score is not a number: {value!r}")
        scores[dim] = float(value)
    rationale = data.get("rationale")
    if rationale is not None and not isinstance(rationale, str):
        raise JudgeParseError("rationale must be a string")
    return JudgeVerdict(
        scores=scores,
        rationale=rationale,
        judge_model=judge_model,
        prompt_id=prompt_id,
    )


def render_verdict(verdict: JudgeVerdict) -> str:
    """Serialize a verdict so parse_verdict(render_verdict(v)) == v."""
    payload: dict = {d.value: verdict.scores[d] for d in ALL_DIMENSIONS}
    if verdict.rationale is not None:
        payload["rationale"] = verdict.rationale
    return json.dumps(payload, ensure_ascii=False)


@dataclass(frozen=True)
class ComparisonReport:
    """Per-dimension means and changes between two judged systems.

    Means are stored at the report's display precision (two decimals) so
    every percent-change field recomputes exactly from the reported
    means: percent = (mean_b - mean_a) / mean_a * 100, to one decimal.
    """

    mean_a: dict[RubricDimension, float]
    mean_b: dict[RubricDimension, float]
    delta: dict[RubricDimension, float]
    percent_change: dict[RubricDimension, float]
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "dimensions": {
                d.value: {
                    "mean_a": self.mean_a[d],
                    "mean_b": self.mean_b[d],
                    "delta": self.delta[d],
                    "percent_change": self.percent_change[d],
                }
                for d in ALL_DIMENSIONS
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonReport":
        dims = data["dimensions"]
        return cls(
            mean_a={d: dims[d.value]["mean_a"] for d in ALL_DIMENSIONS},
            mean_b={d: dims[d.value]["mean_b"] for d in ALL_DIMENSIONS},
            delta={d: dims[d.value]["delta"] for d in ALL_DIMENSIONS},
            percent_change={d: dims[d.value]["percent_change"] for d in ALL_DIMENSIONS},
            n=data["n"],
        )


def compare_systems(
    verdicts_a: Sequence[JudgeVerdict], verdicts_b: Sequence[JudgeVerdict]
) -> ComparisonReport:
    """Reduce two verdict lists to per-dimension means and changes."""
    if not verdicts_a or not verdicts_b:
        raise ValueError("both verdict lists must be non-empty")

    def means(verdicts: Sequence[JudgeVerdict]) -> dict[RubricDimension, float]:
        return {
            d: round(sum(v.scores[d] for v in verdicts) / len(verdicts), 2)
            for d in ALL_DIMENSIONS
        }

    mean_a = means(verdicts_a)
    mean_b = means(verdicts_b)
    delta = {d: round(mean_b[d] - mean_a[d], 2) for d in ALL_DIMENSIONS}
    percent = {
        d: round((mean_b[d] - mean_a[d]) / mean_a[d] * 100.0, 1)
        for d in ALL_DIMENSIONS
    }
    return ComparisonReport(
        mean_a=mean_a,
        mean_b=mean_b,
        delta=delta,
        percent_change=percent,
        n=len(verdicts_a),
    )


def render_comparison_table(
    report: ComparisonReport, label_a: str = "Base", label_b: str = "Tuned"
) -> str:
    """Plain-text table: metric, base mean, tuned mean (+change%)."""
    header = f"{'Metric (Average)':<22} {label_a:>8}   {label_b}"
    lines = [header, "-" * len(header)]
    for d in ALL_DIMENSIONS:
        change = f"({report.percent_change[d]:+.1f}%)"
        lines.append(
            f"{DIMENSION_LABELS[d]:<22} {report.mean_a[d]:>8.2f}   "
            f"{report.mean_b[d]:.2f} {change}"
        )
    lines.append(f"n = {report.n}")
    return "\n".join(lines)


def _judge_one(
    item: tuple[str, str, str],
    client: ChatClient,
    pool: KeyPool,
    max_attempts: int,
    clock: Clock,
    seed: int,
    cooldown_seconds: float,
) -> tuple[JudgeVerdict | None, str]:
    prompt_id, context, response = item
    base_prompt = build_judge_prompt(context, response)
    rng = random.Random(f"{seed}\x1f{prompt_id}")
    last_error = "unknown"
    for attempt in range(max_attempts):
        if attempt > 0:
            clock.sleep(backoff_delay(attempt - 1, rng=rng))
        prompt = base_prompt
        if attempt > 0:
            prompt += "\nReturn ONLY the JSON object, nothing else."
        while True:
            try:
                key = pool.next_key(clock.now())
                break
            except NoAvailableKeyError as exc:
                clock.sleep(max(exc.release_time - clock.now(), 0.0) + 1e-3)
        try:
            raw = client.complete(prompt, key)
        except ChatHttpError as exc:
            last_error = str(exc)
            if not exc.retryable:
                break
            if exc.status == 429 or exc.status >= 500:
                pool.start_cooldown(key, clock.now() + cooldown_seconds)
            continue
        try:
            verdict = parse_verdict(
                raw, judge_model=client.model_name, prompt_id=prompt_id
            )
            return verdict, ""
        except (JudgeParseError, JudgeRangeError) as exc:
            last_error = str(exc)
            continue
    return None, last_error


def run_judging(
    items: Sequence[tuple[str, str, str]],
    client: ChatClient,
    pool: KeyPool,
    max_attempts: int = 4,
    clock: Clock | None = None,
    seed: int = 0,
    cooldown_seconds: float = 60.0,
    max_parallel: int = 1,
) -> tuple[list[JudgeVerdict], list[dict]]:
    """Judge (prompt_id, context, response) items with retry and backoff.

    At most ``max_parallel`` judge calls run at once; verdicts come back
    in item order.  A parse failure re-prompts with a strictness reminder;
    items whose output never parsed land in the failure list.
    """
    clock = clock or SystemClock()

    def judge_item(item):
        return _judge_one(
            item, client, pool, max_attempts, clock, seed, cooldown_seconds
        )

    if max_parallel <= 1:
        outcomes = [judge_item(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=max_parallel) as executor:
            outcomes = list(executor.map(judge_item, items))

    verdicts: list[JudgeVerdict] = []
    failures: list[dict] = []
    for (prompt_id, _, _), (verdict, error) in zip(items, outcomes):
        if verdict is None:
            failures.append({"prompt_id": prompt_id, "reason": error})
        else:
            verdicts.append(verdict)
    return verdicts, failures
