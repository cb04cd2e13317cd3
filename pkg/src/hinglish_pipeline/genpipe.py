"""Topic-driven synthetic dialogue generation against a chat endpoint.

The run loop is resilient by construction: API keys rotate round-robin
with per-key cooldowns, rate-limit and server errors retry with capped
exponential backoff, and structurally or linguistically invalid outputs
trigger corrective re-prompts up to a configurable attempt budget.  All
time flows through a clock interface so tests drive the whole pipeline
on a virtual clock in milliseconds.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .corpus import Dialogue, Role, Turn, count_tokens
from .langid import Lexicons, default_lexicons, tag_tokens
from .metrics import compute_cmi
from .normalize import (
    CleaningConfig,
    VariantTable,
    clean_and_normalize,
    default_variant_table,
)

__all__ = [
    "Clock",
    "SystemClock",
    "VirtualClock",
    "KeyPool",
    "NoAvailableKeyError",
    "backoff_delay",
    "TopicSpec",
    "GenerationConfig",
    "FailureKind",
    "ValidationVerdict",
    "ChatClient",
    "ChatHttpError",
    "HttpChatClient",
    "MockChatClient",
    "EndpointConfig",
    "GenerationError",
    "RunReport",
    "build_prompt",
    "load_topics",
    "default_topics",
    "default_variant_table",
    "validate_dialogue",
    "run_generation",
    "mock_dialogue_json",
    "make_valid_responder",
    "topic_for_prompt",
    "salt_for_prompt",
]


# --------------------------------------------------------------------------
# Clocks

class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock for tests: sleep() advances time instantly.

    Every sleep duration is recorded so backoff schedules can be asserted.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._t = start
        self._lock = threading.Lock()
        self.sleep_log: list[float] = []

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        with self._lock:
            self._t += seconds
            self.sleep_log.append(seconds)


# --------------------------------------------------------------------------
# Key rotation and backoff

class NoAvailableKeyError(RuntimeError):
    def __init__(self, release_time: float) -> None:
        super().__init__(f"no available key until {release_time:.3f}")
        self.release_time = release_time


class KeyPool:
    """Round-robin credential rotation with per-key cooldowns."""

    def __init__(self, keys: list[str]) -> None:
        if not keys:
            raise ValueError("key pool needs at least one key")
        self._keys = list(keys)
        self._cursor = 0
        self._cooldown: dict[str, float] = {}
        self._lock = threading.Lock()

    def next_key(self, now: float) -> str:
        with self._lock:
            n = len(self._keys)
            for i in range(n):
                idx = (self._cursor + i) % n
                key = self._keys[idx]
                if self._cooldown.get(key, float("-inf")) <= now:
                    self._cursor = (idx + 1) % n
                    return key
            raise NoAvailableKeyError(min(self._cooldown[k] for k in self._keys))

    def start_cooldown(self, key: str, until: float) -> None:
        with self._lock:
            self._cooldown[key] = max(self._cooldown.get(key, 0.0), until)


def backoff_delay(
    attempt: int,
    base: float = 1.0,
    cap: float = 60.0,
    jitter_fraction: float = 0.1,
    rng: random.Random | None = None,
) -> float:
    """Capped exponential delay min(base * 2^attempt, cap), jittered.

    Jitter spreads the delay uniformly within +/- jitter_fraction of the
    un-jittered value; monotonicity in ``attempt`` holds before jitter.
    """
    if attempt < 0:
        raise ValueError("attempt must be >= 0")
    delay = min(base * (2.0**attempt), cap)
    if jitter_fraction > 0:
        r = (rng or random).uniform(-jitter_fraction, jitter_fraction)
        delay += delay * r
    return delay


# --------------------------------------------------------------------------
# Topics and configuration

@dataclass(frozen=True)
class TopicSpec:
    id: str
    title: str
    keywords: tuple[str, ...]
    persona_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ValueError(f"topic {self.id!r} has no keywords")


def load_topics(path: str | Path) -> list[TopicSpec]:
    """Load a JSON array of topic specs; ids must be unique."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError("topic file must hold a JSON array")
    topics = []
    seen = set()
    for entry in raw:
        topic = TopicSpec(
            id=entry["id"],
            title=entry["title"],
            keywords=tuple(entry["keywords"]),
            persona_hint=entry.get("persona_hint"),
        )
        if topic.id in seen:
            raise ValueError(f"duplicate topic id {topic.id!r}")
        seen.add(topic.id)
        topics.append(topic)
    return topics


def default_topics() -> list[TopicSpec]:
    with resources.as_file(
        resources.files("hinglish_pipeline") / "data" / "topics.json"
    ) as path:
        return load_topics(path)


@dataclass(frozen=True)
class GenerationConfig:
    turns_per_dialogue: int = 8
    words_min: int = 40
    words_max: int = 50
    accept_words_min: int = 20
    accept_words_max: int = 80
    min_dialogue_cmi: float = 0.05
    max_attempts: int = 4
    batch_size: int = 1
    dialogues_per_topic: int = 3

    def __post_init__(self) -> None:
        if self.turns_per_dialogue < 2 or self.turns_per_dialogue % 2 != 0:
            raise ValueError("turns_per_dialogue must be even and >= 2")
        if self.words_min > self.words_max:
            raise ValueError("words_min must not exceed words_max")
        if not (self.accept_words_min <= self.words_min and self.words_max <= self.accept_words_max):
            raise ValueError("acceptance bounds must contain the target word range")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.batch_size < 1 or self.dialogues_per_topic < 1:
            raise ValueError("batch_size and dialogues_per_topic must be positive")


# --------------------------------------------------------------------------
# Prompting

_PROMPT_TEMPLATE = """\
You are writing a realistic casual conversation in romanized Hinglish \
(Hindi written in Latin script, naturally mixed with English).

Topic: {title}
Keywords to weave in: {keywords}
{persona_line}
Requirements:
- Produce exactly {turns} messages that strictly alternate roles, \
starting with "user", then "assistant", and so on.
- Every message must be {words_min}-{words_max} words long.
- Mix Hindi and English inside each message the way young bilingual \
speakers text each other; do not write monolingual English or pure Hindi.
- Keep the conversation on the topic above and use at least one keyword.

Output format: a JSON array only, no prose before or after, where each \
element is an object {{"role": "user"|"assistant", "text": "..."}}.
"""


def build_prompt(topic: TopicSpec, config: GenerationConfig) -> str:
    """Deterministic instruction prompt for one dialogue."""
    persona_line = (
        f"Assistant persona: {topic.persona_hint}\n" if topic.persona_hint else ""
    )
    return _PROMPT_TEMPLATE.format(
        title=topic.title,
        keywords=", ".join(topic.keywords),
        persona_line=persona_line,
        turns=config.turns_per_dialogue,
        words_min=config.words_min,
        words_max=config.words_max,
    )


def _corrective_suffix(failures: list["FailureKind"]) -> str:
    names = ", ".join(f.value for f in failures)
    return (
        "\nYour previous output was rejected for: "
        f"{names}. Fix exactly these problems and answer again with only the JSON array."
    )


def _variation_line(index: int, total: int) -> str:
    # Distinguishes sibling requests for the same topic so sampling
    # endpoints produce distinct dialogues deterministically.
    return f"\nConversation variation: {index + 1} of {total}; make it distinct."


# --------------------------------------------------------------------------
# Validation

class FailureKind(str, Enum):
    PARSE_ERROR = "parse_error"
    ROLE_ORDER = "role_order"
    TURN_COUNT = "turn_count"
    WORD_BOUNDS = "word_bounds"
    INSUFFICIENT_MIXING = "insufficient_mixing"
    OFF_TOPIC = "off_topic"


@dataclass(frozen=True)
class ValidationVerdict:
    ok: bool
    failures: tuple[FailureKind, ...]

    def __post_init__(self) -> None:
        if self.ok != (len(self.failures) == 0):
            raise ValueError("ok must hold exactly when failures is empty")

    @classmethod
    def from_failures(cls, failures: list[FailureKind]) -> "ValidationVerdict":
        return cls(ok=not failures, failures=tuple(failures))


def _extract_json_array(raw: str):
    text = raw.strip()
    if text.startswith("```"):
        # Drop a markdown fence wrapper if the model added one.
        text = text.strip("`")
        if text.startswith("json"):
            text = text[4:]
        text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    start = text.find("[")
    end = text.rfind("]")
    if start != -1 and end > start:
        try:
            return json.loads(text[start : end + 1])
        except json.JSONDecodeError:
            return None
    return None


def validate_dialogue(
    raw: str,
    topic: TopicSpec,
    config: GenerationConfig,
    lex: Lexicons,
    table: VariantTable | None = None,
    cleaning: CleaningConfig | None = None,
) -> tuple[ValidationVerdict, Dialogue | None]:
    """Structural and linguistic validation of one generated dialogue.

    The raw text must parse as a JSON array of {role, text} objects; the
    checks then cover role alternation, turn count, per-turn word bounds
    (on the cleaned, normalized text), a minimum dialogue-mean mixing
    index as the realism proxy, and keyword containment as the relevance
    proxy.  Failures are data, not exceptions; on success the cleaned and
    normalized dialogue is returned.
    """
    table = table if table is not None else default_variant_table()
    cleaning = cleaning or CleaningConfig()
    parsed = _extract_json_array(raw)
    if not isinstance(parsed, list) or not parsed:
        return ValidationVerdict.from_failures([FailureKind.PARSE_ERROR]), None
    roles: list[str] = []
    texts: list[str] = []
    for item in parsed:
        if (
            not isinstance(item, dict)
            or not isinstance(item.get("role"), str)
            or not isinstance(item.get("text"), str)
            or item["role"] not in ("user", "assistant")
        ):
            return ValidationVerdict.from_failures([FailureKind.PARSE_ERROR]), None
        roles.append(item["role"])
        texts.append(item["text"])

    failures: list[FailureKind] = []
    expected = ["user" if i % 2 == 0 else "assistant" for i in range(len(roles))]
    if roles != expected:
        failures.append(FailureKind.ROLE_ORDER)
    if len(roles) != config.turns_per_dialogue:
        failures.append(FailureKind.TURN_COUNT)

    processed = [clean_and_normalize(t, table, cleaning) for t in texts]
    word_counts = [len(t.split()) for t in processed]
    if any(
        not (config.accept_words_min <= wc <= config.accept_words_max)
        for wc in word_counts
    ):
        failures.append(FailureKind.WORD_BOUNDS)

    cmis = [compute_cmi(tag_tokens(t, lex)) for t in processed]
    if sum(cmis) / len(cmis) < config.min_dialogue_cmi:
        failures.append(FailureKind.INSUFFICIENT_MIXING)

    joined = " ".join(processed).lower()
    if not any(kw.lower() in joined for kw in topic.keywords):
        failures.append(FailureKind.OFF_TOPIC)

    verdict = ValidationVerdict.from_failures(failures)
    if not verdict.ok:
        return verdict, None
    turns = [
        Turn(role=Role.USER if r == "user" else Role.ASSISTANT, text=t)
        for r, t in zip(roles, processed)
    ]
    dialogue = Dialogue.build(
        topic=topic.id, persona=topic.persona_hint, turns=turns
    )
    return verdict, dialogue


# --------------------------------------------------------------------------
# Chat-completion clients

class ChatHttpError(Exception):
    """Transport-level failure of a chat completion call."""

    def __init__(self, status: int, message: str = "") -> None:
        super().__init__(message or f"chat endpoint returned HTTP {status}")
        self.status = status

    @property
    def retryable(self) -> bool:
        return self.status == 429 or self.status >= 500 or self.status == 0


class ChatClient(Protocol):
    model_name: str

    def complete(self, prompt: str, api_key: str) -> str: ...


class HttpChatClient:
    """Vendor-neutral JSON chat client (OpenAI-style request shape)."""

    def __init__(
        self,
        url: str,
        model: str,
        timeout: float = 60.0,
        auth_header: str = "Authorization",
        auth_scheme: str = "Bearer",
    ) -> None:
        self.url = url
        self.model_name = model
        self.timeout = timeout
        self.auth_header = auth_header
        self.auth_scheme = auth_scheme
        self._client = httpx.Client(timeout=timeout)

    def complete(self, prompt: str, api_key: str) -> str:
        headers = {}
        if api_key:
            value = f"{self.auth_scheme} {api_key}".strip()
            headers[self.auth_header] = value
        body = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = self._client.post(self.url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ChatHttpError(0, f"transport error: {exc}") from exc
        if response.status_code != 200:
            raise ChatHttpError(response.status_code)
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ChatHttpError(0, f"malformed completion envelope: {exc}") from exc

    def close(self) -> None:
        self._client.close()


class MockChatClient:
    """In-process scripted endpoint for tests and offline runs.

    ``responder(call_index, prompt, api_key)`` either returns response
    text or raises ChatHttpError; every call is recorded.
    """

    def __init__(
        self,
        responder: Callable[[int, str, str], str],
        model_name: str = "mock",
    ) -> None:
        self.model_name = model_name
        self._responder = responder
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str]] = []

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, prompt: str, api_key: str) -> str:
        with self._lock:
            index = len(self.calls)
            self.calls.append((prompt, api_key))
        return self._responder(index, prompt, api_key)


# Deterministic filler vocabulary for the mock generator; every word is
# present in the shipped lexicons so mock dialogues tag and mix cleanly.
_MOCK_HI = ("yaar", "matlab", "bahut", "accha", "kya", "hai", "aaj", "thoda", "phir", "sach")
_MOCK_EN = ("scene", "plan", "time", "tension", "chill", "busy", "call", "update", "vibe", "fix")


def mock_dialogue_json(topic: TopicSpec, config: GenerationConfig, salt: int = 0) -> str:
    """A valid-by-construction dialogue for (topic, salt), as response text."""
    keyword = topic.keywords[salt % len(topic.keywords)]
    n_words = (config.words_min + config.words_max) // 2
    turns = []
    for t in range(config.turns_per_dialogue):
        words = [keyword if " " not in keyword else keyword.split()[0]]
        i = 0
        while len(words) < n_words:
            pick = _MOCK_HI if i % 2 == 0 else _MOCK_EN
            words.append(pick[(salt + t + i) % len(pick)])
            i += 1
        words.append(f"v{salt}")
        role = "user" if t % 2 == 0 else "assistant"
        turns.append({"role": role, "text": " ".join(words)})
    return json.dumps(turns, ensure_ascii=False)


def topic_for_prompt(topics: list[TopicSpec], prompt: str) -> TopicSpec:
    """Recover which topic a generation prompt was built for."""
    for topic in topics:
        if f"Topic: {topic.title}\n" in prompt:
            return topic
    return topics[0]


def salt_for_prompt(prompt: str) -> int:
    """Recover the variation index embedded in a generation prompt."""
    match = re.search(r"Conversation variation: (\d+) of", prompt)
    return int(match.group(1)) - 1 if match else 0


def make_valid_responder(
    topics: list[TopicSpec], config: GenerationConfig
) -> Callable[[int, str, str], str]:
    """Responder that always answers with a valid dialogue for the prompt.

    The dialogue content is a pure function of (topic, variation line), so
    runs are byte-reproducible regardless of call interleaving and sibling
    requests for one topic still produce distinct dialogues.
    """

    def responder(index: int, prompt: str, api_key: str) -> str:
        topic = topic_for_prompt(topics, prompt)
        return mock_dialogue_json(topic, config, salt=salt_for_prompt(prompt))

    return responder


# --------------------------------------------------------------------------
# Endpoint configuration

@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    keys: tuple[str, ...]
    timeout: float = 60.0

    @classmethod
    def from_file(
        cls, path: str | Path, section: str = "endpoint", env_keys: str | None = None
    ) -> "EndpointConfig":
        """Read a [section] block of a key=value config file.

        ``keys`` is a comma-separated list, or ``key_file`` points at a
        one-key-per-line file.  ``env_keys`` names an environment variable
        that overrides the credential list (credentials only; the url and
        model always come from the file).
        """
        import configparser
        import os

        parser = configparser.ConfigParser()
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise FileNotFoundError(path)
        if section not in parser:
            raise ValueError(f"{path}: missing [{section}] section")
        block = parser[section]
        keys: list[str] = []
        env_value = os.environ.get(env_keys) if env_keys else None
        if env_value:
            keys = [k.strip() for k in env_value.split(",") if k.strip()]
        elif "keys" in block:
            keys = [k.strip() for k in block["keys"].split(",") if k.strip()]
        elif "key_file" in block:
            key_path = Path(block["key_file"])
            if not key_path.is_absolute():
                key_path = Path(path).parent / key_path
            keys = [
                line.strip()
                for line in key_path.read_text(encoding="utf-8").splitlines()
                if line.strip() and not line.startswith("#")
            ]
        if not keys:
            raise ValueError(f"{path}: no API keys configured for [{section}]")
        return cls(
            url=block["url"],
            model=block.get("model", ""),
            keys=tuple(keys),
            timeout=block.getfloat("timeout", 60.0),
        )


# --------------------------------------------------------------------------
# Run loop

class GenerationError(RuntimeError):
    pass


@dataclass
class _TaskOutcome:
    topic_id: str
    index: int
    attempts: int
    dialogue: Dialogue | None
    failure_reason: str | None = None


@dataclass(frozen=True)
class RunReport:
    topics: dict[str, dict[str, int]]
    total_dialogues: int
    total_calls: int
    token_total: int
    deduplicated: int
    failures: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "topics": {k: dict(v) for k, v in sorted(self.topics.items())},
            "total_dialogues": self.total_dialogues,
            "total_calls": self.total_calls,
            "token_total": self.token_total,
            "deduplicated": self.deduplicated,
            "failures": sorted(
                (dict(f) for f in self.failures),
                key=lambda f: (f["topic"], f["index"]),
            ),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)


def _generate_one(
    topic: TopicSpec,
    index: int,
    config: GenerationConfig,
    client: ChatClient,
    pool: KeyPool,
    lex: Lexicons,
    table: VariantTable,
    clock: Clock,
    rng: random.Random,
    cooldown_seconds: float,
    backoff_base: float,
    backoff_cap: float,
    jitter_fraction: float,
) -> _TaskOutcome:
    base_prompt = build_prompt(topic, config) + _variation_line(
        index, config.dialogues_per_topic
    )
    last_failures: tuple[FailureKind, ...] = ()
    last_error: str | None = None
    for attempt in range(config.max_attempts):
        if attempt > 0:
            clock.sleep(
                backoff_delay(
                    attempt - 1,
                    base=backoff_base,
                    cap=backoff_cap,
                    jitter_fraction=jitter_fraction,
                    rng=rng,
                )
            )
        prompt = base_prompt
        if last_failures:
            prompt += _corrective_suffix(list(last_failures))
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
                return _TaskOutcome(
                    topic.id, index, attempt + 1, None, f"fatal http error: {exc}"
                )
            if exc.status == 429 or exc.status >= 500:
                pool.start_cooldown(key, clock.now() + cooldown_seconds)
            continue
        verdict, dialogue = validate_dialogue(raw, topic, config, lex, table)
        if verdict.ok and dialogue is not None:
            dialogue = replace(
                dialogue,
                meta={
                    "generator_model": client.model_name,
                    "validation_attempts": str(attempt + 1),
                },
            )
            return _TaskOutcome(topic.id, index, attempt + 1, dialogue)
        last_failures = verdict.failures
        last_error = "validation failed: " + ",".join(f.value for f in verdict.failures)
    return _TaskOutcome(topic.id, index, config.max_attempts, None, last_error)


def run_generation(
    topics: list[TopicSpec],
    config: GenerationConfig,
    client: ChatClient,
    pool: KeyPool,
    lex: Lexicons | None = None,
    table: VariantTable | None = None,
    clock: Clock | None = None,
    seed: int = 0,
    cooldown_seconds: float = 60.0,
    backoff_base: float = 1.0,
    backoff_cap: float = 60.0,
    jitter_fraction: float = 0.1,
) -> tuple[list[Dialogue], RunReport]:
    """Generate dialogues_per_topic dialogues per topic with retries.

    At most ``config.batch_size`` dialogues are in flight at once.  The
    emitted corpus and report depend only on (topics, config, client
    script, seed): task ordering, per-task jitter seeds, and report
    assembly are all deterministic, so a deterministic endpoint makes the
    whole run byte-reproducible.
    """
    if not topics:
        raise GenerationError("no topics to generate")
    lex = lex or default_lexicons()
    table = table if table is not None else default_variant_table()
    clock = clock or SystemClock()

    tasks = [(topic, i) for topic in topics for i in range(config.dialogues_per_topic)]

    def run_task(task: tuple[TopicSpec, int]) -> _TaskOutcome:
        topic, index = task
        # Jitter noise is seeded per task so parallel scheduling cannot
        # change any task's delay sequence.
        rng = random.Random(f"{seed}\x1f{topic.id}\x1f{index}")
        return _generate_one(
            topic,
            index,
            config,
            client,
            pool,
            lex,
            table,
            clock,
            rng,
            cooldown_seconds,
            backoff_base,
            backoff_cap,
            jitter_fraction,
        )

    if config.batch_size == 1:
        outcomes = [run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.batch_size) as pool_exec:
            outcomes = list(pool_exec.map(run_task, tasks))

    dialogues: list[Dialogue] = []
    seen_ids: set[str] = set()
    deduplicated = 0
    per_topic: dict[str, dict[str, int]] = {
        t.id: {"requested": 0, "succeeded": 0, "failed": 0, "attempts": 0}
        for t in topics
    }
    failures: list[dict] = []
    for outcome in outcomes:
        stats = per_topic[outcome.topic_id]
        stats["requested"] += 1
        stats["attempts"] += outcome.attempts
        if outcome.dialogue is None:
            stats["failed"] += 1
            failures.append(
                {
                    "topic": outcome.topic_id,
                    "index": outcome.index,
                    "reason": outcome.failure_reason or "unknown",
                }
            )
            continue
        if outcome.dialogue.id in seen_ids:
            deduplicated += 1
            continue
        seen_ids.add(outcome.dialogue.id)
        stats["succeeded"] += 1
        dialogues.append(outcome.dialogue)

    if not dialogues:
        raise GenerationError("generation produced zero valid dialogues")

    # Post-condition sweep: every emitted dialogue must re-validate clean.
    topic_by_id = {t.id: t for t in topics}
    for dialogue in dialogues:
        payload = json.dumps(
            [{"role": t.role.value, "text": t.text} for t in dialogue.turns],
            ensure_ascii=False,
        )
        verdict, _ = validate_dialogue(
            payload, topic_by_id[dialogue.topic], config, lex, table
        )
        if not verdict.ok:
            raise GenerationError(
                f"emitted dialogue {dialogue.id} failed re-validation: "
                + ",".join(f.value for f in verdict.failures)
            )

    report = RunReport(
        topics=per_topic,
        total_dialogues=len(dialogues),
        total_calls=sum(o.attempts for o in outcomes),
        token_total=count_tokens(dialogues),
        deduplicated=deduplicated,
        failures=tuple(failures),
    )
    return dialogues, report
