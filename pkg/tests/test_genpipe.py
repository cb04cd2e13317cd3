import json
import threading
import time

import pytest

from hinglish_pipeline.corpus import save_corpus
from hinglish_pipeline.genpipe import (
    ChatHttpError,
    EndpointConfig,
    FailureKind,
    GenerationConfig,
    GenerationError,
    HttpChatClient,
    KeyPool,
    MockChatClient,
    NoAvailableKeyError,
    TopicSpec,
    ValidationVerdict,
    VirtualClock,
    backoff_delay,
    build_prompt,
    default_topics,
    load_topics,
    make_valid_responder,
    mock_dialogue_json,
    run_generation,
    salt_for_prompt,
    validate_dialogue,
)
from hinglish_pipeline.langid import Lexicons, Priority

TOPIC = TopicSpec(
    id="exam-stress",
    title="exam stress",
    keywords=("exam", "stress", "padhai"),
    persona_hint="supportive senior",
)
TOPIC2 = TopicSpec(id="roommate", title="roommate", keywords=("roommate", "rent"))

LEX = Lexicons(
    hindi_set=frozenset(
        ["yaar", "matlab", "bahut", "accha", "kya", "hai", "aaj", "thoda", "phir", "sach"]
    ),
    english_set=frozenset(
        ["scene", "plan", "time", "tension", "chill", "busy", "call", "update",
         "vibe", "fix", "exam", "stress", "padhai", "roommate", "rent"]
    ),
    priority=Priority.HINDI_WINS,
)

CONFIG = GenerationConfig(dialogues_per_topic=3)


# -- build_prompt ------------------------------------------------------------

def test_prompt_contains_required_elements():
    prompt = build_prompt(TOPIC, CONFIG)
    assert "exam stress" in prompt
    for keyword in TOPIC.keywords:
        assert keyword in prompt
    assert str(CONFIG.turns_per_dialogue) in prompt
    assert "alternate" in prompt
    assert f"{CONFIG.words_min}-{CONFIG.words_max}" in prompt
    assert "JSON" in prompt
    assert "Mix Hindi and English" in prompt
    assert "supportive senior" in prompt


def test_prompt_deterministic():
    assert build_prompt(TOPIC, CONFIG) == build_prompt(TOPIC, CONFIG)


def test_prompt_keywords_fixture():
    topic = TopicSpec(id="r", title="roommate", keywords=("roommate", "rent"))
    prompt = build_prompt(topic, CONFIG)
    assert "roommate" in prompt and "rent" in prompt


# -- key pool ----------------------------------------------------------------

def test_key_pool_round_robin():
    pool = KeyPool(["a", "b", "c"])
    assert [pool.next_key(0) for _ in range(4)] == ["a", "b", "c", "a"]


def test_key_pool_skips_cooling_keys():
    pool = KeyPool(["a", "b", "c"])
    pool.start_cooldown("b", until=100.0)
    assert [pool.next_key(0) for _ in range(3)] == ["a", "c", "a"]


def test_key_pool_cooldown_expires():
    pool = KeyPool(["a", "b"])
    pool.start_cooldown("a", until=10.0)
    assert pool.next_key(11.0) == "a"


def test_key_pool_all_cooling_reports_earliest_release():
    pool = KeyPool(["a", "b"])
    pool.start_cooldown("a", until=30.0)
    pool.start_cooldown("b", until=20.0)
    with pytest.raises(NoAvailableKeyError) as err:
        pool.next_key(0.0)
    assert err.value.release_time == 20.0
    assert "until" in str(err.value)


def test_key_pool_requires_keys():
    with pytest.raises(ValueError):
        KeyPool([])


# -- backoff -----------------------------------------------------------------

def test_backoff_schedule_without_jitter():
    delays = [backoff_delay(i, jitter_fraction=0.0) for i in range(8)]
    assert delays[:4] == [1.0, 2.0, 4.0, 8.0]
    assert delays == sorted(delays)
    assert backoff_delay(10, jitter_fraction=0.0) == 60.0


def test_backoff_jitter_bounds():
    import random

    rng = random.Random(0)
    for attempt, expected in [(0, 1.0), (3, 8.0), (10, 60.0)]:
        for _ in range(200):
            delay = backoff_delay(attempt, rng=rng)
            assert abs(delay - expected) <= expected * 0.1 + 1e-12


def test_backoff_rejects_negative_attempt():
    with pytest.raises(ValueError):
        backoff_delay(-1)


# -- validate_dialogue ---------------------------------------------------------

def make_turn_text(keyword="exam"):
    words = [keyword]
    hi = ["yaar", "matlab", "bahut", "accha", "kya", "hai"]
    en = ["scene", "plan", "time", "tension", "chill", "busy"]
    for i in range(44):
        words.append(hi[i % 6] if i % 2 == 0 else en[i % 6])
    return " ".join(words)


def make_raw(n_turns=8, first_role="user", text_fn=make_turn_text):
    roles = [first_role if i % 2 == 0 else
             ("assistant" if first_role == "user" else "user")
             for i in range(n_turns)]
    return json.dumps(
        [{"role": r, "text": text_fn()} for r in roles], ensure_ascii=False
    )


def test_validate_accepts_wellformed_dialogue():
    verdict, dialogue = validate_dialogue(make_raw(), TOPIC, CONFIG, LEX)
    assert verdict.ok and not verdict.failures
    assert dialogue is not None
    assert len(dialogue.turns) == 8
    assert dialogue.topic == "exam-stress"
    assert dialogue.persona == "supportive senior"


def test_validate_flags_assistant_first():
    verdict, dialogue = validate_dialogue(
        make_raw(first_role="assistant"), TOPIC, CONFIG, LEX
    )
    assert dialogue is None
    assert FailureKind.ROLE_ORDER in verdict.failures


def test_validate_flags_all_english_as_insufficient_mixing():
    def english_only():
        return "exam " + " ".join(
            ["plan", "time", "tension", "chill", "busy", "scene"][i % 6]
            for i in range(44)
        )

    verdict, _ = validate_dialogue(
        make_raw(text_fn=english_only), TOPIC, CONFIG, LEX
    )
    assert verdict.failures == (FailureKind.INSUFFICIENT_MIXING,)


def test_validate_flags_turn_count():
    verdict, _ = validate_dialogue(make_raw(n_turns=6), TOPIC, CONFIG, LEX)
    assert FailureKind.TURN_COUNT in verdict.failures


def test_validate_flags_word_bounds():
    def short_text():
        return "exam yaar scene"

    verdict, _ = validate_dialogue(make_raw(text_fn=short_text), TOPIC, CONFIG, LEX)
    assert FailureKind.WORD_BOUNDS in verdict.failures


def test_validate_flags_off_topic():
    def no_keyword():
        words = []
        hi = ["yaar", "matlab", "bahut", "accha", "kya", "hai"]
        en = ["scene", "plan", "time", "tension", "chill", "busy"]
        for i in range(45):
            words.append(hi[i % 6] if i % 2 == 0 else en[i % 6])
        return " ".join(words)

    verdict, _ = validate_dialogue(make_raw(text_fn=no_keyword), TOPIC, CONFIG, LEX)
    assert verdict.failures == (FailureKind.OFF_TOPIC,)


def test_validate_flags_unparseable_payloads():
    for raw in ["not json at all", "{}", "[]", '[{"role": "user"}]', '[1, 2]']:
        verdict, dialogue = validate_dialogue(raw, TOPIC, CONFIG, LEX)
        assert dialogue is None
        assert verdict.failures == (FailureKind.PARSE_ERROR,)


def test_validate_tolerates_markdown_fence():
    raw = "```json\n" + make_raw() + "\n```"
    verdict, _ = validate_dialogue(raw, TOPIC, CONFIG, LEX)
    assert verdict.ok


def test_validate_cleans_and_normalizes_output():
    def noisy():
        return make_turn_text() + " bhot!!!! \U0001F602"

    verdict, dialogue = validate_dialogue(make_raw(text_fn=noisy), TOPIC, CONFIG, LEX)
    assert verdict.ok
    text = dialogue.turns[0].text
    assert "bhot" not in text and "bahut!" in text
    assert "\U0001F602" not in text and "!!!!" not in text


def test_verdict_invariant():
    with pytest.raises(ValueError):
        ValidationVerdict(ok=True, failures=(FailureKind.PARSE_ERROR,))


def test_mock_dialogue_is_valid_by_construction():
    for salt in range(5):
        raw = mock_dialogue_json(TOPIC, CONFIG, salt=salt)
        verdict, dialogue = validate_dialogue(raw, TOPIC, CONFIG, LEX)
        assert verdict.ok, verdict.failures
        assert dialogue is not None


# -- run_generation ----------------------------------------------------------

def run_mock(topics, config, responder, keys=("k1", "k2", "k3"), seed=7,
             batch_size=None):
    if batch_size is not None:
        config = GenerationConfig(
            **{**config.__dict__, "batch_size": batch_size}
        )
    client = MockChatClient(responder)
    pool = KeyPool(list(keys))
    clock = VirtualClock()
    dialogues, report = run_generation(
        [t for t in topics], config, client, pool, lex=LEX, clock=clock, seed=seed
    )
    return dialogues, report, client, clock


def test_all_valid_run():
    topics = [TOPIC, TOPIC2]
    responder = make_valid_responder(topics, CONFIG)
    dialogues, report, client, clock = run_mock(topics, CONFIG, responder)
    assert len(dialogues) == 6
    assert report.total_calls == 6
    assert client.call_count == 6
    for stats in report.topics.values():
        assert stats == {"requested": 3, "succeeded": 3, "failed": 0, "attempts": 3}
    assert clock.sleep_log == []
    assert report.token_total == sum(
        t.word_count for d in dialogues for t in d.turns
    )


def test_validation_failure_then_success_records_two_attempts():
    topics = [TOPIC]
    config = GenerationConfig(dialogues_per_topic=1)
    valid = make_valid_responder(topics, config)
    state = {"failed": False}

    def responder(index, prompt, key):
        if not state["failed"]:
            state["failed"] = True
            return "[]"  # parse failure -> re-prompt
        assert "parse_error" in prompt  # corrective suffix present
        return valid(index, prompt, key)

    dialogues, report, client, clock = run_mock(topics, config, responder)
    assert len(dialogues) == 1
    assert dialogues[0].meta["validation_attempts"] == "2"
    assert report.topics["exam-stress"]["attempts"] == 2
    assert client.call_count == 2
    assert len(clock.sleep_log) == 1
    assert 0.9 <= clock.sleep_log[0] <= 1.1


def test_http_429_twice_then_success_with_cooldown():
    topics = [TOPIC]
    config = GenerationConfig(dialogues_per_topic=1)
    valid = make_valid_responder(topics, config)
    state = {"calls": 0}

    def responder(index, prompt, key):
        state["calls"] += 1
        if state["calls"] <= 2:
            raise ChatHttpError(429)
        return valid(index, prompt, key)

    dialogues, report, client, clock = run_mock(topics, config, responder)
    assert len(dialogues) == 1
    assert report.topics["exam-stress"]["attempts"] == 3
    # two backoff sleeps: ~1s then ~2s
    assert len(clock.sleep_log) == 2
    assert 0.9 <= clock.sleep_log[0] <= 1.1
    assert 1.8 <= clock.sleep_log[1] <= 2.2
    # the two keys that returned 429 went on cooldown; the third call used k3
    assert client.calls[2][1] == "k3"


def test_fatal_http_error_fails_without_retry():
    topics = [TOPIC, TOPIC2]
    config = GenerationConfig(dialogues_per_topic=1)
    valid = make_valid_responder(topics, config)

    def mixed(index, prompt, key):
        if "roommate" in prompt:
            return valid(index, prompt, key)
        raise ChatHttpError(403)

    dialogues, report, client, clock = run_mock(topics, config, mixed)
    assert len(dialogues) == 1
    assert report.topics["exam-stress"]["failed"] == 1
    assert report.topics["exam-stress"]["attempts"] == 1  # no retry on 403
    assert report.failures[0]["topic"] == "exam-stress"
    assert "403" in report.failures[0]["reason"]


def test_exhausted_attempts_fail_dialogue_but_run_continues():
    topics = [TOPIC, TOPIC2]
    config = GenerationConfig(dialogues_per_topic=1, max_attempts=3)
    valid = make_valid_responder(topics, config)

    def responder(index, prompt, key):
        if "exam" in prompt:
            raise ChatHttpError(503)
        return valid(index, prompt, key)

    dialogues, report, client, clock = run_mock(topics, config, responder)
    assert len(dialogues) == 1
    assert report.topics["exam-stress"]["failed"] == 1
    assert report.topics["exam-stress"]["attempts"] == 3
    assert report.total_calls == 4


def test_zero_successes_is_error():
    def responder(index, prompt, key):
        return "garbage"

    client = MockChatClient(responder)
    with pytest.raises(GenerationError):
        run_generation(
            [TOPIC], GenerationConfig(dialogues_per_topic=1, max_attempts=2),
            client, KeyPool(["k"]), lex=LEX, clock=VirtualClock(), seed=1,
        )


def test_duplicate_outputs_deduplicated_by_id():
    topics = [TOPIC]
    config = GenerationConfig(dialogues_per_topic=3)

    def responder(index, prompt, key):
        return mock_dialogue_json(TOPIC, config, salt=0)  # identical every time

    dialogues, report, client, clock = run_mock(topics, config, responder)
    assert len(dialogues) == 1
    assert report.deduplicated == 2
    assert report.topics["exam-stress"]["succeeded"] == 1


def test_no_two_outputs_share_an_id():
    topics = [TOPIC, TOPIC2]
    responder = make_valid_responder(topics, CONFIG)
    dialogues, *_ = run_mock(topics, CONFIG, responder)
    ids = [d.id for d in dialogues]
    assert len(ids) == len(set(ids))


def test_run_is_byte_reproducible(tmp_path):
    topics = [TOPIC, TOPIC2]

    def run_once(path):
        responder = make_valid_responder(topics, CONFIG)
        dialogues, report, _, _ = run_mock(topics, CONFIG, responder)
        save_corpus(dialogues, path)
        return path.read_bytes(), report.to_json()

    bytes_a, report_a = run_once(tmp_path / "a.jsonl")
    bytes_b, report_b = run_once(tmp_path / "b.jsonl")
    assert bytes_a == bytes_b
    assert report_a == report_b


def test_parallel_run_matches_serial_run(tmp_path):
    topics = [TOPIC, TOPIC2]
    config = GenerationConfig(dialogues_per_topic=4)

    def run_once(batch_size, path):
        responder = make_valid_responder(topics, config)
        dialogues, report, _, _ = run_mock(
            topics, config, responder, batch_size=batch_size
        )
        save_corpus(dialogues, path)
        return path.read_bytes(), report.to_json()

    serial = run_once(1, tmp_path / "serial.jsonl")
    parallel = run_once(3, tmp_path / "parallel.jsonl")
    assert serial == parallel


def test_parallel_in_flight_never_exceeds_batch_size():
    topics = [TOPIC, TOPIC2]
    config = GenerationConfig(dialogues_per_topic=3, batch_size=2)
    valid = make_valid_responder(topics, config)
    active, peak = [], []
    lock = threading.Lock()

    def responder(index, prompt, key):
        with lock:
            active.append(1)
            peak.append(len(active))
        time.sleep(0.01)
        try:
            return valid(index, prompt, key)
        finally:
            with lock:
                active.pop()

    client = MockChatClient(responder)
    dialogues, report = run_generation(
        topics, config, client, KeyPool(["k"]), lex=LEX,
        clock=VirtualClock(), seed=3,
    )
    assert len(dialogues) == 6
    assert max(peak) <= 2


def test_emitted_dialogues_revalidate_clean():
    topics = [TOPIC, TOPIC2]
    responder = make_valid_responder(topics, CONFIG)
    dialogues, *_ = run_mock(topics, CONFIG, responder)
    by_id = {t.id: t for t in topics}
    for dialogue in dialogues:
        payload = json.dumps(
            [{"role": t.role.value, "text": t.text} for t in dialogue.turns],
            ensure_ascii=False,
        )
        verdict, _ = validate_dialogue(payload, by_id[dialogue.topic], CONFIG, LEX)
        assert verdict.ok


# -- topics and endpoint config ------------------------------------------------

def test_default_topics_cover_paper_examples():
    topics = default_topics()
    assert len(topics) >= 40
    titles = [t.title for t in topics]
    assert "exam stress" in titles
    assert "love" in titles
    assert "roommate" in titles
    assert len({t.id for t in topics}) == len(topics)
    assert all(t.keywords for t in topics)


def test_load_topics_rejects_duplicates(tmp_path):
    path = tmp_path / "topics.json"
    path.write_text(
        json.dumps(
            [
                {"id": "a", "title": "a", "keywords": ["x"]},
                {"id": "a", "title": "b", "keywords": ["y"]},
            ]
        ),
        encoding="utf-8",
    )
    with pytest.raises(ValueError, match="duplicate"):
        load_topics(path)


def test_salt_recovered_from_variation_line():
    prompt = build_prompt(TOPIC, CONFIG) + "\nConversation variation: 3 of 4; make it distinct."
    assert salt_for_prompt(prompt) == 2


def test_endpoint_config_parsing(tmp_path, monkeypatch):
    path = tmp_path / "endpoint.ini"
    path.write_text(
        "[endpoint]\nurl = http://localhost:9/v1/chat\nmodel = test-model\n"
        "keys = k1, k2\ntimeout = 12\n",
        encoding="utf-8",
    )
    config = EndpointConfig.from_file(path)
    assert config.url == "http://localhost:9/v1/chat"
    assert config.model == "test-model"
    assert config.keys == ("k1", "k2")
    assert config.timeout == 12.0
    monkeypatch.setenv("TEST_KEYS", "env1,env2,env3")
    config = EndpointConfig.from_file(path, env_keys="TEST_KEYS")
    assert config.keys == ("env1", "env2", "env3")


def test_endpoint_config_key_file(tmp_path):
    keys = tmp_path / "keys.txt"
    keys.write_text("# creds\nk9\nk10\n", encoding="utf-8")
    path = tmp_path / "endpoint.ini"
    path.write_text(
        "[endpoint]\nurl = http://x\nmodel = m\nkey_file = keys.txt\n",
        encoding="utf-8",
    )
    assert EndpointConfig.from_file(path).keys == ("k9", "k10")


def test_http_chat_client_roundtrip_and_errors():
    import http.server

    class Handler(http.server.BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers["Content-Length"])
            body = json.loads(self.rfile.read(length))
            auth = self.headers.get("Authorization", "")
            if auth != "Bearer good-key":
                self.send_error(429)
                return
            reply = {
                "choices": [
                    {"message": {"content": f"echo:{body['model']}"}}
                ]
            }
            payload = json.dumps(reply).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/v1/chat"
        client = HttpChatClient(url, model="m1")
        assert client.complete("hello", "good-key") == "echo:m1"
        with pytest.raises(ChatHttpError) as err:
            client.complete("hello", "bad-key")
        assert err.value.status == 429 and err.value.retryable
        client.close()
    finally:
        server.shutdown()
