"""Command-line entry point for the corpus pipeline.

One subcommand per pipeline stage; a shared key=value config file can
supply defaults, with per-subcommand flags taking precedence.  Data goes
to files or stdout as JSON, human-readable summaries go to stderr, and
re-running any subcommand with the same inputs and seeds produces
byte-identical outputs (timestamps appear only in logs).
"""

from __future__ import annotations

import configparser
import json
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import judge as judge_mod
from .genpipe import (
    EndpointConfig,
    GenerationConfig,
    HttpChatClient,
    KeyPool,
    MockChatClient,
    SystemClock,
    VirtualClock,
    default_topics,
    default_variant_table,
    load_topics,
    make_valid_responder,
    run_generation,
)
from .langid import Priority, default_lexicons, load_lexicons, tag_tokens
from .metrics import aggregate_corpus, response_report
from .normalize import clean_and_normalize, load_variant_table
from .semsim import (
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
    NormalizingProvider,
    bertscore,
)


def _summary(message: str) -> None:
    click.echo(message, err=True)


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


def _load_corpus_strict(path: str) -> list[corpus_mod.Dialogue]:
    try:
        result = corpus_mod.load_corpus(path)
    except OSError as exc:
        raise click.ClickException(f"cannot read corpus {path}: {exc}") from exc
    if result.errors:
        first = result.errors[0]
        raise click.ClickException(
            f"{path} has {len(result.errors)} malformed line(s); "
            f"first at line {first.line_number}: {first.message}"
        )
    return result.dialogues


def _lexicons(hindi: str | None, english: str | None, priority: str) -> object:
    if hindi or english:
        if not (hindi and english):
            raise click.ClickException("--hindi and --english must be given together")
        return load_lexicons(hindi, english, Priority(priority))
    return default_lexicons(Priority(priority))


def _variant_table(path: str | None):
    return load_variant_table(path) if path else default_variant_table()


class _Config:
    """Optional shared config file: key=value sections feeding defaults."""

    def __init__(self, path: str | None) -> None:
        self.parser = configparser.ConfigParser()
        self.path = path
        if path:
            if not self.parser.read(path, encoding="utf-8"):
                raise click.ClickException(f"config file not found: {path}")
            if "paths" in self.parser:
                for key, value in self.parser["paths"].items():
                    if not Path(value).exists():
                        raise click.ClickException(
                            f"config [paths] {key} does not exist: {value}"
                        )
            if "split" in self.parser and "ratios" in self.parser["split"]:
                parts = [float(x) for x in self.parser["split"]["ratios"].split(",")]
                if abs(sum(parts) - 1.0) > 1e-9:
                    raise click.ClickException("config [split] ratios must sum to 1")

    def get(self, section: str, key: str, fallback: str | None = None) -> str | None:
        if section in self.parser and key in self.parser[section]:
            return self.parser[section][key]
        return fallback


@click.group(invoke_without_command=True)
@click.option("--config", "config_path", default=None, help="Shared config file.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Hinglish corpus pipeline: generate, clean, tag, split, evaluate."""
    ctx.obj = _Config(config_path)
    if ctx.invoked_subcommand is None:
        click.echo(main.get_help(ctx))
        ctx.exit(2)


# ---------------------------------------------------------------------------


@main.command()
@click.option("--in", "in_path", required=True, help="Corpus JSONL to split.")
@click.option("--ratios", default=None, help="Three comma-separated fractions.")
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", default=None, help="Directory for split files + manifest.")
@click.pass_obj
def split(cfg: _Config, in_path: str, ratios: str | None, seed: int | None, out_dir: str | None):
    """Deterministically split a corpus |train|validation|test|."""
    ratios = ratios or cfg.get("split", "ratios", "0.8,0.1,0.1")
    seed = seed if seed is not None else int(cfg.get("split", "seed", "0"))
    try:
        parts = tuple(float(x) for x in ratios.split(","))
    except ValueError:
        raise click.ClickException(f"bad --ratios value: {ratios}")
    dialogues = _load_corpus_strict(in_path)
    try:
        result = corpus_mod.split_corpus(dialogues, parts, seed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    target = Path(out_dir) if out_dir else Path(in_path).parent
    target.mkdir(parents=True, exist_ok=True)
    for name, subset in (
        ("train", result.train),
        ("validation", result.validation),
        ("test", result.test),
    ):
        corpus_mod.save_corpus(subset, target / f"{name}.jsonl")
    manifest = result.manifest()
    _emit_json(manifest.to_dict(), str(target / "manifest.json"))
    _summary(
        f"split {len(dialogues)} dialogues -> "
        f"{manifest.counts['train']}/{manifest.counts['validation']}/"
        f"{manifest.counts['test']} (seed {seed})"
    )


@main.command()
@click.option("--in", "in_path", required=True)
@click.option("--out", "out_path", required=True)
def export(in_path: str, out_path: str):
    """Export a corpus to chat-format JSONL ({"messages": [...]})."""
    dialogues = _load_corpus_strict(in_path)
    try:
        written = corpus_mod.export_chat_format(dialogues, out_path)
    except OSError as exc:
        raise click.ClickException(f"cannot write {out_path}: {exc}") from exc
    _emit_json({"written": written, "out": out_path}, None)
    _summary(f"exported {written} records to {out_path}")


@main.command()
@click.option("--table", "table_path", default=None, help="Variant TSV (default: bundled).")
@click.option("--in", "in_path", required=True)
@click.option("--out", "out_path", required=True)
def normalize(table_path: str | None, in_path: str, out_path: str):
    """Clean and canonicalize every turn of a corpus."""
    table = _variant_table(table_path)
    dialogues = _load_corpus_strict(in_path)
    changed = 0
    rebuilt = []
    for dialogue in dialogues:
        turns = []
        for turn in dialogue.turns:
            text = clean_and_normalize(turn.text, table)
            if text != turn.text:
                changed += 1
            turns.append(corpus_mod.Turn(role=turn.role, text=text))
        rebuilt.append(
            corpus_mod.Dialogue.build(
                topic=dialogue.topic,
                persona=dialogue.persona,
                turns=turns,
                meta=dialogue.meta,
            )
        )
    corpus_mod.save_corpus(rebuilt, out_path)
    _emit_json(
        {"dialogues": len(rebuilt), "changed_turns": changed, "out": out_path}, None
    )
    _summary(f"normalized {len(rebuilt)} dialogues ({changed} turns changed)")


@main.command()
@click.option("--hindi", default=None, help="Hindi lexicon path (default: bundled).")
@click.option("--english", default=None, help="English lexicon path (default: bundled).")
@click.option(
    "--priority",
    type=click.Choice([p.value for p in Priority]),
    default=Priority.HINDI_WINS.value,
)
@click.option("--in", "in_path", required=True)
@click.option("--out", "out_path", default=None, help="Output JSONL (default: stdout).")
def tag(hindi, english, priority, in_path, out_path):
    """Emit per-turn language-tag arrays for a corpus."""
    lex = _lexicons(hindi, english, priority)
    dialogues = _load_corpus_strict(in_path)
    lines = []
    for dialogue in dialogues:
        tags = [
            [t.tag.value for t in tag_tokens(turn.text, lex)]
            for turn in dialogue.turns
        ]
        lines.append(json.dumps({"id": dialogue.id, "turns": tags}, ensure_ascii=False))
    output = "\n".join(lines) + ("\n" if lines else "")
    if out_path:
        Path(out_path).write_text(output, encoding="utf-8")
    else:
        click.echo(output, nl=False)
    _summary(f"tagged {len(dialogues)} dialogues")


@main.command()
@click.option("--in", "in_path", required=True)
@click.option("--split-dir", default=None, help="Directory with train/validation/test.jsonl.")
@click.option("--hindi", default=None)
@click.option("--english", default=None)
@click.option(
    "--priority",
    type=click.Choice([p.value for p in Priority]),
    default=Priority.HINDI_WINS.value,
)
@click.option("--role", type=click.Choice(["assistant", "user", "both"]), default="assistant")
@click.option("--out", "out_path", default=None, help="Report JSON path (default: stdout).")
def metrics(in_path, split_dir, hindi, english, priority, role, out_path):
    """Compute corpus mixing metrics, optionally per split."""
    lex = _lexicons(hindi, english, priority)

    def corpus_bundle(dialogues) -> dict:
        texts = [
            turn.text
            for d in dialogues
            for turn in d.turns
            if role == "both" or turn.role.value == role
        ]
        if not texts:
            return {"n_responses": 0}
        agg = aggregate_corpus([response_report(t, lex) for t in texts])
        return {"n_responses": len(texts), **agg.to_dict()}

    dialogues = _load_corpus_strict(in_path)
    report = {"role": role, "overall": corpus_bundle(dialogues), "splits": {}}
    if split_dir:
        for name in ("train", "validation", "test"):
            path = Path(split_dir) / f"{name}.jsonl"
            if not path.exists():
                raise click.ClickException(f"missing split file: {path}")
            report["splits"][name] = corpus_bundle(_load_corpus_strict(str(path)))
    _emit_json(report, out_path)
    _summary(
        f"metrics over {report['overall'].get('n_responses', 0)} {role} turns "
        f"(cmi {report['overall'].get('cmi', 0):.3f})"
        if report["overall"].get("n_responses")
        else "metrics: no matching turns"
    )


@main.command()
@click.option("--provider", default="stub", help='"stub" or an embedding service URL.')
@click.option("--pairs", "pairs_path", required=True, help='JSONL of {"candidate","reference"}.')
@click.option("--dimension", type=int, default=64, help="Stub embedding dimension.")
@click.option("--raw", is_flag=True, help="Skip cleaning/normalization before embedding.")
@click.option("--out", "out_path", default=None)
def semsim(provider, pairs_path, dimension, raw, out_path):
    """Score candidate/reference pairs with greedy matching and cosine."""
    if provider == "stub":
        base = HashEmbeddingProvider(dimension=dimension)
    else:
        base = HttpEmbeddingProvider(provider)
    embedder = base if raw else NormalizingProvider(base, default_variant_table())
    try:
        lines = Path(pairs_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise click.ClickException(f"cannot read pairs file {pairs_path}: {exc}")
    pair_reports = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        try:
            report = bertscore(record["candidate"], record["reference"], embedder)
        except (KeyError, ValueError) as exc:
            raise click.ClickException(f"{pairs_path}:{lineno}: {exc}")
        pair_reports.append(report.to_dict())
    if not pair_reports:
        raise click.ClickException(f"no pairs found in {pairs_path}")
    n = len(pair_reports)
    mean = {
        key: sum(r[key] for r in pair_reports) / n
        for key in ("precision", "recall", "f1", "cosine")
    }
    _emit_json({"n_pairs": n, "mean": mean, "pairs": pair_reports}, out_path)
    _summary(f"scored {n} pairs (mean F1 {mean['f1']:.3f})")


@main.command()
@click.option("--topics", "topics_path", default=None, help="Topic JSON (default: bundled).")
@click.option("--endpoint", "endpoint_path", default=None, help="Endpoint config file.")
@click.option("--mock", is_flag=True, help="Use the deterministic in-process endpoint.")
@click.option("--out", "out_path", required=True)
@click.option("--report", "report_path", required=True)
@click.option("--dialogues-per-topic", type=int, default=None)
@click.option("--turns", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--max-attempts", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--n-topics", type=int, default=None, help="Use only the first N topics.")
@click.pass_obj
def generate(cfg, topics_path, endpoint_path, mock, out_path, report_path,
             dialogues_per_topic, turns, batch_size, max_attempts, seed, n_topics):
    """Generate synthetic dialogues topic by topic."""
    topics_path = topics_path or cfg.get("paths", "topics")
    topics = load_topics(topics_path) if topics_path else default_topics()
    if n_topics:
        topics = topics[:n_topics]
    overrides = {}
    for name, value in (
        ("dialogues_per_topic", dialogues_per_topic),
        ("turns_per_dialogue", turns),
        ("batch_size", batch_size),
        ("max_attempts", max_attempts),
    ):
        fallback = cfg.get("generation", name)
        if value is not None:
            overrides[name] = value
        elif fallback is not None:
            overrides[name] = int(fallback)
    try:
        gen_config = GenerationConfig(**overrides)
    except ValueError as exc:
        raise click.ClickException(str(exc))

    if mock:
        client = MockChatClient(make_valid_responder(topics, gen_config))
        pool = KeyPool(["mock-key"])
        clock = VirtualClock()
    else:
        endpoint_path = endpoint_path or cfg.get("paths", "endpoint")
        if not endpoint_path:
            raise click.ClickException("--endpoint config required unless --mock")
        try:
            endpoint = EndpointConfig.from_file(
                endpoint_path, section="endpoint", env_keys="HINGLISH_GENERATOR_KEYS"
            )
        except (OSError, ValueError, KeyError) as exc:
            raise click.ClickException(f"bad endpoint config: {exc}")
        client = HttpChatClient(endpoint.url, endpoint.model, timeout=endpoint.timeout)
        pool = KeyPool(list(endpoint.keys))
        clock = SystemClock()
    try:
        dialogues, run_report = run_generation(
            topics, gen_config, client, pool, clock=clock, seed=seed
        )
    except Exception as exc:
        raise click.ClickException(f"generation failed: {exc}")
    corpus_mod.save_corpus(dialogues, out_path)
    Path(report_path).write_text(run_report.to_json() + "\n", encoding="utf-8")
    _summary(
        f"generated {len(dialogues)} dialogues over {len(topics)} topics "
        f"({run_report.total_calls} endpoint calls) -> {out_path}"
    )


@main.command(name="judge")
@click.option("--endpoint", "endpoint_path", required=True, help="Judge endpoint config.")
@click.option("--prompts", "prompts_path", required=True, help='JSONL {"prompt_id","prompt"}.')
@click.option("--system-a", "a_path", required=True, help='JSONL {"prompt_id","response"}.')
@click.option("--system-b", "b_path", required=True)
@click.option("--label-a", default="Base")
@click.option("--label-b", default="Tuned")
@click.option("--max-parallel", type=int, default=4, help="Concurrent judge calls.")
@click.option("--out", "out_path", required=True)
def judge_cmd(endpoint_path, prompts_path, a_path, b_path, label_a, label_b,
              max_parallel, out_path):
    """Judge two response sets on the five-dimension rubric and compare."""
    try:
        endpoint = EndpointConfig.from_file(
            endpoint_path, section="endpoint", env_keys="HINGLISH_JUDGE_KEYS"
        )
    except (OSError, ValueError, KeyError) as exc:
        raise click.ClickException(f"bad endpoint config: {exc}")

    def read_jsonl(path: str, key: str) -> dict[str, str]:
        mapping = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                record = json.loads(line)
                mapping[record["prompt_id"]] = record[key]
        return mapping

    prompts = read_jsonl(prompts_path, "prompt")
    responses_a = read_jsonl(a_path, "response")
    responses_b = read_jsonl(b_path, "response")
    missing = [
        pid for pid in prompts if pid not in responses_a or pid not in responses_b
    ]
    if missing:
        raise click.ClickException(f"responses missing for prompt ids: {missing[:5]}")
    client = HttpChatClient(endpoint.url, endpoint.model, timeout=endpoint.timeout)
    pool = KeyPool(list(endpoint.keys))
    items_a = [(pid, prompts[pid], responses_a[pid]) for pid in sorted(prompts)]
    items_b = [(pid, prompts[pid], responses_b[pid]) for pid in sorted(prompts)]
    verdicts_a, failures_a = judge_mod.run_judging(
        items_a, client, pool, max_parallel=max_parallel
    )
    verdicts_b, failures_b = judge_mod.run_judging(
        items_b, client, pool, max_parallel=max_parallel
    )
    if failures_a or failures_b:
        raise click.ClickException(
            f"judging failed for {len(failures_a)} + {len(failures_b)} prompts"
        )
    report = judge_mod.compare_systems(verdicts_a, verdicts_b)
    payload = report.to_dict()
    payload["labels"] = {"a": label_a, "b": label_b}
    _emit_json(payload, out_path)
    _summary(judge_mod.render_comparison_table(report, label_a, label_b))


@main.command(name="serve-abtest")
@click.option("--items", "items_path", required=True, help="JSONL item pairs file.")
@click.option("--log", "log_path", required=True, help="Append-only record log.")
@click.option("--snapshot", "snapshot_path", default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8040)
@click.option("--seed", type=int, default=None, help="Deterministic session seeds.")
def serve_abtest(items_path, log_path, snapshot_path, host, port, seed):
    """Serve the blinded A/B evaluation REST API."""
    import uvicorn

    from .abtest import AbStore, create_app, load_items

    try:
        items = load_items(items_path)
    except (OSError, ValueError, KeyError) as exc:
        raise click.ClickException(f"cannot load items: {exc}")
    store = AbStore(
        {"default": items},
        log_path=log_path,
        master_seed=seed,
        snapshot_path=snapshot_path,
    )
    _summary(f"serving {len(items)} items on http://{host}:{port}")
    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")


@main.command(name="report")
@click.option("--comparison", "comparison_path", required=True)
@click.option("--label-a", default=None)
@click.option("--label-b", default=None)
def report_cmd(comparison_path, label_a, label_b):
    """Render a stored comparison as the base-vs-tuned table."""
    try:
        data = json.loads(Path(comparison_path).read_text(encoding="utf-8"))
        report = judge_mod.ComparisonReport.from_dict(data)
    except OSError as exc:
        raise click.ClickException(f"cannot read {comparison_path}: {exc}")
    except (KeyError, ValueError) as exc:
        raise click.ClickException(f"bad comparison file: {exc}")
    labels = data.get("labels", {})
    click.echo(
        judge_mod.render_comparison_table(
            report,
            label_a or labels.get("a", "Base"),
            label_b or labels.get("b", "Tuned"),
        )
    )


if __name__ == "__main__":
    main()
