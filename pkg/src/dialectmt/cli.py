"""Command-line surface: ingest, index, query, translate, evaluate.

Every subcommand is non-interactive, writes machine-readable output to
stdout or files, and exits 0 on success, 2 on usage errors, 3 on data
errors, 4 on network errors. The full offline path is
ingest -> index -> query -> translate --replay -> evaluate --replay,
which needs no network at all (the hash embedder stands in whenever
EMBED_URL is unset).

Configuration precedence is flags > environment > config file. The config
file is flat ``key = value`` text, ``#`` comments allowed; recognized keys
are ``llm.url``, ``llm.model``, ``llm.api_key``, ``embed.url``.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import click

from . import __version__, corpus, evaluate, index as index_mod, retrieve
from .embedding import DEFAULT_DIM, HashEmbedder, HttpEmbeddingProvider
from .errors import DataError, NetworkError
from .llm import ChatClient, HttpTransport, ModelConfig, RecordingTransport, ReplayTransport
from .prompt import TEMPLATE_VERSION
from .translator import DialectTranslator

EXIT_DATA = 3
EXIT_NETWORK = 4


def load_config(path: str | None) -> dict[str, str]:
    """Flat key=value config; blank lines and # comments ignored."""
    if not path:
        return {}
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line {line_no}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(flag, env_name: str, cfg: dict, cfg_key: str, default: str = "") -> str:
    if flag:
        return flag
    env = os.environ.get(env_name, "").strip()
    if env:
        return env
    return cfg.get(cfg_key, default)


@contextmanager
def _error_exit():
    try:
        yield
    except NetworkError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NETWORK)
    except (DataError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)


def _provider(dim: int | None):
    url = os.environ.get("EMBED_URL", "").strip()
    if url:
        return HttpEmbeddingProvider(url, expected_dim=dim)
    return HashEmbedder(dim=dim or DEFAULT_DIM)


def _sha256_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _index_checksum(path: str) -> str:
    return Path(path).read_bytes()[-8:].hex()


def _write_manifest(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload["tool_version"] = __version__
    payload["created_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _config_snapshot(pipeline: str, n: int, model_cfg: ModelConfig, replay: bool) -> dict:
    return {
        "pipeline": pipeline,
        "n": n,
        "weights": {
            "p1": list(retrieve.P1_WEIGHTS),
            "p2_standard": list(retrieve.P2_WEIGHTS_STANDARD),
            "p2_short": list(retrieve.P2_WEIGHTS_SHORT),
        },
        "candidates": {
            "p1": list(retrieve.P1_CANDIDATES),
            "p2_standard": list(retrieve.P2_CANDIDATES_STANDARD),
            "p2_short": list(retrieve.P2_CANDIDATES_SHORT),
        },
        "bonuses": {
            "district": retrieve.BonusConfig().district,
            "exact": retrieve.BonusConfig().exact,
            "substring": retrieve.BonusConfig().substring,
            "char_sim_cap": retrieve.BonusConfig().char_sim_cap,
        },
        "template_version": TEMPLATE_VERSION,
        "model": {
            "name": model_cfg.model,
            "endpoint": model_cfg.endpoint,
            "temperature": model_cfg.temperature,
            "max_tokens": model_cfg.max_tokens,
            "config_hash": model_cfg.config_hash(),
            "key_hash": model_cfg.key_hash(),
        },
        "replay": replay,
    }


@click.group()
@click.version_option(version=__version__, prog_name="dialectmt")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Flat key=value config file.")
@click.pass_context
def main(ctx, config_path):
    """Retrieval-augmented Bengali dialect translation toolkit."""
    ctx.ensure_object(dict)
    with _error_exit():
        ctx.obj["config"] = load_config(config_path)


@main.command("ingest")
@click.argument("input_path", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["pairs", "transcript"]), required=True)
@click.option("-o", "--output", "output_path", required=True,
              help="Normalized corpus file (JSON Lines).")
@click.option("--lenient", is_flag=True, help="Skip and count malformed lines instead of aborting.")
@click.option("--stats", "show_stats", is_flag=True, help="Print ingest stats JSON to stdout.")
def cmd_ingest(input_path, fmt, output_path, lenient, show_stats):
    """Normalize a raw corpus file into records ready for indexing."""
    with _error_exit():
        records, stats = corpus.ingest(input_path, fmt, strict=not lenient)
        corpus.save_records(records, output_path)
        if show_stats:
            click.echo(json.dumps(stats.to_dict(), ensure_ascii=False, sort_keys=True))


@main.command("index")
@click.argument("corpus_path", type=click.Path())
@click.option("-o", "--output", "output_path", required=True, help="Index file (DFIX format).")
@click.option("--dim", type=int, default=None,
              help="Embedding dimension; must match the provider's output.")
def cmd_index(corpus_path, output_path, dim):
    """Build the dense + sparse hybrid index over a normalized corpus."""
    with _error_exit():
        records = corpus.load_records(corpus_path)
        provider = _provider(dim)
        hybrid = index_mod.build_hybrid(records, provider)
        if dim is not None and hybrid.dim != dim:
            raise DataError(f"provider produced dim {hybrid.dim}, expected {dim}")
        index_mod.save(hybrid, output_path)
        click.echo(json.dumps({
            "records": len(hybrid.ids),
            "dim": hybrid.dim,
            "output": str(output_path),
            "checksum": _index_checksum(output_path),
        }, sort_keys=True))


def _load_retriever(corpus_path: str, index_path: str):
    records = corpus.load_records(corpus_path)
    hybrid = index_mod.load(index_path)
    provider = _provider(hybrid.dim)
    return retrieve.Retriever(records, hybrid, provider), provider


@main.command("query")
@click.argument("query_text")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--index", "index_path", required=True, type=click.Path())
@click.option("--pipeline", type=click.Choice(["1", "2"]), required=True)
@click.option("--dialect", required=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--deep", type=click.Choice(["auto", "on", "off"]), default="auto", show_default=True)
@click.option("--explain", is_flag=True, help="Emit the full per-candidate scoring trace.")
def cmd_query(query_text, corpus_path, index_path, pipeline, dialect, k, deep, explain):
    """Inspect retrieval: ranked candidates for a query and dialect."""
    with _error_exit():
        retriever, _ = _load_retriever(corpus_path, index_path)
        if pipeline == "1":
            result = retriever.retrieve_p1(query_text, dialect, k)
        else:
            result = retriever.retrieve_p2(query_text, dialect, k, deep=deep)
        payload = {
            "query": query_text,
            "dialect": dialect,
            "pipeline": f"P{pipeline}",
            "results": [
                {
                    "id": c.record.id,
                    "district": c.record.district,
                    "blended": c.blended,
                    "text": c.record.text_norm,
                    "standard": c.record.standard_norm,
                }
                for c in result.candidates
            ],
        }
        if explain:
            payload["trace"] = result.trace.to_dict()
        click.echo(json.dumps(payload, ensure_ascii=False, sort_keys=True))


def _model_config(cfg: dict, endpoint_flag, model_flag, temperature, max_tokens,
                  offline: bool) -> ModelConfig:
    endpoint = _resolve(endpoint_flag, "LLM_URL", cfg, "llm.url")
    if not endpoint and not offline:
        raise NetworkError("no chat endpoint: set --endpoint, LLM_URL, or llm.url")
    return ModelConfig(
        endpoint=endpoint or "replay://offline",
        model=_resolve(model_flag, "LLM_MODEL", cfg, "llm.model", "default-model"),
        temperature=temperature,
        max_tokens=max_tokens,
        api_key=_resolve(None, "LLM_API_KEY", cfg, "llm.api_key"),
    )


def _chat_client(model_cfg: ModelConfig, replay: str | None, record: str | None) -> ChatClient:
    if replay:
        transport = ReplayTransport(replay)
    else:
        transport = HttpTransport(model_cfg)
        if record:
            transport = RecordingTransport(transport, record, model_cfg)
    return ChatClient(model_cfg, transport=transport)


def _build_translator(
    cfg, pipeline, corpus_path, index_path, n, deep, template_dir,
    endpoint_flag, model_flag, temperature, max_tokens, replay, record,
    offline: bool = False,
) -> tuple[DialectTranslator, ModelConfig]:
    if replay and record:
        raise DataError("--replay and --record are mutually exclusive")
    retriever = None
    if pipeline != "zero":
        if not corpus_path or not index_path:
            raise DataError(f"pipeline {pipeline} needs --corpus and --index")
        retriever, _ = _load_retriever(corpus_path, index_path)
    model_cfg = _model_config(
        cfg, endpoint_flag, model_flag, temperature, max_tokens, bool(replay) or offline
    )
    client = _chat_client(model_cfg, replay, record)
    translator = DialectTranslator(
        client=client,
        pipeline="p1" if pipeline == "1" else "p2" if pipeline == "2" else "zero",
        n=n,
        retriever=retriever,
        deep=deep,
        template_dir=template_dir,
    )
    return translator, model_cfg


_shared_llm_options = [
    click.option("--corpus", "corpus_path", type=click.Path(), default=None),
    click.option("--index", "index_path", type=click.Path(), default=None),
    click.option("--pipeline", type=click.Choice(["zero", "1", "2"]), required=True),
    click.option("--n", type=int, default=5, show_default=True, help="Few-shot example budget."),
    click.option("--deep", type=click.Choice(["auto", "on", "off"]), default="auto", show_default=True),
    click.option("--template-dir", type=click.Path(exists=True), default=None),
    click.option("--endpoint", "endpoint_flag", default=None, help="Chat endpoint URL."),
    click.option("--model", "model_flag", default=None, help="Chat model name."),
    click.option("--temperature", type=float, default=0.0, show_default=True),
    click.option("--max-tokens", type=int, default=256, show_default=True),
    click.option("--replay", type=click.Path(exists=True), default=None,
                 help="Serve responses from this fixture file; no network."),
    click.option("--record", type=click.Path(), default=None,
                 help="Record live responses into this fixture file."),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@main.command("translate")
@click.argument("sentence")
@click.option("--dialect", required=True)
@_with_options(_shared_llm_options)
@click.option("--dry-run", is_flag=True, help="Print the prompt instead of calling the model.")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.pass_context
def cmd_translate(ctx, sentence, dialect, corpus_path, index_path, pipeline, n, deep,
                  template_dir, endpoint_flag, model_flag, temperature, max_tokens,
                  replay, record, dry_run, manifest_path):
    """Translate one Standard Bengali sentence into a dialect."""
    with _error_exit():
        cfg = ctx.obj["config"]
        translator, model_cfg = _build_translator(
            cfg, pipeline, corpus_path, index_path, n, deep, template_dir,
            endpoint_flag, model_flag, temperature, max_tokens, replay, record,
            offline=dry_run,
        )
        prompt = translator.build_prompt(sentence, dialect)
        if dry_run:
            click.echo(prompt.text, nl=False)
            return
        result = translator.client.translate(prompt)
        click.echo(json.dumps({
            "input": sentence,
            "dialect": dialect,
            "pipeline": prompt.pipeline,
            "n_used": prompt.n_used,
            "output_text": result.output_text,
            "model": result.model,
            "attempts": result.attempts,
            "prompt_id": result.prompt_id,
        }, ensure_ascii=False, sort_keys=True))
        snapshot = _config_snapshot(prompt.pipeline, n, model_cfg, bool(replay))
        if corpus_path:
            snapshot["corpus_sha256"] = _sha256_file(corpus_path)
        if index_path:
            snapshot["index_checksum"] = _index_checksum(index_path)
        _write_manifest(manifest_path or "dialectmt-translate.manifest.json", snapshot)


def _load_pairs(path: str) -> list[tuple[str, str, str]]:
    pairs = []
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh.read().split(b"\n"), start=1):
            if not raw.strip():
                continue
            obj = corpus._parse_json_line(raw, line_no, ("input", "reference", "dialect"))
            pairs.append((obj["input"], obj["reference"], obj["dialect"]))
    return pairs


@main.command("evaluate")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(),
              help="JSON Lines of {input, reference, dialect}.")
@_with_options(_shared_llm_options)
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("-o", "--output", "output_path", default="report.json", show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--heatmap-csv", "heatmap_path", type=click.Path(), default=None,
              help="Merge this run into a pipeline x dialect metric matrix.")
@click.option("--heatmap-metric", type=click.Choice(["bleu", "chrf", "wer", "bertscore"]),
              default="wer", show_default=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.pass_context
def cmd_evaluate(ctx, pairs_path, corpus_path, index_path, pipeline, n, deep, template_dir,
                 endpoint_flag, model_flag, temperature, max_tokens, replay, record,
                 parallelism, output_path, csv_path, heatmap_path, heatmap_metric,
                 manifest_path):
    """Translate a test-pairs file and score it with all four metrics."""
    with _error_exit():
        cfg = ctx.obj["config"]
        pairs = _load_pairs(pairs_path)
        translator, model_cfg = _build_translator(
            cfg, pipeline, corpus_path, index_path, n, deep, template_dir,
            endpoint_flag, model_flag, temperature, max_tokens, replay, record,
        )
        dim = translator.retriever.index.dim if translator.retriever else None
        provider = _provider(dim)
        report = evaluate.evaluate_run(
            pairs, translator, provider,
            model=model_cfg.model,
            pipeline=translator.pipeline,
            n=n,
            parallelism=parallelism,
        )
        Path(output_path).write_text(report.to_json(), encoding="utf-8")
        if csv_path:
            Path(csv_path).write_text(report.to_csv(), encoding="utf-8")
        if heatmap_path:
            _merge_heatmap(heatmap_path, report, heatmap_metric)
        snapshot = _config_snapshot(translator.pipeline, n, model_cfg, bool(replay))
        snapshot["pairs_sha256"] = _sha256_file(pairs_path)
        if corpus_path:
            snapshot["corpus_sha256"] = _sha256_file(corpus_path)
        if index_path:
            snapshot["index_checksum"] = _index_checksum(index_path)
        _write_manifest(manifest_path or str(output_path) + ".manifest.json", snapshot)
        click.echo(json.dumps({
            "output": str(output_path),
            "total": report.total,
            "missing": report.missing,
            "bleu": report.overall.bleu,
            "chrf": report.overall.chrf,
            "wer": report.overall.wer,
            "bertscore": report.overall.bertscore,
        }, sort_keys=True))


def _merge_heatmap(path: str, report, metric: str) -> None:
    """Update the row for this report's pipeline, keeping other rows."""
    import csv as csv_lib

    rows: dict[str, dict[str, str]] = {}
    existing = Path(path)
    if existing.exists():
        with open(existing, newline="", encoding="utf-8") as fh:
            for row in csv_lib.DictReader(fh):
                rows[row["pipeline"]] = {k: v for k, v in row.items() if k != "pipeline"}
    rows[report.pipeline] = {
        g.dialect: f"{getattr(g, metric):.2f}" for g in report.groups
    }
    dialects = sorted({d for cells in rows.values() for d in cells})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv_lib.writer(fh, lineterminator="\n")
        writer.writerow(["pipeline"] + dialects)
        for pipeline_name in sorted(rows):
            cells = rows[pipeline_name]
            writer.writerow([pipeline_name] + [cells.get(d, "") for d in dialects])


if __name__ == "__main__":
    main()
