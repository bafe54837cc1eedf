"""Command line interface: ask, eval, describe-schema, serve, make-fixtures.

Exit codes: 0 for handled answers (including "insufficient evidence"),
1 for infrastructure failures, 2 for usage errors (click's default).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from . import evaluation, fixtures
from .config import load_config
from .llm import PROFILES, ScriptedBackend
from .model import Question, digest
from .pipeline import PipelineBackendError, Runtime, answer_question
from .structured import DescriptionCache, discover_schema
from .tracing import TraceStore


def _resolve_db(db: str) -> Path:
    if db == "fixture":
        return fixtures.ensure_fixtures() / fixtures.MIMIC_DB
    return Path(db)


def _build_runtime(db: str, backend: str, script: Optional[str], notes: Optional[str], profile: str) -> Runtime:
    db_path = _resolve_db(db)
    if not db_path.exists():
        raise click.ClickException(f"database not found: {db_path}")
    if backend == "scripted":
        script_path = Path(script) if script else db_path.parent / fixtures.SCRIPT_FILE
        if not script_path.exists():
            raise click.ClickException(f"script file not found: {script_path}")
        llm_backend = ScriptedBackend.from_file(script_path, cost_per_1k_tokens=0.002)
    else:
        raise click.ClickException("remote backends are configured via --config / the service, not ad hoc flags")
    from .embedding import HashEmbeddingBackend
    from .notes import load_notes

    notes_path = Path(notes) if notes else db_path.parent / fixtures.NOTES_FILE
    note_docs = load_notes(notes_path) if notes_path.exists() else []
    return Runtime(
        db_path=db_path,
        profile=profile,
        llm_backend=llm_backend,
        embed_backend=HashEmbeddingBackend(64),
        notes=note_docs,
        deterministic_timing=True,
    )


@click.group()
def main():
    """Patient-level question answering over EHR fixtures and databases."""


@main.command()
@click.argument("question_text")
@click.option("--db", required=True, help="Database path, or 'fixture' for the bundled demo db.")
@click.option("--backend", default="scripted", type=click.Choice(["scripted"]), show_default=True)
@click.option("--script", default=None, help="Scripted-reply file (defaults to the db's sibling script).")
@click.option("--notes", default=None, help="Notes JSONL (defaults to the db's sibling notes file).")
@click.option("--profile", default="fixture", type=click.Choice(sorted(PROFILES)), show_default=True)
@click.option("--patient", default=None, help="Patient scope identifier.")
@click.option("--json", "as_json", is_flag=True, help="Print the full answer record as JSON.")
def ask(question_text, db, backend, script, notes, profile, patient, as_json):
    """Answer one question and print the answer with its evidence summary."""
    runtime = _build_runtime(db, backend, script, notes, profile)
    question = Question(
        id=f"cli-{digest(f'{question_text}|{patient}')}",
        text=question_text,
        patient_scope=patient,
    )
    try:
        outcome = answer_question(runtime, question)
    except PipelineBackendError as exc:
        click.echo(f"backend failure: {exc}", err=True)
        sys.exit(1)
    if as_json:
        click.echo(json.dumps(outcome.answer.to_dict(), indent=2, sort_keys=True))
    else:
        click.echo(f"Response: {outcome.answer.response_section}")
        if outcome.bundle.structured is not None:
            click.echo(f"SQL: {outcome.bundle.structured.sql}")
            click.echo(f"Rows: {len(outcome.bundle.structured.rows)}")
        if outcome.bundle.unstructured is not None:
            mode = "fallback" if outcome.bundle.unstructured.fallback_mode else "structure-guided"
            click.echo(f"Note chunks ({mode}): {len(outcome.bundle.unstructured.chunks)}")
            for chunk, score in outcome.bundle.unstructured.chunks[:3]:
                click.echo(f"  [{chunk.key}] score={score:.4f}")


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--profile", required=True, type=click.Choice(["ehrsql", "drugehrqa", "ehrnoteqa", "fixture"]))
@click.option("--db", required=True, help="Database path, or 'fixture'.")
@click.option("--backend", default="scripted", type=click.Choice(["scripted"]), show_default=True)
@click.option("--script", default=None)
@click.option("--notes", default=None)
@click.option("--out", required=True, type=click.Path(), help="Report output path.")
@click.option("--drop-slow-gold", is_flag=True, help="Drop items whose gold SQL exceeds the timeout.")
@click.option("--gold-sql-timeout", default=120.0, show_default=True)
def eval_command(dataset, profile, db, backend, script, notes, out, drop_slow_gold, gold_sql_timeout):
    """Run a benchmark file through the pipeline and write a report."""
    runtime = _build_runtime(db, backend, script, notes, profile if profile != "ehrnoteqa" else "fixture")
    items = evaluation.load_dataset(
        dataset,
        profile,
        db_path=runtime.db_path,
        drop_slow_gold_sql=drop_slow_gold,
        gold_sql_timeout_s=gold_sql_timeout,
    )
    traces_path = Path(out).with_suffix(Path(out).suffix + ".traces.jsonl")
    traces_path.unlink(missing_ok=True)
    report = evaluation.run_benchmark(items, runtime, trace_store=TraceStore(traces_path))
    evaluation.emit_report(report, out)
    click.echo(evaluation.render_summary(report))
    click.echo(f"accuracy: {report.aggregates['correct']}/{report.aggregates['total_items']}")
    click.echo(f"report written to {out}")


@main.command("describe-schema")
@click.option("--db", required=True, help="Database path, or 'fixture'.")
@click.option("--cache", default=None, type=click.Path(), help="Description cache file (read-only view).")
def describe_schema(db, cache):
    """Print the discovered catalog plus any cached descriptions (no LLM calls)."""
    db_path = _resolve_db(db)
    if not db_path.exists():
        raise click.ClickException(f"database not found: {db_path}")
    catalog = discover_schema(db_path)
    desc_cache = DescriptionCache(cache) if cache else DescriptionCache()
    from .model import fingerprint_schema

    for table in catalog.tables:
        click.echo(f"table {table.name}")
        for column in table.columns:
            click.echo(f"  {column.name} {column.dtype}".rstrip())
        if table.primary_keys:
            click.echo(f"  primary keys: {', '.join(table.primary_keys)}")
        for fk in table.foreign_keys:
            click.echo(f"  foreign key: {fk.column} -> {fk.ref_table}.{fk.ref_column}")
        cached = desc_cache.get(catalog.source_db_id, table.name, fingerprint_schema(table))
        click.echo(f"  description: {cached.description if cached else '(absent)'}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve(config_path):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    app = create_app(config)
    uvicorn.run(app, host=config.bind_host, port=config.bind_port)


@main.command("make-fixtures")
@click.option("--out", default=None, type=click.Path(), help="Target directory (default ./fixtures).")
@click.option("--force", is_flag=True, help="Regenerate even if files exist.")
def make_fixtures(out, force):
    """Materialize the bundled demo databases, notes, datasets, and scripts."""
    directory = fixtures.ensure_fixtures(out, force=force)
    click.echo(f"fixtures ready in {directory}")


if __name__ == "__main__":
    main()
