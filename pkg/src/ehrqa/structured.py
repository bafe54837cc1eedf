"""Structured-data querying: schema discovery, table descriptions with a
fingerprint cache, semantic table selection, row sampling, SQL generation,
sandboxed execution, and the bounded generate-execute repair loop.

The executor is defense-in-depth: a textual guard rejects writes and
multi-statement inputs before execution, the connection is opened read-only,
and a sqlite authorizer denies everything except reads — so no model output
can mutate a database.
"""

from __future__ import annotations

import json
import re
import sqlite3
import threading
import time
import urllib.parse
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import llm
from .embedding import VectorIndex, embed
from .llm import ChatRequest, PromptTemplate, load_template, render
from .model import (
    Column,
    ForeignKey,
    Question,
    TableDescription,
    TableRef,
    digest,
    fingerprint_schema,
)

SAMPLE_VALUE_MAX_CHARS = 120

ATTEMPT_OUTCOMES = ("rows", "empty_result", "syntax_error", "schema_error", "timeout", "rejected")


class StructuredQueryError(Exception):
    pass


class DatabaseUnreachableError(StructuredQueryError):
    pass


class UnknownTableError(StructuredQueryError):
    pass


class EmptyDescriptionError(StructuredQueryError):
    pass


class SqlExtractionError(StructuredQueryError):
    """The model reply contained no usable single SQL statement."""


class SqlExecutionError(StructuredQueryError):
    outcome = "rejected"

    def __init__(self, message: str, elapsed_ms: float = 0.0):
        super().__init__(message)
        self.elapsed_ms = elapsed_ms


class SqlRejectedError(SqlExecutionError):
    outcome = "rejected"


class SqlSyntaxError(SqlExecutionError):
    outcome = "syntax_error"


class SqlSchemaError(SqlExecutionError):
    outcome = "schema_error"


class SqlTimeoutError(SqlExecutionError):
    outcome = "timeout"


@dataclass(frozen=True)
class SchemaCatalog:
    tables: tuple[TableRef, ...]
    source_db_id: str
    discovered_at: datetime

    def table(self, name: str) -> TableRef:
        for t in self.tables:
            if t.name == name:
                return t
        raise UnknownTableError(f"no table {name!r} in catalog {self.source_db_id!r}")


@dataclass(frozen=True)
class TableSample:
    table: str
    columns: tuple[str, ...]
    sample_row: Optional[tuple] = None

    def __post_init__(self):
        if self.sample_row is not None and len(self.sample_row) != len(self.columns):
            raise ValueError("sample row arity does not match column count")


@dataclass(frozen=True)
class ExecutionResult:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    elapsed_ms: float


@dataclass(frozen=True)
class SqlAttempt:
    attempt_number: int
    sql: str
    outcome: str
    message: str = ""
    duration_ms: float = 0.0
    result: Optional[ExecutionResult] = None

    def __post_init__(self):
        if self.outcome not in ATTEMPT_OUTCOMES:
            raise ValueError(f"unknown attempt outcome {self.outcome!r}")

    @property
    def succeeded(self) -> bool:
        return self.outcome in ("rows", "empty_result")


@dataclass
class StructuredConfig:
    profile: str = "fixture"
    k_tables: int = 10
    max_attempts: int = 3
    timeout_s: float = 120.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.profile not in llm.SQL_TEMPLATE_BY_PROFILE:
            raise ValueError(f"no SQL prompt for profile {self.profile!r}")


# ---------------------------------------------------------------------------
# SQL text analysis (comment stripping, statement splitting, read-only guard)
# ---------------------------------------------------------------------------

def _scan_statements(sql: str) -> list[str]:
    """Split into statements, honoring quotes and stripping comments.

    Handles '' / "" / `` / [] quoting, ``--`` line comments, and ``/* */``
    block comments, so smuggled statements cannot hide from the guard.
    """
    statements: list[str] = []
    current: list[str] = []
    i, n = 0, len(sql)
    while i < n:
        c = sql[i]
        two = sql[i : i + 2]
        if two == "--":
            j = sql.find("\n", i)
            i = n if j < 0 else j
        elif two == "/*":
            j = sql.find("*/", i + 2)
            i = n if j < 0 else j + 2
            current.append(" ")
        elif c in ("'", '"', "`"):
            j = i + 1
            while j < n:
                if sql[j] == c:
                    if sql[j : j + 2] == c + c:
                        j += 2
                        continue
                    j += 1
                    break
                j += 1
            current.append(sql[i:j])
            i = j
        elif c == "[":
            j = sql.find("]", i)
            j = n if j < 0 else j + 1
            current.append(sql[i:j])
            i = j
        elif c == ";":
            statements.append("".join(current))
            current = []
            i += 1
        else:
            current.append(c)
            i += 1
    statements.append("".join(current))
    return [s.strip() for s in statements if s.strip()]


def ensure_single_readonly(sql: str) -> str:
    """Reject empty / multi-statement / non-SELECT input; returns the statement."""
    statements = _scan_statements(sql)
    if not statements:
        raise SqlRejectedError("empty SQL statement")
    if len(statements) > 1:
        raise SqlRejectedError(f"multiple statements ({len(statements)}) are not allowed")
    statement = statements[0]
    keyword = statement.split(None, 1)[0].upper()
    if keyword not in ("SELECT", "WITH"):
        raise SqlRejectedError(f"read-only guard: {keyword} statements are not allowed")
    return statement


_READ_ACTIONS = {
    sqlite3.SQLITE_SELECT,
    sqlite3.SQLITE_READ,
    getattr(sqlite3, "SQLITE_FUNCTION", 31),
    getattr(sqlite3, "SQLITE_RECURSIVE", 33),
}


def _readonly_authorizer(action, *args) -> int:
    return sqlite3.SQLITE_OK if action in _READ_ACTIONS else sqlite3.SQLITE_DENY


def _connect_readonly(db_path: str | Path) -> sqlite3.Connection:
    resolved = Path(db_path)
    if not resolved.exists():
        raise DatabaseUnreachableError(f"database file not found: {db_path}")
    uri = f"file:{urllib.parse.quote(str(resolved))}?mode=ro"
    try:
        return sqlite3.connect(uri, uri=True)
    except sqlite3.OperationalError as exc:
        raise DatabaseUnreachableError(f"cannot open {db_path}: {exc}") from exc


_SYNTAX_MARKERS = ("syntax error", "unrecognized token", "incomplete input", "wrong number of arguments")
_SCHEMA_MARKERS = ("no such table", "no such column", "no such function", "ambiguous column name")


def _classify_operational(exc: sqlite3.Error, elapsed_ms: float) -> SqlExecutionError:
    msg = str(exc)
    lowered = msg.lower()
    if "interrupt" in lowered:
        return SqlTimeoutError(f"query exceeded time budget: {msg}", elapsed_ms)
    if "not authorized" in lowered or "readonly database" in lowered or "read-only" in lowered:
        return SqlRejectedError(f"read-only guard: {msg}", elapsed_ms)
    if any(m in lowered for m in _SCHEMA_MARKERS):
        return SqlSchemaError(msg, elapsed_ms)
    if any(m in lowered for m in _SYNTAX_MARKERS):
        return SqlSyntaxError(msg, elapsed_ms)
    return SqlSyntaxError(msg, elapsed_ms)


def execute_sql(
    db_path: str | Path,
    sql: str,
    params: Optional[dict] = None,
    timeout_s: float = 120.0,
) -> ExecutionResult:
    """Run one read-only statement with a wall-clock budget.

    Literal values supplied by the pipeline arrive through ``params`` (named
    placeholders), never spliced into the SQL text. Raises a classified
    SqlExecutionError subtype on failure; an empty result is a normal
    zero-row ExecutionResult, not an error.
    """
    statement = ensure_single_readonly(sql)
    started = time.monotonic()
    deadline = started + timeout_s
    conn = _connect_readonly(db_path)
    try:
        conn.set_authorizer(_readonly_authorizer)
        conn.set_progress_handler(lambda: 1 if time.monotonic() > deadline else 0, 1000)
        try:
            cursor = conn.execute(statement, params or {})
            rows = cursor.fetchall()
            columns = tuple(d[0] for d in (cursor.description or ()))
        except sqlite3.OperationalError as exc:
            raise _classify_operational(exc, (time.monotonic() - started) * 1000.0) from exc
        except sqlite3.ProgrammingError as exc:
            # typically an unbound named parameter in model-written SQL
            raise SqlSchemaError(str(exc), (time.monotonic() - started) * 1000.0) from exc
        except sqlite3.DatabaseError as exc:
            raise _classify_operational(exc, (time.monotonic() - started) * 1000.0) from exc
    finally:
        conn.close()
    elapsed_ms = (time.monotonic() - started) * 1000.0
    return ExecutionResult(columns, tuple(tuple(r) for r in rows), elapsed_ms)


# ---------------------------------------------------------------------------
# schema discovery and sampling
# ---------------------------------------------------------------------------

def discover_schema(db_path: str | Path) -> SchemaCatalog:
    """Build a catalog from the database's own metadata, ordered by table name."""
    conn = _connect_readonly(db_path)
    try:
        names = [
            r[0]
            for r in conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table' AND name NOT LIKE 'sqlite_%' ORDER BY name"
            )
        ]
        tables = []
        for name in names:
            info = conn.execute(f'PRAGMA table_info("{name}")').fetchall()
            columns = tuple(Column(row[1], row[2] or "") for row in info)
            pk_cols = [(row[5], row[1]) for row in info if row[5] > 0]
            primary_keys = tuple(col for _, col in sorted(pk_cols))
            fks = []
            for fk in conn.execute(f'PRAGMA foreign_key_list("{name}")').fetchall():
                _, _, ref_table, local, remote = fk[0], fk[1], fk[2], fk[3], fk[4]
                if remote is None:
                    remote_info = conn.execute(f'PRAGMA table_info("{ref_table}")').fetchall()
                    remote_pks = sorted((row[5], row[1]) for row in remote_info if row[5] > 0)
                    remote = remote_pks[0][1] if remote_pks else ""
                fks.append(ForeignKey(local, ref_table, remote))
            tables.append(TableRef(name, columns, primary_keys, tuple(fks)))
    finally:
        conn.close()
    return SchemaCatalog(
        tables=tuple(tables),
        source_db_id=Path(db_path).stem,
        discovered_at=datetime.now(timezone.utc).replace(microsecond=0),
    )


def sample_table(db_path: str | Path, table: str) -> TableSample:
    """Column list plus the first row under ascending rowid / primary key order."""
    conn = _connect_readonly(db_path)
    try:
        info = conn.execute(f'PRAGMA table_info("{table}")').fetchall()
        if not info:
            raise UnknownTableError(f"no such table {table!r}")
        columns = tuple(row[1] for row in info)
        try:
            row = conn.execute(f'SELECT * FROM "{table}" ORDER BY rowid LIMIT 1').fetchone()
        except sqlite3.OperationalError:
            pks = [(r[5], r[1]) for r in info if r[5] > 0]
            order = ", ".join(f'"{c}"' for _, c in sorted(pks)) or f'"{columns[0]}"'
            row = conn.execute(f'SELECT * FROM "{table}" ORDER BY {order} LIMIT 1').fetchone()
    finally:
        conn.close()
    return TableSample(table, columns, tuple(row) if row is not None else None)


# ---------------------------------------------------------------------------
# table descriptions with fingerprint cache
# ---------------------------------------------------------------------------

class DescriptionCache:
    """Description cache keyed by (db id, table name, schema fingerprint).

    Backed by an append-only JSONL file when a path is given; purely
    in-memory otherwise. Reads are cheap; writes take the lock.
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str, str], str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                e = json.loads(line)
                self._entries[(e["db_id"], e["table"], e["fingerprint"])] = e["description"]

    def get(self, db_id: str, table: str, fingerprint: str) -> Optional[TableDescription]:
        desc = self._entries.get((db_id, table, fingerprint))
        if desc is None:
            return None
        return TableDescription(table=table, description=desc, schema_fingerprint=fingerprint)

    def put(self, db_id: str, description: TableDescription) -> None:
        entry = {
            "db_id": db_id,
            "table": description.table,
            "fingerprint": description.schema_fingerprint,
            "description": description.description,
        }
        with self._lock:
            self._entries[(db_id, description.table, description.schema_fingerprint)] = description.description
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _render_columns(table: TableRef) -> str:
    return "\n".join(f"{c.name} ({c.dtype})" if c.dtype else c.name for c in table.columns)


def _render_keys(table: TableRef) -> tuple[str, str]:
    pks = ", ".join(table.primary_keys) or "(none)"
    fks = ", ".join(f"{f.column} -> {f.ref_table}.{f.ref_column}" for f in table.foreign_keys) or "(none)"
    return pks, fks


def describe_table(
    table: TableRef,
    backend,
    cache: DescriptionCache,
    db_id: str,
    recorder=None,
    template: Optional[PromptTemplate] = None,
) -> TableDescription:
    """Return the cached description or generate (and cache) a fresh one.

    A cache hit on the matching schema fingerprint makes zero LLM calls;
    any schema change invalidates via the fingerprint.
    """
    fingerprint = fingerprint_schema(table)
    hit = cache.get(db_id, table.name, fingerprint)
    if hit is not None:
        return hit
    template = template or load_template("table_description")
    pks, fks = _render_keys(table)
    prompt = render(
        template,
        {
            "table_name": table.name,
            "columns": _render_columns(table),
            "primary_keys": pks,
            "foreign_keys": fks,
        },
    )
    response = llm.complete(ChatRequest(role_tag="table_reviewer", rendered_prompt=prompt), backend, recorder)
    if not response.text.strip():
        raise EmptyDescriptionError(f"model returned an empty description for table {table.name!r}")
    description = TableDescription(table=table.name, description=response.text.strip(), schema_fingerprint=fingerprint)
    cache.put(db_id, description)
    return description


# ---------------------------------------------------------------------------
# semantic table selection
# ---------------------------------------------------------------------------

def select_tables(
    question: Question,
    descriptions: Sequence[TableDescription],
    embed_backend,
    k: int = 10,
    recorder=None,
) -> list[str]:
    """Rank tables by cosine(question, "name: description") and keep the top k."""
    if not descriptions:
        raise ValueError("select_tables requires at least one description")
    if k < 1:
        raise ValueError("k must be >= 1")
    index = VectorIndex(embed_backend.dimension)
    for d in descriptions:
        index.add(d.table, embed(f"{d.table}: {d.description}", embed_backend), payload_digest=digest(d.description))
    started = time.monotonic()
    ranked = index.top_k(embed(question.text, embed_backend), k)
    names = [name for name, _ in ranked]
    if recorder is not None:
        recorder.record(
            role="table_selector",
            tool="table_retrieval[name:description]",
            input_text=question.text,
            output_text=json.dumps(ranked),
            wall_ms=recorder.tool_ms((time.monotonic() - started) * 1000.0),
        )
    return names


# ---------------------------------------------------------------------------
# SQL generation
# ---------------------------------------------------------------------------

def _truncate(value, limit: int = SAMPLE_VALUE_MAX_CHARS) -> str:
    text = "NULL" if value is None else str(value)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def render_schema_context(context: Sequence[tuple[TableRef, TableSample, TableDescription]]) -> str:
    """Serialize selected tables (structure, description, sample row) for the SQL prompt."""
    blocks = []
    for ref, sample, description in context:
        pks, fks = _render_keys(ref)
        lines = [
            f"Table: {ref.name}",
            f"Description: {description.description}",
            "Columns:",
        ]
        lines.extend(f"  {c.name} ({c.dtype})" if c.dtype else f"  {c.name}" for c in ref.columns)
        lines.append(f"Primary keys: {pks}")
        lines.append(f"Foreign keys: {fks}")
        if sample.sample_row is None:
            lines.append("Sample row: (empty table)")
        else:
            pairs = "; ".join(f"{c}={_truncate(v)}" for c, v in zip(sample.columns, sample.sample_row))
            lines.append(f"Sample row: {pairs}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def _failure_feedback(prior_failures: Sequence[SqlAttempt]) -> str:
    blocks = []
    for attempt in prior_failures:
        blocks.append(
            "Previous attempt failed:\n"
            f"SQL: {attempt.sql or '(no statement extracted)'}\n"
            f"Error: {attempt.outcome}: {attempt.message}"
        )
    return "\n\n".join(blocks)


_SQLQUERY_RE = re.compile(r"SQLQuery\s*:\s*(.+?)(?=\n\s*(?:SQLResult|Answer)\s*:|\Z)", re.IGNORECASE | re.DOTALL)
_FENCE_RE = re.compile(r"```(?:sql)?\s*(.*?)```", re.IGNORECASE | re.DOTALL)
_JSON_RE = re.compile(r"\{.*\}", re.DOTALL)


def extract_sql(reply: str, profile: str) -> str:
    """Pull the single SQL statement out of a model reply.

    Tries, in order: the JSON ``{"SQL": ...}`` shape (OMOP profile first),
    an ``SQLQuery:`` line, a fenced code block, then the raw reply if it
    already starts with SELECT/WITH. Multi-statement replies are rejected.
    """
    candidates: list[str] = []
    if profile == "omop":
        m = _JSON_RE.search(reply)
        if m:
            try:
                obj = json.loads(m.group(0))
                if isinstance(obj, dict) and isinstance(obj.get("SQL"), str):
                    candidates.append(obj["SQL"])
            except json.JSONDecodeError:
                pass
    m = _SQLQUERY_RE.search(reply)
    if m:
        candidates.append(m.group(1))
    m = _FENCE_RE.search(reply)
    if m:
        candidates.append(m.group(1))
    stripped = reply.strip()
    if stripped.split(None, 1) and stripped.split(None, 1)[0].upper() in ("SELECT", "WITH"):
        candidates.append(stripped)
    for candidate in candidates:
        candidate = candidate.strip()
        if not candidate:
            continue
        statements = _scan_statements(candidate)
        if len(statements) > 1:
            raise SqlExtractionError(f"reply contains {len(statements)} statements; exactly one is allowed")
        if statements:
            return statements[0]
    raise SqlExtractionError(f"no recognizable SQL statement in reply (digest {digest(reply)})")


def write_sql(
    question: Question,
    context: Sequence[tuple[TableRef, TableSample, TableDescription]],
    profile: str,
    backend,
    prior_failures: Sequence[SqlAttempt] = (),
    recorder=None,
) -> str:
    """Render the profile's SQL prompt, call the model, extract the statement."""
    template = load_template(llm.SQL_TEMPLATE_BY_PROFILE[profile])
    bindings = {"schema": render_schema_context(context), "query_str": question.text}
    if "dialect" in template.required_placeholders:
        bindings["dialect"] = "SQLite"
    prompt = render(template, bindings)
    failed = [a for a in prior_failures if not a.succeeded]
    if failed:
        prompt = prompt + "\n\n" + _failure_feedback(failed)
    response = llm.complete(ChatRequest(role_tag="sql_writer", rendered_prompt=prompt), backend, recorder)
    return extract_sql(response.text, profile)


# ---------------------------------------------------------------------------
# the repair loop
# ---------------------------------------------------------------------------

def _scope_params(question: Question, sql: str) -> dict:
    """Bind question scope identifiers to any named placeholders in the SQL."""
    available = {"patient_id": question.patient_scope, "hadm_id": question.admission_scope}
    return {name: value for name, value in available.items() if value is not None and f":{name}" in sql}


def run_structured_pipeline(
    question: Question,
    db_path: str | Path,
    backend,
    cache: DescriptionCache,
    config: StructuredConfig,
    embed_backend,
    recorder=None,
    catalog: Optional[SchemaCatalog] = None,
) -> tuple[Optional["StructuredEvidence"], list[SqlAttempt]]:
    """Full structured arm: discover, describe, select, sample, then loop
    write_sql -> execute_sql feeding classified failures back to the writer.

    Stops on the first success or after ``max_attempts``; an empty result is
    a success (zero rows), never a retry trigger. Returns (evidence, attempts)
    with evidence None when every attempt failed.
    """
    from .model import StructuredEvidence

    catalog = catalog if catalog is not None else discover_schema(db_path)
    if not catalog.tables:
        return None, []
    descriptions = {
        t.name: describe_table(t, backend, cache, catalog.source_db_id, recorder) for t in catalog.tables
    }
    selected = select_tables(question, list(descriptions.values()), embed_backend, config.k_tables, recorder)
    context = [(catalog.table(n), sample_table(db_path, n), descriptions[n]) for n in selected]

    attempts: list[SqlAttempt] = []
    for attempt_number in range(1, config.max_attempts + 1):
        try:
            sql = write_sql(question, context, config.profile, backend, attempts, recorder)
        except SqlExtractionError as exc:
            attempts.append(SqlAttempt(attempt_number, "", "rejected", str(exc)))
            continue
        params = _scope_params(question, sql)
        started = time.monotonic()
        try:
            result = execute_sql(db_path, sql, params, config.timeout_s)
        except SqlExecutionError as exc:
            elapsed = (time.monotonic() - started) * 1000.0
            attempts.append(SqlAttempt(attempt_number, sql, exc.outcome, str(exc), elapsed))
            if recorder is not None:
                recorder.record(
                    role="sql_executor",
                    tool="sqlite",
                    input_text=sql,
                    output_text=f"{exc.outcome}: {exc}",
                    wall_ms=recorder.tool_ms(elapsed),
                )
            continue
        outcome = "rows" if result.rows else "empty_result"
        attempts.append(SqlAttempt(attempt_number, sql, outcome, "", result.elapsed_ms, result))
        if recorder is not None:
            recorder.record(
                role="sql_executor",
                tool="sqlite",
                input_text=sql,
                output_text=f"{outcome}: {len(result.rows)} rows",
                wall_ms=recorder.tool_ms(result.elapsed_ms),
            )
        evidence = StructuredEvidence(
            sql=sql,
            columns=result.columns,
            rows=result.rows,
            attempt_count=attempt_number,
        )
        return evidence, attempts
    return None, attempts
