"""Shared domain types and serialization for patient-level EHR question answering.

Conventions used across the package:

* A "token" is a whitespace-delimited word after Unicode NFC normalization.
  Note chunking, ROUGE scoring, and the hash embedding backend all rely on
  this definition, so chunk boundaries are reproducible across platforms.
* Timestamps are timezone-fixed UTC instants with second precision; fixture
  data carries them as ISO-8601 text.
* Every record type serializes to line-delimited JSON (one record per line)
  via :func:`encode_record` / :func:`decode_record`.

All types here are immutable value objects, safe to share between concurrent
pipeline executions.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Any, Iterable, Optional

QUESTION_CATEGORIES = ("lab", "drug", "lab_drug_combination", "other")

MODALITIES = ("structured", "unstructured", "multimodal")


# ---------------------------------------------------------------------------
# text / time primitives
# ---------------------------------------------------------------------------

def normalize_text(text: str) -> str:
    """NFC-normalize and collapse all whitespace runs to single spaces."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def tokenize(text: str) -> list[str]:
    """Split into whitespace-delimited tokens after NFC normalization."""
    return unicodedata.normalize("NFC", text).split()


def digest(text: str) -> str:
    """Short stable content digest used in trace steps and index payloads."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def parse_instant(value: str) -> datetime:
    """Parse ISO-8601 text to a UTC instant with second precision.

    Naive datetimes (the MIMIC-style ``YYYY-MM-DD HH:MM:SS`` form) are
    interpreted as UTC.
    """
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_instant(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0).isoformat()


# ---------------------------------------------------------------------------
# serialization registry
# ---------------------------------------------------------------------------

_RECORD_KINDS: dict[str, type] = {}


def _record(kind: str):
    def decorate(cls):
        cls.kind = kind
        _RECORD_KINDS[kind] = cls
        return cls

    return decorate


def encode_record(record: Any) -> str:
    """Encode a domain record as one line of JSON."""
    payload = record.to_dict()
    payload["kind"] = record.kind
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def decode_record(line: str) -> Any:
    data = json.loads(line)
    kind = data.pop("kind")
    cls = _RECORD_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown record kind {kind!r}")
    return cls.from_dict(data)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@_record("question")
@dataclass(frozen=True)
class Question:
    """A natural-language clinical question, optionally scoped to a patient."""

    id: str
    text: str
    patient_scope: Optional[str] = None
    admission_scope: Optional[str] = None
    category: Optional[str] = None

    def __post_init__(self):
        if not normalize_text(self.text):
            raise ValueError("question text is empty after whitespace normalization")
        if self.category is not None and self.category not in QUESTION_CATEGORIES:
            raise ValueError(f"unknown question category {self.category!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "patient_scope": self.patient_scope,
            "admission_scope": self.admission_scope,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Question":
        return cls(
            id=d["id"],
            text=d["text"],
            patient_scope=d.get("patient_scope"),
            admission_scope=d.get("admission_scope"),
            category=d.get("category"),
        )


@dataclass(frozen=True)
class Column:
    name: str
    dtype: str = ""


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@_record("table_ref")
@dataclass(frozen=True)
class TableRef:
    """Structural metadata for one table: columns plus key relationships."""

    name: str
    columns: tuple[Column, ...]
    primary_keys: tuple[str, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = ()

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"table {self.name!r} has duplicate column names")
        known = set(names)
        for pk in self.primary_keys:
            if pk not in known:
                raise ValueError(f"primary key {pk!r} is not a column of {self.name!r}")
        for fk in self.foreign_keys:
            if fk.column not in known:
                raise ValueError(f"foreign key column {fk.column!r} is not a column of {self.name!r}")

    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "columns": [[c.name, c.dtype] for c in self.columns],
            "primary_keys": list(self.primary_keys),
            "foreign_keys": [[f.column, f.ref_table, f.ref_column] for f in self.foreign_keys],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableRef":
        return cls(
            name=d["name"],
            columns=tuple(Column(n, t) for n, t in d["columns"]),
            primary_keys=tuple(d.get("primary_keys", ())),
            foreign_keys=tuple(ForeignKey(*f) for f in d.get("foreign_keys", ())),
        )


def fingerprint_schema(table: TableRef) -> str:
    """Content hash of a TableRef, stable under foreign-key list reordering.

    Key lists are canonically sorted before hashing; any change to the
    column list, a column type, or a key itself changes the hash.
    """
    canonical = {
        "name": table.name,
        "columns": [[c.name, c.dtype] for c in table.columns],
        "primary_keys": sorted(table.primary_keys),
        "foreign_keys": sorted([f.column, f.ref_table, f.ref_column] for f in table.foreign_keys),
    }
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@_record("table_description")
@dataclass(frozen=True)
class TableDescription:
    """Cached natural-language description of one table."""

    table: str
    description: str
    schema_fingerprint: str

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError(f"empty description for table {self.table!r}")

    def to_dict(self) -> dict:
        return {
            "table": self.table,
            "description": self.description,
            "schema_fingerprint": self.schema_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableDescription":
        return cls(d["table"], d["description"], d["schema_fingerprint"])


@_record("note")
@dataclass(frozen=True)
class NoteDocument:
    """One clinical note. The timestamp is mandatory; chunk text is prefixed with it."""

    id: str
    patient_scope: Optional[str]
    timestamp: datetime
    text: str

    def __post_init__(self):
        if self.timestamp is None:
            raise ValueError(f"note {self.id!r} has no timestamp")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "patient_scope": self.patient_scope,
            "timestamp": format_instant(self.timestamp),
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoteDocument":
        return cls(
            id=d["id"],
            patient_scope=d.get("patient_scope"),
            timestamp=parse_instant(d["timestamp"]),
            text=d.get("text", ""),
        )


@_record("note_chunk")
@dataclass(frozen=True)
class NoteChunk:
    """A token-bounded slice of one note; ``text`` carries the timestamp prefix."""

    note_id: str
    index: int
    token_span: tuple[int, int]
    text: str
    embedding: Optional[tuple[float, ...]] = None

    @property
    def key(self) -> str:
        return f"{self.note_id}#{self.index:04d}"

    def to_dict(self) -> dict:
        return {
            "note_id": self.note_id,
            "index": self.index,
            "token_span": list(self.token_span),
            "text": self.text,
            "embedding": list(self.embedding) if self.embedding is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoteChunk":
        emb = d.get("embedding")
        return cls(
            note_id=d["note_id"],
            index=d["index"],
            token_span=tuple(d["token_span"]),
            text=d["text"],
            embedding=tuple(emb) if emb is not None else None,
        )


@_record("structured_evidence")
@dataclass(frozen=True)
class StructuredEvidence:
    """Result of the final, successful SQL attempt. Rows may be empty."""

    sql: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    attempt_count: int

    def to_dict(self) -> dict:
        return {
            "sql": self.sql,
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
            "attempt_count": self.attempt_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructuredEvidence":
        return cls(
            sql=d["sql"],
            columns=tuple(d["columns"]),
            rows=tuple(tuple(r) for r in d["rows"]),
            attempt_count=d["attempt_count"],
        )


@_record("unstructured_evidence")
@dataclass(frozen=True)
class UnstructuredEvidence:
    """Ranked note chunks with scores; fallback_mode marks notes-only retrieval."""

    chunks: tuple[tuple[NoteChunk, float], ...]
    k_used: int
    fallback_mode: bool

    def __post_init__(self):
        scores = [s for _, s in self.chunks]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("chunk scores must be non-increasing")
        if len(self.chunks) > self.k_used:
            raise ValueError("more chunks than k_used")

    def to_dict(self) -> dict:
        return {
            "chunks": [[c.to_dict(), s] for c, s in self.chunks],
            "k_used": self.k_used,
            "fallback_mode": self.fallback_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnstructuredEvidence":
        return cls(
            chunks=tuple((NoteChunk.from_dict(c), s) for c, s in d["chunks"]),
            k_used=d["k_used"],
            fallback_mode=d["fallback_mode"],
        )


@_record("answer")
@dataclass(frozen=True)
class AnswerRecord:
    """The parsed three-section synthesizer answer plus the raw model output."""

    question_id: str
    sql_section: str
    notes_evidence_section: str
    response_section: str
    raw_model_output: str

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "sql_section": self.sql_section,
            "notes_evidence_section": self.notes_evidence_section,
            "response_section": self.response_section,
            "raw_model_output": self.raw_model_output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnswerRecord":
        return cls(
            question_id=d["question_id"],
            sql_section=d["sql_section"],
            notes_evidence_section=d["notes_evidence_section"],
            response_section=d["response_section"],
            raw_model_output=d["raw_model_output"],
        )


@dataclass(frozen=True)
class TraceStep:
    role: str
    tool: str
    input_digest: str
    output_digest: str
    wall_ms: float
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost: float = 0.0

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "tool": self.tool,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "wall_ms": self.wall_ms,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceStep":
        return cls(**d)


@_record("trace")
@dataclass(frozen=True)
class TraceRecord:
    """Full step-by-step account of one question's run.

    ``total_latency_ms`` may exceed the step sum (orchestration overhead)
    but never undercut it; cost totals are exactly the step sums.
    """

    question_id: str
    steps: tuple[TraceStep, ...]
    total_latency_ms: float
    total_cost: float

    def __post_init__(self):
        step_ms = sum(s.wall_ms for s in self.steps)
        if self.total_latency_ms < step_ms - 1e-6:
            raise ValueError("total_latency_ms is less than the sum of step wall times")
        if abs(self.total_cost - sum(s.cost for s in self.steps)) > 1e-9:
            raise ValueError("total_cost does not equal the sum of step costs")

    @classmethod
    def build(cls, question_id: str, steps: Iterable[TraceStep], overhead_ms: float = 0.0) -> "TraceRecord":
        steps = tuple(steps)
        return cls(
            question_id=question_id,
            steps=steps,
            total_latency_ms=sum(s.wall_ms for s in steps) + overhead_ms,
            total_cost=sum(s.cost for s in steps),
        )

    @property
    def total_prompt_tokens(self) -> int:
        return sum(s.prompt_tokens for s in self.steps)

    @property
    def total_completion_tokens(self) -> int:
        return sum(s.completion_tokens for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "steps": [s.to_dict() for s in self.steps],
            "total_latency_ms": self.total_latency_ms,
            "total_cost": self.total_cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceRecord":
        return cls(
            question_id=d["question_id"],
            steps=tuple(TraceStep.from_dict(s) for s in d["steps"]),
            total_latency_ms=d["total_latency_ms"],
            total_cost=d["total_cost"],
        )


__all__ = [
    "QUESTION_CATEGORIES",
    "MODALITIES",
    "normalize_text",
    "tokenize",
    "digest",
    "parse_instant",
    "format_instant",
    "encode_record",
    "decode_record",
    "Question",
    "Column",
    "ForeignKey",
    "TableRef",
    "fingerprint_schema",
    "TableDescription",
    "NoteDocument",
    "NoteChunk",
    "StructuredEvidence",
    "UnstructuredEvidence",
    "AnswerRecord",
    "TraceStep",
    "TraceRecord",
    "replace",
]
