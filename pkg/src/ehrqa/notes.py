"""Unstructured-data retrieval: on-demand chunking/indexing of a patient's
notes and structure-guided semantic retrieval over the chunks.

Chunks are timestamp-prefixed token windows (default 256 tokens with a
32-token overlap), optionally snapped backward to sentence ends. When
structured evidence exists, the query embedding fuses the question text with
a serialized view of the SQL result; without it, retrieval falls back to the
plain question plus optional temporal/section filters.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from .embedding import VectorIndex, embed
from .model import (
    NoteChunk,
    NoteDocument,
    Question,
    StructuredEvidence,
    UnstructuredEvidence,
    digest,
    format_instant,
    parse_instant,
    replace,
)

QUERY_EVIDENCE_SEPARATOR = "\n[structured evidence]\n"
SERIALIZE_MAX_ROWS = 20

_SENTENCE_END_RE = re.compile(r"[.!?][\"')\]]*$")


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size_tokens: int = 256
    overlap_tokens: int = 32
    sentence_aware: bool = True

    def __post_init__(self):
        if not (0 <= self.overlap_tokens < self.chunk_size_tokens):
            raise ValueError("need 0 <= overlap < chunk size")

    def to_dict(self) -> dict:
        return {
            "chunk_size_tokens": self.chunk_size_tokens,
            "overlap_tokens": self.overlap_tokens,
            "sentence_aware": self.sentence_aware,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChunkingConfig":
        return cls(**d)


def _token_stream(text: str) -> tuple[list[str], list[bool]]:
    """Tokens plus a per-token flag: does a sentence end after this token?

    A sentence ends at terminal punctuation (., !, ?, optionally followed by
    closing quotes/brackets) or at a blank line. Clinical notes often lack
    reliable punctuation, so callers must tolerate a flag list of all False.
    """
    normalized = unicodedata.normalize("NFC", text)
    matches = list(re.finditer(r"\S+", normalized))
    tokens = [m.group() for m in matches]
    ends: list[bool] = []
    for i, m in enumerate(matches):
        gap = normalized[m.end() : matches[i + 1].start()] if i + 1 < len(matches) else ""
        ends.append(bool(_SENTENCE_END_RE.search(m.group())) or gap.count("\n") >= 2)
    return tokens, ends


def _spans_fixed(n: int, size: int, stride: int) -> list[tuple[int, int]]:
    spans = []
    start = 0
    while True:
        spans.append((start, min(start + size, n)))
        if start + size >= n:
            break
        start += stride
    return spans


def _spans_sentence(n: int, size: int, overlap: int, ends: list[bool]) -> list[tuple[int, int]]:
    spans = []
    start = 0
    while True:
        hard_end = min(start + size, n)
        end = hard_end
        if hard_end < n:
            # snap backward to the nearest sentence end, unless that would
            # empty the chunk
            for e in range(hard_end, start, -1):
                if ends[e - 1]:
                    end = e
                    break
        spans.append((start, end))
        if end >= n:
            break
        next_start = end - overlap
        start = next_start if next_start > start else end
    return spans


def chunk_notes(notes: Sequence[NoteDocument], config: ChunkingConfig) -> list[NoteChunk]:
    """Chunk each note into timestamp-prefixed token windows, in document order.

    Every note token lands in at least one chunk; bodies never exceed
    ``chunk_size_tokens``. With ``sentence_aware`` off, consecutive chunks
    share exactly ``overlap_tokens`` tokens (the final pair may share more
    only when the note ends early). Empty notes yield zero chunks.
    """
    out: list[NoteChunk] = []
    for note in notes:
        tokens, ends = _token_stream(note.text)
        n = len(tokens)
        if n == 0:
            continue
        if config.sentence_aware:
            spans = _spans_sentence(n, config.chunk_size_tokens, config.overlap_tokens, ends)
        else:
            spans = _spans_fixed(n, config.chunk_size_tokens, config.chunk_size_tokens - config.overlap_tokens)
        prefix = f"[{format_instant(note.timestamp)}] "
        for i, (start, end) in enumerate(spans):
            out.append(
                NoteChunk(
                    note_id=note.id,
                    index=i,
                    token_span=(start, end),
                    text=prefix + " ".join(tokens[start:end]),
                )
            )
    return out


def corpus_fingerprint(notes: Sequence[NoteDocument]) -> str:
    """Hash of the note set; changes iff any note id, timestamp, or text changes."""
    items = sorted((n.id, format_instant(n.timestamp), n.text) for n in notes)
    blob = json.dumps(items, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class NoteIndex:
    patient_scope: str
    chunks: tuple[NoteChunk, ...]
    vector_index: VectorIndex
    built_at: datetime
    corpus_fingerprint: str
    note_timestamps: dict[str, datetime] = field(default_factory=dict)

    def chunk_by_key(self, key: str) -> NoteChunk:
        for c in self.chunks:
            if c.key == key:
                return c
        raise KeyError(key)


class NoteIndexStore:
    """Directory-backed persistence for per-patient note indexes.

    Index files are keyed by (patient, embedding backend id) and validated
    against the corpus fingerprint and chunking config at load time, so a
    stale cache is rebuilt instead of reused. Builds for one patient are
    single-flight.
    """

    def __init__(self, root: Optional[str | Path] = None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, dict] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, patient_scope: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(patient_scope, threading.Lock())

    def _path(self, patient_scope: str, backend_id: str) -> Optional[Path]:
        if self.root is None:
            return None
        slug = re.sub(r"[^A-Za-z0-9_-]", "_", f"{patient_scope}__{backend_id}")
        return self.root / f"noteindex_{slug}.json"

    def load(self, patient_scope: str, backend_id: str) -> Optional[dict]:
        path = self._path(patient_scope, backend_id)
        if path is None:
            return self._memory.get(f"{patient_scope}__{backend_id}")
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return None

    def save(self, patient_scope: str, backend_id: str, payload: dict) -> None:
        path = self._path(patient_scope, backend_id)
        if path is None:
            self._memory[f"{patient_scope}__{backend_id}"] = payload
        else:
            path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def build_index(
    patient_scope: str,
    notes: Sequence[NoteDocument],
    config: ChunkingConfig,
    embed_backend,
    store: Optional[NoteIndexStore] = None,
    recorder=None,
) -> NoteIndex:
    """Build (or reuse) the chunked vector index for one patient's notes.

    A persisted index whose corpus fingerprint and chunking config match is
    returned without a single embedding call; otherwise the notes are
    chunked, embedded, indexed, and persisted.
    """
    store = store if store is not None else NoteIndexStore(None)
    fingerprint = corpus_fingerprint(notes)
    timestamps = {n.id: n.timestamp for n in notes}
    started = time.monotonic()
    with store.lock_for(patient_scope):
        cached = store.load(patient_scope, embed_backend.backend_id)
        if (
            cached is not None
            and cached.get("corpus_fingerprint") == fingerprint
            and cached.get("chunking") == config.to_dict()
        ):
            chunks = tuple(NoteChunk.from_dict(c) for c in cached["chunks"])
            index = _index_from_chunks(chunks, embed_backend.dimension)
            return NoteIndex(
                patient_scope=patient_scope,
                chunks=chunks,
                vector_index=index,
                built_at=parse_instant(cached["built_at"]),
                corpus_fingerprint=fingerprint,
                note_timestamps=timestamps,
            )
        chunks = tuple(
            replace(c, embedding=embed(c.text, embed_backend)) for c in chunk_notes(notes, config)
        )
        index = _index_from_chunks(chunks, embed_backend.dimension)
        built_at = datetime.now(timezone.utc).replace(microsecond=0)
        store.save(
            patient_scope,
            embed_backend.backend_id,
            {
                "version": 1,
                "patient_scope": patient_scope,
                "backend_id": embed_backend.backend_id,
                "corpus_fingerprint": fingerprint,
                "chunking": config.to_dict(),
                "built_at": format_instant(built_at),
                "chunks": [c.to_dict() for c in chunks],
            },
        )
    if recorder is not None:
        recorder.record(
            role="note_indexer",
            tool="chunk_and_embed",
            input_text=fingerprint,
            output_text=f"{len(chunks)} chunks",
            wall_ms=recorder.tool_ms((time.monotonic() - started) * 1000.0),
        )
    return NoteIndex(
        patient_scope=patient_scope,
        chunks=chunks,
        vector_index=index,
        built_at=built_at,
        corpus_fingerprint=fingerprint,
        note_timestamps=timestamps,
    )


def _index_from_chunks(chunks: Sequence[NoteChunk], dimension: int) -> VectorIndex:
    index = VectorIndex(dimension)
    for c in chunks:
        if c.embedding is None:
            raise ValueError(f"chunk {c.key} has no embedding")
        index.add(c.key, c.embedding, payload_digest=digest(c.text))
    return index


def serialize_structured_for_query(evidence: StructuredEvidence, max_rows: int = SERIALIZE_MAX_ROWS) -> str:
    """Deterministic text rendering of SQL results for query fusion.

    One line per row as "col=value" pairs joined by "; ", truncated at
    ``max_rows`` with an explicit "(+N more rows)" marker; zero rows render
    as "(no rows)".
    """
    if not evidence.rows:
        return "(no rows)"
    lines = [
        "; ".join(f"{c}={'NULL' if v is None else v}" for c, v in zip(evidence.columns, row))
        for row in evidence.rows[:max_rows]
    ]
    extra = len(evidence.rows) - max_rows
    if extra > 0:
        lines.append(f"(+{extra} more rows)")
    return "\n".join(lines)


def retrieve_chunks(
    question: Question,
    structured: Optional[StructuredEvidence],
    index: NoteIndex,
    embed_backend,
    k: int = 10,
    time_window: Optional[tuple[datetime, datetime]] = None,
    section_patterns: Optional[Sequence[str]] = None,
    recorder=None,
) -> UnstructuredEvidence:
    """Rank note chunks against the question, fused with structured evidence.

    Without structured evidence the retrieval runs in fallback mode on the
    plain question text, optionally restricted by a note-timestamp window
    and/or section header patterns before ranking.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    fallback = structured is None
    if fallback:
        query_text = question.text
    else:
        query_text = question.text + QUERY_EVIDENCE_SEPARATOR + serialize_structured_for_query(structured)

    candidate_keys = None
    if fallback and (time_window is not None or section_patterns):
        candidates = list(index.chunks)
        if time_window is not None:
            lo, hi = time_window
            candidates = [
                c for c in candidates if lo <= index.note_timestamps.get(c.note_id, datetime.max.replace(tzinfo=timezone.utc)) <= hi
            ]
        if section_patterns:
            compiled = [re.compile(p, re.IGNORECASE) for p in section_patterns]
            candidates = [c for c in candidates if any(p.search(c.text) for p in compiled)]
        candidate_keys = [c.key for c in candidates]

    started = time.monotonic()
    if len(index.vector_index) == 0:
        ranked: list[tuple[str, float]] = []
    else:
        ranked = index.vector_index.top_k(embed(query_text, embed_backend), k, keys=candidate_keys)
    chunks = tuple((index.chunk_by_key(key), score) for key, score in ranked)
    if recorder is not None:
        recorder.record(
            role="note_retriever",
            tool="semantic_search" + ("[fallback]" if fallback else "[structure_guided]"),
            input_text=query_text,
            output_text=json.dumps([[key, score] for key, score in ranked]),
            wall_ms=recorder.tool_ms((time.monotonic() - started) * 1000.0),
        )
    return UnstructuredEvidence(chunks=chunks, k_used=k, fallback_mode=fallback)


def load_notes(path: str | Path) -> list[NoteDocument]:
    """Load the note input file: JSONL of {id, patient, timestamp, text}."""
    docs = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            docs.append(
                NoteDocument(
                    id=str(row["id"]),
                    patient_scope=str(row["patient"]) if row.get("patient") is not None else None,
                    timestamp=parse_instant(row["timestamp"]),
                    text=row.get("text", ""),
                )
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"notes file {path}, line {i + 1}: {exc}") from exc
    return docs
