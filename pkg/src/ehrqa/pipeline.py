"""End-to-end orchestration: structured querying, note retrieval with
fallback, and answer synthesis, with every step traced.

The :class:`Runtime` bundles everything one database needs (backends,
caches, notes, knobs); the service, CLI, and benchmark runner all drive the
same :func:`answer_question` entry point.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import llm, notes as notes_mod, structured, synthesis
from .config import ServiceConfig
from .embedding import EmbeddingError, HashEmbeddingBackend, RemoteEmbeddingBackend
from .llm import RemoteBackend, ScriptedBackend
from .model import AnswerRecord, NoteDocument, Question, TraceRecord
from .notes import ChunkingConfig, NoteIndexStore
from .structured import DescriptionCache, SchemaCatalog, StructuredConfig, discover_schema
from .synthesis import EvidenceBundle
from .tracing import TraceRecorder, TraceStore


@dataclass
class Runtime:
    """Everything needed to answer questions against one database."""

    db_path: Path
    profile: str
    llm_backend: object
    embed_backend: object
    desc_cache: DescriptionCache = field(default_factory=DescriptionCache)
    note_store: NoteIndexStore = field(default_factory=lambda: NoteIndexStore(None))
    notes: list[NoteDocument] = field(default_factory=list)
    k_tables: int = 10
    k_chunks: int = 10
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    max_attempts: int = 3
    timeout_s: float = 120.0
    deterministic_timing: bool = False
    _catalog: Optional[SchemaCatalog] = field(default=None, repr=False)
    _catalog_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def db_id(self) -> str:
        return self.db_path.stem

    def structured_config(self) -> StructuredConfig:
        return StructuredConfig(
            profile=self.profile,
            k_tables=self.k_tables,
            max_attempts=self.max_attempts,
            timeout_s=self.timeout_s,
        )

    def catalog(self, refresh: bool = False) -> SchemaCatalog:
        with self._catalog_lock:
            if self._catalog is None or refresh:
                self._catalog = discover_schema(self.db_path)
            return self._catalog

    def notes_for(self, patient_scope: Optional[str]) -> list[NoteDocument]:
        if patient_scope is None:
            return list(self.notes)
        return [n for n in self.notes if n.patient_scope == patient_scope]

    def known_patients(self) -> set[str]:
        """Patient identifiers visible in the db's patient-ish tables or notes."""
        ids = {n.patient_scope for n in self.notes if n.patient_scope is not None}
        try:
            catalog = self.catalog()
        except structured.DatabaseUnreachableError:
            return ids
        for table in catalog.tables:
            for id_col in ("subject_id", "person_id"):
                if id_col in table.column_names():
                    try:
                        result = structured.execute_sql(
                            self.db_path, f'SELECT DISTINCT "{id_col}" FROM "{table.name}"', timeout_s=self.timeout_s
                        )
                        ids.update(str(row[0]) for row in result.rows if row[0] is not None)
                    except structured.SqlExecutionError:
                        pass
        return ids

    def config_snapshot(self) -> dict:
        return {
            "db_id": self.db_id,
            "profile": self.profile,
            "backend": getattr(self.llm_backend, "kind", type(self.llm_backend).__name__),
            "embedding": getattr(self.embed_backend, "backend_id", "unknown"),
            "k_tables": self.k_tables,
            "k_chunks": self.k_chunks,
            "chunking": self.chunking.to_dict(),
            "max_attempts": self.max_attempts,
            "timeout_s": self.timeout_s,
        }


def runtime_from_config(config: ServiceConfig, db_id: str) -> Runtime:
    db = config.databases[db_id]
    if config.backend.kind == "scripted":
        if config.backend.script is None:
            raise ValueError("scripted backend requires a script file")
        backend = ScriptedBackend.from_file(config.backend.script, config.backend.cost_per_1k_tokens)
    else:
        backend = RemoteBackend(
            endpoint=config.backend.endpoint,
            model=config.backend.model,
            api_key_env=config.backend.api_key_env,
            cost_per_1k_tokens=config.backend.cost_per_1k_tokens,
            transport_retries=config.backend.transport_retries,
        )
    if config.embedding.kind == "hash":
        embedder = HashEmbeddingBackend(config.embedding.dimension)
    else:
        embedder = RemoteEmbeddingBackend(
            endpoint=config.embedding.endpoint,
            model=config.embedding.model,
            dimension=config.embedding.dimension,
            api_key_env=config.embedding.api_key_env,
        )
    notes = notes_mod.load_notes(db.notes) if db.notes is not None else []
    return Runtime(
        db_path=db.path,
        profile=db.profile,
        llm_backend=backend,
        embed_backend=embedder,
        desc_cache=DescriptionCache(config.description_cache_path),
        note_store=NoteIndexStore(config.index_store_dir),
        notes=notes,
        k_tables=config.k_tables,
        k_chunks=config.k_chunks,
        chunking=config.chunking,
        max_attempts=config.max_attempts,
        timeout_s=config.timeout_s,
        deterministic_timing=config.backend.kind == "scripted",
    )


@dataclass
class PipelineOutcome:
    question: Question
    answer: AnswerRecord
    bundle: EvidenceBundle
    attempts: list[structured.SqlAttempt]
    trace: TraceRecord
    prediction: str


class PipelineBackendError(Exception):
    """A backend (LLM or embedding) failed mid-run; carries the partial trace."""

    def __init__(self, message: str, trace: TraceRecord):
        super().__init__(message)
        self.trace = trace


def _structured_arm(runtime: Runtime, question: Question, recorder: TraceRecorder):
    return structured.run_structured_pipeline(
        question,
        runtime.db_path,
        runtime.llm_backend,
        runtime.desc_cache,
        runtime.structured_config(),
        runtime.embed_backend,
        recorder,
        catalog=runtime.catalog(),
    )


def _unstructured_arm(runtime: Runtime, question: Question, structured_evidence, recorder: TraceRecorder):
    patient_notes = runtime.notes_for(question.patient_scope)
    scope = question.patient_scope or "__all__"
    index = notes_mod.build_index(
        scope, patient_notes, runtime.chunking, runtime.embed_backend, runtime.note_store, recorder
    )
    return notes_mod.retrieve_chunks(
        question, structured_evidence, index, runtime.embed_backend, runtime.k_chunks, recorder=recorder
    )


def answer_question(runtime: Runtime, question: Question, modality: str = "multimodal") -> PipelineOutcome:
    """Run the pipeline arms named by ``modality`` and synthesize an answer.

    structured: SQL arm only; the prediction is the flattened result values.
    unstructured: notes-only retrieval plus the single-sentence note answer.
    multimodal: both arms then the three-section synthesizer answer.
    """
    recorder = TraceRecorder(question.id, deterministic=runtime.deterministic_timing)
    try:
        return _answer_question(runtime, question, modality, recorder)
    except (llm.TransportError, llm.ScriptExhaustedError, EmbeddingError) as exc:
        raise PipelineBackendError(str(exc), recorder.finish()) from exc


def _answer_question(
    runtime: Runtime, question: Question, modality: str, recorder: TraceRecorder
) -> PipelineOutcome:
    structured_evidence = None
    attempts: list[structured.SqlAttempt] = []
    unstructured_evidence = None

    if modality in ("structured", "multimodal"):
        structured_evidence, attempts = _structured_arm(runtime, question, recorder)

    if modality == "structured":
        bundle = EvidenceBundle(question=question, structured=structured_evidence)
        prediction = render_result_values(structured_evidence)
        answer = AnswerRecord(
            question_id=question.id,
            sql_section=structured_evidence.sql if structured_evidence else "",
            notes_evidence_section="",
            response_section=prediction,
            raw_model_output="",
        )
        return PipelineOutcome(question, answer, bundle, attempts, recorder.finish(), prediction)

    if modality == "unstructured":
        unstructured_evidence = _unstructured_arm(runtime, question, None, recorder)
        bundle = EvidenceBundle(question=question, unstructured=unstructured_evidence)
        if unstructured_evidence.chunks:
            prediction = synthesis.answer_notes_only(
                question, [c for c, _ in unstructured_evidence.chunks], runtime.llm_backend, recorder
            )
            answer = AnswerRecord(
                question_id=question.id,
                sql_section="",
                notes_evidence_section="\n\n".join(c.text for c, _ in unstructured_evidence.chunks),
                response_section=prediction,
                raw_model_output=prediction,
            )
        else:
            answer = synthesis.insufficient_evidence_answer(question)
            prediction = answer.response_section
        return PipelineOutcome(question, answer, bundle, attempts, recorder.finish(), prediction)

    # multimodal: notes retrieval is structure-guided when the SQL arm
    # produced evidence, fallback-mode otherwise
    unstructured_evidence = _unstructured_arm(runtime, question, structured_evidence, recorder)
    bundle = EvidenceBundle(question=question, structured=structured_evidence, unstructured=unstructured_evidence)
    try:
        answer = synthesis.synthesize(bundle, runtime.llm_backend, recorder)
    except (llm.GatewayError, synthesis.SynthesisParseError):
        if bundle.is_empty:
            answer = synthesis.insufficient_evidence_answer(question)
        else:
            raise
    return PipelineOutcome(question, answer, bundle, attempts, recorder.finish(), answer.response_section)


def render_result_values(evidence) -> str:
    """Flatten execution-result values for execution-accuracy comparison."""
    if evidence is None or not evidence.rows:
        return ""
    cells = [("" if v is None else str(v)) for row in evidence.rows for v in row]
    return ", ".join(cells)


class AskService:
    """Shared ask/trace bookkeeping for the HTTP service and the CLI."""

    def __init__(self, runtimes: dict[str, Runtime], trace_store: Optional[TraceStore] = None):
        self.runtimes = runtimes
        self.trace_store = trace_store if trace_store is not None else TraceStore()
        self._seq = itertools.count(1)

    def ask(self, db_id: str, question: Question, modality: str = "multimodal") -> tuple[PipelineOutcome, str]:
        runtime = self.runtimes[db_id]
        trace_id = f"t{next(self._seq):06d}-{question.id}"
        try:
            outcome = answer_question(runtime, question, modality)
        except PipelineBackendError as exc:
            # persist whatever the run managed to trace before failing
            self.trace_store.append(trace_id, exc.trace)
            exc.trace_id = trace_id
            raise
        self.trace_store.append(trace_id, outcome.trace)
        return outcome, trace_id
