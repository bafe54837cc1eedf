"""HTTP service exposing the ask / trace / schema endpoints.

Single-process deployment: request-level parallelism over shared read-only
runtimes, an append-only trace store, and no authentication — any real-data
deployment must sit behind an access-controlled gateway.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import structured
from .config import ServiceConfig
from .model import Question, digest, normalize_text
from .pipeline import AskService, PipelineBackendError, Runtime, runtime_from_config
from .structured import fingerprint_schema
from .tracing import TraceStore


class AskBody(BaseModel):
    question: str
    patient_scope: Optional[str] = None
    admission_scope: Optional[str] = None
    profile: Optional[str] = None


_SUMMARY_ROW_CAP = 50


def _evidence_summary(bundle) -> dict:
    summary: dict = {"structured": None, "unstructured": None}
    if bundle.structured is not None:
        summary["structured"] = {
            "sql": bundle.structured.sql,
            "columns": list(bundle.structured.columns),
            "rows": [list(r) for r in bundle.structured.rows[:_SUMMARY_ROW_CAP]],
            "row_count": len(bundle.structured.rows),
            "attempt_count": bundle.structured.attempt_count,
        }
    if bundle.unstructured is not None:
        summary["unstructured"] = {
            "fallback_mode": bundle.unstructured.fallback_mode,
            "chunks": [
                {"key": chunk.key, "note_id": chunk.note_id, "score": score, "text": chunk.text}
                for chunk, score in bundle.unstructured.chunks
            ],
        }
    return summary


def create_app(
    config: Optional[ServiceConfig] = None,
    runtimes: Optional[dict[str, Runtime]] = None,
    trace_store: Optional[TraceStore] = None,
) -> FastAPI:
    """Build the service app from a config or pre-built runtimes."""
    if runtimes is None:
        if config is None:
            raise ValueError("create_app needs a config or runtimes")
        config.validate()
        runtimes = {db_id: runtime_from_config(config, db_id) for db_id in config.databases}
        if trace_store is None and config.trace_store_path is not None:
            trace_store = TraceStore(config.trace_store_path)
    service = AskService(runtimes, trace_store)
    app = FastAPI(title="ehrqa", version="0.1.0")
    app.state.service = service

    known_patients: dict[str, set[str]] = {}

    def _runtime_for(profile: Optional[str]) -> tuple[str, Runtime]:
        if profile is None:
            db_id = next(iter(service.runtimes))
            return db_id, service.runtimes[db_id]
        for db_id, runtime in service.runtimes.items():
            if db_id == profile or runtime.profile == profile:
                return db_id, runtime
        raise HTTPException(status_code=422, detail=f"unknown profile {profile!r}")

    @app.post("/ask")
    def ask(body: AskBody):
        if not normalize_text(body.question):
            raise HTTPException(status_code=400, detail="question text is empty")
        db_id, runtime = _runtime_for(body.profile)
        if body.patient_scope is not None:
            if db_id not in known_patients:
                known_patients[db_id] = runtime.known_patients()
            if body.patient_scope not in known_patients[db_id]:
                raise HTTPException(status_code=422, detail=f"unknown patient_scope {body.patient_scope!r}")
        question = Question(
            id=f"ask-{digest(f'{body.question}|{body.patient_scope}')}",
            text=body.question,
            patient_scope=body.patient_scope,
            admission_scope=body.admission_scope,
        )
        try:
            outcome, trace_id = service.ask(db_id, question)
        except PipelineBackendError as exc:
            raise HTTPException(
                status_code=502,
                detail={"error": str(exc), "trace_id": getattr(exc, "trace_id", None)},
            )
        return {
            "answer": outcome.answer.to_dict(),
            "evidence": _evidence_summary(outcome.bundle),
            "attempts": [
                {"attempt_number": a.attempt_number, "outcome": a.outcome, "sql": a.sql, "message": a.message}
                for a in outcome.attempts
            ],
            "trace_id": trace_id,
        }

    @app.get("/trace/{trace_id}")
    def trace(trace_id: str):
        record = service.trace_store.get(trace_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown trace id {trace_id!r}")
        return record.to_dict()

    @app.get("/schema/{db_id}")
    def schema(db_id: str):
        runtime = service.runtimes.get(db_id)
        if runtime is None:
            raise HTTPException(status_code=404, detail=f"unknown db {db_id!r}")
        catalog = runtime.catalog()
        tables = []
        for table in catalog.tables:
            cached = runtime.desc_cache.get(runtime.db_id, table.name, fingerprint_schema(table))
            tables.append(
                {
                    "table": table.to_dict(),
                    "description": cached.description if cached is not None else None,
                }
            )
        return {"db_id": db_id, "profile": runtime.profile, "tables": tables}

    static_dir = config.static_dir if config is not None else None
    if static_dir is not None and static_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
