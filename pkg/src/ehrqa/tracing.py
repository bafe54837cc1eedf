"""Trace collection and the append-only trace store.

Each pipeline run collects steps into a :class:`TraceRecorder`; the finished
:class:`~ehrqa.model.TraceRecord` goes into a :class:`TraceStore`, a local
append-only JSONL file with an in-memory id index.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from .model import TraceRecord, TraceStep, digest


class TraceRecorder:
    """Accumulates the ordered step list for one question.

    With ``deterministic=True`` (scripted backends) tool steps report 0 ms so
    traces and reports are byte-stable; LLM steps keep their scripted
    latencies. Live runs record real wall times.
    """

    def __init__(self, question_id: str, deterministic: bool = False):
        self.question_id = question_id
        self.deterministic = deterministic
        self._steps: list[TraceStep] = []
        self._lock = threading.Lock()

    def tool_ms(self, elapsed_ms: float) -> float:
        return 0.0 if self.deterministic else elapsed_ms

    def record(
        self,
        role: str,
        tool: str,
        input_text: str,
        output_text: str,
        wall_ms: float,
        prompt_tokens: int = 0,
        completion_tokens: int = 0,
        cost: float = 0.0,
    ) -> None:
        step = TraceStep(
            role=role,
            tool=tool,
            input_digest=digest(input_text),
            output_digest=digest(output_text),
            wall_ms=wall_ms,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            cost=cost,
        )
        with self._lock:
            self._steps.append(step)

    @property
    def steps(self) -> tuple[TraceStep, ...]:
        with self._lock:
            return tuple(self._steps)

    def finish(self, overhead_ms: float = 0.0) -> TraceRecord:
        if self.deterministic:
            overhead_ms = 0.0
        return TraceRecord.build(self.question_id, self.steps, overhead_ms)


class TraceStore:
    """Append-only trace persistence with O(1) lookup by trace id."""

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, TraceRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._records[entry["trace_id"]] = TraceRecord.from_dict(entry["record"])

    def append(self, trace_id: str, record: TraceRecord) -> None:
        line = json.dumps({"trace_id": trace_id, "record": record.to_dict()}, sort_keys=True)
        with self._lock:
            self._records[trace_id] = record
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    def get(self, trace_id: str) -> Optional[TraceRecord]:
        with self._lock:
            return self._records.get(trace_id)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)
