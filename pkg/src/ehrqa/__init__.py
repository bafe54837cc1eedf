"""Multi-agent question answering over heterogeneous EHR data.

Structured tables are queried through schema-aware SQL generation with a
bounded execution-repair loop; clinical notes are chunked, indexed on
demand, and retrieved with the question fused with structured evidence; a
synthesizer integrates both arms into an evidence-traceable answer.
"""

__version__ = "0.1.0"

from .model import (
    AnswerRecord,
    NoteChunk,
    NoteDocument,
    Question,
    StructuredEvidence,
    TableDescription,
    TableRef,
    TraceRecord,
    UnstructuredEvidence,
)

__all__ = [
    "__version__",
    "AnswerRecord",
    "NoteChunk",
    "NoteDocument",
    "Question",
    "StructuredEvidence",
    "TableDescription",
    "TableRef",
    "TraceRecord",
    "UnstructuredEvidence",
]
