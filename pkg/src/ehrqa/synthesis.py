"""Answer synthesis: render the joint-evidence prompt, call the model, and
parse the three-section reply (SQL QUERY / Evidence from notes / Response).

Header parsing is deliberately lenient about numbering — the canonical
answer format numbers two different sections "2." — but strict about the
Response section, which must be present.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from . import llm
from .llm import ChatRequest, load_template, render
from .model import AnswerRecord, NoteChunk, Question, StructuredEvidence, UnstructuredEvidence
from .notes import serialize_structured_for_query

NONE_MARKER = "(none)"


class SynthesisParseError(Exception):
    """Model reply did not contain a Response section."""

    def __init__(self, message: str, raw_model_output: str):
        super().__init__(message)
        self.raw_model_output = raw_model_output


@dataclass(frozen=True)
class EvidenceBundle:
    """The joint evidence context handed to the synthesizer.

    Both arms may be empty; such bundles still render (both slots "(none)")
    and must end in a well-formed "insufficient evidence" answer.
    """

    question: Question
    structured: Optional[StructuredEvidence] = None
    unstructured: Optional[UnstructuredEvidence] = None

    @property
    def is_empty(self) -> bool:
        no_structured = self.structured is None
        no_chunks = self.unstructured is None or not self.unstructured.chunks
        return no_structured and no_chunks


def _render_notes(unstructured: Optional[UnstructuredEvidence]) -> str:
    if unstructured is None or not unstructured.chunks:
        return NONE_MARKER
    # chunk text carries its timestamp prefix; the prompt's temporal-guard
    # instruction depends on the timestamps staying visible
    return "\n\n".join(chunk.text for chunk, _ in unstructured.chunks)


def render_synthesis_prompt(bundle: EvidenceBundle) -> str:
    """Fill the answer-synthesis prompt; absent evidence arms render "(none)"."""
    template = load_template("answer_synthesis")
    structured = bundle.structured
    return render(
        template,
        {
            "query_str": bundle.question.text,
            "sql_query": structured.sql if structured is not None else NONE_MARKER,
            "context_str": serialize_structured_for_query(structured) if structured is not None else NONE_MARKER,
            "notes": _render_notes(bundle.unstructured),
        },
    )


_SECTION_HEADERS = {
    "sql": r"SQL\s+QUERY",
    "notes": r"Evidence\s+from\s+notes",
    "response": r"Response",
}


def _find_sections(text: str) -> dict[str, str]:
    """Locate section bodies by header. Accepts optional "N." numbering and
    any header case; later duplicate headers win over earlier ones."""
    pattern = re.compile(
        r"^\s*(?:\d+\s*[.)]\s*)?(" + "|".join(_SECTION_HEADERS.values()) + r")\s*:\s*",
        re.IGNORECASE | re.MULTILINE,
    )
    names = {re.sub(r"\\s\+", " ", v).lower(): k for k, v in _SECTION_HEADERS.items()}
    hits = [(m.start(), m.end(), re.sub(r"\s+", " ", m.group(1)).lower()) for m in pattern.finditer(text)]
    sections: dict[str, str] = {}
    for i, (start, end, header) in enumerate(hits):
        body_end = hits[i + 1][0] if i + 1 < len(hits) else len(text)
        sections[names[header]] = text[end:body_end].strip()
    return sections


def parse_answer(question_id: str, reply: str) -> AnswerRecord:
    """Parse the synthesizer reply into an AnswerRecord.

    The Response section is mandatory; SQL QUERY and Evidence-from-notes
    default to empty when absent.
    """
    sections = _find_sections(reply)
    if "response" not in sections:
        raise SynthesisParseError("reply has no Response section", raw_model_output=reply)
    return AnswerRecord(
        question_id=question_id,
        sql_section=sections.get("sql", ""),
        notes_evidence_section=sections.get("notes", ""),
        response_section=sections["response"],
        raw_model_output=reply,
    )


def synthesize(bundle: EvidenceBundle, backend, recorder=None) -> AnswerRecord:
    """Render the joint-evidence prompt, call the model at temperature 0, parse."""
    prompt = render_synthesis_prompt(bundle)
    response = llm.complete(ChatRequest(role_tag="answer_synthesizer", rendered_prompt=prompt), backend, recorder)
    return parse_answer(bundle.question.id, response.text)


def insufficient_evidence_answer(question: Question) -> AnswerRecord:
    """Locally constructed answer for both-empty bundles when no model path exists."""
    return AnswerRecord(
        question_id=question.id,
        sql_section="",
        notes_evidence_section="",
        response_section="insufficient evidence found",
        raw_model_output="",
    )


def answer_notes_only(question: Question, context_chunks: Sequence[NoteChunk], backend, recorder=None) -> str:
    """Single-sentence free-text answer over note chunks (no section parsing)."""
    if not context_chunks:
        raise ValueError("answer_notes_only requires at least one context chunk")
    template = load_template("note_qa")
    prompt = render(
        template,
        {
            "enhanced_bge": "\n\n".join(c.text for c in context_chunks),
            "query": question.text,
        },
    )
    response = llm.complete(ChatRequest(role_tag="note_qa", rendered_prompt=prompt), backend, recorder)
    return response.text.strip()
