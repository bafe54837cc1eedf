from __future__ import annotations

import pytest

from ehrqa.fixtures import sample_bundle
from ehrqa.llm import ScriptRule, ScriptedBackend
from ehrqa.model import NoteChunk, Question, StructuredEvidence, UnstructuredEvidence
from ehrqa.synthesis import (
    EvidenceBundle,
    SynthesisParseError,
    answer_notes_only,
    parse_answer,
    render_synthesis_prompt,
    synthesize,
)

QUESTION = Question(id="q1", text="What was the last aspirin dose?", patient_scope="10001")

STRUCTURED = StructuredEvidence(
    sql="SELECT dose_val_rx FROM prescriptions",
    columns=("dose_val_rx",),
    rows=(("325",),),
    attempt_count=1,
)

CHUNK = NoteChunk(note_id="n1", index=0, token_span=(0, 4), text="[2126-05-06T15:00:00+00:00] aspirin dose increased")


class TestRenderPrompt:
    def test_structured_only_renders_none_for_notes(self):
        bundle = EvidenceBundle(question=QUESTION, structured=STRUCTURED)
        prompt = render_synthesis_prompt(bundle)
        assert "- Notes: (none)" in prompt
        assert "- SQL Query: SELECT dose_val_rx FROM prescriptions" in prompt

    def test_both_empty_renders_both_none_slots(self):
        bundle = EvidenceBundle(question=QUESTION)
        prompt = render_synthesis_prompt(bundle)
        assert "- SQL Query: (none)" in prompt
        assert "- SQL Response: (none)" in prompt
        assert "- Notes: (none)" in prompt

    def test_chunk_timestamps_stay_visible(self):
        unstructured = UnstructuredEvidence(chunks=((CHUNK, 0.9),), k_used=10, fallback_mode=False)
        prompt = render_synthesis_prompt(EvidenceBundle(question=QUESTION, unstructured=unstructured))
        assert "[2126-05-06T15:00:00+00:00] aspirin dose increased" in prompt

    def test_rendering_is_deterministic(self):
        bundle = EvidenceBundle(question=QUESTION, structured=STRUCTURED)
        assert render_synthesis_prompt(bundle) == render_synthesis_prompt(bundle)

    def test_fixture_bundle_matches_committed_golden(self, fixtures_dir):
        golden = (fixtures_dir / "golden" / "synthesis_prompt.txt").read_text(encoding="utf-8")
        assert render_synthesis_prompt(sample_bundle()) == golden


class TestParseAnswer:
    def test_three_numbered_sections(self):
        reply = (
            "1. SQL QUERY: SELECT dose_val_rx FROM prescriptions\n"
            "2. Evidence from notes: aspirin dose increased to 325 mg\n"
            "2. Response: The last aspirin dose was 325 mg."
        )
        answer = parse_answer("q1", reply)
        assert answer.sql_section == "SELECT dose_val_rx FROM prescriptions"
        assert answer.notes_evidence_section == "aspirin dose increased to 325 mg"
        assert answer.response_section == "The last aspirin dose was 325 mg."
        assert answer.raw_model_output == reply

    def test_unnumbered_case_insensitive_headers(self):
        reply = "sql query: SELECT 1\nevidence FROM notes: none found\nRESPONSE: fine."
        answer = parse_answer("q1", reply)
        assert answer.sql_section == "SELECT 1"
        assert answer.response_section == "fine."

    def test_missing_notes_section_is_lenient(self):
        reply = "1. SQL QUERY: SELECT 1\n2. Response: done."
        answer = parse_answer("q1", reply)
        assert answer.notes_evidence_section == ""
        assert answer.response_section == "done."

    def test_missing_response_is_a_parse_error_with_raw_output(self):
        reply = "I think the answer is 325 mg but I cannot format it."
        with pytest.raises(SynthesisParseError) as exc:
            parse_answer("q1", reply)
        assert exc.value.raw_model_output == reply

    def test_parse_then_reserialize_is_idempotent(self):
        reply = (
            "1. SQL QUERY: SELECT a FROM b\n"
            "2. Evidence from notes: note text here\n"
            "2. Response: the answer."
        )
        first = parse_answer("q1", reply)
        rebuilt = (
            f"1. SQL QUERY: {first.sql_section}\n"
            f"2. Evidence from notes: {first.notes_evidence_section}\n"
            f"2. Response: {first.response_section}"
        )
        second = parse_answer("q1", rebuilt)
        assert (second.sql_section, second.notes_evidence_section, second.response_section) == (
            first.sql_section,
            first.notes_evidence_section,
            first.response_section,
        )


class TestSynthesize:
    def test_scripted_reply_parses_into_answer(self):
        backend = ScriptedBackend(
            [
                ScriptRule(
                    "answer_synthesizer",
                    "last aspirin dose",
                    "1. SQL QUERY: SELECT dose_val_rx FROM prescriptions\n"
                    "2. Evidence from notes: dose increased\n"
                    "2. Response: 325 mg.",
                )
            ]
        )
        bundle = EvidenceBundle(question=QUESTION, structured=STRUCTURED)
        answer = synthesize(bundle, backend)
        assert answer.question_id == "q1"
        assert answer.response_section == "325 mg."

    def test_each_call_is_one_trace_step(self):
        from ehrqa.tracing import TraceRecorder

        backend = ScriptedBackend(
            [ScriptRule("answer_synthesizer", "last aspirin dose", "Response: ok.")]
        )
        recorder = TraceRecorder("q1", deterministic=True)
        synthesize(EvidenceBundle(question=QUESTION, structured=STRUCTURED), backend, recorder)
        assert [s.role for s in recorder.steps] == ["answer_synthesizer"]


class TestAnswerNotesOnly:
    def test_scripted_single_sentence_reply(self):
        backend = ScriptedBackend(
            [ScriptRule("note_qa", "How did the patient feel", "The patient felt weak on admission.")]
        )
        question = Question(id="q2", text="How did the patient feel upon admission?")
        assert answer_notes_only(question, [CHUNK], backend) == "The patient felt weak on admission."

    def test_empty_chunk_list_is_a_precondition_error(self):
        backend = ScriptedBackend([])
        with pytest.raises(ValueError):
            answer_notes_only(QUESTION, [], backend)
