from __future__ import annotations

from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehrqa.embedding import HashEmbeddingBackend, cosine, embed
from ehrqa.model import NoteDocument, Question, StructuredEvidence, parse_instant, tokenize
from ehrqa.notes import (
    QUERY_EVIDENCE_SEPARATOR,
    ChunkingConfig,
    NoteIndexStore,
    build_index,
    chunk_notes,
    corpus_fingerprint,
    load_notes,
    retrieve_chunks,
    serialize_structured_for_query,
)

EMBEDDER = HashEmbeddingBackend(64)
TS = parse_instant("2126-05-06 15:00:00")


def _note(text: str, note_id: str = "n1", patient: str = "p1", ts=TS) -> NoteDocument:
    return NoteDocument(id=note_id, patient_scope=patient, timestamp=ts, text=text)


def numbered_note(n_tokens: int, **kwargs) -> NoteDocument:
    return _note(" ".join(f"t{i}" for i in range(1, n_tokens + 1)), **kwargs)


def sliding_window_spans(n: int, size: int, overlap: int) -> list[tuple[int, int]]:
    """Independent oracle: plain sliding-window arithmetic."""
    if n == 0:
        return []
    spans, start, stride = [], 0, size - overlap
    while True:
        spans.append((start, min(start + size, n)))
        if start + size >= n:
            return spans
        start += stride


class TestChunkNotes:
    def test_short_note_is_one_chunk(self):
        chunks = chunk_notes([numbered_note(100)], ChunkingConfig(256, 32, sentence_aware=False))
        assert len(chunks) == 1
        assert chunks[0].token_span == (0, 100)
        assert chunks[0].text.startswith("[2126-05-06T15:00:00+00:00] ")
        assert chunks[0].text.endswith("t100")

    def test_empty_note_yields_zero_chunks(self):
        assert chunk_notes([_note("")], ChunkingConfig()) == []
        assert chunk_notes([_note("   \n ")], ChunkingConfig()) == []

    def test_500_token_note_boundaries(self):
        # oracle: stride 224 windows over 500 tokens -> [1..256], [225..480], [449..500]
        chunks = chunk_notes([numbered_note(500)], ChunkingConfig(256, 32, sentence_aware=False))
        assert [c.token_span for c in chunks] == sliding_window_spans(500, 256, 32)
        assert [c.token_span for c in chunks] == [(0, 256), (224, 480), (448, 500)]
        bodies = [c.text.split("] ", 1)[1].split() for c in chunks]
        assert bodies[0][0] == "t1" and bodies[0][-1] == "t256"
        assert bodies[1][0] == "t225" and bodies[1][-1] == "t480"
        assert bodies[2][0] == "t449" and bodies[2][-1] == "t500"

    def test_ordinals_dense_from_zero(self):
        chunks = chunk_notes([numbered_note(600)], ChunkingConfig(256, 32, sentence_aware=False))
        assert [c.index for c in chunks] == list(range(len(chunks)))

    def test_sentence_aware_snaps_to_sentence_end(self):
        sentences = " ".join(f"w{i}" for i in range(1, 9)) + ". " + " ".join(f"x{i}" for i in range(1, 30))
        chunks = chunk_notes([_note(sentences)], ChunkingConfig(10, 2, sentence_aware=True))
        # first chunk stops at the sentence end: 8 tokens, "w8." carrying the period
        assert chunks[0].token_span == (0, 8)

    def test_sentence_aware_falls_back_to_hard_window(self):
        chunks = chunk_notes([numbered_note(50)], ChunkingConfig(10, 2, sentence_aware=True))
        assert chunks[0].token_span == (0, 10)  # no sentence ends anywhere

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ChunkingConfig(chunk_size_tokens=10, overlap_tokens=10)


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=0, max_value=1200), st.booleans())
def test_chunker_contract_on_random_lengths(n_tokens, sentence_aware):
    config = ChunkingConfig(256, 32, sentence_aware=sentence_aware)
    note = numbered_note(n_tokens)
    chunks = chunk_notes([note], config)
    tokens = tokenize(note.text)
    if n_tokens == 0:
        assert chunks == []
        return
    # size bound on body tokens
    for c in chunks:
        start, end = c.token_span
        body = c.text.split("] ", 1)[1].split()
        assert body == tokens[start:end]
        assert len(body) <= 256
    # exact coverage reconstruction by dropping span overlaps
    rebuilt = []
    previous_end = 0
    for c in chunks:
        start, end = c.token_span
        assert start <= previous_end  # no gaps
        rebuilt.extend(tokens[max(start, previous_end):end])
        previous_end = max(previous_end, end)
    assert rebuilt == tokens
    if not sentence_aware:
        spans = [c.token_span for c in chunks]
        assert spans == sliding_window_spans(n_tokens, 256, 32)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 - s2 == 32  # consecutive chunks share exactly the overlap


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(0, 40), min_size=1, max_size=6),
    st.integers(5, 20),
    st.integers(0, 4),
)
def test_sentence_mode_with_punctuated_text(sentence_lengths, size, overlap):
    if overlap >= size:
        overlap = size - 1
    text = " ".join(
        " ".join(f"s{i}w{j}" for j in range(length)) + "."
        for i, length in enumerate(sentence_lengths)
        if length
    )
    note = _note(text)
    tokens = tokenize(note.text)
    chunks = chunk_notes([note], ChunkingConfig(size, overlap, sentence_aware=True))
    if not tokens:
        assert chunks == []
        return
    covered = set()
    for c in chunks:
        start, end = c.token_span
        assert end - start <= size
        covered.update(range(start, end))
    assert covered == set(range(len(tokens)))


class _CountingEmbedder:
    def __init__(self):
        self.inner = HashEmbeddingBackend(64)
        self.dimension = 64
        self.backend_id = self.inner.backend_id
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return self.inner.embed(text)


class TestBuildIndex:
    def _notes(self):
        return [
            _note("Aspirin started today. Tolerating well.", note_id="a", ts=TS),
            _note("Vancomycin trough therapeutic. Continue current dose.", note_id="b", ts=TS + timedelta(days=1)),
            _note("Discharge planned tomorrow morning.", note_id="c", ts=TS + timedelta(days=2)),
        ]

    def test_rebuild_with_unchanged_corpus_makes_zero_embedding_calls(self, tmp_path):
        backend = _CountingEmbedder()
        store = NoteIndexStore(tmp_path)
        index = build_index("p1", self._notes(), ChunkingConfig(), backend, store)
        first_calls = backend.calls
        assert first_calls == len(index.chunks) > 0
        again = build_index("p1", self._notes(), ChunkingConfig(), backend, store)
        assert backend.calls == first_calls
        assert [c.key for c in again.chunks] == [c.key for c in index.chunks]

    def test_edited_note_forces_full_rebuild(self, tmp_path):
        backend = _CountingEmbedder()
        store = NoteIndexStore(tmp_path)
        notes = self._notes()
        build_index("p1", notes, ChunkingConfig(), backend, store)
        first_calls = backend.calls
        edited = notes[:1] + [_note("Vancomycin STOPPED due to rash.", note_id="b", ts=notes[1].timestamp)] + notes[2:]
        assert corpus_fingerprint(edited) != corpus_fingerprint(notes)
        build_index("p1", edited, ChunkingConfig(), backend, store)
        assert backend.calls > first_calls

    def test_zero_notes_builds_empty_index(self, tmp_path):
        backend = _CountingEmbedder()
        index = build_index("p-none", [], ChunkingConfig(), backend, NoteIndexStore(tmp_path))
        assert index.chunks == ()
        question = Question(id="q", text="anything?")
        evidence = retrieve_chunks(question, None, index, backend, k=5)
        assert evidence.chunks == ()
        assert evidence.fallback_mode is True

    def test_chunking_config_change_invalidates(self, tmp_path):
        backend = _CountingEmbedder()
        store = NoteIndexStore(tmp_path)
        build_index("p1", self._notes(), ChunkingConfig(), backend, store)
        first_calls = backend.calls
        build_index("p1", self._notes(), ChunkingConfig(chunk_size_tokens=128, overlap_tokens=16), backend, store)
        assert backend.calls > first_calls


class TestSerializeStructured:
    def _evidence(self, rows):
        return StructuredEvidence(sql="SELECT drug, dose FROM t", columns=("drug", "dose"), rows=rows, attempt_count=1)

    def test_single_row(self):
        assert serialize_structured_for_query(self._evidence((("aspirin", "81mg"),))) == "drug=aspirin; dose=81mg"

    def test_zero_rows_marker(self):
        assert serialize_structured_for_query(self._evidence(())) == "(no rows)"

    def test_truncation_marker_counts_hidden_rows(self):
        rows = tuple((f"drug{i}", f"{i}mg") for i in range(50))
        text = serialize_structured_for_query(self._evidence(rows), max_rows=20)
        lines = text.splitlines()
        assert len(lines) == 21
        assert lines[-1] == "(+30 more rows)"
        assert lines[0] == "drug=drug0; dose=0mg"

    def test_null_values_render_explicitly(self):
        assert serialize_structured_for_query(self._evidence(((None, "81mg"),))) == "drug=NULL; dose=81mg"


class TestRetrieveChunks:
    def _index(self, tmp_path):
        notes = [
            _note(
                "Admission note. Aspirin 81 mg started for chest pain. Monitor closely.",
                note_id="n1",
                ts=TS,
            ),
            _note(
                "Discharge Medications: aspirin 325 mg daily. Follow up in clinic.",
                note_id="n2",
                ts=TS + timedelta(days=9),
            ),
            _note(
                "Nursing note. Patient ambulating. No complaints overnight.",
                note_id="n3",
                ts=TS + timedelta(days=1),
            ),
        ]
        return build_index("p1", notes, ChunkingConfig(), EMBEDDER, NoteIndexStore(tmp_path))

    def test_fallback_equals_plain_question_ranking(self, tmp_path):
        index = self._index(tmp_path)
        question = Question(id="q", text="aspirin dose?")
        evidence = retrieve_chunks(question, None, index, EMBEDDER, k=3)
        assert evidence.fallback_mode is True
        plain = index.vector_index.top_k(embed(question.text, EMBEDDER), 3)
        assert [(c.key, s) for c, s in evidence.chunks] == plain

    def test_structure_guided_matches_fused_query_oracle(self, tmp_path):
        index = self._index(tmp_path)
        question = Question(id="q", text="aspirin dose?")
        structured = StructuredEvidence(
            sql="SELECT drug, dose_val_rx FROM prescriptions",
            columns=("drug", "dose_val_rx"),
            rows=(("Aspirin", "325"),),
            attempt_count=1,
        )
        evidence = retrieve_chunks(question, structured, index, EMBEDDER, k=3)
        assert evidence.fallback_mode is False
        fused = question.text + QUERY_EVIDENCE_SEPARATOR + "drug=Aspirin; dose_val_rx=325"
        query = embed(fused, EMBEDDER)
        oracle = [(c.key, cosine(query, c.embedding)) for c in index.chunks]
        oracle.sort(key=lambda item: (-item[1], item[0]))
        assert [(c.key, s) for c, s in evidence.chunks] == oracle[:3]

    def test_k_exceeding_chunk_count_returns_everything(self, tmp_path):
        index = self._index(tmp_path)
        evidence = retrieve_chunks(Question(id="q", text="anything"), None, index, EMBEDDER, k=50)
        assert len(evidence.chunks) == len(index.chunks)
        scores = [s for _, s in evidence.chunks]
        assert scores == sorted(scores, reverse=True)

    def test_temporal_filter_in_fallback_mode(self, tmp_path):
        index = self._index(tmp_path)
        question = Question(id="q", text="aspirin dose?")
        window = (TS - timedelta(hours=1), TS + timedelta(days=2))
        evidence = retrieve_chunks(question, None, index, EMBEDDER, k=10, time_window=window)
        assert {c.note_id for c, _ in evidence.chunks} == {"n1", "n3"}

    def test_section_filter_in_fallback_mode(self, tmp_path):
        index = self._index(tmp_path)
        question = Question(id="q", text="aspirin dose?")
        evidence = retrieve_chunks(
            question, None, index, EMBEDDER, k=10, section_patterns=[r"Discharge Medications:"]
        )
        assert {c.note_id for c, _ in evidence.chunks} == {"n2"}


class TestLoadNotes:
    def test_round_trip(self, fixtures_dir):
        notes = load_notes(fixtures_dir / "notes.jsonl")
        assert len(notes) == 7
        assert {n.patient_scope for n in notes} == {"10001", "10002", "10003"}

    def test_malformed_line_reports_position(self, tmp_path):
        path = tmp_path / "notes.jsonl"
        path.write_text('{"id": "a", "patient": "p", "timestamp": "2126-01-01 00:00:00", "text": "x"}\n{"id": "b"}\n')
        with pytest.raises(ValueError, match="line 2"):
            load_notes(path)
