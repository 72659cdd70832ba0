import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from clausefinder.chunker import ChunkKind
from clausefinder.corpus import Corpus, GoldAnswer, QuestionSpec
from clausefinder.errors import BackendError, EmbeddingError, TransientBackendError
from clausefinder.inference import (
    NEGATIVE_ANSWER,
    Candidate,
    CellRef,
    ChatRequest,
    OllamaChatBackend,
    OllamaEmbedder,
    OracleChatBackend,
    TrigramEmbedder,
    cosine_distance,
    cosine_similarity,
    generate,
    is_negative_answer,
    unit_normalize,
)

from conftest import make_document, span_for_words


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else None
        self.server.requests.append((self.path, body))
        status, payload = self.server.responder(self.path, body)
        raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    server.requests = []
    server.responder = lambda path, body: (200, {"message": {"content": "ok"}})
    thread = threading.Thread(
        target=lambda: server.serve_forever(poll_interval=0.02), daemon=True
    )
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def _base_url(server) -> str:
    return f"http://127.0.0.1:{server.server_address[1]}"


def make_request(**overrides) -> ChatRequest:
    defaults = dict(
        model_name="m", instruction="find it", payload="some chunk", temperature=0.0
    )
    defaults.update(overrides)
    return ChatRequest(**defaults)


class TestNegativeAnswerDetection:
    @pytest.mark.parametrize(
        "reply",
        [
            "Does not exist",
            "does not exist",
            "  Does not exist.  ",
            '"Does not exist"',
            "Does not exist in this excerpt",
            "DOES NOT EXIST!",
        ],
    )
    def test_negative_forms(self, reply):
        assert is_negative_answer(reply)

    @pytest.mark.parametrize(
        "reply",
        ["January 1, 2021", "The answer does not exist", "Probably not", ""],
    )
    def test_positive_forms(self, reply):
        assert not is_negative_answer(reply)


class TestChatRequest:
    def test_rejects_empty_instruction(self):
        with pytest.raises(ValueError, match="instruction"):
            make_request(instruction="")

    def test_rejects_empty_payload(self):
        with pytest.raises(ValueError, match="payload"):
            make_request(payload="")

    def test_rejects_negative_temperature(self):
        with pytest.raises(ValueError, match="temperature"):
            make_request(temperature=-0.1)


class TestCandidate:
    def test_from_answer_flags_negative(self):
        cell = CellRef("d", 1, 0, ChunkKind.BASE, 0, 50)
        candidate = Candidate.from_answer(cell, "Does not exist.")
        assert candidate.is_negative
        assert candidate.cell == cell

    def test_round_trip_drops_embedding(self):
        cell = CellRef("d", 1, 2, ChunkKind.AUGMENTED, 25, 75)
        candidate = Candidate.from_answer(cell, "the parties are")
        candidate.embedding = np.ones(4) / 2.0
        candidate.icw_weight = 0.5
        candidate.final_score = 0.04
        restored = Candidate.from_dict(candidate.to_dict())
        assert restored.embedding is None
        assert restored.icw_weight == 0.5
        assert restored.final_score == 0.04
        assert restored.cell == cell

    def test_cell_key_is_stable(self):
        cell = CellRef("doc-a", 3, 7, ChunkKind.AUGMENTED, 0, 10)
        assert cell.key() == "doc-a|3|augmented|7"


class FlakyBackend:
    def __init__(self, failures: int, error: Exception | None = None) -> None:
        self.failures = failures
        self.calls = 0
        self.error = error or TransientBackendError("hiccup")

    def chat(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.error
        return "fine"


class TestGenerate:
    def test_retries_transient_failures(self):
        backend = FlakyBackend(failures=2)
        reply = generate(backend, make_request(), retries=3, backoff=0.0)
        assert reply == "fine"
        assert backend.calls == 3

    def test_exhausted_retries_raise_with_request(self):
        backend = FlakyBackend(failures=10)
        request = make_request()
        with pytest.raises(TransientBackendError) as excinfo:
            generate(backend, request, retries=2, backoff=0.0)
        assert backend.calls == 3
        assert excinfo.value.request is request

    def test_permanent_errors_are_not_retried(self):
        backend = FlakyBackend(failures=10, error=BackendError("rejected"))
        request = make_request()
        with pytest.raises(BackendError) as excinfo:
            generate(backend, request, retries=3, backoff=0.0)
        assert backend.calls == 1
        assert excinfo.value.request is request


class TestOllamaChatBackend:
    def test_request_wire_shape(self, http_server):
        backend = OllamaChatBackend(_base_url(http_server))
        http_server.responder = lambda p, b: (200, {"message": {"content": "the answer"}})
        reply = backend.chat(make_request(temperature=0.7))
        assert reply == "the answer"
        path, body = http_server.requests[0]
        assert path == "/api/chat"
        assert body == {
            "model": "m",
            "messages": [
                {"role": "system", "content": "find it"},
                {"role": "user", "content": "some chunk"},
            ],
            "stream": False,
            "options": {"temperature": 0.7},
        }

    def test_single_message_mode_folds_instruction(self, http_server):
        backend = OllamaChatBackend(_base_url(http_server), single_message=True)
        backend.chat(make_request())
        _, body = http_server.requests[0]
        assert body["messages"] == [
            {"role": "user", "content": "find it\n\nsome chunk"}
        ]

    def test_custom_chat_path(self, http_server):
        backend = OllamaChatBackend(_base_url(http_server) + "/", chat_path="/v1/chat")
        backend.chat(make_request())
        assert http_server.requests[0][0] == "/v1/chat"

    def test_server_error_is_transient(self, http_server):
        http_server.responder = lambda p, b: (503, {"error": "busy"})
        backend = OllamaChatBackend(_base_url(http_server))
        with pytest.raises(TransientBackendError, match="503"):
            backend.chat(make_request())

    def test_client_error_is_permanent(self, http_server):
        http_server.responder = lambda p, b: (404, {"error": "no such model"})
        backend = OllamaChatBackend(_base_url(http_server))
        with pytest.raises(BackendError, match="404") as excinfo:
            backend.chat(make_request())
        assert not isinstance(excinfo.value, TransientBackendError)

    def test_malformed_json_reply(self, http_server):
        http_server.responder = lambda p, b: (200, b"this is not json")
        backend = OllamaChatBackend(_base_url(http_server))
        with pytest.raises(BackendError, match="malformed"):
            backend.chat(make_request())

    def test_missing_content_key(self, http_server):
        http_server.responder = lambda p, b: (200, {"message": {}})
        backend = OllamaChatBackend(_base_url(http_server))
        with pytest.raises(BackendError, match="malformed"):
            backend.chat(make_request())

    def test_connection_refused_is_transient(self):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            free_port = probe.getsockname()[1]
        backend = OllamaChatBackend(f"http://127.0.0.1:{free_port}", timeout=2.0)
        with pytest.raises(TransientBackendError, match="unreachable"):
            backend.chat(make_request())


def _oracle_corpus() -> Corpus:
    corpus = Corpus()
    corpus.questions[0] = QuestionSpec(0, "Parties", "who signed")
    corpus.questions[1] = QuestionSpec(1, "Agreement Date", "when")
    words = [f"w{i}" for i in range(20)]
    document = make_document("d", words)
    corpus.documents["d"] = document
    corpus.add_answer(
        GoldAnswer(
            document_id="d",
            category_id=0,
            spans=(
                span_for_words(document, 3, 9),
                span_for_words(document, 12, 14),
            ),
        )
    )
    corpus.add_answer(GoldAnswer(document_id="d", category_id=1, spans=()))
    return corpus


def _cell(category_id: int, start: int, end: int) -> CellRef:
    return CellRef("d", category_id, 0, ChunkKind.BASE, start, end)


class TestOracleChatBackend:
    def test_returns_full_span_inside_chunk(self):
        oracle = OracleChatBackend(_oracle_corpus())
        reply = oracle.chat(make_request(cell=_cell(0, 0, 20)))
        assert reply == "w3 w4 w5 w6 w7 w8"

    def test_clips_span_to_chunk_window(self):
        oracle = OracleChatBackend(_oracle_corpus())
        reply = oracle.chat(make_request(cell=_cell(0, 0, 6)))
        assert reply == "w3 w4 w5"

    def test_prefers_longest_overlapping_span(self):
        oracle = OracleChatBackend(_oracle_corpus())
        # both spans overlap [4, 20); the six-word one wins
        reply = oracle.chat(make_request(cell=_cell(0, 4, 20)))
        assert reply.startswith("w4")

    def test_shorter_span_chosen_when_only_it_overlaps(self):
        oracle = OracleChatBackend(_oracle_corpus())
        reply = oracle.chat(make_request(cell=_cell(0, 10, 20)))
        assert reply == "w12 w13"

    def test_negative_category(self):
        oracle = OracleChatBackend(_oracle_corpus())
        assert oracle.chat(make_request(cell=_cell(1, 0, 20))) == NEGATIVE_ANSWER

    def test_no_overlap_is_negative(self):
        oracle = OracleChatBackend(_oracle_corpus())
        assert oracle.chat(make_request(cell=_cell(0, 15, 20))) == NEGATIVE_ANSWER

    def test_requires_cell(self):
        oracle = OracleChatBackend(_oracle_corpus())
        with pytest.raises(BackendError, match="cell"):
            oracle.chat(make_request())

    def test_unknown_document(self):
        oracle = OracleChatBackend(_oracle_corpus())
        cell = CellRef("ghost", 0, 0, ChunkKind.BASE, 0, 5)
        with pytest.raises(BackendError, match="ghost"):
            oracle.chat(make_request(cell=cell))

    def test_unknown_category(self):
        oracle = OracleChatBackend(_oracle_corpus())
        with pytest.raises(BackendError, match="category"):
            oracle.chat(make_request(cell=_cell(9, 0, 5)))


class TestVectorHelpers:
    def test_unit_normalize(self):
        v = unit_normalize(np.array([3.0, 4.0]))
        assert np.allclose(v, [0.6, 0.8])

    def test_zero_vector_rejected(self):
        with pytest.raises(EmbeddingError, match="zero"):
            unit_normalize(np.zeros(4))

    def test_cosine_pair(self):
        x = np.array([1.0, 0.0])
        y = np.array([0.0, 1.0])
        assert cosine_similarity(x, x) == pytest.approx(1.0)
        assert cosine_distance(x, y) == pytest.approx(1.0)


class TestTrigramEmbedder:
    def test_unit_norm_and_determinism(self, trigram):
        a = trigram.embed("the agreement date")
        b = trigram.embed("the agreement date")
        assert np.linalg.norm(a) == pytest.approx(1.0)
        assert np.array_equal(a, b)

    def test_case_insensitive(self, trigram):
        assert np.array_equal(trigram.embed("Acme Corp"), trigram.embed("acme corp"))

    def test_short_text_embeds_whole_string(self, trigram):
        vector = trigram.embed("ab")
        assert np.count_nonzero(vector) == 1

    def test_empty_text_rejected(self, trigram):
        with pytest.raises(EmbeddingError):
            trigram.embed("   ")

    def test_unrelated_strings_are_orthogonal(self, trigram):
        assert cosine_similarity(trigram.embed("abc"), trigram.embed("xyz")) == 0.0

    def test_shared_trigrams_give_positive_similarity(self, trigram):
        sim = cosine_similarity(
            trigram.embed("effective date"), trigram.embed("the effective date")
        )
        assert 0.5 < sim < 1.0

    def test_custom_dimension(self):
        embedder = TrigramEmbedder(dimension=16)
        assert embedder.embed("agreement").shape == (16,)


class TestOllamaEmbedder:
    def test_wire_shape_and_normalization(self, http_server):
        http_server.responder = lambda p, b: (200, {"embedding": [3.0, 4.0]})
        embedder = OllamaEmbedder("gritlm", _base_url(http_server))
        vector = embedder.embed("some text")
        assert np.allclose(vector, [0.6, 0.8])
        path, body = http_server.requests[0]
        assert path == "/api/embeddings"
        assert body == {"model": "gritlm", "prompt": "some text"}
        assert embedder.dimension == 2

    def test_dimension_change_mid_run(self, http_server):
        replies = iter([[1.0, 0.0], [1.0, 0.0, 0.0]])
        http_server.responder = lambda p, b: (200, {"embedding": next(replies)})
        embedder = OllamaEmbedder("gritlm", _base_url(http_server))
        embedder.embed("first")
        with pytest.raises(EmbeddingError, match="dimension"):
            embedder.embed("second")

    def test_http_error(self, http_server):
        http_server.responder = lambda p, b: (500, {"error": "boom"})
        embedder = OllamaEmbedder("gritlm", _base_url(http_server))
        with pytest.raises(EmbeddingError, match="500"):
            embedder.embed("text")

    def test_empty_text_rejected(self, http_server):
        embedder = OllamaEmbedder("gritlm", _base_url(http_server))
        with pytest.raises(EmbeddingError):
            embedder.embed("  ")
        assert http_server.requests == []
