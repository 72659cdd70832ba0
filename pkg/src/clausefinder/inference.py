"""Model backends: a chat client for a local completion server, a
deterministic extraction oracle for tests, and embedding providers.

Answer generation and embedding sit behind small protocols so the pipeline
never knows whether replies come from a live server or from gold spans.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import requests

from .chunker import ChunkKind
from .corpus import Corpus, char_range_to_word_range, word_char_spans
from .errors import BackendError, EmbeddingError, TransientBackendError

logger = logging.getLogger(__name__)

NEGATIVE_ANSWER = "Does not exist"

_STRIP_CHARS = " \t\r\n.,;:!?'\"`“”‘’*()[]"


def is_negative_answer(text: str) -> bool:
    """Whether a model reply means "no answer in this chunk".

    Replies are matched loosely: surrounding whitespace, punctuation, and
    quoting are ignored, and trailing elaboration after the phrase is
    tolerated ("Does not exist in this excerpt").
    """
    normalized = text.strip(_STRIP_CHARS).lower()
    return normalized == "does not exist" or normalized.startswith("does not exist")


@dataclass(frozen=True)
class CellRef:
    """Identity of one (document, category, chunk) inference cell."""

    document_id: str
    category_id: int
    chunk_index: int
    chunk_kind: ChunkKind
    start_word: int
    end_word: int

    def key(self) -> str:
        return (
            f"{self.document_id}|{self.category_id}|"
            f"{self.chunk_kind.value}|{self.chunk_index}"
        )


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    instruction: str
    payload: str
    temperature: float = 0.0
    cell: CellRef | None = None

    def __post_init__(self) -> None:
        if not self.instruction:
            raise ValueError("chat request needs a non-empty instruction")
        if not self.payload:
            raise ValueError("chat request needs a non-empty payload")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass
class Candidate:
    """One chunk's answer for a (document, category), with selection weights."""

    document_id: str
    category_id: int
    chunk_index: int
    chunk_kind: ChunkKind
    start_word: int
    end_word: int
    answer_text: str
    is_negative: bool
    embedding: np.ndarray | None = field(default=None, repr=False)
    icw_weight: float | None = None
    dbl_weight: float | None = None
    final_score: float | None = None

    @classmethod
    def from_answer(
        cls, cell: CellRef, answer_text: str
    ) -> "Candidate":
        return cls(
            document_id=cell.document_id,
            category_id=cell.category_id,
            chunk_index=cell.chunk_index,
            chunk_kind=cell.chunk_kind,
            start_word=cell.start_word,
            end_word=cell.end_word,
            answer_text=answer_text,
            is_negative=is_negative_answer(answer_text),
        )

    @property
    def cell(self) -> CellRef:
        return CellRef(
            document_id=self.document_id,
            category_id=self.category_id,
            chunk_index=self.chunk_index,
            chunk_kind=self.chunk_kind,
            start_word=self.start_word,
            end_word=self.end_word,
        )

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "category_id": self.category_id,
            "chunk_index": self.chunk_index,
            "chunk_kind": self.chunk_kind.value,
            "start_word": self.start_word,
            "end_word": self.end_word,
            "answer_text": self.answer_text,
            "is_negative": self.is_negative,
            "icw_weight": self.icw_weight,
            "dbl_weight": self.dbl_weight,
            "final_score": self.final_score,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Candidate":
        return cls(
            document_id=data["document_id"],
            category_id=int(data["category_id"]),
            chunk_index=int(data["chunk_index"]),
            chunk_kind=ChunkKind(data["chunk_kind"]),
            start_word=int(data["start_word"]),
            end_word=int(data["end_word"]),
            answer_text=data["answer_text"],
            is_negative=bool(data["is_negative"]),
            icw_weight=data.get("icw_weight"),
            dbl_weight=data.get("dbl_weight"),
            final_score=data.get("final_score"),
        )


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


class Embedder(Protocol):
    dimension: int | None

    def embed(self, text: str) -> np.ndarray: ...


def generate(
    backend: ChatBackend,
    request: ChatRequest,
    *,
    retries: int = 3,
    backoff: float = 0.5,
) -> str:
    """Run one chat call, retrying transient transport failures.

    Waits ``backoff * 2**attempt`` seconds between attempts.  When retries
    are exhausted the final error still carries the request (and so the
    cell identity), letting the pipeline mark that cell failed and move on.
    """
    started = time.perf_counter()
    attempt = 0
    while True:
        try:
            reply = backend.chat(request)
        except TransientBackendError as exc:
            if attempt >= retries:
                exc.request = request
                raise
            delay = backoff * (2**attempt)
            logger.warning(
                "transient backend failure (attempt %d/%d), retrying in %.1fs: %s",
                attempt + 1, retries + 1, delay, exc,
            )
            time.sleep(delay)
            attempt += 1
            continue
        except BackendError as exc:
            exc.request = request
            raise
        elapsed_ms = (time.perf_counter() - started) * 1000
        cell = request.cell.key() if request.cell else "-"
        logger.debug("chat reply for %s in %.0f ms (%d attempts)", cell, elapsed_ms, attempt + 1)
        return reply


class OllamaChatBackend:
    """Client for an Ollama-style chat-completion endpoint.

    Sends the instruction as the system message and the chunk as the user
    message by default; ``single_message`` folds both into one user message
    for models that ignore system prompts.
    """

    def __init__(
        self,
        base_url: str = "http://localhost:11434",
        chat_path: str = "/api/chat",
        *,
        timeout: float = 120.0,
        max_in_flight: int = 4,
        single_message: bool = False,
        session: requests.Session | None = None,
    ) -> None:
        self.url = base_url.rstrip("/") + chat_path
        self.timeout = timeout
        self.single_message = single_message
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(max_in_flight)

    def _messages(self, request: ChatRequest) -> list[dict]:
        if self.single_message:
            return [
                {"role": "user", "content": f"{request.instruction}\n\n{request.payload}"}
            ]
        return [
            {"role": "system", "content": request.instruction},
            {"role": "user", "content": request.payload},
        ]

    def chat(self, request: ChatRequest) -> str:
        body = {
            "model": request.model_name,
            "messages": self._messages(request),
            "stream": False,
            "options": {"temperature": request.temperature},
        }
        with self._slots:
            try:
                response = self._session.post(self.url, json=body, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                raise TransientBackendError(
                    f"chat endpoint {self.url} unreachable: {exc}", request=request
                ) from exc
        if response.status_code >= 500:
            raise TransientBackendError(
                f"chat endpoint returned {response.status_code}", request=request
            )
        if response.status_code >= 400:
            raise BackendError(
                f"chat endpoint rejected request: {response.status_code} {response.text[:200]}",
                request=request,
            )
        try:
            return response.json()["message"]["content"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BackendError(
                f"chat endpoint sent a malformed response: {response.text[:200]}",
                request=request,
            ) from exc


class OracleChatBackend:
    """Test double that extracts gold spans instead of calling a model.

    For a request about chunk words ``[start, end)``, replies with the
    longest gold span overlapping that range, clipped to it, or the
    negative phrase when nothing overlaps.  Pure and deterministic.
    """

    def __init__(self, corpus: Corpus) -> None:
        self.corpus = corpus
        self._span_cache: dict[str, list[tuple[int, int]]] = {}
        self._lock = threading.Lock()

    def _word_spans(self, document_id: str) -> list[tuple[int, int]]:
        with self._lock:
            if document_id not in self._span_cache:
                self._span_cache[document_id] = word_char_spans(
                    self.corpus.documents[document_id].text
                )
            return self._span_cache[document_id]

    def chat(self, request: ChatRequest) -> str:
        cell = request.cell
        if cell is None:
            raise BackendError("oracle backend needs the cell identity", request=request)
        document = self.corpus.documents.get(cell.document_id)
        if document is None:
            raise BackendError(
                f"oracle has no document {cell.document_id!r}", request=request
            )
        if cell.category_id not in self.corpus.questions:
            raise BackendError(
                f"oracle has no category {cell.category_id}", request=request
            )
        gold = self.corpus.answer_for(cell.document_id, cell.category_id)
        if gold is None or gold.is_negative:
            return NEGATIVE_ANSWER

        char_spans = self._word_spans(cell.document_id)
        best: tuple[int, int] | None = None
        for span in gold.spans:
            ws, we = char_range_to_word_range(char_spans, span.start, span.start + len(span.text))
            if ws < cell.end_word and we > cell.start_word:
                if best is None or (we - ws, -ws) > (best[1] - best[0], -best[0]):
                    best = (ws, we)
        if best is None:
            return NEGATIVE_ANSWER
        words = document.words()
        lo = max(best[0], cell.start_word)
        hi = min(best[1], cell.end_word)
        return " ".join(words[lo:hi])


def unit_normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise EmbeddingError("embedding has zero norm")
    return vector / norm


def cosine_similarity(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(x, y))


def cosine_distance(x: np.ndarray, y: np.ndarray) -> float:
    return 1.0 - cosine_similarity(x, y)


class TrigramEmbedder:
    """Offline fallback embedder: hashed bag of character trigrams.

    Deterministic and dependency-free, which is what the test suite and
    air-gapped runs need; it makes no attempt at semantic quality.  Texts
    shorter than three characters contribute their whole text as the single
    feature.
    """

    def __init__(self, dimension: int = 512) -> None:
        self.dimension = dimension

    def _bucket(self, feature: str) -> int:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        lowered = text.lower().strip()
        if not lowered:
            raise EmbeddingError("cannot embed empty text")
        if len(lowered) < 3:
            features = [lowered]
        else:
            features = [lowered[i : i + 3] for i in range(len(lowered) - 2)]
        vector = np.zeros(self.dimension)
        for feature in features:
            vector[self._bucket(feature)] += 1.0
        return unit_normalize(vector)


class OllamaEmbedder:
    """Client for an Ollama-style embedding endpoint."""

    def __init__(
        self,
        model_name: str,
        base_url: str = "http://localhost:11434",
        embed_path: str = "/api/embeddings",
        *,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        self.model_name = model_name
        self.url = base_url.rstrip("/") + embed_path
        self.timeout = timeout
        self._session = session or requests.Session()
        self.dimension: int | None = None

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmbeddingError("cannot embed empty text")
        body = {"model": self.model_name, "prompt": text}
        try:
            response = self._session.post(self.url, json=body, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise EmbeddingError(f"embedding endpoint {self.url} unreachable: {exc}") from exc
        if response.status_code >= 400:
            raise EmbeddingError(
                f"embedding endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            values = np.asarray(response.json()["embedding"], dtype=float)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise EmbeddingError(
                f"embedding endpoint sent a malformed response: {response.text[:200]}"
            ) from exc
        if self.dimension is None:
            self.dimension = values.shape[0]
        elif values.shape[0] != self.dimension:
            raise EmbeddingError(
                f"embedding dimension changed mid-run: {values.shape[0]} != {self.dimension}"
            )
        return unit_normalize(values)
