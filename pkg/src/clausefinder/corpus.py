"""Corpus ingestion: contracts, clause questions, gold answers, and the
test/verification split.

Two on-disk formats are understood:

* SQuAD-v2 style QA files (the CUAD distribution format): a top-level
  ``"data"`` list of titled entries, each with paragraphs holding a
  ``context`` and ``qas``.  Clause categories are recovered from the qa id
  convention ``<title>__<Category Name>``.
* The normalized corpus format this package writes (explicit ``documents`` /
  ``questions`` / ``answers`` arrays), which round-trips exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusFormatError, CorpusIntegrityError, SplitConfigError

# Clause categories a layperson can check, used for the test split.
DEFAULT_TEST_CATEGORY_NAMES = (
    "Document Name",
    "Parties",
    "Agreement Date",
    "Effective Date",
    "Expiration Date",
)

_WORD_RE = re.compile(r"\S+")


def word_char_spans(text: str) -> list[tuple[int, int]]:
    """Character ranges of the whitespace-separated words of ``text``."""
    return [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def char_range_to_word_range(
    spans: list[tuple[int, int]], start: int, end: int
) -> tuple[int, int]:
    """Map a character range onto the words it touches.

    Returns a half-open word-index range; a word counts as touched when its
    character range overlaps ``[start, end)`` at all.  Returns an empty range
    ``(0, 0)`` when no word is touched.
    """
    first = None
    last = None
    for i, (ws, we) in enumerate(spans):
        if ws < end and we > start:
            if first is None:
                first = i
            last = i
    if first is None:
        return (0, 0)
    return (first, last + 1)


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    word_count: int

    @classmethod
    def from_text(cls, id: str, title: str, text: str) -> "Document":
        if not text:
            raise CorpusIntegrityError(f"document {id!r} has empty text")
        return cls(id=id, title=title, text=text, word_count=len(text.split()))

    def words(self) -> list[str]:
        return self.text.split()


@dataclass(frozen=True)
class QuestionSpec:
    category_id: int
    category_name: str
    description: str


@dataclass(frozen=True)
class AnswerSpan:
    text: str
    start: int


@dataclass(frozen=True)
class GoldAnswer:
    document_id: str
    category_id: int
    spans: tuple[AnswerSpan, ...]

    @property
    def is_negative(self) -> bool:
        return not self.spans

    def word_ranges(self, document: Document) -> list[tuple[int, int]]:
        """Word-index ranges of every span within ``document``."""
        char_spans = word_char_spans(document.text)
        return [
            char_range_to_word_range(char_spans, s.start, s.start + len(s.text))
            for s in self.spans
        ]


@dataclass(frozen=True)
class CorpusSplit:
    test_docs: tuple[str, ...]
    verification_docs: tuple[str, ...]
    test_categories: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "test_docs": list(self.test_docs),
            "verification_docs": list(self.verification_docs),
            "test_categories": list(self.test_categories),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusSplit":
        return cls(
            test_docs=tuple(data["test_docs"]),
            verification_docs=tuple(data["verification_docs"]),
            test_categories=tuple(data["test_categories"]),
        )


@dataclass
class Corpus:
    documents: dict[str, Document] = field(default_factory=dict)
    questions: dict[int, QuestionSpec] = field(default_factory=dict)
    answers: list[GoldAnswer] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_cell: dict[tuple[str, int], GoldAnswer] = {
            (a.document_id, a.category_id): a for a in self.answers
        }

    def add_answer(self, answer: GoldAnswer) -> None:
        self.answers.append(answer)
        self._by_cell[(answer.document_id, answer.category_id)] = answer

    def answer_for(self, document_id: str, category_id: int) -> GoldAnswer | None:
        return self._by_cell.get((document_id, category_id))

    def question_by_name(self, name: str) -> QuestionSpec | None:
        wanted = name.strip().lower()
        for q in self.questions.values():
            if q.category_name.strip().lower() == wanted:
                return q
        return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.documents == other.documents
            and self.questions == other.questions
            and self.answers == other.answers
        )


def _category_name_from_qa_id(qa_id: str) -> str:
    if "__" not in qa_id:
        raise CorpusFormatError(
            f"qa id {qa_id!r} does not follow the '<title>__<category>' convention"
        )
    return qa_id.rsplit("__", 1)[1].strip()


def _description_from_question(question_text: str) -> str:
    # CUAD packs the clause description after a "Details:" marker.
    if "Details:" in question_text:
        return question_text.split("Details:", 1)[1].strip()
    return question_text.strip()


def _load_json(path: Path) -> dict:
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise CorpusFormatError(
            f"{path}: malformed JSON at byte {byte_offset} "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc


def _verify_span(document: Document, span: AnswerSpan, qa_id: str) -> None:
    end = span.start + len(span.text)
    if span.start < 0 or end > len(document.text) or document.text[span.start : end] != span.text:
        raise CorpusIntegrityError(
            f"answer for qa {qa_id!r} is not found at its declared offset "
            f"{span.start} in document {document.id!r}"
        )


def _ingest_squad(data: dict) -> Corpus:
    corpus = Corpus()
    category_ids: dict[str, int] = {}

    for entry in data.get("data", []):
        title = entry.get("title", "")
        paragraphs = entry.get("paragraphs", [])
        for para_index, paragraph in enumerate(paragraphs):
            context = paragraph.get("context", "")
            doc_id = title if len(paragraphs) == 1 else f"{title}#{para_index}"
            if doc_id in corpus.documents:
                raise CorpusFormatError(f"duplicate document id {doc_id!r}")
            document = Document.from_text(id=doc_id, title=title, text=context)
            corpus.documents[doc_id] = document

            for qa in paragraph.get("qas", []):
                qa_id = qa.get("id", "")
                name = _category_name_from_qa_id(qa_id)
                if name not in category_ids:
                    category_ids[name] = len(category_ids)
                    corpus.questions[category_ids[name]] = QuestionSpec(
                        category_id=category_ids[name],
                        category_name=name,
                        description=_description_from_question(qa.get("question", "")),
                    )
                spans = tuple(
                    AnswerSpan(text=a["text"], start=int(a["answer_start"]))
                    for a in qa.get("answers", [])
                )
                for span in spans:
                    _verify_span(document, span, qa_id)
                corpus.add_answer(
                    GoldAnswer(
                        document_id=doc_id,
                        category_id=category_ids[name],
                        spans=spans,
                    )
                )
    return corpus


def _ingest_normalized(data: dict) -> Corpus:
    corpus = Corpus()
    for doc in data["documents"]:
        document = Document.from_text(id=doc["id"], title=doc["title"], text=doc["text"])
        if document.id in corpus.documents:
            raise CorpusFormatError(f"duplicate document id {document.id!r}")
        corpus.documents[document.id] = document
    for q in data["questions"]:
        question = QuestionSpec(
            category_id=int(q["category_id"]),
            category_name=q["category_name"],
            description=q["description"],
        )
        corpus.questions[question.category_id] = question
    for a in data["answers"]:
        document = corpus.documents.get(a["document_id"])
        if document is None:
            raise CorpusFormatError(f"answer references unknown document {a['document_id']!r}")
        spans = tuple(AnswerSpan(text=s["text"], start=int(s["start"])) for s in a["spans"])
        for span in spans:
            _verify_span(document, span, f"{a['document_id']}__{a['category_id']}")
        corpus.add_answer(
            GoldAnswer(
                document_id=a["document_id"],
                category_id=int(a["category_id"]),
                spans=spans,
            )
        )
    return corpus


def ingest(path: str | Path) -> Corpus:
    """Load a corpus from ``path``, auto-detecting the file format."""
    path = Path(path)
    data = _load_json(path)
    if not isinstance(data, dict):
        raise CorpusFormatError(f"{path}: expected a JSON object at the top level")
    if "data" in data:
        return _ingest_squad(data)
    if "documents" in data:
        return _ingest_normalized(data)
    raise CorpusFormatError(
        f"{path}: unrecognized corpus format (expected a 'data' or 'documents' key)"
    )


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "documents": [
            {"id": d.id, "title": d.title, "text": d.text}
            for d in corpus.documents.values()
        ],
        "questions": [
            {
                "category_id": q.category_id,
                "category_name": q.category_name,
                "description": q.description,
            }
            for q in corpus.questions.values()
        ],
        "answers": [
            {
                "document_id": a.document_id,
                "category_id": a.category_id,
                "spans": [{"text": s.text, "start": s.start} for s in a.spans],
            }
            for a in corpus.answers
        ],
    }


def serialize(corpus: Corpus, path: str | Path) -> None:
    """Write the normalized corpus format that :func:`ingest` reads back."""
    Path(path).write_text(
        json.dumps(corpus_to_dict(corpus), ensure_ascii=False, sort_keys=True), encoding="utf-8"
    )


def make_split(
    corpus: Corpus,
    max_test_doc_words: int = 1000,
    test_category_names: tuple[str, ...] = DEFAULT_TEST_CATEGORY_NAMES,
) -> CorpusSplit:
    """Partition documents by length and resolve the test categories.

    Documents of at most ``max_test_doc_words`` whitespace words form the
    test side; everything else is kept for verification.  Category names are
    matched case-insensitively against the corpus questions; names that do
    not resolve are skipped, but resolving none of them is an error.
    """
    test_docs = []
    verification_docs = []
    for doc in corpus.documents.values():
        if doc.word_count <= max_test_doc_words:
            test_docs.append(doc.id)
        else:
            verification_docs.append(doc.id)

    resolved = []
    for name in test_category_names:
        question = corpus.question_by_name(name)
        if question is not None:
            resolved.append(question.category_id)
    if not resolved:
        available = sorted(q.category_name for q in corpus.questions.values())
        raise SplitConfigError(
            "none of the test category names "
            f"{list(test_category_names)} match this corpus; available: {available}"
        )

    return CorpusSplit(
        test_docs=tuple(test_docs),
        verification_docs=tuple(verification_docs),
        test_categories=tuple(resolved),
    )
