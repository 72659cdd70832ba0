import json

import pytest

from clausefinder.corpus import AnswerSpan, Corpus, Document, GoldAnswer, QuestionSpec
from clausefinder.inference import TrigramEmbedder

# One verdict line per acceptance criterion, shown after the test run
# (regular prints would be eaten by pytest's output capture).
acceptance_verdicts: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_verdicts:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts:
            terminalreporter.write_line(line)

TEST_CATEGORY_NAMES = (
    "Document Name",
    "Parties",
    "Agreement Date",
    "Effective Date",
    "Expiration Date",
)

# Word position of each category's answer in the synthetic end-to-end corpus
# (documents are 100 words, chunked at 50, so "Agreement Date" straddles the
# base-chunk boundary).
ANSWER_WORD_RANGES = {
    0: (5, 9),
    1: (30, 34),
    2: (48, 52),
    3: (60, 64),
    4: (90, 94),
}


def make_document(doc_id: str, words: list[str]) -> Document:
    return Document.from_text(id=doc_id, title=doc_id, text=" ".join(words))


def span_for_words(document: Document, start_word: int, end_word: int) -> AnswerSpan:
    """Gold span covering exactly words [start_word, end_word) of a
    single-space-joined document."""
    words = document.words()
    prefix = " ".join(words[:start_word])
    char_start = len(prefix) + (1 if prefix else 0)
    text = " ".join(words[start_word:end_word])
    assert document.text[char_start : char_start + len(text)] == text
    return AnswerSpan(text=text, start=char_start)


def is_positive_cell(doc_index: int, category_id: int) -> bool:
    return (doc_index + category_id) % 4 != 3


# Four dissimilar words per category; a clipped half of an answer scores
# well under the cosine correctness threshold against the full span, so a
# cell only counts as correct when selection found the whole answer.
ANSWER_WORD_POOL = {
    0: ("docket", "ledger", "anchor", "marble"),
    1: ("velvet", "copper", "sonnet", "meadow"),
    2: ("mango", "zephyr", "quartz", "violin"),
    3: ("walnut", "ember", "falcon", "indigo"),
    4: ("harbor", "tulip", "saddle", "comet"),
}


def build_e2e_corpus(n_docs: int = 20, doc_words: int = 100) -> Corpus:
    """Corpus whose answers sit at fixed relative positions per category.

    Each category is positive for three quarters of the documents; answer
    words carry the document number so selections are attributable.
    """
    corpus = Corpus()
    for category_id, name in enumerate(TEST_CATEGORY_NAMES):
        corpus.questions[category_id] = QuestionSpec(
            category_id=category_id,
            category_name=name,
            description=f"the {name.lower()} stated in the contract",
        )
    for d in range(n_docs):
        words = [f"d{d:02d}w{i:03d}" for i in range(doc_words)]
        for category_id, (start, end) in ANSWER_WORD_RANGES.items():
            if is_positive_cell(d, category_id):
                pool = ANSWER_WORD_POOL[category_id]
                for offset in range(end - start):
                    words[start + offset] = f"{pool[offset]}{d:02d}"
        document = make_document(f"doc{d:02d}", words)
        corpus.documents[document.id] = document
        for category_id, (start, end) in ANSWER_WORD_RANGES.items():
            if is_positive_cell(d, category_id):
                spans = (span_for_words(document, start, end),)
            else:
                spans = ()
            corpus.add_answer(
                GoldAnswer(document_id=document.id, category_id=category_id, spans=spans)
            )
    return corpus


@pytest.fixture
def e2e_corpus() -> Corpus:
    return build_e2e_corpus()


@pytest.fixture
def e2e_corpus_file(tmp_path, e2e_corpus):
    from clausefinder.corpus import serialize

    path = tmp_path / "e2e_corpus.json"
    serialize(e2e_corpus, path)
    return path


@pytest.fixture
def trigram() -> TrigramEmbedder:
    return TrigramEmbedder()


@pytest.fixture
def squad_file(tmp_path):
    """A small CUAD-shaped SQuAD-v2 file: qa ids carry the category name."""
    context_a = "This Agreement is between Acme Corp and Zen Ltd effective January 1 2020."
    context_b = "Master service agreement by Orbit LLC dated March 3 2021 under New York law."
    data = {
        "version": "v2.0",
        "data": [
            {
                "title": "ACME-AGREEMENT",
                "paragraphs": [
                    {
                        "context": context_a,
                        "qas": [
                            {
                                "id": "ACME-AGREEMENT__Parties",
                                "question": (
                                    'Highlight the parts (if any) related to "Parties". '
                                    "Details: The two or more parties who signed the contract"
                                ),
                                "answers": [
                                    {
                                        "text": "Acme Corp",
                                        "answer_start": context_a.index("Acme Corp"),
                                    },
                                    {
                                        "text": "Zen Ltd",
                                        "answer_start": context_a.index("Zen Ltd"),
                                    },
                                ],
                                "is_impossible": False,
                            },
                            {
                                "id": "ACME-AGREEMENT__Expiration Date",
                                "question": (
                                    'Highlight the parts (if any) related to "Expiration Date". '
                                    "Details: On what date will the contract's initial term expire?"
                                ),
                                "answers": [],
                                "is_impossible": True,
                            },
                        ],
                    }
                ],
            },
            {
                "title": "ORBIT-MSA",
                "paragraphs": [
                    {
                        "context": context_b,
                        "qas": [
                            {
                                "id": "ORBIT-MSA__Parties",
                                "question": (
                                    'Highlight the parts (if any) related to "Parties". '
                                    "Details: The two or more parties who signed the contract"
                                ),
                                "answers": [
                                    {
                                        "text": "Orbit LLC",
                                        "answer_start": context_b.index("Orbit LLC"),
                                    }
                                ],
                                "is_impossible": False,
                            },
                            {
                                "id": "ORBIT-MSA__Agreement Date",
                                "question": (
                                    'Highlight the parts (if any) related to "Agreement Date". '
                                    "Details: The date of the contract"
                                ),
                                "answers": [
                                    {
                                        "text": "March 3 2021",
                                        "answer_start": context_b.index("March 3 2021"),
                                    }
                                ],
                                "is_impossible": False,
                            },
                        ],
                    }
                ],
            },
        ],
    }
    path = tmp_path / "squad.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path
