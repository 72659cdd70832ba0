"""Prompt construction: base templates, technique decorators, and ranking.

A prompt is a template body holding ``{QUESTION}`` / ``{DESCRIPTION}``
placeholders, optionally wrapped by technique fragments (politeness, persona,
and so on).  Every rendered instruction carries a data-cleaning clause
telling the model to answer ``Does not exist`` when the chunk has no answer,
so downstream stages can filter negatives textually.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import Corpus, CorpusSplit, QuestionSpec
from .errors import ConfigError, BackendError, RenderError

logger = logging.getLogger(__name__)

QUESTION_PLACEHOLDER = "{QUESTION}"
DESCRIPTION_PLACEHOLDER = "{DESCRIPTION}"

# Appended to instructions whose body does not already close with a
# negative-answer clause of its own.
FORMATTING_CLAUSE = "otherwise respond with 'Does not exist'."

NEGATIVE_PHRASE = "does not exist"

_PLACEHOLDER_RE = re.compile(r"\{[A-Z][A-Z_]*\}")


class TechniqueKind(str, Enum):
    COERCIVE = "coercive"
    KIND = "kind"
    INTENSIFIER = "intensifier"
    DOMAIN = "domain"
    PERSONA = "persona"
    REPHRASING = "rephrasing"
    REFLECTION = "reflection"


_KIND_ORDER = {kind: i for i, kind in enumerate(TechniqueKind)}


class FragmentPosition(str, Enum):
    PREFIX = "prefix"
    SUFFIX = "suffix"


@dataclass(frozen=True)
class Technique:
    kind: TechniqueKind
    text_fragment: str
    position: FragmentPosition


# Fragment wording per technique; spacing is part of the fragment so that
# composition is plain concatenation and removal restores the base string.
DEFAULT_FRAGMENTS: dict[TechniqueKind, tuple[Technique, ...]] = {
    TechniqueKind.COERCIVE: (
        Technique(TechniqueKind.COERCIVE, " or there will be consequences.", FragmentPosition.SUFFIX),
    ),
    TechniqueKind.KIND: (
        Technique(TechniqueKind.KIND, "Please ", FragmentPosition.PREFIX),
        Technique(TechniqueKind.KIND, " Thank you.", FragmentPosition.SUFFIX),
    ),
    TechniqueKind.INTENSIFIER: (
        Technique(TechniqueKind.INTENSIFIER, " as well as possible", FragmentPosition.SUFFIX),
    ),
    TechniqueKind.DOMAIN: (
        Technique(TechniqueKind.DOMAIN, "This is a legal document. ", FragmentPosition.PREFIX),
    ),
    TechniqueKind.PERSONA: (
        Technique(TechniqueKind.PERSONA, "Take on the role of a legal expert, and ", FragmentPosition.PREFIX),
    ),
    TechniqueKind.REPHRASING: (
        Technique(TechniqueKind.REPHRASING, " In other words, {DESCRIPTION}", FragmentPosition.SUFFIX),
    ),
    TechniqueKind.REFLECTION: (
        Technique(
            TechniqueKind.REFLECTION,
            " Afterwards, go through it again to improve your response.",
            FragmentPosition.SUFFIX,
        ),
    ),
}

# Politeness extremes clash; persona and domain framing say the same thing
# two ways, so stacking them is disallowed.
FORBIDDEN_PAIRS: frozenset[frozenset[TechniqueKind]] = frozenset(
    {
        frozenset({TechniqueKind.COERCIVE, TechniqueKind.KIND}),
        frozenset({TechniqueKind.DOMAIN, TechniqueKind.PERSONA}),
    }
)


@dataclass(frozen=True)
class TechniqueSet:
    members: frozenset[TechniqueKind]

    @classmethod
    def of(cls, *kinds: TechniqueKind) -> "TechniqueSet":
        return cls(members=frozenset(kinds))

    @property
    def is_valid(self) -> bool:
        return not any(pair <= self.members for pair in FORBIDDEN_PAIRS)

    def in_order(self) -> tuple[TechniqueKind, ...]:
        return tuple(sorted(self.members, key=_KIND_ORDER.__getitem__))

    def label(self) -> str:
        if not self.members:
            return "plain"
        return "+".join(k.value for k in self.in_order())


def enumerate_combinations(
    available: Iterable[Technique | TechniqueKind] | None = None,
) -> list[TechniqueSet]:
    """All valid technique subsets, smallest first, kind order within a size.

    Passing nothing enumerates over all seven kinds.  The empty set is
    always included: an undecorated prompt is a legitimate combination.
    """
    if available is None:
        kinds = list(TechniqueKind)
    else:
        seen: dict[TechniqueKind, None] = {}
        for item in available:
            seen[item.kind if isinstance(item, Technique) else TechniqueKind(item)] = None
        kinds = sorted(seen, key=_KIND_ORDER.__getitem__)

    out = []
    for size in range(len(kinds) + 1):
        for combo in itertools.combinations(kinds, size):
            candidate = TechniqueSet(members=frozenset(combo))
            if candidate.is_valid:
                out.append(candidate)
    return out


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    techniques: tuple[Technique, ...] = ()

    def __post_init__(self) -> None:
        if QUESTION_PLACEHOLDER not in self.body:
            raise RenderError(
                f"template {self.id!r} must contain the {QUESTION_PLACEHOLDER} placeholder"
            )


DEFAULT_BASIC_TEMPLATE = PromptTemplate(
    id="basic",
    body="Identify the part of the question that corresponds to {QUESTION}",
)

DEFAULT_COMPLEX_TEMPLATE = PromptTemplate(
    id="complex",
    body=(
        "The following text is a excerpt from a larger legal document. "
        "If the information is directly present, identify the part of that "
        'corresponds to {QUESTION}, otherwise respond only with "Does not exist". '
        "In other words, answer the question of {DESCRIPTION} by quoting it word "
        "for word, exactly as it appears in the document, otherwise respond only "
        '"Does not exist".'
    ),
)


def decorate(
    template: PromptTemplate,
    techniques: TechniqueSet,
    fragments: dict[TechniqueKind, tuple[Technique, ...]] | None = None,
) -> PromptTemplate:
    """Attach the fragments for ``techniques`` to ``template``."""
    table = fragments or DEFAULT_FRAGMENTS
    attached = tuple(
        fragment for kind in techniques.in_order() for fragment in table[kind]
    )
    suffix = "" if not techniques.members else f"+{techniques.label()}"
    return PromptTemplate(id=template.id + suffix, body=template.body, techniques=attached)


def _substitute(text: str, question: QuestionSpec) -> str:
    return text.replace(QUESTION_PLACEHOLDER, question.category_name).replace(
        DESCRIPTION_PLACEHOLDER, question.description
    )


def _ends_with_negative_clause(text: str) -> bool:
    return text.rstrip(" \t\n'\"”’.!?,;:").lower().endswith(NEGATIVE_PHRASE)


@dataclass(frozen=True)
class RenderedPrompt:
    instruction: str
    payload: str


def render(
    template: PromptTemplate, question: QuestionSpec, chunk_text: str
) -> RenderedPrompt:
    """Produce the instruction for one (template, question) and the chunk payload.

    The substituted body gains the data-cleaning clause unless it already
    ends with its own ``Does not exist`` wording, then technique fragments
    wrap the result: prefixes in kind order, suffixes in kind order.
    """
    body = _substitute(template.body, question)
    if not _ends_with_negative_clause(body):
        body = f"{body} {FORMATTING_CLAUSE}"

    prefixes = [
        _substitute(t.text_fragment, question)
        for t in template.techniques
        if t.position is FragmentPosition.PREFIX
    ]
    suffixes = [
        _substitute(t.text_fragment, question)
        for t in template.techniques
        if t.position is FragmentPosition.SUFFIX
    ]
    instruction = "".join(prefixes) + body + "".join(suffixes)

    leftover = _PLACEHOLDER_RE.search(instruction)
    if leftover:
        raise RenderError(
            f"template {template.id!r} left placeholder {leftover.group(0)} unresolved"
        )
    return RenderedPrompt(instruction=instruction, payload=chunk_text)


@dataclass(frozen=True)
class PromptScore:
    template_id: str
    mean_metric: float
    n_evaluated: int


def cosine_scorer_factory(embedder) -> Callable[[str, str], float]:
    """A (prediction, reference) scorer from any embedding backend."""
    from .inference import cosine_similarity

    def scorer(prediction: str, reference: str) -> float:
        return cosine_similarity(embedder.embed(prediction), embedder.embed(reference))

    return scorer


def rank_prompts(
    templates: Sequence[PromptTemplate],
    corpus: Corpus,
    split: CorpusSplit,
    backend,
    scorer: Callable[[str, str], float],
    *,
    model_name: str,
    temperature: float = 0.0,
    max_workers: int = 4,
) -> list[PromptScore]:
    """Score each template over the positive test cells and sort descending.

    A cell is one (test document, test category) pair whose gold answer has
    at least one span.  The cell score is the best ``scorer`` value of the
    model reply against any gold span; a backend failure scores the cell 0
    and is logged, never skipped, so means stay comparable across templates.
    """
    from .inference import CellRef, ChatRequest
    from .chunker import ChunkKind

    cells = []
    for doc_id in split.test_docs:
        document = corpus.documents[doc_id]
        for category_id in split.test_categories:
            gold = corpus.answer_for(doc_id, category_id)
            if gold is None or gold.is_negative:
                continue
            cells.append((document, corpus.questions[category_id], gold))
    if not cells:
        raise ConfigError("prompt ranking needs at least one positive test cell")

    def score_one(template: PromptTemplate, document, question, gold) -> float:
        rendered = render(template, question, document.text)
        request = ChatRequest(
            model_name=model_name,
            instruction=rendered.instruction,
            payload=rendered.payload,
            temperature=temperature,
            cell=CellRef(
                document_id=document.id,
                category_id=question.category_id,
                chunk_index=0,
                chunk_kind=ChunkKind.BASE,
                start_word=0,
                end_word=document.word_count,
            ),
        )
        try:
            reply = backend.chat(request)
        except BackendError as exc:
            logger.warning(
                "prompt %s scored 0 on (%s, %s): %s",
                template.id, document.id, question.category_name, exc,
            )
            return 0.0
        return max(scorer(reply, span.text) for span in gold.spans)

    scores = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for template in templates:
            cell_scores = list(
                pool.map(lambda c: score_one(template, *c), cells)
            )
            scores.append(
                PromptScore(
                    template_id=template.id,
                    mean_metric=sum(cell_scores) / len(cell_scores),
                    n_evaluated=len(cell_scores),
                )
            )
    return sorted(scores, key=lambda s: (-s.mean_metric, s.template_id))


def load_paraphrase_pool(path: str | Path) -> list[PromptTemplate]:
    """Expand a pattern-with-slots file into concrete candidate templates.

    The file holds a ``pattern`` string plus ``slots``, a mapping of slot
    name to interchangeable phrases.  Every combination of slot values is a
    candidate; ``{QUESTION}`` / ``{DESCRIPTION}`` are left for render time.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed paraphrase pool: {exc.msg}") from exc
    if not isinstance(data, dict) or "pattern" not in data or "slots" not in data:
        raise ConfigError(f"{path}: paraphrase pool needs 'pattern' and 'slots' keys")

    pattern = data["pattern"]
    slots = data["slots"]
    names = sorted(slots)
    templates = []
    for values in itertools.product(*(slots[name] for name in names)):
        body = pattern
        for name, value in zip(names, values):
            body = body.replace("{" + name + "}", value)
        unresolved = [
            m.group(0)
            for m in _PLACEHOLDER_RE.finditer(body)
            if m.group(0) not in (QUESTION_PLACEHOLDER, DESCRIPTION_PLACEHOLDER)
        ]
        if unresolved:
            raise ConfigError(
                f"{path}: pattern references unknown slot(s) {sorted(set(unresolved))}"
            )
        templates.append(PromptTemplate(id=f"p{len(templates):03d}", body=body))
    return templates


def load_fragment_overrides(
    overrides: dict[str, dict[str, str]],
) -> dict[TechniqueKind, tuple[Technique, ...]]:
    """Merge per-kind prefix/suffix wording overrides into the default table."""
    table = dict(DEFAULT_FRAGMENTS)
    for kind_name, parts in overrides.items():
        try:
            kind = TechniqueKind(kind_name)
        except ValueError as exc:
            valid = [k.value for k in TechniqueKind]
            raise ConfigError(
                f"unknown technique {kind_name!r}; valid kinds: {valid}"
            ) from exc
        fragments = []
        for pos_name, text in parts.items():
            try:
                position = FragmentPosition(pos_name)
            except ValueError as exc:
                raise ConfigError(
                    f"technique {kind_name!r}: position must be 'prefix' or 'suffix', "
                    f"got {pos_name!r}"
                ) from exc
            fragments.append(Technique(kind, text, position))
        fragments.sort(key=lambda t: t.position is FragmentPosition.SUFFIX)
        table[kind] = tuple(fragments)
    return table


def write_prompt_scores(scores: Iterable[PromptScore], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["template_id", "mean_metric", "n_evaluated"])
        for s in scores:
            writer.writerow([s.template_id, f"{s.mean_metric:.6f}", s.n_evaluated])
