"""Candidate selection: answer-location distributions, density clustering of
candidate embeddings, and the per-question pick.

Chunked inference leaves one answer per chunk for every (document, question).
Two heuristics narrow that down: a location prior learned from labelled
answer positions (documents are mapped onto 100 equal word segments), and an
inverse-cardinality weight that penalises answers repeated across chunks,
computed by DBSCAN over their embeddings with cosine distance.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .chunker import ChunkKind
from .corpus import Document, GoldAnswer
from .errors import DistributionError, SelectionError
from .inference import Candidate, Embedder

SEGMENT_COUNT = 100

COMBINE_MODES = ("product", "icw-only", "dbl-only")


@dataclass
class LocationDistribution:
    category_id: int
    weights: np.ndarray
    n_documents: int

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (SEGMENT_COUNT,):
            raise DistributionError(
                f"distribution must have {SEGMENT_COUNT} segments, got {self.weights.shape}"
            )

    def to_dict(self) -> dict:
        return {
            "category_id": self.category_id,
            "weights": [float(w) for w in self.weights],
            "n_documents": self.n_documents,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LocationDistribution":
        return cls(
            category_id=int(data["category_id"]),
            weights=np.asarray(data["weights"], dtype=float),
            n_documents=int(data["n_documents"]),
        )


def _segment_indices(word_count: int) -> np.ndarray:
    """Segment id of each word: word w of n falls in segment w·100/n."""
    return (np.arange(word_count) * SEGMENT_COUNT) // word_count


def document_location_vector(document: Document, gold: GoldAnswer) -> np.ndarray:
    """One document's contribution: per segment, the covered fraction.

    Segment i of a document holds the words w with w·100/n rounding down
    to i; the entry is (answer words in segment i) / (words in segment i),
    zero for the empty segments of sub-100-word documents.
    """
    n = document.word_count
    in_answer = np.zeros(n)
    for start, end in gold.word_ranges(document):
        in_answer[start:end] = 1.0
    segments = _segment_indices(n)
    segment_sizes = np.bincount(segments, minlength=SEGMENT_COUNT)
    answer_mass = np.bincount(segments, weights=in_answer, minlength=SEGMENT_COUNT)
    return np.divide(
        answer_mass,
        segment_sizes,
        out=np.zeros(SEGMENT_COUNT),
        where=segment_sizes > 0,
    )


def build_distribution(
    labelled_docs: Iterable[tuple[Document, GoldAnswer]], category_id: int
) -> LocationDistribution:
    """Learn where answers for one category tend to sit within a document.

    Each contributing document puts, per segment, the fraction of the
    segment covered by answer words; the per-document vectors are summed
    and the sum scaled so its maximum is 1.  Documents whose gold answer is
    negative or belongs to another category are skipped.
    """
    total = np.zeros(SEGMENT_COUNT)
    contributors = 0
    for document, gold in labelled_docs:
        if gold.category_id != category_id or gold.is_negative:
            continue
        total += document_location_vector(document, gold)
        contributors += 1

    if contributors == 0:
        raise DistributionError(
            f"no labelled documents contribute to category {category_id}"
        )
    peak = float(total.max())
    if peak == 0.0:
        raise DistributionError(
            f"labelled answers for category {category_id} cover no words"
        )
    return LocationDistribution(
        category_id=category_id, weights=total / peak, n_documents=contributors
    )


def dbl_weight(
    distribution: LocationDistribution,
    start_word: int,
    end_word: int,
    document_word_count: int,
) -> float:
    """Mean distribution weight over the segments a word range spans.

    The mean (rather than sum or max) keeps long chunks from winning on
    sheer coverage.
    """
    if not (0 <= start_word < end_word <= document_word_count):
        raise DistributionError(
            f"word range [{start_word}, {end_word}) outside document of "
            f"{document_word_count} words"
        )
    first = start_word * SEGMENT_COUNT // document_word_count
    last = (end_word - 1) * SEGMENT_COUNT // document_word_count
    return float(distribution.weights[first : last + 1].mean())


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float = 0.21
    min_points: int = 2

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise SelectionError(f"epsilon must be > 0, got {self.epsilon}")
        if self.min_points < 1:
            raise SelectionError(f"min_points must be >= 1, got {self.min_points}")


@dataclass
class ClusterAssignment:
    labels: list[int]
    group_sizes: dict[int, int] = field(default_factory=dict)

    def group_size_of(self, index: int) -> int:
        label = self.labels[index]
        return 1 if label == -1 else self.group_sizes[label]


def dbscan(points: Sequence[np.ndarray], params: DbscanParams) -> ClusterAssignment:
    """Density clustering with cosine distance; label -1 marks noise.

    Core points have at least ``min_points`` neighbors within ``epsilon``
    (themselves included).  Clusters grow breadth-first from each core in
    scan order, so a border point in reach of several clusters joins the
    earliest-created one; the result is deterministic for a fixed input
    order.
    """
    n = len(points)
    if n == 0:
        return ClusterAssignment(labels=[], group_sizes={})

    matrix = np.vstack(points)
    distance = 1.0 - matrix @ matrix.T
    within = distance <= params.epsilon
    neighbors = [np.flatnonzero(within[i]) for i in range(n)]
    is_core = [len(neighbors[i]) >= params.min_points for i in range(n)]

    labels: list[int | None] = [None] * n
    next_cluster = 0
    for start in range(n):
        if labels[start] is not None:
            continue
        if not is_core[start]:
            labels[start] = -1
            continue
        cluster = next_cluster
        next_cluster += 1
        labels[start] = cluster
        queue = deque(int(j) for j in neighbors[start] if j != start)
        while queue:
            point = queue.popleft()
            if labels[point] == -1:
                labels[point] = cluster
                continue
            if labels[point] is not None:
                continue
            labels[point] = cluster
            if is_core[point]:
                queue.extend(int(j) for j in neighbors[point] if labels[j] is None or labels[j] == -1)

    final = [int(label) for label in labels]
    sizes = Counter(label for label in final if label >= 0)
    return ClusterAssignment(labels=final, group_sizes=dict(sizes))


def icw_weights(
    candidates: Sequence[Candidate], embedder: Embedder, params: DbscanParams
) -> list[Candidate]:
    """Weight each positive candidate by the inverse of its cluster size.

    Repeated answers cluster together and share weight 1/size; noise points
    stand alone and keep weight 1.  Negatives are dropped; an all-negative
    input is legitimately empty.
    """
    positives = [c for c in candidates if not c.is_negative]
    if not positives:
        return []
    for candidate in positives:
        if candidate.embedding is None:
            candidate.embedding = embedder.embed(candidate.answer_text)
    assignment = dbscan([c.embedding for c in positives], params)
    for index, candidate in enumerate(positives):
        candidate.icw_weight = 1.0 / assignment.group_size_of(index)
    return positives


@dataclass
class SelectionResult:
    document_id: str
    category_id: int
    chosen: Candidate | None
    all_candidates: list[Candidate]

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "category_id": self.category_id,
            "chosen": self.chosen.to_dict() if self.chosen else None,
            "all_candidates": [c.to_dict() for c in self.all_candidates],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionResult":
        return cls(
            document_id=data["document_id"],
            category_id=int(data["category_id"]),
            chosen=Candidate.from_dict(data["chosen"]) if data["chosen"] else None,
            all_candidates=[Candidate.from_dict(c) for c in data["all_candidates"]],
        )


def select(
    candidates: Sequence[Candidate],
    distribution: LocationDistribution | None = None,
    document_word_count: int | None = None,
    combine: str = "product",
    *,
    document_id: str | None = None,
    category_id: int | None = None,
) -> SelectionResult:
    """Pick one answer for a (document, category) from its chunk candidates.

    Positives are scored by the configured combination of their inverse
    cardinality weight and location weight, then the best score wins; ties
    go to the earliest chunk, base before augmented.  An absent location
    distribution means no positional prior (weight 1 everywhere).  A cell
    with no positive candidates yields no chosen answer.
    """
    if combine not in COMBINE_MODES:
        raise SelectionError(
            f"unknown combine mode {combine!r}; expected one of {list(COMBINE_MODES)}"
        )
    if candidates:
        document_id = candidates[0].document_id
        category_id = candidates[0].category_id
        for c in candidates:
            if (c.document_id, c.category_id) != (document_id, category_id):
                raise SelectionError(
                    "select() works on one (document, category) at a time; got "
                    f"({c.document_id}, {c.category_id}) mixed with "
                    f"({document_id}, {category_id})"
                )
    elif document_id is None or category_id is None:
        raise SelectionError(
            "empty candidate list needs explicit document_id and category_id"
        )
    if distribution is not None and document_word_count is None:
        raise SelectionError("document_word_count is required with a distribution")

    positives = [c for c in candidates if not c.is_negative]
    for candidate in positives:
        icw = candidate.icw_weight if candidate.icw_weight is not None else 1.0
        if distribution is None:
            dbl = 1.0
        else:
            dbl = dbl_weight(
                distribution,
                candidate.start_word,
                candidate.end_word,
                document_word_count,
            )
        candidate.dbl_weight = dbl
        if combine == "icw-only":
            candidate.final_score = icw
        elif combine == "dbl-only":
            candidate.final_score = dbl
        else:
            candidate.final_score = icw * dbl

    chosen = None
    if positives:
        chosen = min(
            positives,
            key=lambda c: (
                -c.final_score,
                c.start_word,
                0 if c.chunk_kind is ChunkKind.BASE else 1,
                c.chunk_index,
            ),
        )
    return SelectionResult(
        document_id=document_id,
        category_id=category_id,
        chosen=chosen,
        all_candidates=list(candidates),
    )
