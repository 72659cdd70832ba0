"""Answer evaluation: lexical overlap metrics, embedding similarity,
threshold-based correctness, and the 2x2 factorial report.

Generated answers rarely reproduce a gold clause byte for byte, so
correctness is graded: longest-common-subsequence F1, an exact-match
unigram alignment score with a fragmentation penalty, and cosine similarity
of embeddings, each with its own correctness threshold.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import GoldAnswer
from .inference import Embedder, cosine_similarity

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; scores are sensitive to this choice."""
    return _TOKEN_RE.findall(text.lower())


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b):
            if token_a == token_b:
                current.append(previous[j] + 1)
            else:
                current.append(max(previous[j + 1], current[j]))
        previous = current
    return previous[len(b)]


def rouge_l_f1(prediction: str, reference: str) -> float:
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred or not ref:
        return 0.0
    lcs = _lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def rouge_1_f1(prediction: str, reference: str) -> float:
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def meteor(prediction: str, reference: str) -> float:
    """Exact-match unigram score with 9:1 recall weighting and a
    fragmentation penalty of 0.5 times (chunks/matches) cubed.

    Alignment is greedy: prediction tokens, in order, each take the first
    unused matching reference position.  A chunk is a maximal run of
    matches contiguous on both sides.
    """
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred or not ref:
        return 0.0

    available: dict[str, list[int]] = {}
    for j, token in enumerate(ref):
        available.setdefault(token, []).append(j)
    pairs: list[tuple[int, int]] = []
    for i, token in enumerate(pred):
        positions = available.get(token)
        if positions:
            pairs.append((i, positions.pop(0)))
    m = len(pairs)
    if m == 0:
        return 0.0

    chunks = 1
    for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]):
        if i2 != i1 + 1 or j2 != j1 + 1:
            chunks += 1

    precision = m / len(pred)
    recall = m / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1 - penalty)


def cosine_score(prediction: str, reference: str, embedder: Embedder) -> float:
    return cosine_similarity(embedder.embed(prediction), embedder.embed(reference))


def best_over_spans(
    score_fn: Callable[[str, str], float], prediction: str, gold: GoldAnswer
) -> float:
    """A prediction matching any one gold span counts as matching the gold."""
    return max(score_fn(prediction, span.text) for span in gold.spans)


class Metric(str, Enum):
    ROUGE = "rouge"
    METEOR = "meteor"
    COSINE = "cosine"


@dataclass(frozen=True)
class Thresholds:
    rouge: float = 0.60
    meteor: float = 0.68
    cosine: float = 0.79


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class MetricScore:
    rouge: float
    meteor: float
    cosine: float
    correct_by: frozenset[Metric]

    @classmethod
    def from_scores(
        cls,
        rouge: float,
        meteor: float,
        cosine: float,
        thresholds: Thresholds = DEFAULT_THRESHOLDS,
    ) -> "MetricScore":
        correct = set()
        if rouge >= thresholds.rouge:
            correct.add(Metric.ROUGE)
        if meteor >= thresholds.meteor:
            correct.add(Metric.METEOR)
        if cosine >= thresholds.cosine:
            correct.add(Metric.COSINE)
        return cls(rouge=rouge, meteor=meteor, cosine=cosine, correct_by=frozenset(correct))


class Outcome(str, Enum):
    TRUE_POSITIVE = "TruePositive"
    TRUE_NEGATIVE = "TrueNegative"
    FALSE_NEGATIVE_LIKE = "FalseNegative-like"
    FALSE_POSITIVE_LIKE = "FalsePositive-like"
    INCORRECT = "Incorrect"


CORRECT_OUTCOMES = frozenset({Outcome.TRUE_POSITIVE, Outcome.TRUE_NEGATIVE})


@dataclass(frozen=True)
class Judgment:
    score: MetricScore
    outcome: Outcome


def judge(
    prediction: str | None,
    gold: GoldAnswer,
    embedder: Embedder,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    decide_by: Metric = Metric.COSINE,
    rouge_variant: str = "rouge-l",
) -> Judgment:
    """Grade one cell: a prediction (or its absence) against the gold answer.

    Outcome names follow the confusion-matrix shape, but generative answers
    make the positive/negative cut soft, hence the "-like" labels: an
    answer where gold has none, or none where gold has one.  A present
    prediction on a positive cell is TruePositive only when the deciding
    metric clears its threshold.
    """
    rouge_fn = rouge_1_f1 if rouge_variant == "rouge-1" else rouge_l_f1
    if prediction is None:
        score = MetricScore.from_scores(0.0, 0.0, 0.0, thresholds)
        outcome = Outcome.TRUE_NEGATIVE if gold.is_negative else Outcome.FALSE_NEGATIVE_LIKE
        return Judgment(score=score, outcome=outcome)
    if gold.is_negative:
        score = MetricScore.from_scores(0.0, 0.0, 0.0, thresholds)
        return Judgment(score=score, outcome=Outcome.FALSE_POSITIVE_LIKE)

    score = MetricScore.from_scores(
        rouge=best_over_spans(rouge_fn, prediction, gold),
        meteor=best_over_spans(meteor, prediction, gold),
        cosine=best_over_spans(lambda p, r: cosine_score(p, r, embedder), prediction, gold),
        thresholds=thresholds,
    )
    outcome = Outcome.TRUE_POSITIVE if decide_by in score.correct_by else Outcome.INCORRECT
    return Judgment(score=score, outcome=outcome)


@dataclass(frozen=True)
class JudgedCell:
    document_id: str
    category_id: int
    rouge: float
    meteor: float
    cosine: float
    outcome: Outcome


def write_judgments(cells: Iterable[JudgedCell], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["document_id", "category_id", "rouge", "meteor", "cosine", "outcome"])
        for cell in cells:
            writer.writerow(
                [
                    cell.document_id,
                    cell.category_id,
                    f"{cell.rouge:.6f}",
                    f"{cell.meteor:.6f}",
                    f"{cell.cosine:.6f}",
                    cell.outcome.value,
                ]
            )


def read_judgments(path: str | Path) -> list[JudgedCell]:
    cells = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            cells.append(
                JudgedCell(
                    document_id=row["document_id"],
                    category_id=int(row["category_id"]),
                    rouge=float(row["rouge"]),
                    meteor=float(row["meteor"]),
                    cosine=float(row["cosine"]),
                    outcome=Outcome(row["outcome"]),
                )
            )
    return cells


class ReportCell(str, Enum):
    BASIC = "Basic"
    COMPLEX = "Complex"
    AUGMENTED_BASIC = "Augmented Basic"
    AUGMENTED_COMPLEX = "Augmented Complex"


@dataclass(frozen=True)
class CellStat:
    absolute: int
    percentage: float
    total: int


@dataclass(frozen=True)
class FactorialReport:
    cells: dict[ReportCell, CellStat | None]

    def to_dict(self) -> dict:
        out = {}
        for cell in ReportCell:
            stat = self.cells.get(cell)
            out[cell.value] = (
                None
                if stat is None
                else {
                    "absolute": stat.absolute,
                    "percentage": round(stat.percentage, 3),
                    "total": stat.total,
                }
            )
        return out

    def render_text(self) -> str:
        lines = [f"{'Prompt':<20}{'Correct':>9}{'Share':>8}"]
        for cell in ReportCell:
            stat = self.cells.get(cell)
            if stat is None:
                lines.append(f"{cell.value:<20}{'-':>9}{'-':>8}")
            else:
                lines.append(
                    f"{cell.value:<20}{stat.absolute:>9}{stat.percentage:>8.3f}"
                )
        return "\n".join(lines)


def factorial_report(runs: dict[ReportCell, Sequence[Outcome]]) -> FactorialReport:
    """Cross prompt complexity with chunk augmentation and count correct cells.

    ``runs`` maps each of the four configurations to its judged outcomes;
    a missing or empty configuration is reported as absent, not an error.
    """
    cells: dict[ReportCell, CellStat | None] = {}
    for cell in ReportCell:
        outcomes = runs.get(cell)
        if not outcomes:
            cells[cell] = None
            continue
        absolute = sum(1 for o in outcomes if o in CORRECT_OUTCOMES)
        cells[cell] = CellStat(
            absolute=absolute, percentage=absolute / len(outcomes), total=len(outcomes)
        )
    return FactorialReport(cells=cells)
