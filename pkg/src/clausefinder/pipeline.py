"""Staged, resumable pipeline over a run directory.

Every stage reads the artifacts of its upstream stages and writes its own
atomically (temp file, then rename), so a killed run never leaves a half
artifact behind.  A manifest records the resolved config and per-stage
status; re-running a finished stage is a no-op unless forced.  The infer
stage additionally journals each completed cell, so it resumes mid-stage.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock, Timeout

from . import corpus as corpus_mod
from .chunker import Chunk, ChunkingConfig, chunk as chunk_document, read_chunks
from .config import PipelineConfig
from .corpus import Corpus, CorpusSplit
from .errors import (
    BackendError,
    ClauseFinderError,
    ConfigError,
    DependencyError,
    DistributionError,
)
from .inference import (
    Candidate,
    CellRef,
    ChatRequest,
    OllamaChatBackend,
    OllamaEmbedder,
    OracleChatBackend,
    TrigramEmbedder,
    generate,
)
from .metrics import (
    JudgedCell,
    Metric,
    ReportCell,
    Thresholds,
    factorial_report,
    judge,
    read_judgments,
    write_judgments,
)
from .prompts import (
    DEFAULT_BASIC_TEMPLATE,
    DEFAULT_COMPLEX_TEMPLATE,
    DEFAULT_FRAGMENTS,
    FragmentPosition,
    PromptTemplate,
    Technique,
    TechniqueKind,
    TechniqueSet,
    cosine_scorer_factory,
    decorate,
    load_fragment_overrides,
    load_paraphrase_pool,
    rank_prompts,
    render,
    write_prompt_scores,
)
from .selection import (
    DbscanParams,
    LocationDistribution,
    SelectionResult,
    build_distribution,
    icw_weights,
    select,
)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "split", "chunk", "prompts", "infer", "dbl", "select", "judge", "report")

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "split": ("ingest",),
    "chunk": ("ingest",),
    "prompts": ("ingest", "split"),
    "infer": ("ingest", "split", "chunk", "prompts"),
    "dbl": ("ingest", "split"),
    "select": ("ingest", "infer", "dbl"),
    "judge": ("ingest", "select"),
    "report": ("judge",),
}

CORPUS_JSON = "corpus.json"
SPLIT_JSON = "split.json"
CHUNKS_JSONL = "chunks.jsonl"
PROMPTS_JSON = "prompts.json"
PROMPT_SCORES_CSV = "prompt_scores.csv"
CANDIDATES_PARTIAL = "candidates.partial.jsonl"
CANDIDATES_JSONL = "candidates.jsonl"
DISTRIBUTIONS_JSON = "distributions.json"
SELECTIONS_JSONL = "selections.jsonl"
JUDGMENTS_CSV = "judgments.csv"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"

MANIFEST_JSON = "manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: Path, data: object) -> None:
    _atomic_write_text(path, json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n")


class RunManifest:
    """Per-run record of config snapshot, stage status, and artifact paths."""

    def __init__(self, run_dir: Path, data: dict) -> None:
        self.run_dir = run_dir
        self.data = data

    @classmethod
    def open(cls, run_dir: Path, config: PipelineConfig) -> "RunManifest":
        path = run_dir / MANIFEST_JSON
        snapshot = config.to_dict()
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            if data["config"] != snapshot:
                changed = sorted(
                    key
                    for key in set(data["config"]) | set(snapshot)
                    if data["config"].get(key) != snapshot.get(key)
                )
                raise ConfigError(
                    f"run directory {run_dir} was created with a different "
                    f"configuration (differs in {changed}); use a fresh --run-dir"
                )
            return cls(run_dir, data)
        data = {
            "run_id": uuid.uuid4().hex,
            "created_at": _now(),
            "config": snapshot,
            "stages": {
                stage: {"status": "pending", "started_at": None, "finished_at": None, "artifact": None}
                for stage in STAGES
            },
        }
        manifest = cls(run_dir, data)
        manifest.save()
        return manifest

    @property
    def run_id(self) -> str:
        return self.data["run_id"]

    def status(self, stage: str) -> str:
        return self.data["stages"][stage]["status"]

    def artifact(self, stage: str) -> Path:
        name = self.data["stages"][stage]["artifact"]
        if name is None:
            raise DependencyError(f"stage {stage!r} has no artifact yet")
        return self.run_dir / name

    def mark_running(self, stage: str) -> None:
        entry = self.data["stages"][stage]
        entry["status"] = "running"
        entry["started_at"] = _now()
        entry["finished_at"] = None
        self.save()

    def mark_done(self, stage: str, artifact: str) -> None:
        entry = self.data["stages"][stage]
        entry["status"] = "done"
        entry["finished_at"] = _now()
        entry["artifact"] = artifact
        self.save()

    def mark_failed(self, stage: str) -> None:
        entry = self.data["stages"][stage]
        entry["status"] = "failed"
        entry["finished_at"] = _now()
        self.save()

    def save(self) -> None:
        _atomic_write_json(self.run_dir / MANIFEST_JSON, self.data)


def make_chat_backend(config: PipelineConfig, corpus: Corpus):
    if config.backend == "oracle":
        return OracleChatBackend(corpus)
    return OllamaChatBackend(
        base_url=config.base_url,
        chat_path=config.chat_path,
        timeout=config.timeout,
        max_in_flight=config.max_in_flight,
        single_message=config.single_message,
    )


def make_embedder(config: PipelineConfig):
    if config.embedder == "ollama":
        return OllamaEmbedder(
            model_name=config.embed_model,
            base_url=config.base_url,
            embed_path=config.embed_path,
            timeout=config.timeout,
        )
    return TrigramEmbedder()


def report_cell_for(config: PipelineConfig) -> ReportCell:
    if config.augment:
        return (
            ReportCell.AUGMENTED_COMPLEX
            if config.prompt_style == "complex"
            else ReportCell.AUGMENTED_BASIC
        )
    return ReportCell.COMPLEX if config.prompt_style == "complex" else ReportCell.BASIC


class Pipeline:
    """Executes stages inside a locked run directory.

    Use as a context manager: entering takes the directory lock and routes
    package logs to ``run.log``; exiting releases both.
    """

    def __init__(
        self, run_dir: str | Path, config: PipelineConfig, *, lock_timeout: float = 5.0
    ) -> None:
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.manifest = RunManifest.open(self.run_dir, config)
        self._lock = FileLock(str(self.run_dir / ".lock"))
        self._lock_timeout = lock_timeout
        self._log_handler: logging.FileHandler | None = None
        self._old_level: int | None = None

    def __enter__(self) -> "Pipeline":
        try:
            self._lock.acquire(timeout=self._lock_timeout)
        except Timeout as exc:
            raise ClauseFinderError(
                f"run directory {self.run_dir} is locked by another process"
            ) from exc
        package_logger = logging.getLogger("clausefinder")
        self._old_level = package_logger.level
        package_logger.setLevel(logging.DEBUG)
        handler = logging.FileHandler(self.run_dir / "run.log", encoding="utf-8")
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        package_logger.addHandler(handler)
        self._log_handler = handler
        return self

    def __exit__(self, *exc_info) -> None:
        package_logger = logging.getLogger("clausefinder")
        if self._log_handler is not None:
            package_logger.removeHandler(self._log_handler)
            self._log_handler.close()
            self._log_handler = None
        if self._old_level is not None:
            package_logger.setLevel(self._old_level)
        self._lock.release()

    # -- artifact loaders ----------------------------------------------

    def _corpus(self) -> Corpus:
        return corpus_mod.ingest(self.manifest.artifact("ingest"))

    def _split(self) -> CorpusSplit:
        data = json.loads(self.manifest.artifact("split").read_text(encoding="utf-8"))
        return CorpusSplit.from_dict(data)

    def _chunks(self) -> list[Chunk]:
        return read_chunks(self.manifest.artifact("chunk"))

    def _template(self) -> PromptTemplate:
        data = json.loads(self.manifest.artifact("prompts").read_text(encoding="utf-8"))
        saved = data["template"]
        techniques = tuple(
            Technique(
                kind=TechniqueKind(t["kind"]),
                text_fragment=t["text_fragment"],
                position=FragmentPosition(t["position"]),
            )
            for t in saved["techniques"]
        )
        return PromptTemplate(id=saved["id"], body=saved["body"], techniques=techniques)

    def _distributions(self) -> dict[int, LocationDistribution]:
        data = json.loads(self.manifest.artifact("dbl").read_text(encoding="utf-8"))
        return {
            int(key): LocationDistribution.from_dict(value)
            for key, value in data.items()
        }

    def _scoped_doc_ids(self, corpus: Corpus, split: CorpusSplit) -> list[str]:
        if self.config.infer_scope == "test":
            return list(split.test_docs)
        if self.config.infer_scope == "verification":
            return list(split.verification_docs)
        return list(corpus.documents)

    # -- stage driver --------------------------------------------------

    def run_stage(self, stage: str, force: bool = False) -> None:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; stages: {list(STAGES)}")
        for upstream in STAGE_DEPS[stage]:
            if self.manifest.status(upstream) != "done":
                raise DependencyError(
                    f"stage {stage!r} needs stage {upstream!r} to finish first "
                    f"(status: {self.manifest.status(upstream)})"
                )
        if self.manifest.status(stage) == "done" and not force:
            logger.info("stage %s already done, skipping (use --force to redo)", stage)
            return
        if force and stage == "infer":
            partial = self.run_dir / CANDIDATES_PARTIAL
            if partial.exists():
                partial.unlink()

        logger.info("stage %s starting", stage)
        self.manifest.mark_running(stage)
        try:
            artifact = getattr(self, f"_stage_{stage}")()
        except BaseException:
            self.manifest.mark_failed(stage)
            raise
        self.manifest.mark_done(stage, artifact)
        logger.info("stage %s done -> %s", stage, artifact)

    def run_all(self, force: bool = False) -> None:
        for stage in STAGES:
            self.run_stage(stage, force=force)

    # -- stages --------------------------------------------------------

    def _stage_ingest(self) -> str:
        if not self.config.corpus:
            raise ConfigError("config key 'corpus' must point at the corpus file")
        corpus = corpus_mod.ingest(self.config.corpus)
        logger.info(
            "ingested %d documents, %d categories, %d answers",
            len(corpus.documents), len(corpus.questions), len(corpus.answers),
        )
        _atomic_write_text(
            self.run_dir / CORPUS_JSON,
            json.dumps(corpus_mod.corpus_to_dict(corpus), ensure_ascii=False, sort_keys=True),
        )
        return CORPUS_JSON

    def _stage_split(self) -> str:
        corpus = self._corpus()
        split = corpus_mod.make_split(
            corpus,
            max_test_doc_words=self.config.max_test_doc_words,
            test_category_names=self.config.test_categories,
        )
        logger.info(
            "split: %d test docs, %d verification docs, %d test categories",
            len(split.test_docs), len(split.verification_docs), len(split.test_categories),
        )
        _atomic_write_json(self.run_dir / SPLIT_JSON, split.to_dict())
        return SPLIT_JSON

    def _stage_chunk(self) -> str:
        corpus = self._corpus()
        chunk_config = ChunkingConfig(
            chunk_size=self.config.chunk_size, augment=self.config.augment
        )
        lines = []
        for document in corpus.documents.values():
            for piece in chunk_document(document, chunk_config):
                lines.append(json.dumps(piece.to_dict(), ensure_ascii=False))
        _atomic_write_text(self.run_dir / CHUNKS_JSONL, "\n".join(lines) + "\n")
        logger.info("chunked %d documents into %d chunks", len(corpus.documents), len(lines))
        return CHUNKS_JSONL

    def _stage_prompts(self) -> str:
        corpus = self._corpus()
        split = self._split()
        fragments = (
            load_fragment_overrides(self.config.technique_fragments)
            if self.config.technique_fragments
            else DEFAULT_FRAGMENTS
        )

        base = (
            DEFAULT_BASIC_TEMPLATE
            if self.config.prompt_style == "basic"
            else DEFAULT_COMPLEX_TEMPLATE
        )
        scores_name = None
        if self.config.paraphrase_pool:
            pool = load_paraphrase_pool(self.config.paraphrase_pool)
            backend = make_chat_backend(self.config, corpus)
            scorer = cosine_scorer_factory(make_embedder(self.config))
            scores = rank_prompts(
                pool,
                corpus,
                split,
                backend,
                scorer,
                model_name=self.config.model,
                temperature=self.config.temperature,
                max_workers=self.config.max_in_flight,
            )
            scores_path = self.run_dir / PROMPT_SCORES_CSV
            write_prompt_scores(scores, scores_path)
            scores_name = PROMPT_SCORES_CSV
            if self.config.prompt_style == "basic":
                winner_id = scores[0].template_id
                base = next(t for t in pool if t.id == winner_id)
                logger.info("paraphrase search winner: %s (%s)", base.id, base.body)
            else:
                logger.info(
                    "paraphrase scores written, but prompt_style=complex keeps "
                    "the built-in template"
                )

        kinds = [TechniqueKind(name) for name in self.config.techniques]
        template = decorate(base, TechniqueSet.of(*kinds), fragments)
        payload = {
            "template": {
                "id": template.id,
                "body": template.body,
                "techniques": [
                    {
                        "kind": t.kind.value,
                        "text_fragment": t.text_fragment,
                        "position": t.position.value,
                    }
                    for t in template.techniques
                ],
            },
            "scores_csv": scores_name,
        }
        _atomic_write_json(self.run_dir / PROMPTS_JSON, payload)
        return PROMPTS_JSON

    def _infer_cells(
        self, corpus: Corpus, split: CorpusSplit, chunks: list[Chunk]
    ) -> list[tuple[CellRef, str]]:
        """All (cell, chunk text) pairs to infer, in deterministic order."""
        by_doc: dict[str, list[Chunk]] = {}
        for piece in chunks:
            by_doc.setdefault(piece.document_id, []).append(piece)
        cells = []
        for doc_id in self._scoped_doc_ids(corpus, split):
            for category_id in sorted(corpus.questions):
                for piece in by_doc.get(doc_id, []):
                    cells.append(
                        (
                            CellRef(
                                document_id=doc_id,
                                category_id=category_id,
                                chunk_index=piece.index,
                                chunk_kind=piece.kind,
                                start_word=piece.start_word,
                                end_word=piece.end_word,
                            ),
                            piece.text,
                        )
                    )
        return cells

    def _stage_infer(self) -> str:
        corpus = self._corpus()
        split = self._split()
        chunks = self._chunks()
        template = self._template()
        backend = make_chat_backend(self.config, corpus)

        # Failed cells are not in done_keys: a resume retries them, so a
        # temporary backend outage does not permanently lose cells.
        partial_path = self.run_dir / CANDIDATES_PARTIAL
        done_keys: set[str] = set()
        if partial_path.exists():
            with partial_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    if record.get("failed"):
                        continue
                    done_keys.add(
                        f"{record['document_id']}|{record['category_id']}|"
                        f"{record['chunk_kind']}|{record['chunk_index']}"
                    )
            if done_keys:
                logger.info("resuming infer: %d cells already recorded", len(done_keys))

        cells = self._infer_cells(corpus, split, chunks)
        todo = [(cell, text) for cell, text in cells if cell.key() not in done_keys]

        def run_cell(item: tuple[CellRef, str]):
            cell, chunk_text = item
            question = corpus.questions[cell.category_id]
            rendered = render(template, question, chunk_text)
            request = ChatRequest(
                model_name=self.config.model,
                instruction=rendered.instruction,
                payload=rendered.payload,
                temperature=self.config.temperature,
                cell=cell,
            )
            try:
                answer = generate(
                    backend,
                    request,
                    retries=self.config.retries,
                    backoff=self.config.backoff,
                )
            except BackendError as exc:
                return cell, None, str(exc)
            return cell, Candidate.from_answer(cell, answer), None

        successes = 0
        failures = 0
        with partial_path.open("a", encoding="utf-8") as journal:
            with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
                for cell, candidate, error in pool.map(run_cell, todo):
                    if candidate is None:
                        logger.warning("cell %s failed: %s", cell.key(), error)
                        record = {
                            "failed": True,
                            "error": error,
                            "cell": {
                                "document_id": cell.document_id,
                                "category_id": cell.category_id,
                                "chunk_index": cell.chunk_index,
                                "chunk_kind": cell.chunk_kind.value,
                                "start_word": cell.start_word,
                                "end_word": cell.end_word,
                            },
                        }
                        failures += 1
                    else:
                        record = candidate.to_dict()
                        successes += 1
                    journal.write(json.dumps(record, ensure_ascii=False) + "\n")
                    journal.flush()
                    if successes == 0 and failures >= 3:
                        raise BackendError(
                            "first three inference cells all failed; backend "
                            f"looks unusable: {error}"
                        )

        self._finalize_candidates(partial_path)
        logger.info(
            "infer finished: %d cells (%d new, %d failed)", len(cells), len(todo), failures
        )
        return CANDIDATES_JSONL

    def _finalize_candidates(self, partial_path: Path) -> None:
        """Promote the journal to the stage artifact.

        A resumed run may have journaled a failure and later a success for
        the same cell; stale failure records are dropped so the artifact
        holds at most one record per cell.
        """
        lines = []
        succeeded = set()
        with partial_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if not record.get("failed"):
                    succeeded.add(
                        f"{record['document_id']}|{record['category_id']}|"
                        f"{record['chunk_kind']}|{record['chunk_index']}"
                    )
                lines.append((line, record))
        kept = []
        for line, record in lines:
            if record.get("failed"):
                cell = record["cell"]
                key = (
                    f"{cell['document_id']}|{cell['category_id']}|"
                    f"{cell['chunk_kind']}|{cell['chunk_index']}"
                )
                if key in succeeded:
                    continue
            kept.append(line)
        _atomic_write_text(self.run_dir / CANDIDATES_JSONL, "\n".join(kept) + "\n")
        os.unlink(partial_path)

    def _stage_dbl(self) -> str:
        corpus = self._corpus()
        split = self._split()
        labelled = []
        for doc_id in split.test_docs:
            document = corpus.documents[doc_id]
            for category_id in split.test_categories:
                gold = corpus.answer_for(doc_id, category_id)
                if gold is not None:
                    labelled.append((document, gold))

        distributions = {}
        for category_id in split.test_categories:
            try:
                dist = build_distribution(labelled, category_id)
            except DistributionError as exc:
                logger.warning(
                    "no location distribution for category %d: %s", category_id, exc
                )
                continue
            distributions[str(category_id)] = dist.to_dict()
        _atomic_write_json(self.run_dir / DISTRIBUTIONS_JSON, distributions)
        logger.info("built %d location distributions", len(distributions))
        return DISTRIBUTIONS_JSON

    def _stage_select(self) -> str:
        corpus = self._corpus()
        distributions = self._distributions()
        embedder = make_embedder(self.config)
        params = DbscanParams(epsilon=self.config.epsilon, min_points=self.config.min_points)

        cells: dict[tuple[str, int], list[Candidate]] = {}
        with self.manifest.artifact("infer").open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record.get("failed"):
                    cell = record["cell"]
                    cells.setdefault((cell["document_id"], int(cell["category_id"])), [])
                    continue
                candidate = Candidate.from_dict(record)
                cells.setdefault((candidate.document_id, candidate.category_id), []).append(
                    candidate
                )

        lines = []
        for (doc_id, category_id) in sorted(cells):
            candidates = cells[(doc_id, category_id)]
            icw_weights(candidates, embedder, params)
            result = select(
                candidates,
                distribution=distributions.get(category_id),
                document_word_count=corpus.documents[doc_id].word_count,
                combine=self.config.combine,
                document_id=doc_id,
                category_id=category_id,
            )
            lines.append(json.dumps(result.to_dict(), ensure_ascii=False, sort_keys=True))
        _atomic_write_text(self.run_dir / SELECTIONS_JSONL, "\n".join(lines) + "\n")
        logger.info("selected answers for %d cells", len(lines))
        return SELECTIONS_JSONL

    def _stage_judge(self) -> str:
        corpus = self._corpus()
        embedder = make_embedder(self.config)
        thresholds = Thresholds(
            rouge=self.config.threshold_rouge,
            meteor=self.config.threshold_meteor,
            cosine=self.config.threshold_cosine,
        )
        decide_by = Metric(self.config.decide_by)

        judged = []
        with self.manifest.artifact("select").open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                result = SelectionResult.from_dict(json.loads(line))
                gold = corpus.answer_for(result.document_id, result.category_id)
                if gold is None:
                    continue
                prediction = result.chosen.answer_text if result.chosen else None
                verdict = judge(
                    prediction,
                    gold,
                    embedder,
                    thresholds=thresholds,
                    decide_by=decide_by,
                    rouge_variant=self.config.rouge_variant,
                )
                judged.append(
                    JudgedCell(
                        document_id=result.document_id,
                        category_id=result.category_id,
                        rouge=verdict.score.rouge,
                        meteor=verdict.score.meteor,
                        cosine=verdict.score.cosine,
                        outcome=verdict.outcome,
                    )
                )
        tmp = self.run_dir / (JUDGMENTS_CSV + ".tmp")
        write_judgments(judged, tmp)
        os.replace(tmp, self.run_dir / JUDGMENTS_CSV)
        logger.info("judged %d cells", len(judged))
        return JUDGMENTS_CSV

    def _stage_report(self) -> str:
        judged = read_judgments(self.manifest.artifact("judge"))
        cell = report_cell_for(self.config)
        report = factorial_report({cell: [j.outcome for j in judged]})
        payload = {
            "cell": cell.value,
            "decide_by": self.config.decide_by,
            "n_cells": len(judged),
            "report": report.to_dict(),
        }
        _atomic_write_json(self.run_dir / REPORT_JSON, payload)
        _atomic_write_text(self.run_dir / REPORT_TXT, report.render_text() + "\n")
        return REPORT_JSON


def combined_report(run_dirs: list[str | Path]) -> tuple[str, dict]:
    """Merge sibling runs into one factorial table.

    Each run contributes its judged outcomes under the report cell implied
    by its own config (prompt style crossed with augmentation).  Returns
    the rendered text table and the JSON payload.
    """
    runs: dict[ReportCell, list] = {}
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        manifest_path = run_dir / MANIFEST_JSON
        if not manifest_path.exists():
            raise DependencyError(f"{run_dir} has no manifest; not a run directory")
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        if data["stages"]["judge"]["status"] != "done":
            raise DependencyError(f"{run_dir}: judge stage is not done")
        config = PipelineConfig.from_dict(data["config"])
        cell = report_cell_for(config)
        outcomes = [j.outcome for j in read_judgments(run_dir / data["stages"]["judge"]["artifact"])]
        runs.setdefault(cell, []).extend(outcomes)

    report = factorial_report(runs)
    payload = {
        "runs": [str(Path(d)) for d in run_dirs],
        "report": report.to_dict(),
    }
    return report.render_text(), payload
