"""Clause-level question answering over contracts too long for one prompt.

The pieces: corpus loading with span validation, word chunking with
boundary-healing bridge chunks, a composable prompt engine, pluggable chat
and embedding backends, candidate selection driven by answer-location
priors and inverse cluster cardinality, and graded evaluation metrics.
"""

from .chunker import Chunk, ChunkingConfig, ChunkKind, augment, chunk
from .config import PipelineConfig, resolve_config
from .corpus import Corpus, CorpusSplit, Document, GoldAnswer, ingest, make_split
from .errors import (
    BackendError,
    ClauseFinderError,
    ConfigError,
    DependencyError,
    EmbeddingError,
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
    FactorialReport,
    Metric,
    MetricScore,
    Outcome,
    Thresholds,
    factorial_report,
    judge,
    meteor,
    rouge_1_f1,
    rouge_l_f1,
)
from .pipeline import Pipeline
from .prompts import (
    DEFAULT_BASIC_TEMPLATE,
    DEFAULT_COMPLEX_TEMPLATE,
    PromptTemplate,
    Technique,
    TechniqueKind,
    TechniqueSet,
    decorate,
    enumerate_combinations,
    rank_prompts,
    render,
)
from .selection import (
    ClusterAssignment,
    DbscanParams,
    LocationDistribution,
    SelectionResult,
    build_distribution,
    dbl_weight,
    dbscan,
    icw_weights,
    select,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "Candidate",
    "CellRef",
    "ChatRequest",
    "Chunk",
    "ChunkKind",
    "ChunkingConfig",
    "ClauseFinderError",
    "ClusterAssignment",
    "ConfigError",
    "Corpus",
    "CorpusSplit",
    "DEFAULT_BASIC_TEMPLATE",
    "DEFAULT_COMPLEX_TEMPLATE",
    "DbscanParams",
    "DependencyError",
    "Document",
    "EmbeddingError",
    "FactorialReport",
    "GoldAnswer",
    "LocationDistribution",
    "Metric",
    "MetricScore",
    "OllamaChatBackend",
    "OllamaEmbedder",
    "OracleChatBackend",
    "Outcome",
    "Pipeline",
    "PipelineConfig",
    "PromptTemplate",
    "SelectionResult",
    "Technique",
    "TechniqueKind",
    "TechniqueSet",
    "Thresholds",
    "TrigramEmbedder",
    "augment",
    "build_distribution",
    "chunk",
    "dbl_weight",
    "dbscan",
    "decorate",
    "enumerate_combinations",
    "factorial_report",
    "generate",
    "icw_weights",
    "ingest",
    "judge",
    "make_split",
    "meteor",
    "rank_prompts",
    "render",
    "resolve_config",
    "rouge_1_f1",
    "rouge_l_f1",
    "select",
]
