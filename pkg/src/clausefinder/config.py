"""Run configuration: one flat key set resolved from flags, environment
variables, and an optional JSON file, in that precedence order.

Environment variables use the ``CLAUSEFINDER_`` prefix with the key
uppercased (``CLAUSEFINDER_CHUNK_SIZE=500``).  The fully resolved values are
snapshotted into the run manifest, so a run directory pins its own config.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .corpus import DEFAULT_TEST_CATEGORY_NAMES
from .errors import ConfigError
from .prompts import TechniqueKind, TechniqueSet

ENV_PREFIX = "CLAUSEFINDER_"

PROMPT_STYLES = ("basic", "complex")
BACKENDS = ("ollama", "oracle")
EMBEDDERS = ("trigram", "ollama")
COMBINE_MODES = ("product", "icw-only", "dbl-only")
DECIDE_BY = ("rouge", "meteor", "cosine")
ROUGE_VARIANTS = ("rouge-l", "rouge-1")
INFER_SCOPES = ("all", "test", "verification")


@dataclass
class PipelineConfig:
    corpus: str | None = None
    chunk_size: int = 1000
    augment: bool = True
    prompt_style: str = "complex"
    techniques: tuple[str, ...] = ()
    paraphrase_pool: str | None = None
    technique_fragments: dict | None = None
    temperature: float = 0.0
    model: str = "qwen2:7b"
    backend: str = "ollama"
    embedder: str = "trigram"
    embed_model: str = "gritlm"
    base_url: str = "http://localhost:11434"
    chat_path: str = "/api/chat"
    embed_path: str = "/api/embeddings"
    timeout: float = 120.0
    retries: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4
    single_message: bool = False
    epsilon: float = 0.21
    min_points: int = 2
    combine: str = "product"
    decide_by: str = "cosine"
    rouge_variant: str = "rouge-l"
    threshold_rouge: float = 0.60
    threshold_meteor: float = 0.68
    threshold_cosine: float = 0.79
    max_test_doc_words: int = 1000
    test_categories: tuple[str, ...] = DEFAULT_TEST_CATEGORY_NAMES
    infer_scope: str = "all"

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        _reject_unknown(data)
        kwargs = {key: _as_field_type(key, value) for key, value in data.items()}
        config = cls(**kwargs)
        validate(config)
        return config


VALID_KEYS = tuple(f.name for f in fields(PipelineConfig))

_OPTIONAL_STRING_KEYS = frozenset({"corpus", "paraphrase_pool"})
_JSON_KEYS = frozenset({"technique_fragments"})

_TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS = frozenset({"0", "false", "no", "off"})


def _reject_unknown(data: Mapping) -> None:
    unknown = sorted(set(data) - set(VALID_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown config key(s) {unknown}; valid keys: {sorted(VALID_KEYS)}"
        )


_TUPLE_KEYS = frozenset(
    f.name for f in fields(PipelineConfig) if isinstance(f.default, tuple)
)


def _as_field_type(key: str, value: object) -> object:
    if key in _TUPLE_KEYS and value is not None:
        return tuple(value)
    return value


def _parse_env_value(key: str, raw: str, default: object) -> object:
    if key in _JSON_KEYS:
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config key {key!r}: invalid JSON: {exc.msg}") from exc
    if key in _OPTIONAL_STRING_KEYS:
        return raw
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in _TRUE_WORDS:
            return True
        if lowered in _FALSE_WORDS:
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: expected a number, got {raw!r}") from exc
    if isinstance(default, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def _require_choice(key: str, value: str, choices: tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(f"config key {key!r}: {value!r} is not one of {list(choices)}")


def validate(config: PipelineConfig) -> None:
    if config.chunk_size < 1:
        raise ConfigError(f"config key 'chunk_size': must be >= 1, got {config.chunk_size}")
    if config.augment and config.chunk_size < 2:
        raise ConfigError("config key 'chunk_size': must be >= 2 when augment is on")
    if config.temperature < 0:
        raise ConfigError(f"config key 'temperature': must be >= 0, got {config.temperature}")
    if config.epsilon <= 0:
        raise ConfigError(f"config key 'epsilon': must be > 0, got {config.epsilon}")
    if config.min_points < 1:
        raise ConfigError(f"config key 'min_points': must be >= 1, got {config.min_points}")
    if config.retries < 0:
        raise ConfigError(f"config key 'retries': must be >= 0, got {config.retries}")
    if config.backoff < 0:
        raise ConfigError(f"config key 'backoff': must be >= 0, got {config.backoff}")
    if config.max_in_flight < 1:
        raise ConfigError(
            f"config key 'max_in_flight': must be >= 1, got {config.max_in_flight}"
        )
    if config.timeout <= 0:
        raise ConfigError(f"config key 'timeout': must be > 0, got {config.timeout}")
    if config.max_test_doc_words < 1:
        raise ConfigError(
            f"config key 'max_test_doc_words': must be >= 1, got {config.max_test_doc_words}"
        )
    if not config.test_categories:
        raise ConfigError("config key 'test_categories': must name at least one category")
    try:
        kinds = [TechniqueKind(name) for name in config.techniques]
    except ValueError as exc:
        valid = [k.value for k in TechniqueKind]
        raise ConfigError(
            f"config key 'techniques': unknown technique in {list(config.techniques)}; "
            f"valid kinds: {valid}"
        ) from exc
    if not TechniqueSet.of(*kinds).is_valid:
        raise ConfigError(
            f"config key 'techniques': {list(config.techniques)} contains a "
            "forbidden technique pair"
        )
    _require_choice("prompt_style", config.prompt_style, PROMPT_STYLES)
    _require_choice("backend", config.backend, BACKENDS)
    _require_choice("embedder", config.embedder, EMBEDDERS)
    _require_choice("combine", config.combine, COMBINE_MODES)
    _require_choice("decide_by", config.decide_by, DECIDE_BY)
    _require_choice("rouge_variant", config.rouge_variant, ROUGE_VARIANTS)
    _require_choice("infer_scope", config.infer_scope, INFER_SCOPES)


def resolve_config(
    flags: Mapping[str, object] | None = None,
    env: Mapping[str, str] | None = None,
    file: str | Path | None = None,
    base: Mapping[str, object] | None = None,
) -> PipelineConfig:
    """Merge the three config sources over the defaults and validate.

    ``base`` slots in beneath file, env, and flags; an existing run passes
    its pinned config here so later invocations inherit it without
    repeating every key.
    """
    defaults = PipelineConfig()
    values: dict[str, object] = {}
    if base is not None:
        _reject_unknown(base)
        for key, value in base.items():
            values[key] = _as_field_type(key, value)

    if file is not None:
        path = Path(file)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config file {path}: malformed JSON at line {exc.lineno}: {exc.msg}"
            ) from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path}: expected a JSON object")
        _reject_unknown(data)
        for key, value in data.items():
            values[key] = _as_field_type(key, value)

    env_map = os.environ if env is None else env
    for key in VALID_KEYS:
        raw = env_map.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _parse_env_value(key, raw, getattr(defaults, key))

    if flags:
        _reject_unknown(flags)
        for key, value in flags.items():
            if value is None:
                continue
            values[key] = _as_field_type(key, value)

    config = PipelineConfig(**values)
    validate(config)
    return config
