"""Word-based document chunking with boundary-healing augmented chunks.

Long contracts are cut into fixed-size word blocks before inference.  Any
clause that straddles a cut point would be unanswerable from either side, so
each adjacent pair of base chunks also yields an augmented chunk spanning
midpoint-to-midpoint across the cut.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .corpus import Document
from .errors import ChunkingError


class ChunkKind(str, Enum):
    BASE = "base"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class Chunk:
    document_id: str
    index: int
    kind: ChunkKind
    start_word: int
    end_word: int
    text: str

    @property
    def word_count(self) -> int:
        return self.end_word - self.start_word

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "index": self.index,
            "kind": self.kind.value,
            "start_word": self.start_word,
            "end_word": self.end_word,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(
            document_id=data["document_id"],
            index=int(data["index"]),
            kind=ChunkKind(data["kind"]),
            start_word=int(data["start_word"]),
            end_word=int(data["end_word"]),
            text=data["text"],
        )


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 1000
    augment: bool = True

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ChunkingError(f"chunk_size must be positive, got {self.chunk_size}")
        if self.augment and self.chunk_size < 2:
            raise ChunkingError(
                "augmented chunks need chunk_size >= 2 so midpoints fall strictly "
                "inside each base chunk"
            )


def _midpoint(start: int, length: int) -> int:
    return start + length // 2


def augment(base_chunks: list[Chunk], words: list[str]) -> list[Chunk]:
    """Build one bridging chunk per adjacent base pair.

    The bridge runs from the midpoint of the left chunk to the midpoint of
    the right chunk, so it always contains the words on both sides of the
    cut.  A one-word right chunk has its whole extent included; its midpoint
    would otherwise land before the boundary word.
    """
    augmented = []
    for i in range(len(base_chunks) - 1):
        left, right = base_chunks[i], base_chunks[i + 1]
        start = _midpoint(left.start_word, left.word_count)
        end = right.start_word + max(1, right.word_count // 2)
        augmented.append(
            Chunk(
                document_id=left.document_id,
                index=i,
                kind=ChunkKind.AUGMENTED,
                start_word=start,
                end_word=end,
                text=" ".join(words[start:end]),
            )
        )
    return augmented


def chunk(document: Document, config: ChunkingConfig = ChunkingConfig()) -> list[Chunk]:
    """Split ``document`` into base chunks, plus bridges when configured."""
    words = document.words()
    if not words:
        raise ChunkingError(f"document {document.id!r} has no words to chunk")

    base = []
    for index, start in enumerate(range(0, len(words), config.chunk_size)):
        end = min(start + config.chunk_size, len(words))
        base.append(
            Chunk(
                document_id=document.id,
                index=index,
                kind=ChunkKind.BASE,
                start_word=start,
                end_word=end,
                text=" ".join(words[start:end]),
            )
        )

    if not config.augment:
        return base
    return base + augment(base, words)


def write_chunks(chunks: Iterable[Chunk], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")


def read_chunks(path: str | Path) -> list[Chunk]:
    chunks = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                chunks.append(Chunk.from_dict(json.loads(line)))
    return chunks
