"""Vector store of curated pentest knowledge and past successful tasks.

Embeddings are pluggable; the default deterministic embedder hashes
lowercase word tokens into a 256-dimension bag-of-words vector and
normalizes it, so retrieval is reproducible with no model.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "KnowledgeEntry",
    "RetrievalResult",
    "KnowledgeRepository",
    "EmbedderUnavailable",
    "hashing_embedder",
    "DEFAULT_EMBEDDING_DIM",
]

DEFAULT_EMBEDDING_DIM = 256
RERANK_SIMILARITY_WEIGHT = 0.5
RERANK_OVERLAP_WEIGHT = 0.5

_TOKEN = re.compile(r"[a-z0-9_.\-/]+")

Embedder = Callable[[str], np.ndarray]


class EmbedderUnavailable(Exception):
    """The embedding function failed or produced an unusable vector."""


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def hashing_embedder(text: str, dim: int = DEFAULT_EMBEDDING_DIM) -> np.ndarray:
    """Deterministic bag-of-words embedding: token -> sha1 bucket, counted,
    then unit-normalized."""
    vec = np.zeros(dim, dtype=np.float64)
    for tok in _tokens(text):
        bucket = int.from_bytes(hashlib.sha1(tok.encode("utf-8")).digest()[:4], "big")
        vec[bucket % dim] += 1.0
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise EmbedderUnavailable(f"text has no embeddable tokens: {text!r}")
    return vec / norm


@dataclass(frozen=True)
class KnowledgeEntry:
    id: str
    text: str
    vector: tuple[float, ...]
    kind: str  # "curated" | "past_task"
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RetrievalResult:
    entry: KnowledgeEntry
    similarity: float
    rerank_score: float


def _sort_results(results: list[RetrievalResult]) -> list[RetrievalResult]:
    return sorted(
        results,
        key=lambda r: (-r.rerank_score, -r.similarity, r.entry.id),
    )


class KnowledgeRepository:
    """In-memory index with optional append-only JSONL persistence."""

    def __init__(
        self,
        dim: int = DEFAULT_EMBEDDING_DIM,
        persist_path: Optional[str] = None,
    ) -> None:
        self.dim = dim
        self.persist_path = Path(persist_path) if persist_path else None
        self._entries: dict[str, KnowledgeEntry] = {}
        self._by_key: dict[tuple[str, str], str] = {}  # (text, kind) -> id
        self._lock = threading.Lock()
        if self.persist_path and self.persist_path.exists():
            self._load()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[KnowledgeEntry]:
        return sorted(self._entries.values(), key=lambda e: e.id)

    def store(
        self,
        text: str,
        kind: str,
        meta: Optional[dict] = None,
        embedder: Embedder = hashing_embedder,
    ) -> KnowledgeEntry:
        """Persist a chunk; idempotent on identical (text, kind)."""
        if not text:
            raise ValueError("text must be non-empty")
        if kind not in ("curated", "past_task"):
            raise ValueError(f"unknown kind: {kind!r}")
        with self._lock:
            existing = self._by_key.get((text, kind))
            if existing is not None:
                return self._entries[existing]
            vec = np.asarray(embedder(text), dtype=np.float64)
            if vec.shape != (self.dim,):
                raise EmbedderUnavailable(
                    f"embedder returned shape {vec.shape}, expected ({self.dim},)"
                )
            digest = hashlib.sha256(f"{kind}\x00{text}".encode("utf-8")).hexdigest()[:16]
            entry = KnowledgeEntry(
                id=digest,
                text=text,
                vector=tuple(float(x) for x in vec),
                kind=kind,
                meta=dict(meta or {}),
            )
            self._entries[entry.id] = entry
            self._by_key[(text, kind)] = entry.id
            if self.persist_path:
                self._append(entry)
            return entry

    def retrieve(
        self,
        query: str,
        k: int,
        embedder: Embedder = hashing_embedder,
    ) -> list[RetrievalResult]:
        """Top-k entries by cosine similarity over the whole store."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._entries:
            return []
        qvec = np.asarray(embedder(query), dtype=np.float64)
        results = []
        for entry in self.entries:
            sim = float(np.dot(qvec, np.asarray(entry.vector)))
            results.append(RetrievalResult(entry=entry, similarity=sim, rerank_score=sim))
        return _sort_results(results)[:k]

    @staticmethod
    def rerank(results: list[RetrievalResult], query: str) -> list[RetrievalResult]:
        """Default reranker: blend cosine similarity with lexical overlap.

        overlap = |shared lowercase tokens| / |query tokens|; score is the
        0.5/0.5 blend of similarity and overlap.
        """
        query_tokens = _tokens(query)
        if not results:
            return []
        rescored = []
        for res in results:
            if query_tokens:
                entry_tokens = set(_tokens(res.entry.text))
                shared = sum(1 for t in query_tokens if t in entry_tokens)
                overlap = shared / len(query_tokens)
            else:
                overlap = 0.0
            score = (RERANK_SIMILARITY_WEIGHT * res.similarity
                     + RERANK_OVERLAP_WEIGHT * overlap)
            rescored.append(RetrievalResult(res.entry, res.similarity, score))
        return _sort_results(rescored)

    def ingest_file(self, path: str, embedder: Embedder = hashing_embedder) -> int:
        """Load a JSON-lines corpus file; returns the number of lines stored."""
        count = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                self.store(
                    text=obj["text"],
                    kind=obj.get("kind", "curated"),
                    meta=obj.get("meta", {}),
                    embedder=embedder,
                )
                count += 1
        return count

    def ingest_dir(self, directory: str, embedder: Embedder = hashing_embedder) -> int:
        total = 0
        for path in sorted(Path(directory).glob("*.jsonl")):
            total += self.ingest_file(str(path), embedder=embedder)
        return total

    def _append(self, entry: KnowledgeEntry) -> None:
        record = {
            "id": entry.id,
            "text": entry.text,
            "vector": list(entry.vector),
            "kind": entry.kind,
            "meta": entry.meta,
        }
        with open(self.persist_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def _load(self) -> None:
        with open(self.persist_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                entry = KnowledgeEntry(
                    id=obj["id"],
                    text=obj["text"],
                    vector=tuple(obj["vector"]),
                    kind=obj["kind"],
                    meta=obj.get("meta", {}),
                )
                self._entries[entry.id] = entry
                self._by_key[(entry.text, entry.kind)] = entry.id
