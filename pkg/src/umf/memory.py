"""Memory module: scoped, capacity-bounded record store with write/read
operations, importance-plus-LRU forgetting, and a deterministic trigram
embedding for similarity reads."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

EMBED_DIM = 64

FORMATS = ("natural_language", "tabular_row", "embedding", "structured_list_node")


def embed(text: str) -> tuple[float, ...]:
    """64-dim character-trigram hash embedding, normalized to unit length.

    Texts shorter than 3 characters embed to the zero vector. Buckets come
    from crc32 so the mapping is stable across processes and runs.
    """
    lowered = text.lower()
    counts = [0] * EMBED_DIM
    for i in range(len(lowered) - 2):
        trigram = lowered[i : i + 3]
        counts[zlib.crc32(trigram.encode("utf-8")) % EMBED_DIM] += 1
    norm = math.sqrt(sum(c * c for c in counts))
    if norm == 0.0:
        return tuple(0.0 for _ in range(EMBED_DIM))
    return tuple(c / norm for c in counts)


def cosine(a: Iterable[float], b: Iterable[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class MemoryScope:
    kind: str  # "short_term" | "long_term"
    task_id: str | None = None

    @classmethod
    def short_term(cls, task_id: str) -> "MemoryScope":
        return cls("short_term", task_id)

    @classmethod
    def long_term(cls) -> "MemoryScope":
        return cls("long_term", None)

    def __post_init__(self) -> None:
        if self.kind == "short_term" and not self.task_id:
            raise ValueError("short_term scope requires the owning task_id")
        if self.kind == "long_term" and self.task_id is not None:
            raise ValueError("long_term scope carries no task_id")
        if self.kind not in ("short_term", "long_term"):
            raise ValueError(f"unknown scope kind {self.kind!r}")


@dataclass
class MemoryRecord:
    key: str
    content: object
    format: str = "natural_language"
    scope: MemoryScope = field(default_factory=MemoryScope.long_term)
    importance: float = 0.5
    created_tick: int = 0
    last_access_tick: int = 0
    vector: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise ValueError(f"unknown memory format {self.format!r}")
        if not 0.0 <= self.importance <= 1.0:
            raise ValueError("importance must lie in [0, 1]")


class MemoryStore:
    """Keyed record collection with capacity K. Single-writer; every public
    operation advances the logical clock exactly once and leaves the store
    at or under capacity."""

    def __init__(self, capacity: int = 64, location: str = "embedded") -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if location not in ("embedded", "extension"):
            raise ValueError(f"unknown memory location {location!r}")
        self.capacity = capacity
        self.location = location
        self.records: dict[str, MemoryRecord] = {}
        self.clock = 0

    def __len__(self) -> int:
        return len(self.records)

    def write(self, record: MemoryRecord) -> MemoryRecord:
        """Insert or overwrite at ``record.key``; evicts if over capacity.
        Overwrites re-stamp creation time (the record is considered new).
        The incoming key itself is never the eviction victim, so
        read-after-write holds for arbitrary records."""
        if not record.key:
            raise ValueError("record key must be nonempty")
        self.clock += 1
        record.created_tick = self.clock
        record.last_access_tick = self.clock
        if record.format == "embedding" and record.vector is None:
            record.vector = embed(str(record.content))
        self.records[record.key] = record
        if len(self.records) > self.capacity:
            self._evict(protect=record.key)
        return record

    def read_by_key(self, key: str) -> list[MemoryRecord]:
        self.clock += 1
        record = self.records.get(key)
        if record is None:
            return []
        record.last_access_tick = self.clock
        return [record]

    def read_by_filter(self, scope: MemoryScope | None = None,
                       fmt: str | None = None,
                       predicate: Callable[[MemoryRecord], bool] | None = None,
                       ) -> list[MemoryRecord]:
        """All matching records in creation order; each match's access time
        is refreshed."""
        self.clock += 1
        out = []
        for record in self.records.values():
            if scope is not None and record.scope != scope:
                continue
            if fmt is not None and record.format != fmt:
                continue
            if predicate is not None and not predicate(record):
                continue
            out.append(record)
        out.sort(key=lambda r: r.created_tick)
        for record in out:
            record.last_access_tick = self.clock
        return out

    def read_by_similarity(self, text: str, top_n: int) -> list[MemoryRecord]:
        """Top ``top_n`` embedding-format records by cosine similarity to the
        query embedding; ties resolve to the older record."""
        if top_n < 1:
            raise ValueError("top_n must be at least 1")
        self.clock += 1
        query = embed(text)
        scored = [
            (record, cosine(query, record.vector or embed(str(record.content))))
            for record in self.records.values()
            if record.format == "embedding"
        ]
        scored.sort(key=lambda pair: (-pair[1], pair[0].created_tick))
        out = [record for record, _ in scored[:top_n]]
        for record in out:
            record.last_access_tick = self.clock
        return out

    def forget_enforce(self) -> None:
        """Evict until at capacity: lowest importance first, then least
        recently accessed, then oldest, then smallest key."""
        self.clock += 1
        self._evict()

    def _evict(self, protect: str | None = None) -> None:
        while len(self.records) > self.capacity:
            victim = min(
                (r for r in self.records.values() if r.key != protect),
                key=lambda r: (r.importance, r.last_access_tick,
                               r.created_tick, r.key),
            )
            del self.records[victim.key]

    def delete(self, key: str) -> bool:
        """Remove one record by key; True when something was removed."""
        self.clock += 1
        return self.records.pop(key, None) is not None

    def end_task_scope(self, task_id: str) -> None:
        """Drop every short-term record owned by ``task_id``; long-term
        records are untouched."""
        self.clock += 1
        doomed = [
            key for key, record in self.records.items()
            if record.scope.kind == "short_term" and record.scope.task_id == task_id
        ]
        for key in doomed:
            del self.records[key]

    def dump(self) -> dict:
        """JSON-ready snapshot: one entry per record, ticks and vectors
        verbatim."""
        return {
            "location": self.location,
            "capacity": self.capacity,
            "clock": self.clock,
            "records": [
                {
                    "key": r.key,
                    "content": r.content,
                    "format": r.format,
                    "scope": {"kind": r.scope.kind, "task_id": r.scope.task_id},
                    "importance": r.importance,
                    "created_tick": r.created_tick,
                    "last_access_tick": r.last_access_tick,
                    "vector": list(r.vector) if r.vector is not None else None,
                }
                for r in sorted(self.records.values(), key=lambda r: r.created_tick)
            ],
        }
