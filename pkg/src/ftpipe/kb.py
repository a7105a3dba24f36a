"""Strategy knowledge base, example templates, and failure history.

Two aligned document sets share one JSON file per strategy: a semantic half
describing when and how to apply the technique, and an example half holding a
before/after code template.  Retrieval embeds documents and queries with a
deterministic hashing embedder and ranks by cosine similarity.  A separate
failure knowledge base accumulates (strategy, error class) counts across runs.
"""

from __future__ import annotations

import json
import os
import re
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EMBED_DIM = 256
SAMPLE_LIMIT = 5
SAMPLE_CHARS = 240

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class KbError(Exception):
    pass


class AlignmentError(KbError):
    pass


class DuplicateStrategy(KbError):
    pass


class PersistenceError(KbError):
    pass


@dataclass(frozen=True)
class StrategyDoc:
    strategy_id: str
    title: str
    applicable_scenarios: str
    principle: str
    interface_constraints: str
    overhead_estimate: str

    def text(self) -> str:
        return " ".join(
            (
                self.strategy_id,
                self.title,
                self.applicable_scenarios,
                self.principle,
                self.interface_constraints,
                self.overhead_estimate,
            )
        )


@dataclass(frozen=True)
class ExampleDoc:
    strategy_id: str
    before_snippet: str
    after_snippet: str
    notes: str


@dataclass(frozen=True)
class RetrievalHit:
    strategy: StrategyDoc
    example: ExampleDoc
    score: float


def embed_text(text: str, dims: int = EMBED_DIM) -> np.ndarray:
    """Hash token counts into a fixed number of buckets, L2-normalized.

    crc32 keeps the embedding stable across processes and platforms; empty
    text maps to the zero vector so it never ranks above real content.
    """
    vec = np.zeros(dims, dtype=np.float64)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if token:
            vec[zlib.crc32(token.encode("utf-8")) % dims] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


class KnowledgeBase:
    """Loaded strategy and example docs plus the retrieval index."""

    def __init__(self, strategies: dict[str, StrategyDoc],
                 examples: dict[str, ExampleDoc], dims: int = EMBED_DIM):
        if set(strategies) != set(examples):
            missing = set(strategies).symmetric_difference(examples)
            raise AlignmentError(f"unaligned strategy ids: {sorted(missing)}")
        self.strategies = strategies
        self.examples = examples
        self.dims = dims
        self._ids = sorted(strategies)
        if self._ids:
            self._matrix = np.stack(
                [embed_text(strategies[sid].text(), dims) for sid in self._ids]
            )
        else:
            self._matrix = np.zeros((0, dims), dtype=np.float64)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, strategy_id: str) -> bool:
        return strategy_id in self.strategies

    @property
    def strategy_ids(self) -> list[str]:
        return list(self._ids)


def default_kb_dir() -> Path:
    return Path(__file__).parent / "kb_data"


def load_kb(directory: str | Path, dims: int = EMBED_DIM) -> KnowledgeBase:
    directory = Path(directory)
    strategies: dict[str, StrategyDoc] = {}
    examples: dict[str, ExampleDoc] = {}
    paths = sorted(directory.glob("*.json"))
    if not paths:
        warnings.warn(f"knowledge base directory {directory} is empty")
        return KnowledgeBase({}, {}, dims)
    for path in paths:
        try:
            raw = json.loads(path.read_text())
            sem = raw["strategy"]
            ex = raw["example"]
            doc = StrategyDoc(
                strategy_id=sem["strategy_id"],
                title=sem["title"],
                applicable_scenarios=sem["applicable_scenarios"],
                principle=sem["principle"],
                interface_constraints=sem["interface_constraints"],
                overhead_estimate=sem["overhead_estimate"],
            )
            example = ExampleDoc(
                strategy_id=ex["strategy_id"],
                before_snippet=ex["before_snippet"],
                after_snippet=ex["after_snippet"],
                notes=ex["notes"],
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise KbError(f"{path.name}: malformed strategy file ({exc})") from exc
        if example.strategy_id != doc.strategy_id:
            raise AlignmentError(
                f"{path.name}: example is for {example.strategy_id!r}, "
                f"semantic doc is {doc.strategy_id!r}"
            )
        if doc.strategy_id in strategies:
            raise DuplicateStrategy(doc.strategy_id)
        strategies[doc.strategy_id] = doc
        examples[doc.strategy_id] = example
    return KnowledgeBase(strategies, examples, dims)


def retrieve_topk(kb: KnowledgeBase, query: str, k: int) -> list[RetrievalHit]:
    """Top-k strategies by cosine score, ties by strategy id, with the
    aligned example attached to each hit."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(kb) == 0:
        return []
    scores = kb._matrix @ embed_text(query, kb.dims)
    order = sorted(range(len(kb)), key=lambda i: (-scores[i], kb._ids[i]))
    hits = []
    for i in order[:k]:
        sid = kb._ids[i]
        hits.append(RetrievalHit(kb.strategies[sid], kb.examples[sid], float(scores[i])))
    return hits


# --- failure knowledge base ---------------------------------------------------


@dataclass
class FailureRecord:
    strategy: str
    error_class: str
    count: int
    samples: list[str]


class FailureKb:
    """(strategy, error class) counters with message samples, persisted to a
    JSON file on every record; writes go through a temp file and rename."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: list[FailureRecord] = []
        if self.path.exists():
            try:
                raw = json.loads(self.path.read_text())
                self._records = [
                    FailureRecord(
                        r["strategy"], r["error_class"], r["count"], list(r["samples"])
                    )
                    for r in raw["records"]
                ]
            except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
                raise PersistenceError(f"cannot read {self.path}: {exc}") from exc

    def record(self, strategy: str, error_class: str, message: str) -> FailureRecord:
        sample = message[:SAMPLE_CHARS]
        for rec in self._records:
            if rec.strategy == strategy and rec.error_class == error_class:
                rec.count += 1
                rec.samples = (rec.samples + [sample])[-SAMPLE_LIMIT:]
                break
        else:
            rec = FailureRecord(strategy, error_class, 1, [sample])
            self._records.append(rec)
        self._persist()
        return rec

    def lookup(self, strategy: str) -> list[FailureRecord]:
        return [r for r in self._records if r.strategy == strategy]

    def all_records(self) -> list[FailureRecord]:
        return list(self._records)

    def _persist(self) -> None:
        payload = {
            "records": [
                {
                    "strategy": r.strategy,
                    "error_class": r.error_class,
                    "count": r.count,
                    "samples": r.samples,
                }
                for r in self._records
            ]
        }
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        try:
            tmp.write_text(json.dumps(payload, indent=2) + "\n")
            os.replace(tmp, self.path)
        except OSError as exc:
            raise PersistenceError(f"cannot write {self.path}: {exc}") from exc
