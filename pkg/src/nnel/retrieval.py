"""Exact top-k cosine retrieval over the concept embedding matrix.

Rows and queries are unit vectors, so dot product equals cosine. The
top-k selection is exact: a bounded partial select whose pool grows until
k distinct CUIs are covered, with entries collapsed to distinct CUIs
keeping each CUI's maximum-scoring entry. All ties break by ascending
entry id, which makes every run reproducible.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .corpus import CorpusSplit, Document, LinkedMention
from .errors import NnelError, ParseError, ValidationError
from .kb import NORM_TOLERANCE, EmbeddingMatrix, KnowledgeBase
from .marking import mark

log = logging.getLogger(__name__)

#: An embedding provider maps text to a vector of the index dimension.
EmbeddingProvider = Callable[[str], np.ndarray]


@dataclass(frozen=True, slots=True)
class Candidate:
    cui: str
    entry_id: int
    score: float


@dataclass(frozen=True, slots=True)
class CandidateList:
    mention_id: str
    candidates: tuple[Candidate, ...]
    k_requested: int

    @property
    def cuis(self) -> tuple[str, ...]:
        return tuple(c.cui for c in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


def embed_query(
    mention: LinkedMention,
    doc: Document,
    provider: EmbeddingProvider,
    *,
    dim: int,
    marking: bool = True,
    window: int = 128,
) -> np.ndarray:
    """Embed the mention's boundary-marked context as a unit query vector.

    ``window=0`` gives bare-mention mode; ``marking=False`` is the
    ablation mode (same windowed text, no cues).
    """
    context = mark(mention, doc, window=window, enabled=marking)
    try:
        vec = np.asarray(provider(context.text), dtype=np.float32)
    except NnelError as exc:
        raise type(exc)(f"mention {mention.mention_id}: {exc}") from exc
    except Exception as exc:
        raise ValidationError(
            f"mention {mention.mention_id}: embedding provider failed: {exc}"
        ) from exc
    if vec.shape != (dim,):
        raise ValidationError(
            f"mention {mention.mention_id}: provider returned shape {vec.shape}, "
            f"index dim is {dim}"
        )
    return _unitize(vec, f"mention {mention.mention_id}")


def _unitize(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValidationError(f"{what}: zero query vector")
    if abs(norm - 1.0) > NORM_TOLERANCE:
        vec = vec / np.float32(norm)
    return vec


def retrieve(
    query: np.ndarray,
    kb: KnowledgeBase,
    matrix: EmbeddingMatrix,
    k: int,
    mention_id: str = "",
) -> CandidateList:
    """Exact top-k distinct-CUI retrieval for one query vector.

    Asking for more CUIs than the KB holds returns all of them (a short
    list, not an error).
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if matrix.row_count != kb.entry_count:
        raise ValidationError(
            f"matrix rows ({matrix.row_count}) != dictionary entries ({kb.entry_count})"
        )
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (matrix.dim,):
        raise ValidationError(f"query shape {query.shape} != index dim {matrix.dim}")

    scores = matrix.vectors @ query
    total = scores.shape[0]
    target = min(k, kb.concept_count)
    entries = kb.entries

    pool = min(total, max(4 * k, 32))
    while True:
        if pool >= total:
            eligible = np.arange(total)
        else:
            part = np.argpartition(-scores, pool - 1)[:pool]
            # Pull in every entry tied with the pool boundary so that the
            # (score desc, entry id asc) order below is globally exact.
            eligible = np.flatnonzero(scores >= scores[part].min())
        order = eligible[np.lexsort((eligible, -scores[eligible]))]

        picked: list[Candidate] = []
        seen: set[str] = set()
        for entry_idx in order:
            cui = entries[entry_idx].cui
            if cui in seen:
                continue
            seen.add(cui)
            picked.append(Candidate(cui, int(entry_idx), float(scores[entry_idx])))
            if len(picked) == target:
                break
        if len(picked) == target or pool >= total:
            return CandidateList(mention_id, tuple(picked), k)
        pool = min(total, pool * 4)


def retrieve_corpus(
    split: CorpusSplit,
    kb: KnowledgeBase,
    matrix: EmbeddingMatrix,
    k: int,
    *,
    provider: EmbeddingProvider | None = None,
    query_vectors: Mapping[str, np.ndarray] | None = None,
    marking: bool = True,
    window: int = 128,
    threads: int | None = None,
    allow_partial: bool = False,
) -> list[CandidateList]:
    """Retrieve candidates for every mention, preserving mention order.

    Queries come either from an embedding provider over the marked
    contexts or from precomputed ``query_vectors`` keyed by mention id.
    Parallel over mentions; results are deterministic regardless of the
    thread count. Any per-mention failure aborts the run unless
    ``allow_partial`` is set, in which case the mention is logged and
    skipped.
    """
    if (provider is None) == (query_vectors is None):
        raise ValidationError("pass exactly one of provider or query_vectors")

    jobs = [(doc, mention) for doc in split.documents for mention in doc.mentions]
    if not jobs:
        return []

    def run(job: tuple[Document, LinkedMention]) -> CandidateList | None:
        doc, mention = job
        try:
            if query_vectors is not None:
                if mention.mention_id not in query_vectors:
                    raise ValidationError(f"no query vector for mention {mention.mention_id}")
                vec = np.asarray(query_vectors[mention.mention_id], dtype=np.float32)
                if vec.shape != (matrix.dim,):
                    raise ValidationError(
                        f"mention {mention.mention_id}: query vector shape {vec.shape}, "
                        f"index dim is {matrix.dim}"
                    )
                vec = _unitize(vec, f"mention {mention.mention_id}")
            else:
                vec = embed_query(
                    mention, doc, provider, dim=matrix.dim, marking=marking, window=window
                )
        except NnelError:
            if allow_partial:
                log.warning("skipping mention %s (retrieval failed)", mention.mention_id)
                return None
            raise
        return retrieve(vec, kb, matrix, k, mention_id=mention.mention_id)

    workers = threads if threads and threads > 0 else min(32, os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        results = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    return [cl for cl in results if cl is not None]


# ---------------------------------------------------------------------------
# Candidates file (JSONL, one object per mention)


def write_candidates(lists: Iterable[CandidateList], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cl in lists:
            fh.write(
                json.dumps(
                    {
                        "mention_id": cl.mention_id,
                        "k": cl.k_requested,
                        "candidates": [
                            {"cui": c.cui, "entry_id": c.entry_id, "score": c.score}
                            for c in cl.candidates
                        ],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_candidates(path: str | Path) -> list[CandidateList]:
    path = Path(path)
    out: list[CandidateList] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", path=str(path), line=lineno) from None
            try:
                cands = tuple(
                    Candidate(str(c["cui"]), int(c["entry_id"]), float(c["score"]))
                    for c in obj["candidates"]
                )
                out.append(CandidateList(str(obj["mention_id"]), cands, int(obj["k"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad candidates record: {exc}",
                                 path=str(path), line=lineno) from None
    return out
