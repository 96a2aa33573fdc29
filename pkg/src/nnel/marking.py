"""Boundary-cue marking and rank-input construction.

A marked context wraps exactly one mention span with the ``[Ms]``/``[Me]``
cue tokens inside a character window of surrounding document text. Nested
siblings and parents are never marked: one mention per context. Cues are
inserted with single padding spaces, so stripping ``"[Ms] "`` and
``" [Me]"`` restores the windowed substring character-for-character.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .corpus import CorpusSplit, Document, LinkedMention
from .errors import ValidationError
from .kb import KnowledgeBase

if TYPE_CHECKING:  # pragma: no cover - retrieval imports this module at runtime
    from .retrieval import CandidateList

MENTION_START = "[Ms]"
MENTION_END = "[Me]"
SEPARATOR = "[SEP]"

DEFAULT_WINDOW = 128


class RankMode(str, Enum):
    """How candidates are presented to the scorer.

    LISTWISE packs all k candidates after ``[SEP]`` into one sequence, so
    one scorer pass yields k scores. CL pairs each candidate with the
    context in its own sequence: k independent passes, k times the
    compute, no cross-candidate interference.
    """

    LISTWISE = "LISTWISE"
    CL = "CL"


@dataclass(frozen=True, slots=True)
class MarkedContext:
    text: str
    mention_id: str
    #: characters actually taken on each side (may be short at doc edges)
    window: tuple[int, int]


def mark(
    mention: LinkedMention,
    doc: Document,
    *,
    window: int = DEFAULT_WINDOW,
    enabled: bool = True,
) -> MarkedContext:
    """Wrap the mention span with boundary cues inside a character window.

    ``enabled=False`` returns the same windowed text without cues (the
    ablation mode). The window truncates at document edges.
    """
    if window < 0:
        raise ValidationError(f"window must be >= 0, got {window}")
    if (
        mention.start < 0
        or mention.end > len(doc.text)
        or doc.text[mention.start : mention.end] != mention.surface
    ):
        raise ValidationError(
            f"mention {mention.mention_id} does not belong to document {doc.doc_id}"
        )
    left = doc.text[max(0, mention.start - window) : mention.start]
    right = doc.text[mention.end : mention.end + window]
    if enabled:
        text = f"{left}{MENTION_START} {mention.surface} {MENTION_END}{right}"
    else:
        text = f"{left}{mention.surface}{right}"
    return MarkedContext(text, mention.mention_id, (len(left), len(right)))


def strip_cues(text: str) -> str:
    """Remove one cue pair and its padding spaces (inverse of ``mark``)."""
    return text.replace(f"{MENTION_START} ", "", 1).replace(f" {MENTION_END}", "", 1)


# ---------------------------------------------------------------------------
# Rank inputs


@dataclass(frozen=True, slots=True)
class RankInput:
    """Scorer input for one mention's candidate list.

    ``surface`` and ``candidate_names`` are carried alongside the wire
    fields so in-process scorers (the lexical baseline) can score without
    re-reading the corpus.
    """

    mention_id: str
    mode: RankMode
    sequences: tuple[str, ...]
    candidate_cuis: tuple[str, ...]
    candidate_names: tuple[str, ...]
    surface: str


def _candidate_names(candidates: CandidateList, kb: KnowledgeBase) -> tuple[str, ...]:
    names = []
    for cand in candidates.candidates:
        if not (0 <= cand.entry_id < kb.entry_count):
            raise ValidationError(
                f"mention {candidates.mention_id}: candidate entry id {cand.entry_id} "
                f"outside dictionary"
            )
        entry = kb.entries[cand.entry_id]
        if entry.cui != cand.cui:
            raise ValidationError(
                f"mention {candidates.mention_id}: entry {cand.entry_id} belongs to "
                f"{entry.cui}, not {cand.cui}"
            )
        names.append(entry.name)
    return tuple(names)


def build_rank_input(
    mention: LinkedMention,
    doc: Document,
    candidates: CandidateList,
    kb: KnowledgeBase,
    mode: RankMode,
    *,
    window: int = DEFAULT_WINDOW,
    marking: bool = True,
) -> RankInput:
    """Render the mention context and its candidates as scorer sequences.

    Candidate names are each CUI's retrieval-winning synonym, keeping the
    ranker's view consistent with what retrieval matched.
    """
    if not candidates.candidates:
        raise ValidationError(f"mention {mention.mention_id}: empty candidate list")
    context = mark(mention, doc, window=window, enabled=marking).text
    names = _candidate_names(candidates, kb)
    if mode is RankMode.LISTWISE:
        tail = " ".join(f"[ST{i}] {name}" for i, name in enumerate(names))
        sequences: tuple[str, ...] = (f"{context} {SEPARATOR} {tail}",)
    else:
        sequences = tuple(f"{context} {SEPARATOR} {name}" for name in names)
    return RankInput(
        mention_id=mention.mention_id,
        mode=mode,
        sequences=sequences,
        candidate_cuis=candidates.cuis,
        candidate_names=names,
        surface=mention.surface,
    )


def write_rank_inputs(inputs: Iterable[RankInput], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ri in inputs:
            fh.write(
                json.dumps(
                    {
                        "mention_id": ri.mention_id,
                        "mode": ri.mode.value,
                        "sequences": list(ri.sequences),
                        "candidate_cuis": list(ri.candidate_cuis),
                        "candidate_names": list(ri.candidate_names),
                        "surface": ri.surface,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# Training pairs


@dataclass(frozen=True, slots=True)
class TrainingPair:
    mention_id: str
    sequence: str
    label: int
    cui: str


@dataclass(slots=True)
class TrainingEmission:
    pairs: list[TrainingPair]
    #: mentions whose gold CUI was not retrieved (they contribute only negatives)
    gold_missed: int


def emit_training_pairs(
    split: CorpusSplit,
    candidate_lists: Sequence[CandidateList] | Mapping[str, CandidateList],
    kb: KnowledgeBase,
    mode: RankMode,
    *,
    window: int = DEFAULT_WINDOW,
    marking: bool = True,
) -> TrainingEmission:
    """Emit one labeled pair per (mention, candidate).

    CL pairs carry that candidate's own sequence; LISTWISE pairs share
    the mention's single listwise sequence, so both modes use the same
    wire format. A mention whose gold CUI was not retrieved contributes
    all-negative pairs and is counted in ``gold_missed``.
    """
    if isinstance(candidate_lists, Mapping):
        by_id = dict(candidate_lists)
    else:
        by_id = {cl.mention_id: cl for cl in candidate_lists}

    pairs: list[TrainingPair] = []
    gold_missed = 0
    for doc, mention in split.iter_mentions():
        if mention.gold_cui is None:
            raise ValidationError(
                f"mention {mention.mention_id} has no gold CUI; training pairs need labels"
            )
        cl = by_id.get(mention.mention_id)
        if cl is None:
            raise ValidationError(f"no candidate list for mention {mention.mention_id}")
        rank_input = build_rank_input(
            mention, doc, cl, kb, mode, window=window, marking=marking
        )
        if mention.gold_cui not in rank_input.candidate_cuis:
            gold_missed += 1
        for i, cui in enumerate(rank_input.candidate_cuis):
            sequence = (
                rank_input.sequences[0]
                if mode is RankMode.LISTWISE
                else rank_input.sequences[i]
            )
            pairs.append(
                TrainingPair(mention.mention_id, sequence, int(cui == mention.gold_cui), cui)
            )
    return TrainingEmission(pairs, gold_missed)


def write_training_pairs(pairs: Iterable[TrainingPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "mention_id": pair.mention_id,
                        "sequence": pair.sequence,
                        "label": pair.label,
                        "cui": pair.cui,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
