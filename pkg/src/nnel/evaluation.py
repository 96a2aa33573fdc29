"""Acc@k metrics, cross-validation, invariance gates, and ablation tables.

Acc@k is the fraction of mentions whose gold CUI appears within the
first k positions of the ranked candidate list. Mentions whose gold was
never retrieved count as misses at every k; they are never excluded.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import CorpusSplit
from .errors import ValidationError
from .ranking import RankedCandidates
from .retrieval import CandidateList

DEFAULT_KS = (1, 5, 10)

#: Evaluation tracks: per-language plus the joint bilingual score.
TRACKS = ("EN", "RU", "BI")


@dataclass(slots=True)
class EvalReport:
    track: str
    n_mentions: int
    acc_at: dict[int, float]
    per_type: dict[str, dict[int, float]] | None = None
    fold_accs: list[float] | None = None


def accuracy_at_k(
    ranked: Sequence[RankedCandidates],
    gold: Mapping[str, str],
    ks: Iterable[int] = DEFAULT_KS,
    *,
    track: str = "BI",
    entity_types: Mapping[str, str] | None = None,
) -> EvalReport:
    """Compute Acc@k over ranked candidate lists against gold CUIs."""
    n = len(ranked)
    if n == 0:
        raise ValidationError("Acc@k is undefined on an empty mention set")
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ValidationError(f"invalid k values {ks}")

    hits = {k: 0 for k in ks}
    type_hits: dict[str, dict[int, int]] = {}
    type_counts: dict[str, int] = {}
    for rc in ranked:
        if rc.mention_id not in gold:
            raise ValidationError(f"no gold CUI for mention {rc.mention_id}")
        position = _gold_position(rc, gold[rc.mention_id])
        for k in ks:
            if position is not None and position <= k:
                hits[k] += 1
        if entity_types is not None:
            etype = entity_types.get(rc.mention_id, "?")
            type_counts[etype] = type_counts.get(etype, 0) + 1
            bucket = type_hits.setdefault(etype, {k: 0 for k in ks})
            for k in ks:
                if position is not None and position <= k:
                    bucket[k] += 1

    acc = {k: hits[k] / n for k in ks}
    for lo, hi in zip(ks, ks[1:]):
        assert acc[lo] <= acc[hi], "Acc@k must be non-decreasing in k"

    per_type = None
    if entity_types is not None:
        per_type = {
            etype: {k: type_hits[etype][k] / type_counts[etype] for k in ks}
            for etype in sorted(type_counts)
        }
    return EvalReport(track, n, acc, per_type=per_type)


def _gold_position(rc: RankedCandidates, gold_cui: str) -> int | None:
    try:
        return rc.order.index(gold_cui) + 1
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# Rank/retrieval invariance gate


@dataclass(slots=True)
class InvarianceReport:
    violations: list[tuple[str, str]]

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.passed:
            return "rank invariance: ok (re-ranking permuted, never changed, candidate sets)"
        lines = [f"rank invariance: {len(self.violations)} violation(s)"]
        lines.extend(f"  {mention_id}: {reason}" for mention_id, reason in self.violations)
        return "\n".join(lines)


def rank_invariance_check(
    candidate_lists: Sequence[CandidateList],
    ranked_lists: Sequence[RankedCandidates],
    gold: Mapping[str, str] | None = None,
) -> InvarianceReport:
    """Verify that re-ranking only permuted each mention's candidate set.

    With gold CUIs supplied, additionally verifies that whole-list
    accuracy is untouched: the gold CUI is in the ranked list exactly
    when it was in the retrieval list.
    """
    violations: list[tuple[str, str]] = []
    by_id = {cl.mention_id: cl for cl in candidate_lists}
    seen = set()
    for rc in ranked_lists:
        cl = by_id.get(rc.mention_id)
        if cl is None:
            violations.append((rc.mention_id, "ranked output for unknown mention"))
            continue
        seen.add(rc.mention_id)
        if len(rc.order) != len(cl.candidates) or set(rc.order) != set(cl.cuis):
            violations.append((rc.mention_id, "candidate set changed by re-ranking"))
            continue
        if gold is not None and rc.mention_id in gold:
            gold_cui = gold[rc.mention_id]
            if (gold_cui in cl.cuis) != (gold_cui in rc.order):
                violations.append((rc.mention_id, "whole-list accuracy changed"))
    for mention_id in by_id:
        if mention_id not in seen:
            violations.append((mention_id, "mention missing from ranked output"))
    return InvarianceReport(violations)


# ---------------------------------------------------------------------------
# Cross-validation


def cross_validate(
    split: CorpusSplit,
    folds: int,
    seed: int,
    run_fn: Callable[[CorpusSplit], EvalReport],
    *,
    track: str = "BI",
) -> EvalReport:
    """Evaluate fold-by-fold and report mean and per-fold Acc@1.

    Folding is by document, never by mention: nested mentions share
    context and must not straddle folds. The shuffle is seeded, so a
    fixed seed reproduces fold assignment exactly.
    """
    if folds < 2:
        raise ValidationError(f"cross-validation needs at least 2 folds, got {folds}")
    documents = list(split.documents)
    if folds > len(documents):
        raise ValidationError(
            f"{folds} folds over {len(documents)} documents leaves empty folds"
        )
    random.Random(seed).shuffle(documents)

    base, extra = divmod(len(documents), folds)
    reports: list[EvalReport] = []
    start = 0
    for fold in range(folds):
        size = base + (1 if fold < extra else 0)
        chunk = documents[start : start + size]
        start += size
        sub = CorpusSplit(f"{split.name}.fold{fold}", tuple(chunk))
        if sub.n_mentions == 0:
            raise ValidationError(f"fold {fold} contains no mentions; use fewer folds")
        reports.append(run_fn(sub))

    ks = sorted(reports[0].acc_at)
    if 1 not in ks:
        raise ValidationError("cross-validation reports must include Acc@1")
    mean_acc = {k: sum(r.acc_at[k] for r in reports) / folds for k in ks}
    return EvalReport(
        track,
        sum(r.n_mentions for r in reports),
        mean_acc,
        fold_accs=[r.acc_at[1] for r in reports],
    )


# ---------------------------------------------------------------------------
# Ablation comparison


@dataclass(slots=True)
class AblationRow:
    track: str
    with_cues: float
    without_cues: float

    @property
    def abs_gain(self) -> float:
        return self.with_cues - self.without_cues

    @property
    def rel_gain(self) -> float:
        if self.with_cues == self.without_cues:
            return 0.0
        return self.abs_gain / self.without_cues

    def gain_text(self) -> str:
        return f"{self.abs_gain:.4f} ({self.rel_gain * 100:.2f}%)"


def ablation_report(with_cues: EvalReport, without_cues: EvalReport) -> AblationRow:
    """Compare Acc@1 with and without boundary cues on the same corpus."""
    if with_cues.track != without_cues.track:
        raise ValidationError(
            f"ablation inputs are from different tracks: "
            f"{with_cues.track} vs {without_cues.track}"
        )
    if with_cues.n_mentions != without_cues.n_mentions:
        raise ValidationError(
            f"ablation inputs cover different corpora: "
            f"{with_cues.n_mentions} vs {without_cues.n_mentions} mentions"
        )
    return AblationRow(with_cues.track, with_cues.acc_at[1], without_cues.acc_at[1])


def format_ablation_table(rows: Sequence[AblationRow]) -> str:
    header = f"{'track':<6} {'w/ cues':>8} {'w/o cues':>9} {'gain':>18}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.track:<6} {row.with_cues:>8.4f} {row.without_cues:>9.4f} "
            f"{row.gain_text():>18}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Report serialization


def report_to_dict(report: EvalReport) -> dict:
    out: dict = {
        "track": report.track,
        "n": report.n_mentions,
        "acc": {str(k): report.acc_at[k] for k in sorted(report.acc_at)},
        "folds": list(report.fold_accs) if report.fold_accs else [],
    }
    if report.per_type is not None:
        out["per_type"] = {
            etype: {str(k): acc[k] for k in sorted(acc)}
            for etype, acc in report.per_type.items()
        }
    return out


def format_report(report: EvalReport) -> str:
    ks = sorted(report.acc_at)
    header = f"{'track':<6} {'n':>7} " + " ".join(f"{'acc@' + str(k):>8}" for k in ks)
    row = f"{report.track:<6} {report.n_mentions:>7} " + " ".join(
        f"{report.acc_at[k]:>8.4f}" for k in ks
    )
    lines = [header, row]
    if report.fold_accs:
        folds = " ".join(f"{acc:.4f}" for acc in report.fold_accs)
        lines.append(f"  folds (acc@1): {folds}")
    if report.per_type:
        for etype, acc in report.per_type.items():
            cells = " ".join(f"{acc[k]:>8.4f}" for k in ks)
            lines.append(f"  {etype:<11} {cells}")
    return "\n".join(lines)


def write_reports_json(reports: Sequence[EvalReport], path: str | Path) -> None:
    """Write reports as a deterministic JSON array (stable key order and
    float formatting, so identical runs produce identical bytes)."""
    payload = [report_to_dict(r) for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
