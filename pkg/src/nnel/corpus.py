"""Corpus parsing, validation, conversion, and splitting.

Documents carry character-offset mention annotations that may nest or
overlap. Offsets are Unicode code-point offsets into NFC-normalized text,
which keeps spans stable for mixed English/Russian sources. Two input
formats are supported: a JSONL interchange format (one document per line)
and standoff annotation files (`T.../N...` lines next to a plain-text
file).
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

#: Entity types kept by the augmentation converters. Everything else must
#: be mapped onto one of these or dropped.
CANONICAL_TYPES = ("DISO", "CHEM", "ANATOMY")

#: Sentinel target in a type map meaning "discard mentions of this tag".
DROP = "DROP"


class Language(str, Enum):
    EN = "EN"
    RU = "RU"

    @classmethod
    def parse(cls, value: str) -> "Language":
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ParseError(f"unknown language code {value!r} (expected EN or RU)") from None


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True, slots=True)
class LinkedMention:
    """A mention span inside a document, optionally linked to a gold CUI.

    ``entity_type`` is an open string at parse time: raw corpora carry
    source tags (UMLS semantic types, NEREL-BIO tags such as MEDPROC) that
    only become one of :data:`CANONICAL_TYPES` after ``convert_and_filter``.
    """

    mention_id: str
    start: int
    end: int
    surface: str
    entity_type: str
    gold_cui: str | None = None


@dataclass(frozen=True, slots=True)
class Document:
    doc_id: str
    text: str
    language: Language
    mentions: tuple[LinkedMention, ...]


@dataclass(frozen=True, slots=True)
class CorpusSplit:
    name: str
    documents: tuple[Document, ...]

    def iter_mentions(self) -> Iterator[tuple[Document, LinkedMention]]:
        for doc in self.documents:
            for mention in doc.mentions:
                yield doc, mention

    @property
    def n_mentions(self) -> int:
        return sum(len(doc.mentions) for doc in self.documents)


def _validate_mention(mention: LinkedMention, text: str) -> None:
    if mention.start >= mention.end:
        raise ValidationError(
            f"mention {mention.mention_id}: empty or inverted span "
            f"({mention.start}, {mention.end})"
        )
    if mention.start < 0 or mention.end > len(text):
        raise ValidationError(
            f"mention {mention.mention_id}: span ({mention.start}, {mention.end}) "
            f"outside document of length {len(text)}"
        )
    if mention.surface != text[mention.start : mention.end]:
        raise ValidationError(
            f"mention {mention.mention_id}: surface {mention.surface!r} does not "
            f"match document span {text[mention.start:mention.end]!r}"
        )
    if not mention.entity_type:
        raise ValidationError(f"mention {mention.mention_id}: empty entity type")


def validate_document(doc: Document) -> None:
    seen: set[str] = set()
    for mention in doc.mentions:
        if mention.mention_id in seen:
            raise ValidationError(f"duplicate mention_id {mention.mention_id!r} in {doc.doc_id}")
        seen.add(mention.mention_id)
        _validate_mention(mention, doc.text)


# ---------------------------------------------------------------------------
# JSONL interchange format


def parse_jsonl_corpus(path: str | Path, name: str | None = None) -> CorpusSplit:
    """Parse a JSONL corpus: one JSON document object per line.

    Each object needs ``doc_id``, ``text``, ``language`` and ``mentions``;
    each mention needs ``mention_id``, ``start``, ``end``, ``entity_type``
    and may carry ``surface`` (verified against the span) and ``gold_cui``.
    """
    path = Path(path)
    documents: list[Document] = []
    doc_ids: set[str] = set()
    mention_ids: set[str] = set()
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
                doc = _document_from_obj(obj)
            except (ParseError, ValidationError) as exc:
                raise type(exc)(f"{path}: line {lineno}: {exc}") from None
            if doc.doc_id in doc_ids:
                raise ValidationError(f"{path}: line {lineno}: duplicate doc_id {doc.doc_id!r}")
            doc_ids.add(doc.doc_id)
            for mention in doc.mentions:
                if mention.mention_id in mention_ids:
                    raise ValidationError(
                        f"{path}: line {lineno}: duplicate mention_id {mention.mention_id!r}"
                    )
                mention_ids.add(mention.mention_id)
            documents.append(doc)
    return CorpusSplit(name or path.stem, tuple(documents))


def _document_from_obj(obj: Mapping) -> Document:
    for key in ("doc_id", "text", "language", "mentions"):
        if key not in obj:
            raise ParseError(f"document object missing field {key!r}")
    text = _nfc(str(obj["text"]))
    language = Language.parse(obj["language"])
    mentions = []
    for m in obj["mentions"]:
        for key in ("mention_id", "start", "end", "entity_type"):
            if key not in m:
                raise ParseError(f"mention object missing field {key!r}")
        start, end = int(m["start"]), int(m["end"])
        if not (0 <= start <= len(text)) or end > len(text):
            raise ValidationError(
                f"mention {m['mention_id']}: span ({start}, {end}) outside "
                f"document of length {len(text)}"
            )
        surface = text[start:end]
        given = m.get("surface")
        if given is not None and _nfc(given) != surface:
            raise ValidationError(
                f"mention {m['mention_id']}: surface {given!r} does not match "
                f"document span {surface!r}"
            )
        mention = LinkedMention(
            mention_id=str(m["mention_id"]),
            start=start,
            end=end,
            surface=surface,
            entity_type=str(m["entity_type"]),
            gold_cui=(str(m["gold_cui"]) if m.get("gold_cui") is not None else None),
        )
        _validate_mention(mention, text)
        mentions.append(mention)
    doc = Document(str(obj["doc_id"]), text, language, tuple(mentions))
    validate_document(doc)
    return doc


def write_jsonl_corpus(split: CorpusSplit, path: str | Path) -> None:
    """Write a corpus in the JSONL interchange format (round-trips with
    ``parse_jsonl_corpus`` up to field equality)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in split.documents:
            obj = {
                "doc_id": doc.doc_id,
                "text": doc.text,
                "language": doc.language.value,
                "mentions": [
                    {
                        "mention_id": m.mention_id,
                        "start": m.start,
                        "end": m.end,
                        "surface": m.surface,
                        "entity_type": m.entity_type,
                        **({"gold_cui": m.gold_cui} if m.gold_cui is not None else {}),
                    }
                    for m in doc.mentions
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Standoff format


def parse_standoff_corpus(
    text_path: str | Path,
    ann_path: str | Path,
    language: Language,
    doc_id: str | None = None,
) -> Document:
    """Parse one standoff-annotated document.

    The annotation file uses ``T<id>\\t<TAG> <start> <end>\\t<surface>``
    entity lines plus ``N<id>\\tReference T<id> <KB>:<CUI>`` normalization
    lines. Mention ids are prefixed with the doc id so they stay unique
    when many standoff files are merged into one corpus.
    """
    text_path = Path(text_path)
    ann_path = Path(ann_path)
    text = _nfc(text_path.read_text(encoding="utf-8"))
    doc_id = doc_id or text_path.stem

    spans: dict[str, tuple[str, int, int]] = {}
    order: list[str] = []
    norms: dict[str, str] = {}

    with open(ann_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            if line.startswith("T"):
                parts = line.split("\t")
                if len(parts) < 3:
                    raise ParseError("entity line needs 3 tab-separated columns",
                                     path=str(ann_path), line=lineno)
                tid, meta, surface = parts[0], parts[1], parts[2]
                fields = meta.split()
                if len(fields) != 3:
                    raise ParseError(f"expected '<TAG> <start> <end>', got {meta!r}",
                                     path=str(ann_path), line=lineno)
                tag = fields[0]
                try:
                    start, end = int(fields[1]), int(fields[2])
                except ValueError:
                    raise ParseError(f"non-integer offsets in {meta!r}",
                                     path=str(ann_path), line=lineno) from None
                if tid in spans:
                    raise ValidationError(f"{ann_path}: line {lineno}: duplicate id {tid}")
                if start < 0 or end > len(text) or start >= end:
                    raise ValidationError(
                        f"{ann_path}: line {lineno}: {tid}: offsets ({start}, {end}) "
                        f"out of range for {len(text)}-char text"
                    )
                if _nfc(surface) != text[start:end]:
                    raise ValidationError(
                        f"{ann_path}: line {lineno}: {tid}: surface {surface!r} does "
                        f"not match text span {text[start:end]!r}"
                    )
                spans[tid] = (tag, start, end)
                order.append(tid)
            elif line.startswith("N"):
                parts = line.split("\t")
                if len(parts) < 2:
                    raise ParseError("normalization line needs 2 tab-separated columns",
                                     path=str(ann_path), line=lineno)
                nid, rest = parts[0], parts[1]
                fields = rest.split()
                if len(fields) != 3 or fields[0] != "Reference":
                    raise ParseError(f"expected 'Reference T<id> <KB>:<CUI>', got {rest!r}",
                                     path=str(ann_path), line=lineno)
                ref, kb_ref = fields[1], fields[2]
                cui = kb_ref.split(":", 1)[1] if ":" in kb_ref else kb_ref
                if not cui:
                    raise ParseError(f"empty CUI in {kb_ref!r}", path=str(ann_path), line=lineno)
                if ref in norms:
                    raise ValidationError(
                        f"{ann_path}: line {lineno}: {nid}: {ref} already has a normalization"
                    )
                # Forward references are legal; dangling ones are caught below.
                norms[ref] = cui
            # Other standoff line types (relations, attributes) do not
            # affect linking and are skipped.

    dangling = sorted(set(norms) - set(spans))
    if dangling:
        raise ValidationError(f"{ann_path}: dangling normalization reference to {dangling[0]}")

    mentions = tuple(
        LinkedMention(
            mention_id=f"{doc_id}/{tid}",
            start=spans[tid][1],
            end=spans[tid][2],
            surface=text[spans[tid][1] : spans[tid][2]],
            entity_type=spans[tid][0],
            gold_cui=norms.get(tid),
        )
        for tid in order
    )
    doc = Document(doc_id, text, language, mentions)
    validate_document(doc)
    return doc


# ---------------------------------------------------------------------------
# Conversion and merging


def load_type_map(path: str | Path) -> dict[str, str]:
    """Read a two-column TSV ``source_tag<TAB>target`` type map.

    Targets must be one of the canonical entity types or ``DROP``.
    """
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected 'source<TAB>target'", path=str(path), line=lineno)
            source, target = parts[0].strip(), parts[1].strip()
            if target not in CANONICAL_TYPES and target != DROP:
                raise ParseError(
                    f"target {target!r} is not one of {CANONICAL_TYPES} or {DROP}",
                    path=str(path), line=lineno,
                )
            if source in mapping and mapping[source] != target:
                raise ParseError(f"conflicting targets for source tag {source!r}",
                                 path=str(path), line=lineno)
            mapping[source] = target
    return mapping


def convert_and_filter(split: CorpusSplit, type_map: Mapping[str, str]) -> CorpusSplit:
    """Map source entity tags and keep only the canonical three types.

    Canonical tags not present in the map keep themselves, which makes
    the filter idempotent. Documents whose mention list becomes empty are
    retained with zero mentions.
    """
    for target in type_map.values():
        if target not in CANONICAL_TYPES and target != DROP:
            raise ValidationError(f"type map target {target!r} is not canonical or DROP")

    unmapped = sorted(
        {
            m.entity_type
            for _, m in split.iter_mentions()
            if m.entity_type not in type_map and m.entity_type not in CANONICAL_TYPES
        }
    )
    if unmapped:
        raise ValidationError(f"source tags missing from type map: {', '.join(unmapped)}")

    documents = []
    for doc in split.documents:
        kept = []
        for m in doc.mentions:
            target = type_map.get(m.entity_type, m.entity_type)
            if target == DROP:
                continue
            kept.append(m if target == m.entity_type else replace(m, entity_type=target))
        documents.append(replace(doc, mentions=tuple(kept)))
    return CorpusSplit(split.name, tuple(documents))


def merge_splits(splits: Iterable[CorpusSplit], new_name: str) -> CorpusSplit:
    """Concatenate corpora, preserving document order; ids must stay unique."""
    documents: list[Document] = []
    doc_ids: set[str] = set()
    mention_ids: set[str] = set()
    for split in splits:
        for doc in split.documents:
            if doc.doc_id in doc_ids:
                raise ValidationError(f"duplicate doc_id {doc.doc_id!r} across merged corpora")
            doc_ids.add(doc.doc_id)
            for m in doc.mentions:
                if m.mention_id in mention_ids:
                    raise ValidationError(
                        f"duplicate mention_id {m.mention_id!r} across merged corpora"
                    )
                mention_ids.add(m.mention_id)
            documents.append(doc)
    return CorpusSplit(new_name, tuple(documents))
