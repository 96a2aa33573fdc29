"""Concept dictionary storage and the EMB1 embedding file format.

The knowledge base is ingested from a TSV dictionary with one row per
concept name. Embeddings are kept per name entry (not per concept):
synonyms are scored individually at retrieval time and reduced to CUI
level by max score, so every surface form stays searchable.

EMB1 layout (all little-endian, payload at offset 32):

    magic "EMB1" | version u32 | row_count u64 | dim u32 | reserved u32 |
    8 zero pad bytes | row-major f32 payload |
    id table: row_count x (u32 length + UTF-8 entry id)
"""

from __future__ import annotations

import logging
import struct
import unicodedata
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CANONICAL_TYPES, Language
from .errors import ParseError, ValidationError
from .hashing import hash_embed

log = logging.getLogger(__name__)

_EMB1_MAGIC = b"EMB1"
_EMB1_VERSION = 1
# 32-byte header: the 8 trailing pad bytes keep the payload 32-byte aligned.
_EMB1_HEADER = struct.Struct("<4sIQII8x")

#: Unit-norm tolerance; rows further from 1.0 are renormalized on attach.
NORM_TOLERANCE = 1e-4


@dataclass(frozen=True, slots=True)
class Concept:
    cui: str
    names: tuple[tuple[str, Language], ...]
    semantic_type: str


@dataclass(frozen=True, slots=True)
class DictionaryEntry:
    entry_id: int
    cui: str
    name: str
    language: Language


class KnowledgeBase:
    """Concepts plus the per-name entry index (entry ids dense 0..E-1)."""

    def __init__(self, concepts, entries):
        self.concepts: tuple[Concept, ...] = tuple(concepts)
        self.entries: tuple[DictionaryEntry, ...] = tuple(entries)
        self._by_cui = {c.cui: c for c in self.concepts}
        if len(self._by_cui) != len(self.concepts):
            raise ValidationError("duplicate CUI among concepts")
        covered: set[str] = set()
        for i, entry in enumerate(self.entries):
            if entry.entry_id != i:
                raise ValidationError(f"entry ids must be dense, got {entry.entry_id} at {i}")
            if entry.cui not in self._by_cui:
                raise ValidationError(f"entry {i} references unknown CUI {entry.cui!r}")
            covered.add(entry.cui)
        if len(covered) != len(self.concepts):
            orphans = sorted(set(self._by_cui) - covered)
            raise ValidationError(f"concepts without any entry: {', '.join(orphans[:5])}")
        if len(self.entries) < len(self.concepts):
            raise ValidationError("fewer entries than concepts")

    @property
    def concept_count(self) -> int:
        return len(self.concepts)

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    def concept(self, cui: str) -> Concept:
        return self._by_cui[cui]

    def has_cui(self, cui: str) -> bool:
        return cui in self._by_cui


def ingest_dictionary(path: str | Path) -> KnowledgeBase:
    """Build a knowledge base from TSV rows ``cui<TAB>name<TAB>lang<TAB>type``.

    One concept per distinct CUI, one entry per row, entry order equal to
    file order. Duplicate (cui, name, lang) rows are warned about and
    dropped.
    """
    path = Path(path)
    entries: list[DictionaryEntry] = []
    names_by_cui: dict[str, list[tuple[str, Language]]] = {}
    type_by_cui: dict[str, str] = {}
    cui_order: list[str] = []
    seen_rows: set[tuple[str, str, Language]] = set()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError("expected 'cui<TAB>name<TAB>lang<TAB>type'",
                                 path=str(path), line=lineno)
            cui, name, lang_code, sem_type = (p.strip() for p in parts)
            if not cui:
                raise ParseError("empty CUI", path=str(path), line=lineno)
            name = _normalize_name(name)
            if not name:
                raise ParseError("empty name", path=str(path), line=lineno)
            try:
                lang = Language.parse(lang_code)
            except ParseError as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from None
            if sem_type not in CANONICAL_TYPES:
                raise ParseError(
                    f"unknown semantic type {sem_type!r} (expected one of {CANONICAL_TYPES})",
                    path=str(path), line=lineno,
                )
            row_key = (cui, name, lang)
            if row_key in seen_rows:
                log.warning("%s: line %d: duplicate row (%s, %r, %s); skipping",
                            path, lineno, cui, name, lang.value)
                continue
            seen_rows.add(row_key)
            if cui not in names_by_cui:
                names_by_cui[cui] = []
                type_by_cui[cui] = sem_type
                cui_order.append(cui)
            elif type_by_cui[cui] != sem_type:
                log.warning("%s: line %d: CUI %s already typed %s; keeping the first",
                            path, lineno, cui, type_by_cui[cui])
            names_by_cui[cui].append((name, lang))
            entries.append(DictionaryEntry(len(entries), cui, name, lang))

    if not entries:
        raise ValidationError(f"{path}: empty knowledge base")

    concepts = tuple(
        Concept(cui, tuple(names_by_cui[cui]), type_by_cui[cui]) for cui in cui_order
    )
    return KnowledgeBase(concepts, entries)


def _normalize_name(name: str) -> str:
    return unicodedata.normalize("NFC", name)


# ---------------------------------------------------------------------------
# Embedding matrix and EMB1 persistence


@dataclass(slots=True)
class EmbeddingMatrix:
    """Float32 row-major matrix, one unit-norm row per dictionary entry."""

    dim: int
    vectors: np.ndarray
    row_ids: tuple[str, ...]

    @property
    def row_count(self) -> int:
        return int(self.vectors.shape[0])


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Persist the matrix in the EMB1 format; read-back is bit-exact."""
    rows = np.ascontiguousarray(matrix.vectors, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] != matrix.dim:
        raise ValidationError("refusing to write an empty or mis-shaped embedding matrix")
    if len(matrix.row_ids) != rows.shape[0]:
        raise ValidationError("row id count does not match matrix rows")
    if not np.isfinite(rows).all():
        raise ValidationError("matrix contains NaN or Inf values")
    with open(path, "wb") as fh:
        fh.write(_EMB1_HEADER.pack(_EMB1_MAGIC, _EMB1_VERSION, rows.shape[0], matrix.dim, 0))
        fh.write(rows.tobytes())
        for row_id in matrix.row_ids:
            encoded = row_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read an EMB1 file. Values come back bit-exact; no renormalization."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _EMB1_HEADER.size:
        raise ParseError("truncated EMB1 header", path=str(path))
    magic, version, row_count, dim, _reserved = _EMB1_HEADER.unpack_from(data, 0)
    if magic != _EMB1_MAGIC:
        raise ParseError(f"bad magic {magic!r}: not an EMB1 file", path=str(path))
    if version != _EMB1_VERSION:
        raise ParseError(f"unsupported EMB1 version {version}", path=str(path))
    if row_count == 0 or dim == 0:
        raise ParseError("EMB1 file declares an empty matrix", path=str(path))
    payload_end = _EMB1_HEADER.size + row_count * dim * 4
    if len(data) < payload_end:
        raise ParseError("truncated EMB1 payload", path=str(path))
    vectors = (
        np.frombuffer(data, dtype="<f4", count=row_count * dim, offset=_EMB1_HEADER.size)
        .reshape(row_count, dim)
        .copy()
    )
    if not np.isfinite(vectors).all():
        raise ValidationError(f"{path}: NaN or Inf in embedding rows")

    row_ids = []
    offset = payload_end
    for _ in range(row_count):
        if offset + 4 > len(data):
            raise ParseError("truncated EMB1 id table", path=str(path))
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise ParseError("truncated EMB1 id table", path=str(path))
        row_ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    if offset != len(data):
        raise ParseError("trailing bytes after EMB1 id table", path=str(path))
    return EmbeddingMatrix(dim=int(dim), vectors=vectors, row_ids=tuple(row_ids))


def attach_embeddings(kb: KnowledgeBase, path: str | Path) -> tuple[EmbeddingMatrix, int]:
    """Load an EMB1 file and bind it to the knowledge base.

    Rows whose L2 norm deviates from 1 by more than ``NORM_TOLERANCE`` are
    renormalized; the count of such rows is returned alongside the matrix.
    """
    matrix = read_embeddings(path)
    if matrix.row_count != kb.entry_count:
        raise ValidationError(
            f"{path}: embedding rows ({matrix.row_count}) != dictionary entries "
            f"({kb.entry_count})"
        )
    expected = tuple(str(entry.entry_id) for entry in kb.entries)
    if matrix.row_ids != expected:
        raise ValidationError(f"{path}: entry id table does not match dictionary order")

    norms = np.linalg.norm(matrix.vectors, axis=1)
    if (norms == 0).any():
        raise ValidationError(f"{path}: zero-norm embedding row")
    off = np.abs(norms - 1.0) > NORM_TOLERANCE
    renormalized = int(off.sum())
    if renormalized:
        log.warning("%s: renormalized %d of %d rows", path, renormalized, matrix.row_count)
        matrix.vectors[off] = matrix.vectors[off] / norms[off, None]
    return matrix, renormalized


def build_hash_embeddings(kb: KnowledgeBase, dim: int) -> EmbeddingMatrix:
    """Embed every dictionary entry name with the deterministic hash embedder."""
    vectors = np.empty((kb.entry_count, dim), dtype=np.float32)
    for entry in kb.entries:
        vectors[entry.entry_id] = hash_embed(entry.name, dim)
    return EmbeddingMatrix(dim=dim, vectors=vectors,
                           row_ids=tuple(str(e.entry_id) for e in kb.entries))
