"""Batch export of unit-normalized text embeddings to EMB1 files.

Concept vectors are computed once per encoder and persisted; the engine
attaches them by entry order. Inputs are either a dictionary TSV
(``cui<TAB>name<TAB>lang<TAB>type``, one vector per row, ids are the row
indices) or a generic texts TSV (``id<TAB>text``, used for query
embeddings keyed by mention id).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .emb1 import write_emb1
from .modeling import BridgeConfig, load_tokenizer_and_encoder, pool_hidden

log = logging.getLogger(__name__)


@dataclass
class ExportStats:
    rows: int
    dim: int
    truncated: int


def read_dictionary_texts(path: str | Path) -> tuple[list[str], list[str]]:
    ids, texts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 TSV columns")
            name = parts[1].strip()
            if not name:
                raise ValueError(f"{path}: line {lineno}: empty name")
            ids.append(str(len(ids)))
            texts.append(name)
    return ids, texts


def read_plain_texts(path: str | Path) -> tuple[list[str], list[str]]:
    ids, texts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2 or not parts[1]:
                raise ValueError(f"{path}: line {lineno}: expected 'id<TAB>text'")
            ids.append(parts[0])
            texts.append(parts[1])
    return ids, texts


def _encode_batch(tokenizer, encoder, texts, config: BridgeConfig) -> np.ndarray:
    batch = tokenizer(
        texts,
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=config.max_length,
    )
    batch = {key: value.to(config.device) for key, value in batch.items()}
    with torch.inference_mode():
        hidden = encoder(**batch).last_hidden_state
        pooled = pool_hidden(hidden, batch["attention_mask"], config.pooling)
    return pooled.cpu().float().numpy()


def export_embeddings(
    input_path: str | Path,
    out_path: str | Path,
    config: BridgeConfig,
    kind: str = "dictionary",
) -> ExportStats:
    """Embed every input row and write an EMB1 file in input order.

    Rows are L2-normalized before writing (checked to be unit within
    1e-3). An out-of-memory failure retries once at half batch size.
    Over-length inputs are truncated; the count is reported.
    """
    if kind == "dictionary":
        ids, texts = read_dictionary_texts(input_path)
    elif kind == "texts":
        ids, texts = read_plain_texts(input_path)
    else:
        raise ValueError(f"unknown export kind {kind!r}")
    if not ids:
        raise ValueError(f"{input_path}: nothing to embed")

    tokenizer, encoder = load_tokenizer_and_encoder(config)

    truncated = 0
    for text in texts:
        if len(tokenizer(text)["input_ids"]) > config.max_length:
            truncated += 1
    if truncated:
        log.warning("%d of %d inputs exceed max_length=%d and were truncated",
                    truncated, len(texts), config.max_length)

    chunks = []
    batch_size = config.batch_size
    start = 0
    while start < len(texts):
        window = texts[start : start + batch_size]
        try:
            chunks.append(_encode_batch(tokenizer, encoder, window, config))
        except RuntimeError as exc:
            if "out of memory" not in str(exc).lower() or batch_size == 1:
                raise
            # One bounded retry at half the batch size, then give up.
            batch_size = max(1, batch_size // 2)
            log.warning("OOM at batch size %d; retrying at %d", config.batch_size, batch_size)
            if config.device.startswith("cuda"):
                torch.cuda.empty_cache()
            continue
        start += len(window)

    vectors = np.concatenate(chunks, axis=0).astype(np.float32)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ValueError("encoder produced a zero vector")
    vectors = vectors / norms
    residual = np.abs(np.linalg.norm(vectors, axis=1) - 1.0).max()
    if residual > 1e-3:
        raise ValueError(f"normalization failed: residual {residual}")

    write_emb1(out_path, vectors, ids)
    return ExportStats(rows=len(ids), dim=vectors.shape[1], truncated=truncated)
