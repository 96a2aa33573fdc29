"""Model loading, special-token registration, pooling, and scorer heads."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn
from transformers import AutoModel, AutoTokenizer

log = logging.getLogger(__name__)

MENTION_START = "[Ms]"
MENTION_END = "[Me]"
DEFAULT_K_MAX = 10


def special_tokens(k_max: int = DEFAULT_K_MAX) -> list[str]:
    """Boundary cues plus one slot marker per candidate position."""
    return [MENTION_START, MENTION_END] + [f"[ST{i}]" for i in range(k_max)]


@dataclass
class BridgeConfig:
    model_name: str
    device: str = "cpu"
    batch_size: int = 16
    max_length: int = 256
    pooling: str = "mean"  # mean-token export pooling; "cls" also supported
    k_max: int = DEFAULT_K_MAX
    learning_rate: float = 1e-5  # paper grid: 7e-6 or 1e-5
    epochs: int = 5
    seed: int = 0
    extra_special_tokens: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.pooling not in ("mean", "cls"):
            raise ValueError(f"pooling must be mean or cls, got {self.pooling!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def load_tokenizer_and_encoder(config: BridgeConfig):
    """Load the checkpoint and register the marker tokens.

    Every registered special token must tokenize to a single id; this is
    asserted at startup because a split marker would silently corrupt
    listwise logit extraction.
    """
    tokenizer = AutoTokenizer.from_pretrained(config.model_name)
    encoder = AutoModel.from_pretrained(config.model_name)
    markers = special_tokens(config.k_max) + list(config.extra_special_tokens)
    added = tokenizer.add_special_tokens({"additional_special_tokens": markers})
    if added:
        encoder.resize_token_embeddings(len(tokenizer))
    for token in markers:
        pieces = tokenizer.tokenize(f"a {token} b")
        if token not in pieces:
            raise RuntimeError(f"special token {token!r} does not survive tokenization")
        token_id = tokenizer.convert_tokens_to_ids(token)
        if token_id == tokenizer.unk_token_id:
            raise RuntimeError(f"special token {token!r} maps to UNK")
    encoder.to(config.device)
    encoder.eval()
    return tokenizer, encoder


def pool_hidden(hidden: torch.Tensor, attention_mask: torch.Tensor, pooling: str):
    """Reduce (batch, seq, dim) hidden states to (batch, dim)."""
    if pooling == "cls":
        return hidden[:, 0]
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1)
    return summed / counts


class ScoringModel(nn.Module):
    """Encoder plus a shared linear head producing one logit per position.

    CL mode reads the logit at the first token of each sequence;
    LISTWISE mode reads logits at the [ST_i] marker positions of a single
    sequence, one per candidate.
    """

    def __init__(self, tokenizer, encoder, k_max: int = DEFAULT_K_MAX):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(encoder.config.hidden_size, 1)
        self._tokenizer = tokenizer
        self._st_ids = [
            tokenizer.convert_tokens_to_ids(f"[ST{i}]") for i in range(k_max)
        ]

    @property
    def tokenizer(self):
        return self._tokenizer

    def _encode(self, sequences: list[str], device, max_length: int):
        batch = self._tokenizer(
            sequences,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=max_length,
        )
        return {key: value.to(device) for key, value in batch.items()}

    def score_cl(self, sequences: list[str], device="cpu", max_length: int = 256):
        """One binary logit per sequence (first-token representation)."""
        batch = self._encode(sequences, device, max_length)
        hidden = self.encoder(**batch).last_hidden_state
        return self.head(hidden[:, 0]).squeeze(-1)

    def score_listwise(self, sequence: str, device="cpu", max_length: int = 512):
        """Logits at the [ST_i] marker positions of one packed sequence."""
        batch = self._encode([sequence], device, max_length)
        hidden = self.encoder(**batch).last_hidden_state[0]
        input_ids = batch["input_ids"][0].tolist()
        marker_set = set(self._st_ids)
        positions = [i for i, token_id in enumerate(input_ids) if token_id in marker_set]
        if not positions:
            raise ValueError("listwise sequence contains no [ST] markers "
                             "(or they were truncated away)")
        return self.head(hidden[positions]).squeeze(-1)


def save_checkpoint(model: ScoringModel, config: BridgeConfig, out_dir: str | Path):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.tokenizer.save_pretrained(out_dir)
    model.encoder.save_pretrained(out_dir)
    torch.save(model.head.state_dict(), out_dir / "head.pt")
    with open(out_dir / "bridge.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"pooling": config.pooling, "k_max": config.k_max,
             "max_length": config.max_length},
            fh, indent=2,
        )


def load_scoring_model(config: BridgeConfig) -> ScoringModel:
    """Build a scoring model from a base checkpoint or a saved directory.

    For a fresh base model the head is randomly initialized (seeded);
    a directory written by ``save_checkpoint`` restores the trained head.
    """
    bridge_meta = Path(config.model_name) / "bridge.json"
    if bridge_meta.exists():
        with open(bridge_meta, encoding="utf-8") as fh:
            meta = json.load(fh)
        config.k_max = meta.get("k_max", config.k_max)
        config.pooling = meta.get("pooling", config.pooling)
    # Seeded before loading: resizing the token embeddings for the added
    # markers draws random rows, and head init follows.
    torch.manual_seed(config.seed)
    tokenizer, encoder = load_tokenizer_and_encoder(config)
    model = ScoringModel(tokenizer, encoder, k_max=config.k_max)
    head_path = Path(config.model_name) / "head.pt"
    if head_path.exists():
        model.head.load_state_dict(torch.load(head_path, map_location=config.device))
        log.info("restored scoring head from %s", head_path)
    model.to(config.device)
    model.eval()
    return model
