"""Bridge test fixtures: a tiny randomly-initialized local checkpoint.

Real biomedical checkpoints are not reachable from the test environment,
so the bridge is exercised with a structurally identical miniature BERT
(32-dim hidden, WordPiece over ASCII) built on disk. Everything the
bridge does — special-token registration, pooling, marker-logit
extraction, protocol serving — is architecture-independent.
"""

from __future__ import annotations

import sys
from pathlib import Path

import pytest
import torch

HIDDEN_SIZE = 32

_VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + list("abcdefghijklmnopqrstuvwxyz0123456789")
    + ["##" + c for c in "abcdefghijklmnopqrstuvwxyz0123456789"]
    + ["#", "|", "(", ")", "-", ".", ",", "[", "]", "good", "bad"]
)


def build_tiny_checkpoint(directory: Path) -> Path:
    from tokenizers import BertWordPieceTokenizer
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    directory.mkdir(parents=True, exist_ok=True)
    vocab_path = directory / "vocab.txt"
    vocab_path.write_text("\n".join(_VOCAB) + "\n", encoding="utf-8")
    wordpiece = BertWordPieceTokenizer(vocab=str(vocab_path), lowercase=True)
    wordpiece.save(str(directory / "tokenizer.json"))
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_file=str(directory / "tokenizer.json"),
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    tokenizer.save_pretrained(directory)
    config = BertConfig(
        vocab_size=len(_VOCAB),
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=512,
    )
    torch.manual_seed(1234)
    BertModel(config).save_pretrained(directory)
    return directory


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> Path:
    return build_tiny_checkpoint(tmp_path_factory.mktemp("tiny-encoder"))


@pytest.fixture(scope="session")
def serve_cmd(tiny_model_dir):
    def command(mode: str = "CL", model: Path | None = None) -> str:
        target = model if model is not None else tiny_model_dir
        return (f"{sys.executable} -m nnel_bridge.cli serve "
                f"--model {target} --mode {mode}")

    return command


def write_dictionary(path: Path, n: int) -> Path:
    rows = []
    for i in range(n):
        rows.append(f"CUI{i:04d}\tconcept {i:03d} alpha beta\tEN\tDISO")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path
