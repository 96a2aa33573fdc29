"""Fine-tune the ranking encoder on emitted training pairs.

CL pairs are independent binary decisions trained with cross-entropy
(binary logits); LISTWISE groups share one packed sequence per mention
and train a softmax over the k marker logits against the gold position.
Defaults follow the published grid: learning rate 7e-6 or 1e-5, at most
5 epochs.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .modeling import BridgeConfig, ScoringModel, load_scoring_model, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainingLog:
    mode: str
    epochs: int
    step_losses: list[float]
    epoch_losses: list[float]
    skipped_groups: int
    no_positives: bool

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2)


def read_training_pairs(path: str | Path) -> list[dict]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            for key in ("mention_id", "sequence", "label", "cui"):
                if key not in obj:
                    raise ValueError(f"{path}: line {lineno}: missing field {key!r}")
            if obj["label"] not in (0, 1):
                raise ValueError(f"{path}: line {lineno}: label must be 0 or 1")
            pairs.append(obj)
    if not pairs:
        raise ValueError(f"{path}: no training pairs")
    return pairs


def _cl_batches(pairs: list[dict], batch_size: int):
    for start in range(0, len(pairs), batch_size):
        window = pairs[start : start + batch_size]
        yield [p["sequence"] for p in window], [float(p["label"]) for p in window]


def _listwise_groups(pairs: list[dict]):
    groups: OrderedDict[str, list[dict]] = OrderedDict()
    for pair in pairs:
        groups.setdefault(pair["mention_id"], []).append(pair)
    return groups


def finetune_ranker(
    pairs_path: str | Path,
    config: BridgeConfig,
    out_dir: str | Path,
    mode: str = "CL",
) -> TrainingLog:
    """Train the scoring head (and encoder) and save a servable checkpoint."""
    if mode not in ("CL", "LISTWISE"):
        raise ValueError(f"mode must be CL or LISTWISE, got {mode!r}")
    pairs = read_training_pairs(pairs_path)
    no_positives = not any(p["label"] == 1 for p in pairs)
    if no_positives:
        log.warning("training pairs contain no positives; the head will only see negatives")

    torch.manual_seed(config.seed)
    model = load_scoring_model(config)
    model.train()

    step_losses: list[float] = []
    epoch_losses: list[float] = []
    skipped_groups = 0

    if config.epochs > 0:
        optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
        bce = nn.BCEWithLogitsLoss()
        for epoch in range(config.epochs):
            epoch_sum, epoch_steps = 0.0, 0
            if mode == "CL":
                for sequences, labels in _cl_batches(pairs, config.batch_size):
                    logits = model.score_cl(sequences, device=config.device,
                                            max_length=config.max_length)
                    loss = bce(logits, torch.tensor(labels, device=config.device))
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    step_losses.append(loss.item())
                    epoch_sum += step_losses[-1]
                    epoch_steps += 1
            else:
                for mention_id, group in _listwise_groups(pairs).items():
                    labels = [p["label"] for p in group]
                    if sum(labels) != 1:
                        skipped_groups += 1
                        continue
                    logits = model.score_listwise(
                        group[0]["sequence"], device=config.device,
                        max_length=max(config.max_length, 512),
                    )
                    if len(logits) != len(group):
                        raise ValueError(
                            f"mention {mention_id}: {len(logits)} marker logits for "
                            f"{len(group)} candidates"
                        )
                    target = torch.tensor(labels.index(1), device=config.device)
                    loss = nn.functional.cross_entropy(logits.unsqueeze(0),
                                                       target.unsqueeze(0))
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    step_losses.append(loss.item())
                    epoch_sum += step_losses[-1]
                    epoch_steps += 1
            if epoch_steps == 0:
                raise ValueError("no trainable batches (all groups skipped?)")
            epoch_losses.append(epoch_sum / epoch_steps)
            log.info("epoch %d/%d: mean loss %.4f", epoch + 1, config.epochs,
                     epoch_losses[-1])

    model.eval()
    save_checkpoint(model, config, out_dir)
    training_log = TrainingLog(
        mode=mode,
        epochs=config.epochs,
        step_losses=step_losses,
        epoch_losses=epoch_losses,
        skipped_groups=skipped_groups,
        no_positives=no_positives,
    )
    training_log.write(Path(out_dir) / "training_log.json")
    return training_log
