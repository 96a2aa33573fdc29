"""Scorer protocol server: line-delimited JSON over stdin/stdout.

Handshake (both directions): {"hello": {"protocol": 1, "mode": "CL"}}.
Requests carry {"id", "mode", "sequences"}; replies carry {"id",
"scores"} with exactly one score per candidate. A malformed line gets an
{"error": ...} reply and the connection stays up. All diagnostics go to
stderr; stdout carries only protocol frames.
"""

from __future__ import annotations

import json
import logging
import sys

import torch

from .modeling import BridgeConfig, ScoringModel, load_scoring_model

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


def _reply(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")
    sys.stdout.flush()


def _score_request(model: ScoringModel, msg: dict, mode: str, config: BridgeConfig):
    sequences = msg.get("sequences")
    if not isinstance(sequences, list) or not all(isinstance(s, str) for s in sequences):
        raise ValueError("sequences must be a list of strings")
    request_mode = msg.get("mode")
    if request_mode != mode:
        raise ValueError(f"request mode {request_mode!r} does not match served mode {mode!r}")
    if not sequences:
        return []
    with torch.inference_mode():
        if mode == "CL":
            logits = model.score_cl(sequences, device=config.device,
                                    max_length=config.max_length)
        else:
            if len(sequences) != 1:
                raise ValueError("LISTWISE requests carry exactly one sequence")
            logits = model.score_listwise(sequences[0], device=config.device,
                                          max_length=max(config.max_length, 512))
    scores = [float(v) for v in logits.cpu().tolist()]
    if not all(s == s and abs(s) != float("inf") for s in scores):
        raise ValueError("non-finite score")
    return scores


def serve(config: BridgeConfig, mode: str, stdin=None, stdout=None) -> int:
    """Run the request loop until stdin closes. Returns an exit code."""
    if mode not in ("CL", "LISTWISE"):
        raise ValueError(f"mode must be CL or LISTWISE, got {mode!r}")
    stdin = stdin if stdin is not None else sys.stdin
    log.info("loading model %s", config.model_name)
    model = load_scoring_model(config)
    log.info("serving %s scorer on stdio", mode)

    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            _reply({"error": f"malformed request: {exc}"})
            continue
        if not isinstance(msg, dict):
            _reply({"error": "malformed request: not a JSON object"})
            continue
        if "hello" in msg:
            hello = msg["hello"] if isinstance(msg["hello"], dict) else {}
            if hello.get("protocol") != PROTOCOL_VERSION:
                _reply({"error": f"unsupported protocol {hello.get('protocol')!r}"})
                continue
            _reply({"hello": {"protocol": PROTOCOL_VERSION, "mode": mode}})
            continue
        if "id" not in msg:
            _reply({"error": "request is missing an id"})
            continue
        try:
            scores = _score_request(model, msg, mode, config)
        except Exception as exc:  # stay up: report the error per request
            _reply({"id": msg["id"], "error": str(exc)})
            continue
        _reply({"id": msg["id"], "scores": scores})
    return 0
