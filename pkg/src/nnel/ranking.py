"""Candidate re-ranking: lexical baseline, external scorer protocol, rerank.

Re-ranking is a pure permutation of the retrieval candidates: scores are
"higher is better" reals, sorting is stable, and ties keep the original
retrieval rank. Silent candidate dropping is forbidden; a scorer that
returns the wrong number of scores fails the batch.

The external scorer speaks line-delimited JSON over a byte stream to a
subprocess or TCP socket:

    handshake (both directions):  {"hello": {"protocol": 1, "mode": "CL"}}
    request:   {"id": <mention_id>, "mode": "CL"|"LISTWISE", "sequences": [...]}
    response:  {"id": ..., "scores": [...]}

One response per request; responses may interleave and are correlated by
id. A scorer-side problem comes back as {"id": ..., "error": "..."}.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, ParseError, ProtocolError, ValidationError
from .hashing import dice_similarity
from .marking import RankInput, RankMode
from .retrieval import CandidateList

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 2
DEFAULT_BATCH_SIZE = 32


class ScorerKind(str, Enum):
    LEXICAL_BASELINE = "LEXICAL_BASELINE"
    EXTERNAL = "EXTERNAL"


@dataclass(frozen=True, slots=True)
class ScorerSpec:
    kind: ScorerKind
    mode: RankMode
    endpoint: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    retries: int = DEFAULT_RETRIES

    def __post_init__(self):
        if self.kind is ScorerKind.EXTERNAL and not self.endpoint:
            raise ConfigError("external scorer needs an endpoint (command or tcp:host:port)")
        if self.kind is ScorerKind.LEXICAL_BASELINE and self.mode is not RankMode.CL:
            raise ConfigError("the lexical baseline scores candidates independently (CL only)")


@dataclass(frozen=True, slots=True)
class RankedCandidates:
    mention_id: str
    order: tuple[str, ...]
    scores: tuple[float, ...]

    @classmethod
    def from_retrieval(cls, candidates: CandidateList) -> "RankedCandidates":
        """Treat the retrieval order itself as a ranking (retrieval-stage eval)."""
        return cls(
            candidates.mention_id,
            candidates.cuis,
            tuple(c.score for c in candidates.candidates),
        )


def score_lexical(rank_input: RankInput) -> list[float]:
    """Dice coefficient between the mention surface and each candidate name.

    Deterministic and training-free; an exact string match scores 1.0.
    """
    if rank_input.mode is not RankMode.CL:
        raise ValidationError("lexical baseline requires CL-mode rank inputs")
    return [dice_similarity(rank_input.surface, name) for name in rank_input.candidate_names]


def rerank(candidates: CandidateList, scores: Sequence[float]) -> RankedCandidates:
    """Sort the candidate CUIs by score descending, ties by retrieval rank."""
    if len(scores) != len(candidates.candidates):
        raise ValidationError(
            f"mention {candidates.mention_id}: {len(scores)} scores for "
            f"{len(candidates.candidates)} candidates"
        )
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    cuis = candidates.cuis
    return RankedCandidates(
        candidates.mention_id,
        tuple(cuis[i] for i in order),
        tuple(float(scores[i]) for i in order),
    )


# ---------------------------------------------------------------------------
# Transports


class _SubprocessTransport:
    """Line-delimited JSON over a worker subprocess's stdin/stdout."""

    def __init__(self, command: str):
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start scorer {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"scorer pipe closed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError(f"scorer response timed out after {timeout}s") from None
        if line is None:
            raise ProtocolError("scorer closed the stream")
        return line

    def close(self) -> None:
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
        except OSError:
            pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()


class _SocketTransport:
    """Line-delimited JSON over a TCP connection (endpoint ``tcp:host:port``)."""

    def __init__(self, address: str):
        _, host, port = address.split(":", 2)
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=10)
        except OSError as exc:
            raise ProtocolError(f"cannot connect to scorer at {address}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8")
        self._writer = self._sock.makefile("w", encoding="utf-8")

    def send_line(self, line: str) -> None:
        try:
            self._writer.write(line + "\n")
            self._writer.flush()
        except OSError as exc:
            raise ProtocolError(f"scorer connection closed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._reader.readline()
        except socket.timeout:
            raise ProtocolError(f"scorer response timed out after {timeout}s") from None
        except OSError as exc:
            raise ProtocolError(f"scorer connection failed: {exc}") from exc
        if not line:
            raise ProtocolError("scorer closed the connection")
        return line

    def close(self) -> None:
        for closer in (self._writer.close, self._reader.close, self._sock.close):
            try:
                closer()
            except OSError:
                pass


def _open_transport(endpoint: str):
    if endpoint.startswith("tcp:"):
        return _SocketTransport(endpoint)
    return _SubprocessTransport(endpoint)


# ---------------------------------------------------------------------------
# Client


class ScorerClient:
    """Client for the scorer wire protocol with bounded batch retries."""

    def __init__(self, spec: ScorerSpec):
        if spec.kind is not ScorerKind.EXTERNAL:
            raise ConfigError("ScorerClient needs an EXTERNAL scorer spec")
        self._spec = spec
        self._transport = None

    def __enter__(self) -> "ScorerClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def _ensure_open(self):
        if self._transport is None:
            self._transport = _open_transport(self._spec.endpoint)
            self._handshake()
        return self._transport

    def _handshake(self) -> None:
        self._send({"hello": {"protocol": PROTOCOL_VERSION, "mode": self._spec.mode.value}})
        reply = self._recv()
        hello = reply.get("hello")
        if not isinstance(hello, dict):
            raise ProtocolError(f"expected hello handshake, got {reply!r}")
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(f"scorer speaks protocol {hello.get('protocol')!r}, "
                                f"need {PROTOCOL_VERSION}")
        if hello.get("mode") != self._spec.mode.value:
            raise ProtocolError(f"scorer is in mode {hello.get('mode')!r}, "
                                f"need {self._spec.mode.value}")

    def _send(self, obj: dict) -> None:
        self._transport.send_line(json.dumps(obj, ensure_ascii=False))

    def _recv(self) -> dict:
        line = self._transport.recv_line(self._spec.timeout)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed scorer response: {exc}") from None
        if not isinstance(msg, dict):
            raise ProtocolError(f"scorer response is not an object: {msg!r}")
        return msg

    def score_batch(self, inputs: Sequence[RankInput]) -> list[list[float]]:
        """Score a batch of rank inputs, one score list per input.

        The whole batch is retried on transport or protocol failure
        (bounded, then the error propagates); partial results are never
        returned.
        """
        if not inputs:
            return []
        ids = [ri.mention_id for ri in inputs]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate mention ids in one scorer batch")
        last_error: ProtocolError | None = None
        for _ in range(self._spec.retries + 1):
            try:
                return self._attempt(inputs)
            except ProtocolError as exc:
                last_error = exc
                self.close()
        raise last_error

    def _attempt(self, inputs: Sequence[RankInput]) -> list[list[float]]:
        self._ensure_open()
        expected = {}
        for ri in inputs:
            self._send(
                {"id": ri.mention_id, "mode": ri.mode.value, "sequences": list(ri.sequences)}
            )
            expected[ri.mention_id] = len(ri.candidate_cuis)

        collected: dict[str, list[float]] = {}
        while len(collected) < len(inputs):
            msg = self._recv()
            if "error" in msg:
                raise ProtocolError(f"scorer error for id {msg.get('id')!r}: {msg['error']}")
            mention_id = msg.get("id")
            if mention_id not in expected or mention_id in collected:
                raise ProtocolError(f"unexpected or duplicate response id {mention_id!r}")
            scores = msg.get("scores")
            if not isinstance(scores, list) or not all(
                isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores
            ):
                raise ProtocolError(f"id {mention_id}: scores must be a list of numbers")
            if len(scores) != expected[mention_id]:
                raise ProtocolError(
                    f"id {mention_id}: got {len(scores)} scores, "
                    f"expected {expected[mention_id]}"
                )
            collected[mention_id] = [float(s) for s in scores]
        return [collected[ri.mention_id] for ri in inputs]

    # Raw access for the conformance checker only.
    def send_raw(self, line: str) -> None:
        self._ensure_open()
        self._transport.send_line(line)

    def recv_any(self) -> dict:
        self._ensure_open()
        return self._recv()


def score_external(
    inputs: Sequence[RankInput],
    spec: ScorerSpec,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[list[float]]:
    """Score all inputs through one endpoint connection, batch by batch."""
    if not inputs:
        return []
    out: list[list[float]] = []
    with ScorerClient(spec) as client:
        for start in range(0, len(inputs), batch_size):
            out.extend(client.score_batch(inputs[start : start + batch_size]))
    return out


def rank_corpus(
    rank_inputs: Sequence[RankInput],
    candidate_lists: Sequence[CandidateList],
    spec: ScorerSpec,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[RankedCandidates]:
    """Score and re-order every mention's candidates, preserving corpus order."""
    if len(rank_inputs) != len(candidate_lists):
        raise ValidationError("rank inputs and candidate lists are misaligned")
    for ri, cl in zip(rank_inputs, candidate_lists):
        if ri.mention_id != cl.mention_id:
            raise ValidationError(
                f"rank input {ri.mention_id} does not match candidates {cl.mention_id}"
            )
    if spec.kind is ScorerKind.LEXICAL_BASELINE:
        all_scores = [score_lexical(ri) for ri in rank_inputs]
    else:
        all_scores = score_external(rank_inputs, spec, batch_size=batch_size)
    return [rerank(cl, scores) for cl, scores in zip(candidate_lists, all_scores)]


# ---------------------------------------------------------------------------
# Ranked-candidates file


def write_ranked(ranked: Iterable[RankedCandidates], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rc in ranked:
            fh.write(
                json.dumps(
                    {
                        "mention_id": rc.mention_id,
                        "order": list(rc.order),
                        "scores": list(rc.scores),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_ranked(path: str | Path) -> list[RankedCandidates]:
    path = Path(path)
    out: list[RankedCandidates] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
                out.append(
                    RankedCandidates(
                        str(obj["mention_id"]),
                        tuple(str(c) for c in obj["order"]),
                        tuple(float(s) for s in obj["scores"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad ranked record: {exc}", path=str(path), line=lineno) from None
    return out


# ---------------------------------------------------------------------------
# Protocol conformance


@dataclass(slots=True)
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(slots=True)
class ConformanceReport:
    mode: RankMode
    checks: list[ConformanceCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"scorer protocol conformance ({self.mode.value})"]
        for check in self.checks:
            status = "ok" if check.passed else "FAIL"
            detail = f"  {check.detail}" if check.detail else ""
            lines.append(f"  [{status:>4}] {check.name}{detail}")
        return "\n".join(lines)


def _probe_input(mention_id: str, mode: RankMode, k: int) -> RankInput:
    names = tuple(f"probe name {i}" for i in range(k))
    cuis = tuple(f"PROBE{i}" for i in range(k))
    context = "checking the [Ms] probe [Me] endpoint"
    if mode is RankMode.LISTWISE:
        tail = " ".join(f"[ST{i}] {name}" for i, name in enumerate(names))
        sequences: tuple[str, ...] = (f"{context} [SEP] {tail}",)
    else:
        sequences = tuple(f"{context} [SEP] {name}" for name in names)
    return RankInput(mention_id, mode, sequences, cuis, names, "probe")


def check_endpoint(
    endpoint: str,
    mode: RankMode = RankMode.CL,
    timeout: float = 15.0,
) -> ConformanceReport:
    """Exercise a scorer endpoint against the wire protocol contract.

    Covers the handshake, the empty batch, per-request score counts
    (including k=10), batch correlation with distinct ids, the error
    response to a malformed line, and recovery after that error.
    """
    checks: list[ConformanceCheck] = []
    spec = ScorerSpec(ScorerKind.EXTERNAL, mode, endpoint=endpoint,
                      timeout=timeout, retries=0)
    client = ScorerClient(spec)

    def run(name: str, fn) -> bool:
        try:
            fn()
        except (ProtocolError, ValidationError) as exc:
            checks.append(ConformanceCheck(name, False, str(exc)))
            return False
        checks.append(ConformanceCheck(name, True))
        return True

    try:
        if not run("handshake", client._ensure_open):
            return ConformanceReport(mode, checks)

        run("empty batch", lambda: _expect_equal(client.score_batch([]), []))

        def single():
            scores = client.score_batch([_probe_input("probe-single", mode, 3)])
            _expect_scores(scores, [3])

        run("single request count", single)

        def batch():
            inputs = [_probe_input(f"probe-batch-{i}", mode, i + 1) for i in range(5)]
            scores = client.score_batch(inputs)
            _expect_scores(scores, [i + 1 for i in range(5)])

        run("batch correlation", batch)

        def k10():
            scores = client.score_batch([_probe_input("probe-k10", mode, 10)])
            _expect_scores(scores, [10])

        run("k=10 count", k10)

        def malformed():
            client.send_raw("this is not json")
            reply = client.recv_any()
            if "error" not in reply:
                raise ProtocolError(f"expected an error response, got {reply!r}")

        run("malformed line gets error response", malformed)

        def recovers():
            scores = client.score_batch([_probe_input("probe-recover", mode, 2)])
            _expect_scores(scores, [2])

        run("recovers after error", recovers)
    finally:
        client.close()
    return ConformanceReport(mode, checks)


def _expect_equal(got, want):
    if got != want:
        raise ProtocolError(f"expected {want!r}, got {got!r}")


def _expect_scores(batches: list[list[float]], counts: list[int]):
    if len(batches) != len(counts):
        raise ProtocolError(f"expected {len(counts)} score lists, got {len(batches)}")
    for scores, count in zip(batches, counts):
        if len(scores) != count:
            raise ProtocolError(f"expected {count} scores, got {len(scores)}")
        for s in scores:
            if s != s or s in (float("inf"), float("-inf")):
                raise ProtocolError(f"non-finite score {s!r}")
