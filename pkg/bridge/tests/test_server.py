"""The scorer server against the engine's protocol client and checks.

The server runs as a real subprocess and is driven only through the
wire protocol; model loading makes each connection slow to start, so
timeouts are generous.
"""

import math

import pytest

from nnel.marking import RankInput, RankMode
from nnel.ranking import ScorerClient, ScorerKind, ScorerSpec

TIMEOUT = 120.0


def spec_for(cmd, mode=RankMode.CL):
    return ScorerSpec(ScorerKind.EXTERNAL, mode, endpoint=cmd,
                      timeout=TIMEOUT, retries=0)


def cl_input(mention_id, names, context="the [Ms] probe [Me] context"):
    return RankInput(
        mention_id,
        RankMode.CL,
        tuple(f"{context} [SEP] {name}" for name in names),
        tuple(f"C{i}" for i in range(len(names))),
        tuple(names),
        "probe",
    )


def listwise_input(mention_id, k, context="the [Ms] probe [Me] context"):
    names = tuple(f"name {i}" for i in range(k))
    tail = " ".join(f"[ST{i}] {name}" for i, name in enumerate(names))
    return RankInput(
        mention_id,
        RankMode.LISTWISE,
        (f"{context} [SEP] {tail}",),
        tuple(f"C{i}" for i in range(k)),
        names,
        "probe",
    )


class TestServerScoring:
    def test_cl_request_returns_one_score_per_sequence(self, serve_cmd):
        with ScorerClient(spec_for(serve_cmd("CL"))) as client:
            scores = client.score_batch(
                [cl_input("m1", [f"candidate {i}" for i in range(10)])]
            )
        assert len(scores[0]) == 10
        assert all(math.isfinite(s) for s in scores[0])

    def test_listwise_request_returns_marker_logits(self, serve_cmd):
        with ScorerClient(spec_for(serve_cmd("LISTWISE"), RankMode.LISTWISE)) as client:
            scores = client.score_batch([listwise_input("m1", 7)])
        assert len(scores[0]) == 7
        assert all(math.isfinite(s) for s in scores[0])

    def test_untrained_head_scores_are_finite_on_ambiguous_fixture(self, serve_cmd):
        # No accuracy claim for an untrained head: finiteness only.
        names = ["wrinkly skin syndrome", "weaver-smith syndrome"]
        with ScorerClient(spec_for(serve_cmd("CL"))) as client:
            scores = client.score_batch(
                [cl_input("wss", names, context="the [Ms] wss [Me] abbreviation")]
            )
        assert len(scores[0]) == 2
        assert all(math.isfinite(s) for s in scores[0])

    def test_scoring_is_deterministic_within_a_connection(self, serve_cmd):
        probe = cl_input("m1", ["candidate a", "candidate b"])
        again = cl_input("m2", ["candidate a", "candidate b"])
        with ScorerClient(spec_for(serve_cmd("CL"))) as client:
            first = client.score_batch([probe])[0]
            second = client.score_batch([again])[0]
        assert first == pytest.approx(second, abs=1e-6)

    def test_mode_mismatch_is_an_error_response(self, serve_cmd):
        # The client validates its mode against the server's hello: a CL
        # client connecting to a LISTWISE server must fail the handshake.
        from nnel.errors import ProtocolError

        with pytest.raises(ProtocolError, match="mode"):
            with ScorerClient(spec_for(serve_cmd("LISTWISE"), RankMode.CL)) as client:
                client.score_batch([cl_input("m1", ["x"])])
