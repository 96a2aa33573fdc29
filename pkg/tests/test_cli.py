"""End-to-end CLI behavior: subcommands, exit codes, determinism."""

import json

import pytest

from nnel.cli import EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, build_parser, main
from nnel.corpus import CorpusSplit, write_jsonl_corpus

from conftest import DICTIONARY_ROWS, make_fig_doc, make_ru_doc, make_wss_doc


@pytest.fixture()
def corpus_path(tmp_path, linked_corpus):
    path = tmp_path / "corpus.jsonl"
    write_jsonl_corpus(linked_corpus, path)
    return path


@pytest.fixture()
def kb_path(dictionary_path):
    return dictionary_path


def run(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_pipeline_smoke(self, tmp_path, corpus_path, kb_path):
        out = tmp_path / "run"
        code = run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--scorer", "lexical", "--k", "10", "--marking", "on",
                   "--dim", "128", "--out", out)
        assert code == EXIT_OK
        reports = json.loads((out / "reports.json").read_text())
        tracks = [r["track"] for r in reports]
        assert tracks == ["EN", "RU", "BI"]
        for r in reports:
            assert 0.0 <= r["acc"]["1"] <= r["acc"]["5"] <= r["acc"]["10"] <= 1.0

    def test_k_zero_is_config_error(self, tmp_path, corpus_path, kb_path):
        code = run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--k", "0", "--out", tmp_path / "run")
        assert code == EXIT_VALIDATION

    def test_unknown_flag_is_usage_error(self, tmp_path, corpus_path, kb_path):
        code = run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--frobnicate", "--out", tmp_path / "run")
        assert code == EXIT_USAGE

    def test_missing_file_is_validation_error(self, tmp_path, kb_path):
        code = run("pipeline", "--corpus", tmp_path / "nope.jsonl",
                   "--dictionary", kb_path, "--out", tmp_path / "run")
        assert code == EXIT_VALIDATION

    def test_lexical_with_listwise_is_config_error(self, tmp_path, corpus_path, kb_path):
        code = run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--scorer", "lexical", "--mode", "LISTWISE",
                   "--out", tmp_path / "run")
        assert code == EXIT_VALIDATION


class TestHelp:
    def test_every_flag_is_documented(self, capsys):
        parser = build_parser()
        subparsers = next(
            a for a in parser._actions
            if isinstance(a, type(parser._subparsers._group_actions[0]))
        )
        for name, sub in subparsers.choices.items():
            help_text = sub.format_help()
            for action in sub._actions:
                for option in action.option_strings:
                    assert option in help_text, f"{name}: {option} undocumented"

    def test_help_exits_zero(self):
        assert run("--help") == 0
        assert run("pipeline", "--help") == 0


class TestDeterminism:
    def test_reports_byte_identical_across_threads(self, tmp_path, corpus_path, kb_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        base = ("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                "--scorer", "lexical", "--seed", "7", "--dim", "128")
        assert run(*base, "--threads", "1", "--out", out1) == EXIT_OK
        assert run(*base, "--threads", "4", "--out", out2) == EXIT_OK
        assert (out1 / "reports.json").read_bytes() == (out2 / "reports.json").read_bytes()
        assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()

    def test_manifest_has_config_and_digests(self, tmp_path, corpus_path, kb_path):
        out = tmp_path / "run"
        assert run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--out", out) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["k"] == 10
        assert "threads" not in manifest["config"]
        assert set(manifest["inputs"]) == {"corpus", "dictionary"}
        for digest in manifest["inputs"].values():
            assert len(digest) == 64


class TestStageChaining:
    def test_embed_retrieve_rank_eval(self, tmp_path, corpus_path, kb_path):
        emb = tmp_path / "kb.emb1"
        cands = tmp_path / "cands.jsonl"
        ranked = tmp_path / "ranked.jsonl"
        report = tmp_path / "report.json"

        assert run("embed", "--dictionary", kb_path, "--dim", "96",
                   "--out", emb) == EXIT_OK
        assert run("retrieve", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--embeddings", emb, "--k", "5", "--out", cands) == EXIT_OK
        assert run("rank", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--candidates", cands, "--scorer", "lexical",
                   "--out", ranked) == EXIT_OK
        assert run("eval", "--corpus", corpus_path, "--ranked", ranked,
                   "--out", report) == EXIT_OK
        reports = json.loads(report.read_text())
        assert reports[-1]["track"] == "BI"
        assert reports[-1]["n"] == 7

    def test_eval_direct_on_candidates(self, tmp_path, corpus_path, kb_path):
        cands = tmp_path / "cands.jsonl"
        assert run("retrieve", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--dim", "128", "--k", "5", "--out", cands) == EXIT_OK
        assert run("eval", "--corpus", corpus_path, "--candidates", cands) == EXIT_OK

    def test_eval_cv_adds_fold_report(self, tmp_path, corpus_path, kb_path):
        cands = tmp_path / "cands.jsonl"
        report = tmp_path / "report.json"
        assert run("retrieve", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--dim", "128", "--k", "5", "--out", cands) == EXIT_OK
        assert run("eval", "--corpus", corpus_path, "--candidates", cands,
                   "--cv", "--folds", "3", "--seed", "1",
                   "--out", report) == EXIT_OK
        reports = json.loads(report.read_text())
        cv = [r for r in reports if r["track"] == "BI-CV"]
        assert len(cv) == 1
        assert len(cv[0]["folds"]) == 3

    def test_train_pairs(self, tmp_path, corpus_path, kb_path):
        cands = tmp_path / "cands.jsonl"
        pairs = tmp_path / "pairs.jsonl"
        assert run("retrieve", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--dim", "128", "--k", "5", "--out", cands) == EXIT_OK
        assert run("train-pairs", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--candidates", cands, "--mode", "CL", "--out", pairs) == EXIT_OK
        rows = [json.loads(line) for line in pairs.read_text().splitlines()]
        assert rows
        assert set(rows[0]) == {"mention_id", "sequence", "label", "cui"}

    def test_retrieve_with_precomputed_queries(self, tmp_path, corpus_path, kb_path):
        queries = tmp_path / "q.emb1"
        cands = tmp_path / "cands.jsonl"
        assert run("embed", "--corpus", corpus_path, "--dim", "128",
                   "--window", "0", "--marking", "off", "--out", queries,
                   "--texts-out", tmp_path / "texts.tsv") == EXIT_OK
        assert run("retrieve", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--dim", "128", "--query-embeddings", queries, "--k", "5",
                   "--out", cands) == EXIT_OK
        texts = (tmp_path / "texts.tsv").read_text(encoding="utf-8").splitlines()
        assert len(texts) == 7
        assert all("\t" in line for line in texts)

    def test_ingest_prints_stats(self, kb_path, capsys):
        assert run("ingest", "--dictionary", kb_path) == EXIT_OK
        out = capsys.readouterr().out
        assert "concepts: 6" in out
        assert "entries:  10" in out


class TestAblate:
    def test_runs_differ_only_in_marking(self, tmp_path, corpus_path, kb_path):
        out = tmp_path / "ablation"
        assert run("ablate", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--dim", "128", "--k", "5", "--out", out) == EXIT_OK
        with_cfg = json.loads((out / "with_cues" / "run_config.json").read_text())
        without_cfg = json.loads((out / "without_cues" / "run_config.json").read_text())
        differing = {k for k in with_cfg if with_cfg[k] != without_cfg[k]}
        assert differing == {"marking"}
        assert (out / "ablation.txt").exists()
        rows = json.loads((out / "ablation.json").read_text())
        assert [r["track"] for r in rows] == ["EN", "RU", "BI"]


class TestAugment:
    def medmentions_style(self, tmp_path):
        """Corpus with six UMLS-style semantic types."""
        from nnel.corpus import Document, Language, LinkedMention

        tags = ["T047", "T121", "T017", "T061", "T038", "T074"]
        text = "x " * len(tags)
        mentions = tuple(
            LinkedMention(f"mm/m{i}", 2 * i, 2 * i + 1, "x", tag, gold_cui="C1")
            for i, tag in enumerate(tags)
        )
        split = CorpusSplit("mm", (Document("mm", text, Language.EN, mentions),))
        path = tmp_path / "mm.jsonl"
        write_jsonl_corpus(split, path)
        map_path = tmp_path / "map.tsv"
        map_path.write_text(
            "T047\tDISO\nT121\tCHEM\nT017\tANATOMY\nT061\tDROP\nT038\tDROP\nT074\tDROP\n",
            encoding="utf-8",
        )
        return path, map_path

    def test_filter_keeps_only_canonical(self, tmp_path):
        corpus, type_map = self.medmentions_style(tmp_path)
        out = tmp_path / "filtered.jsonl"
        assert run("augment", "--in", corpus, "--type-map", type_map,
                   "--name", "aug", "--out", out) == EXIT_OK
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        types = {m["entity_type"] for row in rows for m in row["mentions"]}
        assert types == {"DISO", "CHEM", "ANATOMY"}

    def test_filter_idempotent_via_cli(self, tmp_path):
        corpus, type_map = self.medmentions_style(tmp_path)
        once = tmp_path / "once.jsonl"
        twice = tmp_path / "twice.jsonl"
        assert run("augment", "--in", corpus, "--type-map", type_map,
                   "--name", "aug", "--out", once) == EXIT_OK
        assert run("augment", "--in", once, "--type-map", type_map,
                   "--name", "aug", "--out", twice) == EXIT_OK
        assert once.read_bytes() == twice.read_bytes()

    def test_merge_and_standoff(self, tmp_path):
        corpus, type_map = self.medmentions_style(tmp_path)
        standoff = tmp_path / "standoff"
        standoff.mkdir()
        (standoff / "doc1.txt").write_text("cancer", encoding="utf-8")
        (standoff / "doc1.ann").write_text(
            "T1\tDISO 0 6\tcancer\nN1\tReference T1 UMLS:C0006826\n", encoding="utf-8"
        )
        out = tmp_path / "merged.jsonl"
        assert run("augment", "--in", corpus, "--standoff-dir", standoff,
                   "--language", "EN", "--type-map", type_map,
                   "--name", "train+extra", "--out", out) == EXIT_OK
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 2


class TestConfigFile:
    def test_flags_beat_config_beats_defaults(self, tmp_path, corpus_path, kb_path):
        config = tmp_path / "run.cfg"
        config.write_text("k=3\nwindow=64\n", encoding="utf-8")
        out = tmp_path / "run"
        assert run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--config", config, "--k", "2", "--out", out) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["k"] == 2        # flag wins
        assert manifest["config"]["window"] == 64  # config beats default
        assert manifest["config"]["mode"] == "CL"  # default

    def test_unknown_config_key_rejected(self, tmp_path, corpus_path, kb_path):
        config = tmp_path / "run.cfg"
        config.write_text("frobnicate=1\n", encoding="utf-8")
        assert run("pipeline", "--corpus", corpus_path, "--dictionary", kb_path,
                   "--config", config, "--out", tmp_path / "run") == EXIT_VALIDATION
