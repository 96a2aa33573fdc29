"""Command-line entry point wiring all pipeline stages.

One binary with subcommands: ingest, embed, retrieve, rank, train-pairs,
eval, ablate, augment, pipeline. Option precedence is flags > config file
> built-in defaults; a config file is flat ``key=value`` lines. Every
experiment run writes a manifest (resolved config plus input digests)
next to its outputs, and reruns with the same config and seed produce
byte-identical report JSON regardless of the thread count.

Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime. The ``NNEL_LOG``
environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import functools
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    CorpusSplit,
    Language,
    convert_and_filter,
    load_type_map,
    merge_splits,
    parse_jsonl_corpus,
    parse_standoff_corpus,
    write_jsonl_corpus,
)
from .errors import ConfigError, NnelError, ParseError, ProtocolError, ValidationError
from .evaluation import (
    EvalReport,
    accuracy_at_k,
    ablation_report,
    cross_validate,
    format_ablation_table,
    format_report,
    rank_invariance_check,
    write_reports_json,
)
from .hashing import hash_embed
from .kb import (
    EmbeddingMatrix,
    KnowledgeBase,
    attach_embeddings,
    build_hash_embeddings,
    ingest_dictionary,
    read_embeddings,
    write_embeddings,
)
from .marking import RankMode, build_rank_input, emit_training_pairs, mark, write_training_pairs
from .ranking import (
    RankedCandidates,
    ScorerKind,
    ScorerSpec,
    rank_corpus,
    read_ranked,
    write_ranked,
)
from .retrieval import read_candidates, retrieve_corpus, write_candidates

log = logging.getLogger("nnel")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

DEFAULTS = {
    "k": 10,
    "window": 128,
    "marking": "on",
    "mode": "CL",
    "scorer": "lexical",
    "dim": 256,
    "seed": 0,
    "folds": 5,
    "threads": 0,  # 0 = use available cores
    "batch_size": 32,
    "timeout": 30.0,
    "retries": 2,
    "ks": "1,5,10",
}

_COERCERS = {
    "k": int,
    "window": int,
    "dim": int,
    "seed": int,
    "folds": int,
    "threads": int,
    "batch_size": int,
    "timeout": float,
    "retries": int,
    "marking": str,
    "mode": str,
    "scorer": str,
    "ks": str,
    "endpoint": str,
}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 on usage errors (argparse default is 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path: str) -> dict:
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if key not in _COERCERS:
                raise ConfigError(f"{path}: line {lineno}: unknown config key {key!r}")
            try:
                values[key] = _COERCERS[key](value.strip())
            except ValueError:
                raise ConfigError(
                    f"{path}: line {lineno}: bad value for {key}: {value.strip()!r}"
                ) from None
    return values


def _resolve(args, keys) -> dict:
    """Merge option sources: explicit flags > config file > defaults."""
    config = _load_config(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in config:
            resolved[key] = config[key]
        elif key in DEFAULTS:
            resolved[key] = DEFAULTS[key]
        else:
            resolved[key] = None
    _validate_options(resolved)
    return resolved


def _validate_options(opts: dict) -> None:
    if "k" in opts and opts["k"] < 1:
        raise ConfigError(f"k must be >= 1, got {opts['k']}")
    if "window" in opts and opts["window"] < 0:
        raise ConfigError(f"window must be >= 0, got {opts['window']}")
    if "dim" in opts and opts["dim"] < 8:
        raise ConfigError(f"dim must be >= 8, got {opts['dim']}")
    if "marking" in opts and opts["marking"] not in ("on", "off"):
        raise ConfigError(f"marking must be on or off, got {opts['marking']!r}")
    if "mode" in opts and opts["mode"] not in ("CL", "LISTWISE"):
        raise ConfigError(f"mode must be CL or LISTWISE, got {opts['mode']!r}")
    if "scorer" in opts and opts["scorer"] not in ("lexical", "external"):
        raise ConfigError(f"scorer must be lexical or external, got {opts['scorer']!r}")
    if "folds" in opts and opts["folds"] < 2:
        raise ConfigError(f"folds must be >= 2, got {opts['folds']}")
    if "batch_size" in opts and opts["batch_size"] < 1:
        raise ConfigError(f"batch-size must be >= 1, got {opts['batch_size']}")
    if "retries" in opts and opts["retries"] < 0:
        raise ConfigError(f"retries must be >= 0, got {opts['retries']}")


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(sorted({int(part) for part in text.split(",") if part.strip()}))
    except ValueError:
        raise ConfigError(f"bad k list {text!r} (expected e.g. 1,5,10)") from None
    if not ks or ks[0] < 1:
        raise ConfigError(f"bad k list {text!r}")
    return ks


def _require_paths(*paths) -> None:
    for path in paths:
        if path is not None and not Path(path).exists():
            raise ConfigError(f"path does not exist: {path}")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(functools.partial(fh.read, 1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, config: dict, inputs: dict) -> None:
    # threads is a runtime knob, not an experiment parameter: identical
    # configs must yield identical manifests whatever the parallelism.
    config = {k: v for k, v in sorted(config.items()) if k != "threads"}
    manifest = {
        "tool": {"name": "nnel", "version": __version__},
        "config": config,
        "inputs": {str(k): _sha256(v) for k, v in sorted(inputs.items())},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Shared pipeline pieces


def _load_index(dictionary, embeddings, dim) -> tuple[KnowledgeBase, EmbeddingMatrix]:
    kb = ingest_dictionary(dictionary)
    if embeddings:
        matrix, renormalized = attach_embeddings(kb, embeddings)
        if renormalized:
            log.warning("%d embedding rows were renormalized on attach", renormalized)
    else:
        matrix = build_hash_embeddings(kb, dim)
    return kb, matrix


def _query_vector_map(path) -> dict:
    matrix = read_embeddings(path)
    return dict(zip(matrix.row_ids, matrix.vectors))


def _scorer_spec(opts) -> ScorerSpec:
    kind = ScorerKind.LEXICAL_BASELINE if opts["scorer"] == "lexical" else ScorerKind.EXTERNAL
    return ScorerSpec(
        kind,
        RankMode(opts["mode"]),
        endpoint=opts.get("endpoint"),
        timeout=opts["timeout"],
        retries=opts["retries"],
    )


def _gold_map(split: CorpusSplit) -> dict:
    gold = {}
    for _, mention in split.iter_mentions():
        if mention.gold_cui is None:
            raise ValidationError(
                f"mention {mention.mention_id} has no gold CUI; cannot evaluate"
            )
        gold[mention.mention_id] = mention.gold_cui
    return gold


def _track_reports(
    split: CorpusSplit,
    ranked: list[RankedCandidates],
    gold: dict,
    ks,
    per_type: bool,
) -> list[EvalReport]:
    """One report per nonempty track: EN, RU, then the joint BI score."""
    language_of = {
        m.mention_id: doc.language for doc, m in split.iter_mentions()
    }
    types = (
        {m.mention_id: m.entity_type for _, m in split.iter_mentions()}
        if per_type
        else None
    )
    reports = []
    for track, lang in (("EN", Language.EN), ("RU", Language.RU)):
        subset = [rc for rc in ranked if language_of.get(rc.mention_id) == lang]
        if subset:
            reports.append(accuracy_at_k(subset, gold, ks, track=track, entity_types=types))
    reports.append(accuracy_at_k(ranked, gold, ks, track="BI", entity_types=types))
    return reports


def _mention_index(split: CorpusSplit) -> dict:
    return {m.mention_id: (doc, m) for doc, m in split.iter_mentions()}


def _build_rank_inputs(split, candidate_lists, kb, mode, window, marking):
    index = _mention_index(split)
    inputs = []
    for cl in candidate_lists:
        if cl.mention_id not in index:
            raise ValidationError(f"candidates for unknown mention {cl.mention_id}")
        doc, mention = index[cl.mention_id]
        inputs.append(
            build_rank_input(mention, doc, cl, kb, mode, window=window, marking=marking)
        )
    return inputs


def _run_retrieve_rank(split, kb, matrix, opts, query_vectors=None):
    """retrieve -> rank for one corpus; returns (candidates, ranked)."""
    marking = opts["marking"] == "on"
    if query_vectors is not None:
        candidate_lists = retrieve_corpus(
            split, kb, matrix, opts["k"],
            query_vectors=query_vectors, threads=opts["threads"],
        )
    else:
        provider = lambda text: hash_embed(text, matrix.dim)
        candidate_lists = retrieve_corpus(
            split, kb, matrix, opts["k"],
            provider=provider, marking=marking, window=opts["window"],
            threads=opts["threads"],
        )
    spec = _scorer_spec(opts)
    inputs = _build_rank_inputs(
        split, candidate_lists, kb, spec.mode, opts["window"], marking
    )
    ranked = rank_corpus(inputs, candidate_lists, spec, batch_size=opts["batch_size"])
    return candidate_lists, ranked


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args) -> int:
    _require_paths(args.dictionary)
    kb = ingest_dictionary(args.dictionary)
    languages = sorted({e.language.value for e in kb.entries})
    types = sorted({c.semantic_type for c in kb.concepts})
    print(f"concepts: {kb.concept_count}")
    print(f"entries:  {kb.entry_count}")
    print(f"languages: {', '.join(languages)}")
    print(f"types: {', '.join(types)}")
    return EXIT_OK


def cmd_embed(args) -> int:
    opts = _resolve(args, ("dim", "window", "marking"))
    if (args.dictionary is None) == (args.corpus is None):
        raise ConfigError("pass exactly one of --dictionary or --corpus")
    marking = opts["marking"] == "on"

    if args.dictionary:
        _require_paths(args.dictionary)
        kb = ingest_dictionary(args.dictionary)
        matrix = build_hash_embeddings(kb, opts["dim"])
        texts = [(str(e.entry_id), e.name) for e in kb.entries]
    else:
        _require_paths(args.corpus)
        split = parse_jsonl_corpus(args.corpus)
        texts = [
            (m.mention_id, mark(m, doc, window=opts["window"], enabled=marking).text)
            for doc, m in split.iter_mentions()
        ]
        if not texts:
            raise ValidationError(f"{args.corpus}: no mentions to embed")
        vectors = np.stack([hash_embed(text, opts["dim"]) for _, text in texts])
        matrix = EmbeddingMatrix(
            dim=opts["dim"], vectors=vectors, row_ids=tuple(t[0] for t in texts)
        )

    write_embeddings(matrix, args.out)
    if args.texts_out:
        with open(args.texts_out, "w", encoding="utf-8") as fh:
            for row_id, text in texts:
                fh.write(f"{row_id}\t{text}\n")
    print(f"wrote {matrix.row_count} x {matrix.dim} embeddings to {args.out}")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    opts = _resolve(args, ("k", "window", "marking", "dim", "threads"))
    _require_paths(args.corpus, args.dictionary, args.embeddings, args.query_embeddings)
    split = parse_jsonl_corpus(args.corpus)
    kb, matrix = _load_index(args.dictionary, args.embeddings, opts["dim"])
    if args.query_embeddings:
        lists = retrieve_corpus(
            split, kb, matrix, opts["k"],
            query_vectors=_query_vector_map(args.query_embeddings),
            threads=opts["threads"], allow_partial=args.allow_partial,
        )
    else:
        provider = lambda text: hash_embed(text, matrix.dim)
        lists = retrieve_corpus(
            split, kb, matrix, opts["k"],
            provider=provider, marking=opts["marking"] == "on",
            window=opts["window"], threads=opts["threads"],
            allow_partial=args.allow_partial,
        )
    write_candidates(lists, args.out)
    print(f"retrieved candidates for {len(lists)} mentions -> {args.out}")
    return EXIT_OK


def cmd_rank(args) -> int:
    opts = _resolve(
        args, ("window", "marking", "mode", "scorer", "endpoint",
               "batch_size", "timeout", "retries")
    )
    _require_paths(args.corpus, args.dictionary, args.candidates)
    split = parse_jsonl_corpus(args.corpus)
    kb = ingest_dictionary(args.dictionary)
    candidate_lists = read_candidates(args.candidates)
    spec = _scorer_spec(opts)
    inputs = _build_rank_inputs(
        split, candidate_lists, kb, spec.mode, opts["window"], opts["marking"] == "on"
    )
    ranked = rank_corpus(inputs, candidate_lists, spec, batch_size=opts["batch_size"])
    write_ranked(ranked, args.out)
    print(f"ranked {len(ranked)} mentions -> {args.out}")
    return EXIT_OK


def cmd_train_pairs(args) -> int:
    opts = _resolve(args, ("window", "marking", "mode"))
    _require_paths(args.corpus, args.dictionary, args.candidates)
    split = parse_jsonl_corpus(args.corpus)
    kb = ingest_dictionary(args.dictionary)
    candidate_lists = read_candidates(args.candidates)
    emission = emit_training_pairs(
        split, candidate_lists, kb, RankMode(opts["mode"]),
        window=opts["window"], marking=opts["marking"] == "on",
    )
    write_training_pairs(emission.pairs, args.out)
    print(f"wrote {len(emission.pairs)} pairs -> {args.out} "
          f"(gold missed for {emission.gold_missed} mentions)")
    return EXIT_OK


def cmd_eval(args) -> int:
    opts = _resolve(args, ("ks", "folds", "seed"))
    _require_paths(args.corpus, args.ranked, args.candidates)
    if (args.ranked is None) == (args.candidates is None):
        raise ConfigError("pass exactly one of --ranked or --candidates")
    split = parse_jsonl_corpus(args.corpus)
    gold = _gold_map(split)
    if args.ranked:
        ranked = read_ranked(args.ranked)
    else:
        ranked = [RankedCandidates.from_retrieval(cl) for cl in read_candidates(args.candidates)]
    ks = _parse_ks(opts["ks"])
    reports = _track_reports(split, ranked, gold, ks, args.per_type)

    if args.cv:
        ranked_by_id = {rc.mention_id: rc for rc in ranked}

        def fold_eval(sub: CorpusSplit) -> EvalReport:
            subset = [
                ranked_by_id[m.mention_id]
                for _, m in sub.iter_mentions()
                if m.mention_id in ranked_by_id
            ]
            return accuracy_at_k(subset, gold, ks)

        reports.append(
            cross_validate(split, opts["folds"], opts["seed"], fold_eval, track="BI-CV")
        )

    for report in reports:
        print(format_report(report))
    if args.out:
        write_reports_json(reports, args.out)
    return EXIT_OK


def cmd_augment(args) -> int:
    if not args.inputs and not args.standoff_dir:
        raise ConfigError("pass at least one --in corpus or a --standoff-dir")
    _require_paths(args.type_map, args.standoff_dir, *(args.inputs or ()))
    splits = [parse_jsonl_corpus(path) for path in args.inputs or ()]
    if args.standoff_dir:
        if args.language is None:
            raise ConfigError("--standoff-dir requires --language")
        language = Language.parse(args.language)
        documents = []
        for text_path in sorted(Path(args.standoff_dir).glob("*.txt")):
            ann_path = text_path.with_suffix(".ann")
            if not ann_path.exists():
                raise ConfigError(f"missing annotation file for {text_path}")
            documents.append(parse_standoff_corpus(text_path, ann_path, language))
        splits.append(CorpusSplit(Path(args.standoff_dir).name, tuple(documents)))
    merged = merge_splits(splits, args.name)
    type_map = load_type_map(args.type_map) if args.type_map else {}
    filtered = convert_and_filter(merged, type_map)
    write_jsonl_corpus(filtered, args.out)
    print(
        f"augmented corpus {filtered.name!r}: {len(filtered.documents)} documents, "
        f"{filtered.n_mentions} mentions -> {args.out}"
    )
    return EXIT_OK


_PIPELINE_KEYS = (
    "k", "window", "marking", "mode", "scorer", "endpoint", "dim",
    "seed", "folds", "threads", "batch_size", "timeout", "retries", "ks",
)


def _pipeline_once(split, kb, matrix, opts, out_dir: Path, query_vectors, per_type, cv):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
        echoed = {k: v for k, v in sorted(opts.items()) if k != "threads"}
        fh.write(json.dumps(echoed, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    candidate_lists, ranked = _run_retrieve_rank(split, kb, matrix, opts, query_vectors)
    gold = _gold_map(split)

    gate = rank_invariance_check(candidate_lists, ranked, gold)
    if not gate.passed:
        print(gate.summary(), file=sys.stderr)
        raise ValidationError("rank invariance gate failed")

    ks = _parse_ks(opts["ks"])
    reports = _track_reports(split, ranked, gold, ks, per_type)
    if cv:
        ranked_by_id = {rc.mention_id: rc for rc in ranked}

        def fold_eval(sub: CorpusSplit) -> EvalReport:
            subset = [ranked_by_id[m.mention_id] for _, m in sub.iter_mentions()]
            return accuracy_at_k(subset, gold, ks)

        reports.append(
            cross_validate(split, opts["folds"], opts["seed"], fold_eval, track="BI-CV")
        )

    write_candidates(candidate_lists, out_dir / "candidates.jsonl")
    write_ranked(ranked, out_dir / "ranked.jsonl")
    write_reports_json(reports, out_dir / "reports.json")
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(format_report(report) + "\n")
    return reports


def cmd_pipeline(args) -> int:
    opts = _resolve(args, _PIPELINE_KEYS)
    _require_paths(args.corpus, args.dictionary, args.embeddings, args.query_embeddings)
    split = parse_jsonl_corpus(args.corpus)
    kb, matrix = _load_index(args.dictionary, args.embeddings, opts["dim"])
    query_vectors = _query_vector_map(args.query_embeddings) if args.query_embeddings else None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = _pipeline_once(
        split, kb, matrix, opts, out_dir, query_vectors, args.per_type, args.cv
    )
    inputs = {"corpus": args.corpus, "dictionary": args.dictionary}
    if args.embeddings:
        inputs["embeddings"] = args.embeddings
    if args.query_embeddings:
        inputs["query_embeddings"] = args.query_embeddings
    _write_manifest(out_dir, opts, inputs)
    for report in reports:
        print(format_report(report))
    print(f"pipeline outputs in {out_dir}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    opts = _resolve(args, _PIPELINE_KEYS)
    _require_paths(args.corpus, args.dictionary, args.embeddings)
    split = parse_jsonl_corpus(args.corpus)
    kb, matrix = _load_index(args.dictionary, args.embeddings, opts["dim"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    runs = {}
    for label, marking in (("with_cues", "on"), ("without_cues", "off")):
        # The two runs must differ in exactly one option: the marking flag.
        run_opts = dict(opts)
        run_opts["marking"] = marking
        runs[label] = _pipeline_once(
            split, kb, matrix, run_opts, out_dir / label, None, False, False
        )

    rows = []
    for with_report, without_report in zip(runs["with_cues"], runs["without_cues"]):
        rows.append(ablation_report(with_report, without_report))
    table = format_ablation_table(rows)
    print(table)
    with open(out_dir / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    payload = [
        {
            "track": row.track,
            "with_cues": row.with_cues,
            "without_cues": row.without_cues,
            "abs_gain": row.abs_gain,
            "rel_gain": row.rel_gain,
        }
        for row in rows
    ]
    with open(out_dir / "ablation.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    _write_manifest(out_dir, opts, {"corpus": args.corpus, "dictionary": args.dictionary})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_config_option(parser):
    parser.add_argument("--config", help="flat key=value config file (flags win)")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="nnel",
        description="Two-stage nested biomedical entity linking pipeline",
    )
    parser.add_argument("--version", action="version", version=f"nnel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a dictionary TSV and print stats")
    p.add_argument("--dictionary", required=True, help="TSV: cui<TAB>name<TAB>lang<TAB>type")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", help="hash-embed a dictionary or corpus into an EMB1 file")
    p.add_argument("--dictionary", help="dictionary TSV to embed (one row per entry)")
    p.add_argument("--corpus", help="corpus JSONL whose marked mention contexts to embed")
    p.add_argument("--out", required=True, help="output EMB1 path")
    p.add_argument("--dim", type=int, help=f"hash dimension (default {DEFAULTS['dim']})")
    p.add_argument("--window", type=int, help="context chars each side (corpus mode)")
    p.add_argument("--marking", choices=("on", "off"), help="wrap mentions with boundary cues")
    p.add_argument("--texts-out", help="also write the embedded texts as id<TAB>text")
    _add_config_option(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("retrieve", help="top-k candidate retrieval for a corpus")
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--dictionary", required=True, help="dictionary TSV")
    p.add_argument("--embeddings", help="EMB1 concept embeddings (default: hash embedder)")
    p.add_argument("--query-embeddings", help="EMB1 of precomputed query vectors by mention id")
    p.add_argument("--k", type=int, help=f"candidates per mention (default {DEFAULTS['k']})")
    p.add_argument("--dim", type=int, help="hash dimension when no --embeddings given")
    p.add_argument("--window", type=int, help="context chars each side")
    p.add_argument("--marking", choices=("on", "off"), help="boundary cues in the query text")
    p.add_argument("--threads", type=int, help="parallel workers (default: cores)")
    p.add_argument("--allow-partial", action="store_true",
                   help="skip failing mentions instead of aborting")
    p.add_argument("--out", required=True, help="output candidates JSONL")
    _add_config_option(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("rank", help="re-rank retrieved candidates with a scorer")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--candidates", required=True, help="candidates JSONL from retrieve")
    p.add_argument("--scorer", choices=("lexical", "external"), help="scorer kind")
    p.add_argument("--endpoint", help="external scorer command or tcp:host:port")
    p.add_argument("--mode", choices=("CL", "LISTWISE"), help="rank-input construction")
    p.add_argument("--window", type=int)
    p.add_argument("--marking", choices=("on", "off"))
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--timeout", type=float, help="scorer response timeout seconds")
    p.add_argument("--retries", type=int, help="scorer batch retries")
    p.add_argument("--out", required=True, help="output ranked JSONL")
    _add_config_option(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("train-pairs", help="emit labeled ranker training pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--mode", choices=("CL", "LISTWISE"))
    p.add_argument("--window", type=int)
    p.add_argument("--marking", choices=("on", "off"))
    p.add_argument("--out", required=True, help="output training-pairs JSONL")
    _add_config_option(p)
    p.set_defaults(func=cmd_train_pairs)

    p = sub.add_parser("eval", help="Acc@k report for ranked or retrieved candidates")
    p.add_argument("--corpus", required=True, help="corpus JSONL with gold CUIs")
    p.add_argument("--ranked", help="ranked JSONL from rank")
    p.add_argument("--candidates", help="candidates JSONL (evaluates retrieval order)")
    p.add_argument("--ks", help=f"comma-separated k values (default {DEFAULTS['ks']})")
    p.add_argument("--per-type", action="store_true", help="break down by entity type")
    p.add_argument("--cv", action="store_true", help="add document-fold cross-validation")
    p.add_argument("--folds", type=int, help=f"CV fold count (default {DEFAULTS['folds']})")
    p.add_argument("--seed", type=int, help="CV shuffle seed")
    p.add_argument("--out", help="write report JSON here")
    _add_config_option(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="pipeline twice (cues on/off) plus comparison table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--k", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--mode", choices=("CL", "LISTWISE"))
    p.add_argument("--scorer", choices=("lexical", "external"))
    p.add_argument("--endpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_option(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("augment", help="merge, convert, and type-filter corpora")
    p.add_argument("--in", dest="inputs", action="append", help="corpus JSONL (repeatable)")
    p.add_argument("--standoff-dir", help="directory of paired .txt/.ann standoff files")
    p.add_argument("--language", help="language of the standoff files (EN or RU)")
    p.add_argument("--type-map", help="TSV source_tag<TAB>target_or_DROP")
    p.add_argument("--name", default="augment", help="name of the output corpus")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("pipeline", help="retrieve -> rank -> eval with one config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--query-embeddings")
    p.add_argument("--k", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--marking", choices=("on", "off"))
    p.add_argument("--mode", choices=("CL", "LISTWISE"))
    p.add_argument("--scorer", choices=("lexical", "external"))
    p.add_argument("--endpoint")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--timeout", type=float)
    p.add_argument("--retries", type=int)
    p.add_argument("--ks")
    p.add_argument("--seed", type=int)
    p.add_argument("--cv", action="store_true", help="add document-fold cross-validation")
    p.add_argument("--folds", type=int)
    p.add_argument("--per-type", action="store_true")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_option(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("NNEL_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError) as exc:
        print(f"nnel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ProtocolError, OSError) as exc:
        print(f"nnel: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except NnelError as exc:
        print(f"nnel: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())
