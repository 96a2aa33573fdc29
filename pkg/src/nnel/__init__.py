"""Nested biomedical entity linking: retrieval, marking, ranking, eval."""

__version__ = "0.1.0"

from .corpus import (
    CANONICAL_TYPES,
    CorpusSplit,
    Document,
    Language,
    LinkedMention,
    convert_and_filter,
    load_type_map,
    merge_splits,
    parse_jsonl_corpus,
    parse_standoff_corpus,
    write_jsonl_corpus,
)
from .errors import ConfigError, NnelError, ParseError, ProtocolError, ValidationError
from .evaluation import (
    AblationRow,
    EvalReport,
    InvarianceReport,
    accuracy_at_k,
    ablation_report,
    cross_validate,
    format_ablation_table,
    format_report,
    rank_invariance_check,
    write_reports_json,
)
from .hashing import char_trigrams, dice_similarity, hash_embed
from .kb import (
    Concept,
    DictionaryEntry,
    EmbeddingMatrix,
    KnowledgeBase,
    attach_embeddings,
    build_hash_embeddings,
    ingest_dictionary,
    read_embeddings,
    write_embeddings,
)
from .marking import (
    MarkedContext,
    RankInput,
    RankMode,
    TrainingPair,
    build_rank_input,
    emit_training_pairs,
    mark,
    strip_cues,
    write_rank_inputs,
    write_training_pairs,
)
from .ranking import (
    ConformanceReport,
    RankedCandidates,
    ScorerClient,
    ScorerKind,
    ScorerSpec,
    check_endpoint,
    rank_corpus,
    rerank,
    score_external,
    score_lexical,
)
from .retrieval import (
    Candidate,
    CandidateList,
    embed_query,
    read_candidates,
    retrieve,
    retrieve_corpus,
    write_candidates,
)
