"""Shared fixtures: the nested example document, a small dictionary, and
synthetic corpora large enough for the property suites."""

from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

from nnel.corpus import CorpusSplit, Document, Language, LinkedMention

DOUBLES_DIR = Path(__file__).parent / "doubles"

FIG_TEXT = "isolated bronchus resection for central cancer"

DICTIONARY_ROWS = [
    ("C0006826", "cancer", "EN", "DISO"),
    ("C0006826", "malignant neoplasm", "EN", "DISO"),
    ("C0700639", "central cancer", "EN", "DISO"),
    ("C0006255", "bronchus", "EN", "ANATOMY"),
    ("C0006255", "bronchial structure", "EN", "ANATOMY"),
    ("C0004057", "aspirin", "EN", "CHEM"),
    ("C1510475", "wrinkly skin syndrome", "EN", "DISO"),
    ("C0796280", "weaver-smith syndrome", "EN", "DISO"),
    ("C0006826", "рак", "RU", "DISO"),
    ("C0006255", "бронх", "RU", "ANATOMY"),
]


def make_fig_doc() -> Document:
    """The nested-procedure example: two nesting chains, five mentions."""
    mentions = (
        LinkedMention("fig/T1", 0, 27, FIG_TEXT[0:27], "MEDPROC"),
        LinkedMention("fig/T2", 9, 17, FIG_TEXT[9:17], "ANATOMY", gold_cui="C0006255"),
        LinkedMention("fig/T3", 18, 27, FIG_TEXT[18:27], "MEDPROC"),
        LinkedMention("fig/T4", 32, 46, FIG_TEXT[32:46], "DISO", gold_cui="C0700639"),
        LinkedMention("fig/T5", 40, 46, FIG_TEXT[40:46], "DISO", gold_cui="C0006826"),
    )
    return Document("fig", FIG_TEXT, Language.EN, mentions)


def make_ru_doc() -> Document:
    text = "рак легкого и бронх"
    mentions = (
        LinkedMention("ru1/T1", 0, 3, text[0:3], "DISO", gold_cui="C0006826"),
        LinkedMention("ru1/T2", 14, 19, text[14:19], "ANATOMY", gold_cui="C0006255"),
    )
    return Document("ru1", text, Language.RU, mentions)


def make_wss_doc() -> Document:
    text = "patient presents with wrinkly skin syndrome and was given aspirin"
    mentions = (
        LinkedMention("wss/T1", 22, 43, text[22:43], "DISO", gold_cui="C1510475"),
        LinkedMention("wss/T2", 58, 65, text[58:65], "CHEM", gold_cui="C0004057"),
    )
    return Document("wss", text, Language.EN, mentions)


@pytest.fixture()
def fig_doc() -> Document:
    return make_fig_doc()


@pytest.fixture()
def fixture_corpus() -> CorpusSplit:
    """Mixed EN/RU corpus with nesting; MEDPROC mentions have no gold."""
    return CorpusSplit("dev", (make_fig_doc(), make_ru_doc(), make_wss_doc()))


@pytest.fixture()
def linked_corpus() -> CorpusSplit:
    """Canonical-type mentions only, every one carrying a gold CUI."""
    fig = make_fig_doc()
    fig_linked = Document(
        fig.doc_id, fig.text, fig.language,
        tuple(m for m in fig.mentions if m.gold_cui is not None),
    )
    return CorpusSplit("dev", (fig_linked, make_ru_doc(), make_wss_doc()))


@pytest.fixture()
def dictionary_path(tmp_path) -> Path:
    path = tmp_path / "dictionary.tsv"
    path.write_text(
        "".join("\t".join(row) + "\n" for row in DICTIONARY_ROWS), encoding="utf-8"
    )
    return path


@pytest.fixture()
def kb(dictionary_path):
    from nnel.kb import ingest_dictionary

    return ingest_dictionary(dictionary_path)


@pytest.fixture()
def hash_matrix(kb):
    from nnel.kb import build_hash_embeddings

    return build_hash_embeddings(kb, 128)


_EN_WORDS = (
    "chronic acute severe left right upper lower lung liver kidney lesion tumor "
    "cell tissue artery vein nerve duct gland cyst nodule mass fracture stenosis "
    "occlusion infection inflammation fibrosis necrosis edema atrophy carcinoma "
    "sarcoma adenoma polyp ulcer abscess hernia thrombosis embolism aneurysm"
).split()

_RU_WORDS = (
    "хронический острый левый правый лёгкое печень почка опухоль клетка ткань "
    "артерия вена нерв проток железа киста узел масса перелом стеноз окклюзия "
    "инфекция воспаление фиброз некроз отёк атрофия карцинома саркома аденома"
).split()


def build_nested_corpus(min_mentions: int = 500, seed: int = 7) -> CorpusSplit:
    """Synthetic corpus of nested/overlapping mentions, at least
    ``min_mentions`` strong, with the figure example included."""
    rng = random.Random(seed)
    documents = [make_fig_doc(), make_ru_doc()]
    mention_count = sum(len(d.mentions) for d in documents)
    doc_idx = 0
    types = ("DISO", "CHEM", "ANATOMY", "MEDPROC")
    while mention_count < min_mentions:
        ru = doc_idx % 4 == 3
        words = [rng.choice(_RU_WORDS if ru else _EN_WORDS) for _ in range(rng.randint(8, 14))]
        text = " ".join(words)
        starts = []
        pos = 0
        for word in words:
            starts.append(pos)
            pos += len(word) + 1
        mentions = []

        def span(first_word: int, last_word: int):
            return starts[first_word], starts[last_word] + len(words[last_word])

        doc_id = f"syn{doc_idx}"
        mid = 0

        def add(first_word, last_word):
            nonlocal mid
            s, e = span(first_word, last_word)
            mentions.append(
                LinkedMention(
                    f"{doc_id}/m{mid}", s, e, text[s:e],
                    types[(doc_idx + mid) % len(types)],
                    gold_cui=f"CUI{(doc_idx * 7 + mid) % 97}",
                )
            )
            mid += 1

        # Chain one: a three-word span with a nested single word.
        add(1, 3)
        add(2, 2)
        # Chain two: overlapping two-word spans sharing the middle word.
        anchor = min(5, len(words) - 2)
        add(anchor, anchor + 1)
        add(anchor + 1, anchor + 1)
        if len(words) >= 8:
            add(anchor, anchor)

        documents.append(
            Document(doc_id, text, Language.RU if ru else Language.EN, tuple(mentions))
        )
        mention_count += len(mentions)
        doc_idx += 1
    return CorpusSplit("nested", tuple(documents))


@pytest.fixture(scope="session")
def nested_corpus_500() -> CorpusSplit:
    return build_nested_corpus(500)


_ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.passed))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, passed in _ACCEPTANCE_RESULTS:
            status = "PASS" if passed else "FAIL"
            terminalreporter.write_line(f"  [{status}] {name}")


@pytest.fixture()
def echo_scorer_cmd() -> str:
    return f"{sys.executable} {DOUBLES_DIR / 'echo_scorer.py'}"


@pytest.fixture()
def bad_count_scorer_cmd() -> str:
    return f"{sys.executable} {DOUBLES_DIR / 'bad_count_scorer.py'}"


@pytest.fixture()
def silent_scorer_cmd() -> str:
    return f"{sys.executable} {DOUBLES_DIR / 'silent_scorer.py'}"
