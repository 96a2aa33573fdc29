"""Embedding export: counts, determinism, EMB1 validity."""

import numpy as np
import pytest

from nnel_bridge.emb1 import read_emb1, write_emb1
from nnel_bridge.export import export_embeddings
from nnel_bridge.modeling import BridgeConfig

from conftest import HIDDEN_SIZE, write_dictionary


class TestEmb1:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        vectors = rng.standard_normal((5, 8)).astype(np.float32)
        path = tmp_path / "m.emb1"
        write_emb1(path, vectors, [f"id{i}" for i in range(5)])
        again, ids = read_emb1(path)
        assert ids == [f"id{i}" for i in range(5)]
        assert again.tobytes() == vectors.tobytes()

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_emb1(tmp_path / "m.emb1", np.zeros((0, 4), dtype=np.float32), [])


class TestExport:
    def test_dictionary_export_counts_and_dim(self, tmp_path, tiny_model_dir):
        dictionary = write_dictionary(tmp_path / "kb.tsv", 3)
        out = tmp_path / "kb.emb1"
        stats = export_embeddings(dictionary, out, BridgeConfig(str(tiny_model_dir)))
        assert stats.rows == 3
        assert stats.dim == HIDDEN_SIZE
        vectors, ids = read_emb1(out)
        assert vectors.shape == (3, HIDDEN_SIZE)
        assert ids == ["0", "1", "2"]
        np.testing.assert_allclose(np.linalg.norm(vectors, axis=1), 1.0, atol=1e-3)

    def test_rerun_is_deterministic(self, tmp_path, tiny_model_dir):
        dictionary = write_dictionary(tmp_path / "kb.tsv", 8)
        config = BridgeConfig(str(tiny_model_dir))
        export_embeddings(dictionary, tmp_path / "a.emb1", config)
        export_embeddings(dictionary, tmp_path / "b.emb1", config)
        first, _ = read_emb1(tmp_path / "a.emb1")
        second, _ = read_emb1(tmp_path / "b.emb1")
        cosines = (first * second).sum(axis=1)
        assert (cosines > 0.9999).all()

    def test_empty_dictionary_rejected(self, tmp_path, tiny_model_dir):
        empty = tmp_path / "kb.tsv"
        empty.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="nothing to embed"):
            export_embeddings(empty, tmp_path / "out.emb1", BridgeConfig(str(tiny_model_dir)))

    def test_texts_export_keeps_given_ids(self, tmp_path, tiny_model_dir):
        texts = tmp_path / "q.tsv"
        texts.write_text("m1\tcontext [Ms] cancer [Me] here\nm2\tplain text\n",
                         encoding="utf-8")
        out = tmp_path / "q.emb1"
        stats = export_embeddings(texts, out, BridgeConfig(str(tiny_model_dir)),
                                  kind="texts")
        assert stats.rows == 2
        _, ids = read_emb1(out)
        assert ids == ["m1", "m2"]

    def test_truncation_is_counted(self, tmp_path, tiny_model_dir):
        texts = tmp_path / "q.tsv"
        texts.write_text(f"m1\t{'word ' * 500}\nm2\tshort\n", encoding="utf-8")
        config = BridgeConfig(str(tiny_model_dir), max_length=32)
        stats = export_embeddings(texts, tmp_path / "q.emb1", config, kind="texts")
        assert stats.truncated == 1

    def test_cls_pooling_differs_from_mean(self, tmp_path, tiny_model_dir):
        dictionary = write_dictionary(tmp_path / "kb.tsv", 2)
        export_embeddings(dictionary, tmp_path / "mean.emb1",
                          BridgeConfig(str(tiny_model_dir), pooling="mean"))
        export_embeddings(dictionary, tmp_path / "cls.emb1",
                          BridgeConfig(str(tiny_model_dir), pooling="cls"))
        mean_vecs, _ = read_emb1(tmp_path / "mean.emb1")
        cls_vecs, _ = read_emb1(tmp_path / "cls.emb1")
        assert not np.allclose(mean_vecs, cls_vecs)
