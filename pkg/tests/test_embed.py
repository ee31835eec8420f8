"""Baseline embedder and embedding-file tests."""

import numpy as np
import pytest

from asdkit.embed import (Embedding, EmbeddingFormatError, EmbeddingSet,
                          baseline_embed, read_embeddings, write_embeddings)
from asdkit.filterbank import LogMelSpectrogram


def feature(values):
    return LogMelSpectrogram(values=np.asarray(values, dtype=np.float64), kind="mfb")


class TestBaselineEmbed:
    def test_constant_spectrogram(self):
        c = -4.2
        emb = baseline_embed(feature(np.full((8, 10), c)), bands=4)
        assert emb.vector.shape == (8,)
        means, stds = emb.vector[:4], emb.vector[4:]
        assert np.allclose(stds, 0.0)
        assert np.allclose(means, means[0])
        assert np.linalg.norm(emb.vector) == pytest.approx(1.0, abs=1e-12)
        assert np.sign(means[0]) == np.sign(c)

    def test_single_band(self):
        rng = np.random.default_rng(30)
        x = rng.uniform(-5.0, 5.0, size=(6, 7))
        emb = baseline_embed(feature(x), bands=1)
        assert emb.vector.shape == (2,)
        raw = np.array([x.mean(), x.std()])
        np.testing.assert_allclose(emb.vector, raw / np.linalg.norm(raw), atol=1e-12)

    def test_matches_band_loop_oracle(self):
        rng = np.random.default_rng(31)
        x = rng.uniform(-10.0, 10.0, size=(128, 50))
        emb = baseline_embed(feature(x), bands=16)
        means, stds = [], []
        for b in range(16):
            chunk = x[b * 8:(b + 1) * 8]
            flat = chunk.ravel().tolist()
            mu = sum(flat) / len(flat)
            var = sum((v - mu) ** 2 for v in flat) / len(flat)
            means.append(mu)
            stds.append(var ** 0.5)
        raw = np.array(means + stds)
        np.testing.assert_allclose(emb.vector, raw / np.linalg.norm(raw), atol=1e-12)
        assert np.linalg.norm(emb.vector) == pytest.approx(1.0, abs=1e-12)

    def test_uneven_last_band(self):
        rng = np.random.default_rng(32)
        x = rng.uniform(-1.0, 1.0, size=(10, 5))
        emb = baseline_embed(feature(x), bands=4)       # widths 3,3,3,1
        assert emb.vector.shape == (8,)
        last = x[9:10]
        raw_last_mean = last.mean()
        # recover by undoing the normalization
        scale = np.linalg.norm(np.concatenate([
            [x[0:3].mean(), x[3:6].mean(), x[6:9].mean(), raw_last_mean],
            [x[0:3].std(), x[3:6].std(), x[6:9].std(), last.std()]]))
        assert emb.vector[3] == pytest.approx(raw_last_mean / scale, abs=1e-12)

    def test_zero_feature_returns_zero_vector(self):
        emb = baseline_embed(feature(np.zeros((4, 4))), bands=2)
        np.testing.assert_array_equal(emb.vector, np.zeros(4))

    def test_band_validation(self):
        with pytest.raises(ValueError):
            baseline_embed(feature(np.ones((4, 4))), bands=0)
        with pytest.raises(ValueError):
            baseline_embed(feature(np.ones((4, 4))), bands=5)
        with pytest.raises(ValueError):
            # width ceil(10/6)=2 leaves the sixth band empty
            baseline_embed(feature(np.ones((10, 4))), bands=6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            baseline_embed(feature(np.empty((0, 0))), bands=1)


def _random_set(rng, dim=5, count=4) -> EmbeddingSet:
    entries = [
        Embedding(vector=rng.standard_normal(dim).astype(np.float32).astype(np.float64),
                  clip_id=f"fan/test/section_00_source_test_normal_{i:04d}.wav")
        for i in range(count)
    ]
    return EmbeddingSet(dim=dim, entries=entries, provenance="baseline")


class TestEmbeddingFile:
    def test_round_trip_float32_exact(self, tmp_path):
        rng = np.random.default_rng(33)
        original = _random_set(rng)
        path = tmp_path / "e.asde"
        write_embeddings(original, path)
        back = read_embeddings(path)
        assert back.dim == original.dim
        assert [e.clip_id for e in back.entries] == [e.clip_id for e in original.entries]
        for ours, theirs in zip(back.entries, original.entries):
            np.testing.assert_array_equal(ours.vector, theirs.vector)

    def test_non_grid_values_round_to_float32(self, tmp_path):
        entries = [Embedding(vector=np.array([1.0 / 3.0]), clip_id="x")]
        path = tmp_path / "e.asde"
        write_embeddings(EmbeddingSet(dim=1, entries=entries), path)
        back = read_embeddings(path)
        assert back.entries[0].vector[0] == np.float32(1.0 / 3.0)

    def test_truncated_names_offset(self, tmp_path):
        rng = np.random.default_rng(34)
        path = tmp_path / "e.asde"
        write_embeddings(_random_set(rng), path)
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(EmbeddingFormatError, match="byte"):
            read_embeddings(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.asde"
        write_embeddings(_random_set(np.random.default_rng(35)), path)
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(EmbeddingFormatError, match="magic"):
            read_embeddings(path)

    def test_dim_zero_rejected(self, tmp_path):
        import struct
        path = tmp_path / "e.asde"
        path.write_bytes(struct.pack("<4sHII", b"ASDE", 1, 0, 0))
        with pytest.raises(EmbeddingFormatError, match="dim 0"):
            read_embeddings(path)

    def test_duplicate_clip_ids_rejected(self, tmp_path):
        rng = np.random.default_rng(36)
        good = _random_set(rng, count=2)
        path = tmp_path / "e.asde"
        write_embeddings(good, path)
        # duplicate the first entry's name in the second slot
        data = bytearray(path.read_bytes())
        # names are equal length; rewrite the second name to match the first
        name = good.entries[0].clip_id.encode()
        first_off = 14 + 2
        second_off = first_off + len(name) + good.dim * 4 + 2
        data[second_off:second_off + len(name)] = name
        path.write_bytes(bytes(data))
        with pytest.raises(EmbeddingFormatError, match="duplicate"):
            read_embeddings(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "e.asde"
        write_embeddings(_random_set(np.random.default_rng(37)), path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(EmbeddingFormatError, match="trailing"):
            read_embeddings(path)


class TestEmbeddingSetValidation:
    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            EmbeddingSet(dim=3, entries=[Embedding(vector=np.zeros(2), clip_id="a")])

    def test_duplicate_ids(self):
        entries = [Embedding(vector=np.zeros(2), clip_id="a"),
                   Embedding(vector=np.ones(2), clip_id="a")]
        with pytest.raises(ValueError):
            EmbeddingSet(dim=2, entries=entries)
