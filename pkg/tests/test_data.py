"""Ingestion, preprocessing, splitting and batching."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cxrnet import data as D
from cxrnet.errors import ConfigError, DatasetError

from conftest import tiny_corpus, write_gray_png


def synthetic_index(counts, prefix="mem"):
    """In-memory index (split never touches the filesystem)."""
    samples = []
    for label, cname in enumerate(D.CLASS_DIRS):
        for i in range(counts[label]):
            samples.append(D.Sample(Path(f"/{prefix}/{cname}/{i:04d}.png"), label, cname))
    samples.sort(key=lambda s: s.path.as_posix())
    return D.DatasetIndex(tuple(samples), tuple(counts))


class TestIngest:
    def test_counts_and_sorting(self, tmp_path):
        tiny_corpus(tmp_path, per_class=4)
        index = D.ingest(tmp_path)
        assert index.counts == (4, 4, 4)
        paths = [s.path.as_posix() for s in index.samples]
        assert paths == sorted(paths)

    def test_missing_class_dir(self, tmp_path):
        tiny_corpus(tmp_path, per_class=2)
        import shutil
        shutil.rmtree(tmp_path / "normal")
        with pytest.raises(DatasetError, match="normal"):
            D.ingest(tmp_path)

    def test_empty_class_dir_names_class(self, tmp_path):
        tiny_corpus(tmp_path, per_class=2)
        for p in (tmp_path / "infection").iterdir():
            p.unlink()
        with pytest.raises(DatasetError, match="infection"):
            D.ingest(tmp_path)

    def test_undecodable_file_skipped_with_warning(self, tmp_path, caplog):
        tiny_corpus(tmp_path, per_class=3)
        (tmp_path / "covid" / "broken.png").write_bytes(b"not a png at all")
        with caplog.at_level("WARNING"):
            index = D.ingest(tmp_path)
        assert index.counts == (3, 3, 3)
        assert any("broken.png" in r.message for r in caplog.records)

    def test_duplicate_content_two_names(self, tmp_path):
        tiny_corpus(tmp_path, per_class=3)
        src = next((tmp_path / "covid").glob("*.png"))
        (tmp_path / "covid" / "zz_copy.png").write_bytes(src.read_bytes())
        index = D.ingest(tmp_path)
        assert index.counts[0] == 4


class TestPreprocess:
    def test_mid_gray_normalization(self, tmp_path):
        write_gray_png(tmp_path / "gray.png", np.full((10, 10), 128 / 255))
        out = D.preprocess(tmp_path / "gray.png")
        assert out.shape == (3, 237, 237)
        expected = (128 / 255 - D.IMAGENET_MEAN) / D.IMAGENET_STD
        for c in range(3):
            np.testing.assert_allclose(out[c], expected[c], atol=1e-5)

    def test_unit_normalization(self, tmp_path):
        write_gray_png(tmp_path / "gray.png", np.full((10, 10), 128 / 255))
        out = D.preprocess(tmp_path / "gray.png", normalize="unit")
        np.testing.assert_allclose(out, 128 / 255, atol=1e-5)

    def test_native_size_skips_interpolation(self, tmp_path, rng):
        img = rng.uniform(size=(237, 237))
        write_gray_png(tmp_path / "native.png", img)
        out = D.preprocess(tmp_path / "native.png", normalize="unit")
        u8 = np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8)
        np.testing.assert_allclose(out[0], u8 / 255.0, atol=1e-6)

    def test_grayscale_replicated(self, tmp_path, rng):
        write_gray_png(tmp_path / "g.png", rng.uniform(size=(30, 40)))
        out = D.preprocess(tmp_path / "g.png", normalize="unit")
        np.testing.assert_array_equal(out[0], out[1])
        np.testing.assert_array_equal(out[1], out[2])

    def test_alpha_dropped(self, tmp_path, rng):
        rgba = (rng.uniform(size=(20, 20, 4)) * 255).astype(np.uint8)
        Image.fromarray(rgba, mode="RGBA").save(tmp_path / "a.png")
        out = D.preprocess(tmp_path / "a.png", normalize="unit")
        assert out.shape == (3, 237, 237)
        assert np.isfinite(out).all()

    def test_output_always_finite(self, tmp_path, rng):
        write_gray_png(tmp_path / "x.png", rng.uniform(size=(17, 51)))
        out = D.preprocess(tmp_path / "x.png")
        assert out.shape == (3, 237, 237) and np.isfinite(out).all()

    def test_decode_failure_names_path(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"junk")
        with pytest.raises(DatasetError, match="bad.png"):
            D.preprocess(bad)

    def test_unknown_normalization(self, tmp_path):
        write_gray_png(tmp_path / "g.png", np.zeros((5, 5)))
        with pytest.raises(ConfigError):
            D.preprocess(tmp_path / "g.png", normalize="zscore")


class TestSplit:
    def test_paper_scale_counts(self):
        index = synthetic_index((175, 100, 100))
        assignment = D.split(index, (0.8, 0.1, 0.1), seed=11)
        assert len(assignment.val) == 37    # 17 + 10 + 10
        assert len(assignment.test) == 37
        assert len(assignment.train) == 301

    def test_deterministic(self):
        index = synthetic_index((20, 10, 8))
        a = D.split(index, seed=5)
        b = D.split(index, seed=5)
        assert a == b
        c = D.split(index, seed=6)
        assert a != c

    def test_all_train(self):
        index = synthetic_index((5, 5, 5))
        assignment = D.split(index, (1.0, 0.0, 0.0), seed=0)
        assert len(assignment.train) == 15 and not assignment.val and not assignment.test

    def test_bad_ratios(self):
        index = synthetic_index((5, 5, 5))
        with pytest.raises(ConfigError, match="sum"):
            D.split(index, (0.8, 0.1, 0.2), seed=0)
        with pytest.raises(ConfigError):
            D.split(index, (1.2, -0.1, -0.1), seed=0)

    def test_class_too_small(self):
        index = synthetic_index((2, 5, 5))
        with pytest.raises(DatasetError, match="covid"):
            D.split(index, seed=0)

    def test_partition_properties_random_indices(self, rng):
        for _ in range(100):
            counts = tuple(int(rng.integers(3, 60)) for _ in range(3))
            ratios = rng.dirichlet((4, 1, 1))
            ratios = tuple(float(r) for r in ratios / ratios.sum())
            assignment = D.split(synthetic_index(counts), ratios, seed=int(rng.integers(1 << 16)))
            everything = [*assignment.train, *assignment.val, *assignment.test]
            assert len(everything) == sum(counts)
            assert len({s.path for s in everything}) == sum(counts)  # disjoint + covering
            for label in range(3):
                n = counts[label]
                n_val = sum(1 for s in assignment.val if s.label == label)
                n_test = sum(1 for s in assignment.test if s.label == label)
                assert abs(n_val - n * ratios[1]) < 1.0    # stratified within one sample
                assert abs(n_test - n * ratios[2]) < 1.0

    def test_manifest_round_trip_and_bytes(self, tmp_path):
        tiny_corpus(tmp_path / "data", per_class=4)
        index = D.ingest(tmp_path / "data")
        assignment = D.split(index, (0.5, 0.25, 0.25), seed=3)
        D.save_split(assignment, tmp_path / "a.json")
        D.save_split(assignment, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        loaded = D.load_split(tmp_path / "a.json")
        assert [s.path for s in loaded.train] == [s.path for s in assignment.train]
        assert [s.label for s in loaded.test] == [s.label for s in assignment.test]
        assert loaded.seed == 3 and loaded.ratios == (0.5, 0.25, 0.25)


class TestBatches:
    def test_partial_final_batch_kept(self):
        samples = synthetic_index((301, 3, 3)).samples
        train = [s for s in samples if s.label == 0]
        loader = lambda s: np.zeros(4, np.float32)
        got = D.batches(train, batch_size=15, epoch_seed=0, loader=loader)
        assert len(got) == 21
        assert [len(b.samples) for b in got] == [15] * 20 + [1]

    def test_one_hot_ordering(self):
        samples = synthetic_index((3, 3, 3)).samples
        loader = lambda s: np.zeros(2, np.float32)
        for batch in D.batches(list(samples), batch_size=4, epoch_seed=1, loader=loader):
            for row, sample in zip(batch.targets, batch.samples):
                expected = np.zeros(3, np.float32)
                expected[sample.label] = 1.0
                np.testing.assert_array_equal(row, expected)

    def test_same_seed_same_order(self):
        samples = list(synthetic_index((9, 3, 3)).samples)
        loader = lambda s: np.zeros(1, np.float32)
        a = D.batches(samples, 4, epoch_seed=7, loader=loader)
        b = D.batches(samples, 4, epoch_seed=7, loader=loader)
        assert [x.samples for x in a] == [x.samples for x in b]
        c = D.batches(samples, 4, epoch_seed=8, loader=loader)
        assert [x.samples for x in a] != [x.samples for x in c]

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            D.batches([], 4)

    def test_bad_batch_size(self):
        samples = list(synthetic_index((3, 3, 3)).samples)
        with pytest.raises(ConfigError):
            D.batches(samples, 0)


def test_label_for_path():
    assert D.label_for_path(Path("/data/covid/x.png")) == 0
    assert D.label_for_path(Path("/data/normal/sub/x.png")) == 1
    assert D.label_for_path(Path("rel/infection/x.jpg")) == 2
    with pytest.raises(DatasetError):
        D.label_for_path(Path("/data/other/x.png"))
