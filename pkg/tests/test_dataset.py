import numpy as np
import pytest

from vderain.dataset import (ClipSample, ClipSource, build_dataset,
                             cut_validation_samples, load_sources,
                             make_demo_sources)
from vderain.rng import derive_seed
from vderain.video import VideoClip, write_clip


def _source(name, seed, frames=40, hw=80, labeled=True):
    rng = np.random.default_rng(seed)
    rainy = VideoClip(rng.random((frames, 3, hw, hw)).astype(np.float32))
    clean = VideoClip((rainy.data * 0.9).astype(np.float32)) if labeled else None
    return ClipSource(name, rainy, clean)


class TestDeriveSeed:
    def test_deterministic_and_tag_sensitive(self):
        assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
        assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
        assert derive_seed(0, "a") != derive_seed(1, "a")
        assert derive_seed(0, "chain", "x") != derive_seed(0, "langevin", "x")

    def test_fits_in_numpy_seed_range(self):
        for s in range(50):
            v = derive_seed(s, "tag", s * 7)
            assert 0 <= v < 2 ** 63


class TestBuildDataset:
    def test_partition_shapes_and_ordering(self):
        labeled = [_source(f"l{i}", i) for i in range(3)]
        unlabeled = [_source("u0", 10, labeled=False)]
        samples, registry = build_dataset(labeled, unlabeled, patch_size=32,
                                          chunk_len=20, batch_size=2, seed=0)
        # 3 labeled sources x 2 chunks = 6 labeled, 1 x 2 = 2 unlabeled
        assert sum(s.labeled for s in samples) == 6
        assert sum(not s.labeled for s in samples) == 2
        kinds = [b.labeled for b in registry.batches]
        assert kinds == sorted(kinds, reverse=True)   # labeled batches first
        assert [b.index for b in registry.batches] == [1, 2, 3, 4]
        for b in registry.batches:
            assert len(b.clip_ids) == 2
        for s in samples:
            assert s.rainy.shape == (20, 3, 32, 32)

    def test_deterministic(self):
        labeled = [_source(f"l{i}", i) for i in range(2)]
        a_samples, a_reg = build_dataset(labeled, [], 32, 20, 2, seed=5)
        b_samples, b_reg = build_dataset(labeled, [], 32, 20, 2, seed=5)
        assert [b.clip_ids for b in a_reg.batches] == [b.clip_ids for b in b_reg.batches]
        assert all(x.rainy.data.tobytes() == y.rainy.data.tobytes()
                   for x, y in zip(a_samples, b_samples))

    def test_seed_changes_partition(self):
        labeled = [_source(f"l{i}", i) for i in range(4)]
        _, reg_a = build_dataset(labeled, [], 32, 20, 2, seed=0)
        _, reg_b = build_dataset(labeled, [], 32, 20, 2, seed=1)
        ids = lambda reg: [b.clip_ids for b in reg.batches]
        assert ids(reg_a) != ids(reg_b)

    def test_incomplete_batches_dropped(self):
        labeled = [_source("l0", 0, frames=60)]   # 3 chunks
        samples, registry = build_dataset(labeled, [], 32, 20, 2, seed=0)
        assert len(registry.batches) == 1
        assert len(registry.batches[0].clip_ids) == 2

    def test_no_labeled_batch_rejected(self):
        labeled = [_source("l0", 0, frames=20)]   # one chunk < batch_size
        with pytest.raises(ValueError):
            build_dataset(labeled, [], 32, 20, 2, seed=0)

    def test_unlabeled_sources_must_fill_a_batch(self):
        labeled = [_source(f"l{i}", i) for i in range(2)]
        unlabeled = [_source("u0", 9, frames=20, labeled=False)]  # 1 chunk only
        with pytest.raises(ValueError):
            build_dataset(labeled, unlabeled, 32, 20, 2, seed=0)

    def test_duplicate_names_rejected(self):
        labeled = [_source("same", 0), _source("same", 1)]
        with pytest.raises(ValueError):
            build_dataset(labeled, [], 32, 20, 2, seed=0)

    def test_labeled_needs_clean(self):
        bad = [_source("l0", 0, labeled=False)]
        with pytest.raises(ValueError):
            build_dataset(bad, [], 32, 20, 2, seed=0)

    def test_crop_is_shared_between_rainy_and_clean(self):
        labeled = [_source("l0", 3)]
        samples, _ = build_dataset(labeled, [], 32, 20, 2, seed=0)
        for s in samples:
            # clean was built as 0.9 x rainy; a shared crop preserves that
            np.testing.assert_allclose(s.clean.data, s.rainy.data * 0.9,
                                       atol=1e-6)


class TestValidationCut:
    def test_same_shape_and_determinism(self):
        sources = [_source("v0", 0), _source("v1", 1)]
        a = cut_validation_samples(sources, patch_size=32, chunk_len=20, seed=0)
        b = cut_validation_samples(sources, patch_size=32, chunk_len=20, seed=0)
        assert len(a) == 4
        assert all(s.labeled for s in a)
        assert all(x.rainy.data.tobytes() == y.rainy.data.tobytes()
                   for x, y in zip(a, b))

    def test_requires_clean(self):
        with pytest.raises(ValueError):
            cut_validation_samples([_source("v0", 0, labeled=False)], 32, 20, 0)


class TestDemoSources:
    def test_structure(self):
        labeled, unlabeled, val = make_demo_sources(seed=0)
        assert len(labeled) == 6 and len(unlabeled) == 2 and len(val) == 2
        for src in labeled + val:
            assert src.clean is not None
            assert src.rainy.shape == src.clean.shape
            assert src.rainy.frames == 20
        for src in unlabeled:
            assert src.clean is None
        names = [s.name for s in labeled + unlabeled + val]
        assert len(set(names)) == len(names)

    def test_rain_is_actually_added(self):
        labeled, _, _ = make_demo_sources(seed=0)
        for src in labeled:
            diff = src.rainy.data - src.clean.data
            assert diff.min() >= -1e-6   # additive, clamped
            assert (diff > 0.05).mean() > 0.001

    def test_deterministic(self):
        a_lab, _, _ = make_demo_sources(seed=0)
        b_lab, _, _ = make_demo_sources(seed=0)
        assert a_lab[0].rainy.data.tobytes() == b_lab[0].rainy.data.tobytes()


class TestLoadSources:
    def test_round_trip_tree(self, tmp_path):
        labeled, _, _ = make_demo_sources(seed=0)
        src = labeled[0]
        d = tmp_path / "set" / src.name
        d.mkdir(parents=True)
        write_clip(d / "rainy.vt", src.rainy)
        write_clip(d / "clean.vt", src.clean)
        back = load_sources(tmp_path / "set", require_clean=True)
        assert len(back) == 1
        assert back[0].name == src.name
        assert back[0].rainy.data.tobytes() == src.rainy.data.tobytes()
        assert back[0].clean.data.tobytes() == src.clean.data.tobytes()

    def test_require_clean_enforced(self, tmp_path):
        labeled, _, _ = make_demo_sources(seed=0)
        src = labeled[0]
        d = tmp_path / "set" / src.name
        d.mkdir(parents=True)
        write_clip(d / "rainy.vt", src.rainy)
        with pytest.raises(ValueError):
            load_sources(tmp_path / "set", require_clean=True)
        ok = load_sources(tmp_path / "set", require_clean=False)
        assert ok[0].clean is None

    def test_empty_root_rejected(self, tmp_path):
        (tmp_path / "none").mkdir()
        with pytest.raises(ValueError):
            load_sources(tmp_path / "none", require_clean=False)
