import json

import numpy as np
import pytest

from fovsim.corpus import make_fixture_set, make_texture_fixture
from fovsim.errors import SchemaMismatch
from fovsim.imagekit import Fixation, Image, image_from_array
from fovsim.pooling import build_layout, normalize_weights
from fovsim.pyramid import _build_pyramid_array
from fovsim.statmatch import (
    SynthOptions,
    _Problem,
    compute_targets,
    load_pairs,
    loss_and_grad,
    run_batch,
    synthesize,
)
from fovsim.texstats import DEFAULT_CONFIG, StatsEngine, percent_diff


@pytest.fixture(scope="module")
def small_problem():
    img = make_texture_fixture([5, 0], size=16)
    fix = Fixation(8.0, 8.0, 3.0)
    layout = normalize_weights(build_layout(16, 16, fix, r_min=4.0))
    targets = compute_targets(img, layout)
    return img, layout, targets


class TestLossAndGrad:
    def test_zero_at_targets(self, small_problem):
        img, layout, targets = small_problem
        loss, grad = loss_and_grad(img, layout, targets)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_gradient_matches_finite_differences(self, small_problem, rng):
        img, layout, targets = small_problem
        prob = _Problem(layout, targets, DEFAULT_CONFIG)
        x = np.clip(
            img.data[:, :, 0].astype(np.float64) + 0.2 * rng.standard_normal((16, 16)),
            0.0, 1.0,
        )
        _loss, grad = prob.loss_and_grad(x)
        eps = 1e-5
        checked = 0
        while checked < 25:
            i, j = rng.integers(16), rng.integers(16)
            if prob.fovea[i, j]:
                continue
            xp = x.copy(); xp[i, j] += eps
            xm = x.copy(); xm[i, j] -= eps
            fd = (prob.loss(xp) - prob.loss(xm)) / (2 * eps)
            rel = abs(fd - grad[i, j]) / max(abs(fd), abs(grad[i, j]), 1e-10)
            assert rel < 1e-4
            checked += 1

    def test_fovea_gradient_zeroed(self, small_problem, rng):
        img, layout, targets = small_problem
        prob = _Problem(layout, targets, DEFAULT_CONFIG)
        x = np.clip(
            img.data[:, :, 0].astype(np.float64) + 0.1 * rng.standard_normal((16, 16)),
            0.0, 1.0,
        )
        _loss, grad = prob.loss_and_grad(x)
        assert np.all(grad[prob.fovea] == 0.0)

    def test_schema_validation(self, small_problem):
        img, layout, targets = small_problem
        with pytest.raises(SchemaMismatch):
            loss_and_grad(img, layout, targets[:-1])


class TestSynthesize:
    def test_fixed_point_with_zero_noise(self, small_problem):
        img, layout, targets = small_problem
        state = synthesize(img, layout, targets, SynthOptions(seed=0, max_iters=5, noise_sigma=0.0))
        assert state.loss_history[0] == 0.0
        assert np.array_equal(state.canvas.data, img.data)

    def test_monotone_loss_and_fovea_clamp(self, small_problem):
        img, layout, targets = small_problem
        state = synthesize(img, layout, targets, SynthOptions(seed=3, max_iters=40))
        hist = state.loss_history
        assert all(b <= a for a, b in zip(hist, hist[1:]))
        fovea = np.hypot(*np.mgrid[0:16, 0:16] - 8.0) <= 3.0
        got = state.canvas.data[:, :, 0]
        assert np.array_equal(got[fovea], img.data[:, :, 0][fovea])

    def test_deterministic_same_seed(self, small_problem):
        img, layout, targets = small_problem
        a = synthesize(img, layout, targets, SynthOptions(seed=7, max_iters=25))
        b = synthesize(img, layout, targets, SynthOptions(seed=7, max_iters=25))
        assert np.array_equal(a.canvas.data, b.canvas.data)
        assert a.loss_history == b.loss_history

    def test_different_seeds_differ(self, small_problem):
        img, layout, targets = small_problem
        a = synthesize(img, layout, targets, SynthOptions(seed=1, max_iters=10))
        b = synthesize(img, layout, targets, SynthOptions(seed=2, max_iters=10))
        assert not np.array_equal(a.canvas.data, b.canvas.data)

    def test_statistics_transfer_64(self):
        img = make_texture_fixture([77, 1], size=64)
        fix = Fixation(32.0, 32.0, 8.0)
        layout = normalize_weights(build_layout(64, 64, fix))
        targets = compute_targets(img, layout)
        state = synthesize(img, layout, targets, SynthOptions(seed=5, max_iters=400))
        engine = StatsEngine(layout)
        result = engine.compute(_build_pyramid_array(state.canvas.data[:, :, 0].astype(np.float64)))
        pct = np.mean([percent_diff(rv, tv).mean for rv, tv in zip(result, targets)])
        assert pct < 8.0


class TestBatchDriver:
    def test_batch_writes_pairs_and_manifest(self, tmp_path):
        corpus = make_fixture_set(2, size=32, seed=4)
        opts = SynthOptions(max_iters=15)
        manifest = run_batch(corpus, tmp_path, seed=9, fovea_radius=4.0, opts=opts)
        assert len(manifest["entries"]) == 2
        files = {p.name for p in tmp_path.iterdir()}
        for entry in manifest["entries"]:
            assert entry["input"] in files
            assert entry["target"] in files
            assert np.isfinite(entry["final_loss"])
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert on_disk["seed"] == 9

    def test_batch_rerun_bit_identical(self, tmp_path):
        corpus = make_fixture_set(1, size=32, seed=4)
        opts = SynthOptions(max_iters=10)
        run_batch(corpus, tmp_path / "a", seed=3, fovea_radius=4.0, opts=opts)
        run_batch(corpus, tmp_path / "b", seed=3, fovea_radius=4.0, opts=opts)
        for name in ("fix0000_input.png", "fix0000_target.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_load_pairs_roundtrip(self, tmp_path):
        corpus = make_fixture_set(2, size=32, seed=4)
        run_batch(corpus, tmp_path, seed=1, fovea_radius=4.0, opts=SynthOptions(max_iters=5))
        pairs = load_pairs(tmp_path / "manifest.json")
        assert len(pairs) == 2
        for src, tgt in pairs:
            assert isinstance(src, Image) and isinstance(tgt, Image)
            assert src.data.shape == tgt.data.shape
