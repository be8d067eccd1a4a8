import json
from pathlib import Path

import numpy as np
import pytest

from fovsim import cli, fgn
from fovsim.imagekit import decode_png

GOLDEN = Path(__file__).parent / "golden"


def run_cli(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:  # argparse errors
        return exc.code


@pytest.fixture
def zero_checkpoint(tmp_path):
    params = fgn.init_params(fgn.FgnArch.paper_scale(64), seed=0, mask_normalizer=10.0)
    for k in params.kernels:
        k[...] = 0.0
    path = tmp_path / "zero.fgn"
    path.write_bytes(fgn.save_checkpoint(params))
    return path


class TestFoveate:
    def test_blur_matches_golden_bit_exact(self, tmp_path):
        out = tmp_path / "blurred.png"
        code = run_cli(
            "--output-dir", tmp_path, "foveate", "blur",
            "--input", GOLDEN / "scene512.png",
            "--fx", 256.0, "--fy", 256.0, "--fovea-radius", 64.0,
            "--output", out,
        )
        assert code == 0
        got = decode_png(out.read_bytes())
        want = decode_png((GOLDEN / "scene512_blur_center.png").read_bytes())
        assert np.array_equal(got.data, want.data)

    def test_fgn_zero_checkpoint_gray(self, tmp_path, zero_checkpoint):
        src = tmp_path / "src.png"
        from fovsim.corpus import make_image
        from fovsim.imagekit import encode_png

        src.write_bytes(encode_png(make_image([1, 2], size=32)))
        out = tmp_path / "out.png"
        code = run_cli(
            "foveate", "fgn", "--input", src, "--fx", 16, "--fy", 16,
            "--checkpoint", zero_checkpoint, "--output", out,
        )
        assert code == 0
        img = decode_png(out.read_bytes())
        assert np.all(np.abs(img.data - 0.5) <= 1.0 / 255.0 + 1e-6)

    def test_fgn_without_checkpoint_exits_2(self, tmp_path):
        code = run_cli(
            "foveate", "fgn", "--input", GOLDEN / "scene512.png",
            "--fx", 1, "--fy", 1, "--output", tmp_path / "x.png",
        )
        assert code == 2

    def test_missing_input_exits_3(self, tmp_path):
        code = run_cli(
            "foveate", "blur", "--input", tmp_path / "nope.png",
            "--fx", 1, "--fy", 1, "--output", tmp_path / "x.png",
        )
        assert code == 3

    def test_corrupt_checkpoint_exits_4(self, tmp_path):
        src = tmp_path / "src.png"
        from fovsim.corpus import make_image
        from fovsim.imagekit import encode_png

        src.write_bytes(encode_png(make_image([1, 2], size=32)))
        bad = tmp_path / "bad.fgn"
        bad.write_bytes(b"FGN1" + b"\x00" * 32)
        code = run_cli(
            "foveate", "fgn", "--input", src, "--fx", 16, "--fy", 16,
            "--checkpoint", bad, "--output", tmp_path / "x.png",
        )
        assert code == 4

    def test_unknown_flag_exits_2(self, tmp_path):
        assert run_cli("foveate", "blur", "--frobnicate") == 2


class TestMakeCorpusAndGenTargets:
    def test_make_corpus_writes_n(self, tmp_path):
        code = run_cli("--output-dir", tmp_path / "c", "make-corpus", "--n", 4, "--size", 32)
        assert code == 0
        assert len(list((tmp_path / "c").glob("img*.png"))) == 4
        manifest = json.loads((tmp_path / "c" / "run_manifest.json").read_text())
        assert manifest["resolved_config"]["n"] == 4

    def test_gen_targets_pipeline(self, tmp_path):
        corpus_dir = tmp_path / "corpus"
        run_cli("--output-dir", corpus_dir, "make-corpus", "--n", 2, "--size", 32, "--kind", "texture")
        out_dir = tmp_path / "targets"
        code = run_cli(
            "--seed", 5, "--output-dir", out_dir, "gen-targets",
            "--corpus", corpus_dir, "--size", 32, "--fovea-radius", 4,
            "--max-iters", 10,
        )
        assert code == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert len(manifest["entries"]) == 2
        for entry in manifest["entries"]:
            assert (out_dir / entry["input"]).exists()
            assert (out_dir / entry["target"]).exists()

    def test_gen_targets_missing_corpus_exits_3(self, tmp_path):
        assert run_cli("gen-targets", "--corpus", tmp_path / "missing") == 3


class TestTrainAndEval:
    def test_train_eval_smoke(self, tmp_path):
        corpus_dir = tmp_path / "corpus"
        run_cli("--output-dir", corpus_dir, "make-corpus", "--n", 3, "--size", 32)
        pairs_dir = tmp_path / "pairs"
        pairs_dir.mkdir()
        # pair every image with itself: identity task
        for p in corpus_dir.glob("img*.png"):
            (pairs_dir / f"{p.stem}_input.png").write_bytes(p.read_bytes())
            (pairs_dir / f"{p.stem}_target.png").write_bytes(p.read_bytes())
        ckpt = tmp_path / "model.fgn"
        code = run_cli(
            "--seed", 1, "--output-dir", tmp_path / "train_out", "train",
            "--pairs", pairs_dir, "--arch-scale", 64, "--epochs", 2,
            "--lr", 0.05, "--out-checkpoint", ckpt,
        )
        assert code == 0
        assert ckpt.exists()
        params = fgn.load_checkpoint(ckpt.read_bytes())
        assert params.training_meta["epochs"] == 2

        eval_dir = tmp_path / "eval"
        code = run_cli(
            "--output-dir", eval_dir, "eval", "--mode", "pixel",
            "--checkpoint", ckpt, "--corpus", corpus_dir, "--size", 32,
        )
        assert code == 0
        assert (eval_dir / "report.json").exists()
        assert (eval_dir / "report.csv").exists()
        assert (eval_dir / "figures" / "pixel_diff.png").exists()

    def test_train_same_seed_identical_checkpoints(self, tmp_path):
        corpus_dir = tmp_path / "corpus"
        run_cli("--output-dir", corpus_dir, "make-corpus", "--n", 2, "--size", 32)
        pairs_dir = tmp_path / "pairs"
        pairs_dir.mkdir()
        for p in corpus_dir.glob("img*.png"):
            (pairs_dir / f"{p.stem}_input.png").write_bytes(p.read_bytes())
            (pairs_dir / f"{p.stem}_target.png").write_bytes(p.read_bytes())
        c1, c2 = tmp_path / "a.fgn", tmp_path / "b.fgn"
        for ckpt in (c1, c2):
            code = run_cli(
                "--seed", 4, "--output-dir", tmp_path / "t", "train",
                "--pairs", pairs_dir, "--arch-scale", 64, "--epochs", 1,
                "--out-checkpoint", ckpt,
            )
            assert code == 0
        assert c1.read_bytes() == c2.read_bytes()

    def test_eval_pixel_identical_dirs_zero(self, tmp_path):
        corpus_dir = tmp_path / "corpus"
        run_cli("--output-dir", corpus_dir, "make-corpus", "--n", 2, "--size", 32)
        eval_dir = tmp_path / "eval"
        code = run_cli(
            "--output-dir", eval_dir, "eval", "--mode", "pixel",
            "--candidate-dir", corpus_dir, "--reference-dir", corpus_dir,
            "--size", 32,
        )
        assert code == 0
        report = json.loads((eval_dir / "report.json").read_text())
        assert all(r["pixel_diff_mean"] == 0.0 for r in report["records"])
        assert all(r["fovea_diff_mean"] == 0.0 for r in report["records"])

    def test_eval_stats_identical_dirs_zero(self, tmp_path):
        corpus_dir = tmp_path / "corpus"
        run_cli("--output-dir", corpus_dir, "make-corpus", "--n", 1, "--size", 64)
        eval_dir = tmp_path / "evs"
        code = run_cli(
            "--output-dir", eval_dir, "eval", "--mode", "stats",
            "--candidate-dir", corpus_dir, "--reference-dir", corpus_dir,
            "--size", 64,
        )
        assert code == 0
        report = json.loads((eval_dir / "report.json").read_text())
        assert all(r["stat_err_mean"] == 0.0 for r in report["records"])
        assert (eval_dir / "figures" / "stat_errors.png").exists()

    def test_manifest_written_with_config(self, tmp_path):
        corpus_dir = tmp_path / "c"
        run_cli("--seed", 42, "--output-dir", corpus_dir, "make-corpus", "--n", 1, "--size", 32)
        manifest = json.loads((corpus_dir / "run_manifest.json").read_text())
        assert manifest["resolved_config"]["seed"] == 42
        assert manifest["resolved_config"]["command"] == "make-corpus"


class TestEvalBench:
    def test_bench_smoke_writes_speedup(self, tmp_path, zero_checkpoint):
        corpus_dir = tmp_path / "corpus"
        run_cli("--output-dir", corpus_dir, "make-corpus", "--n", 1, "--size", 64)
        eval_dir = tmp_path / "bench"
        code = run_cli(
            "--output-dir", eval_dir, "eval", "--mode", "bench",
            "--checkpoint", zero_checkpoint, "--corpus", corpus_dir,
            "--size", 64, "--repetitions", 3, "--bench-iters", 15,
        )
        assert code == 0
        report = json.loads((eval_dir / "report.json").read_text())
        assert report["speedup"] is not None and report["speedup"] > 1.0
        assert "fgn" in report["runtimes"] and "statmatch" in report["runtimes"]
        assert (eval_dir / "figures" / "bench.png").exists()
