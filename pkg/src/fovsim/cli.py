"""Command-line surface: foveate, gen-targets, train, eval, make-corpus, serve.

Every run writes a run_manifest.json with the resolved configuration next
to its outputs, so results are reproducible from the manifest alone.
Heavy imports happen inside handlers, after --threads pins the BLAS pool.

Exit codes: 2 bad flags, 3 IO errors, 4 checkpoint mismatch, 5 diverged
training.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_BAD_FLAGS = 2
EXIT_IO = 3
EXIT_CHECKPOINT = 4
EXIT_DIVERGED = 5


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _write_manifest(out_dir: Path, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"resolved_config": config}
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(json.dumps({"resolved_config": config}, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fovsim", description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--output-dir", type=Path, default=Path("fovsim_out"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("foveate", help="foveate one image with a chosen backend")
    p.add_argument("backend", choices=["blur", "fgn"])
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--fx", type=float, required=True)
    p.add_argument("--fy", type=float, required=True)
    p.add_argument("--fovea-radius", type=float, default=None)
    p.add_argument("--sigma-max", type=float, default=4.0)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--approx", action="store_true", help="layered blur approximation")
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("gen-targets", help="statistics-matching training targets for a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--fovea-radius", type=float, default=None)
    p.add_argument("--bouma", type=float, default=0.5)
    p.add_argument("--r-min", type=float, default=8.0)
    p.add_argument("--max-iters", type=int, default=400)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--noise-sigma", type=float, default=0.2)

    p = sub.add_parser("train", help="train the foveated generator on image pairs")
    p.add_argument("--pairs", type=Path, required=True,
                   help="gen-targets manifest.json, or a directory of *_input.png/*_target.png")
    p.add_argument("--arch-scale", type=int, default=8, help="width divisor of the full architecture")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.07)
    p.add_argument("--fovea-radius", type=float, default=None)
    p.add_argument("--out-checkpoint", type=Path, required=True)

    p = sub.add_parser("eval", help="pixel / stats / bench evaluation reports with figures")
    p.add_argument("--mode", choices=["pixel", "stats", "bench"], required=True)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--corpus", type=Path, default=None)
    p.add_argument("--candidate-dir", type=Path, default=None)
    p.add_argument("--reference-dir", type=Path, default=None)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--fovea-radius", type=float, default=None)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--bench-iters", type=int, default=400, help="statmatch iterations in bench mode")

    p = sub.add_parser("make-corpus", help="write a deterministic synthetic corpus")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--kind", choices=["scene", "texture"], default="scene")

    p = sub.add_parser("serve", help="run the grid-foveation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--storage-dir", type=Path, default=Path("fovsim_jobs"))
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--static", type=Path, default=None,
                   help="directory with the built viewer (frontend/) to host at /")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    handler = {
        "foveate": _cmd_foveate,
        "gen-targets": _cmd_gen_targets,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "make-corpus": _cmd_make_corpus,
        "serve": _cmd_serve,
    }[args.command]
    try:
        return handler(args)
    except BrokenPipeError:
        return 0


def _resolved(args, **extra) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    cfg.update(extra)
    return cfg


def _cmd_foveate(args) -> int:
    from .errors import BadMagic, FovsimError, PayloadSizeMismatch, VersionUnsupported
    from . import fgn as fgn_mod
    from . import radialblur
    from .imagekit import Fixation, decode_png, encode_png

    if args.backend == "fgn" and args.checkpoint is None:
        parser_error("--checkpoint is required for the fgn backend")
    if not args.input.exists():
        print(f"input not found: {args.input}", file=sys.stderr)
        return EXIT_IO
    try:
        img = decode_png(args.input.read_bytes())
    except FovsimError as exc:
        print(f"cannot decode {args.input}: {exc}", file=sys.stderr)
        return EXIT_IO
    fr = args.fovea_radius if args.fovea_radius is not None else img.width / 8.0
    fix = Fixation(fx=args.fx, fy=args.fy, fovea_radius=fr)
    if args.backend == "blur":
        profile = radialblur.default_profile(img.height, img.width, fix, sigma_max=args.sigma_max)
        out = radialblur.radial_blur(img, fix, profile, approx=args.approx)
    else:
        try:
            params = fgn_mod.load_checkpoint(args.checkpoint.read_bytes())
        except FileNotFoundError:
            print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
            return EXIT_IO
        except (BadMagic, VersionUnsupported, PayloadSizeMismatch) as exc:
            print(f"bad checkpoint: {exc}", file=sys.stderr)
            return EXIT_CHECKPOINT
        out = fgn_mod.foveate_image(params, img, fix)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_bytes(encode_png(out))
    _write_manifest(args.output.parent, _resolved(args))
    return 0


def _cmd_gen_targets(args) -> int:
    from . import statmatch
    from .corpus import load_corpus_dir

    if not args.corpus.is_dir():
        print(f"corpus directory not found: {args.corpus}", file=sys.stderr)
        return EXIT_IO
    corpus = load_corpus_dir(args.corpus, size=args.size)
    if not corpus:
        print(f"no .png files in {args.corpus}", file=sys.stderr)
        return EXIT_IO
    opts = statmatch.SynthOptions(
        max_iters=args.max_iters, tol=args.tol, noise_sigma=args.noise_sigma
    )
    manifest = statmatch.run_batch(
        corpus, args.output_dir, seed=args.seed, fovea_radius=args.fovea_radius,
        opts=opts, bouma=args.bouma, r_min=args.r_min,
    )
    _write_manifest(args.output_dir, _resolved(args, n_images=len(manifest["entries"])))
    return 0


def _cmd_train(args) -> int:
    from .errors import DivergedLoss, ShapeMismatch
    from . import fgn as fgn_mod
    from .imagekit import decode_png
    from .statmatch import load_pairs

    if args.pairs.is_file():
        pairs = load_pairs(args.pairs)
    elif args.pairs.is_dir():
        inputs = sorted(args.pairs.glob("*_input.png"))
        pairs = []
        for inp in inputs:
            tgt = inp.with_name(inp.name.replace("_input.png", "_target.png"))
            if tgt.exists():
                pairs.append((decode_png(inp.read_bytes()), decode_png(tgt.read_bytes())))
    else:
        print(f"pairs not found: {args.pairs}", file=sys.stderr)
        return EXIT_IO
    if not pairs:
        print("no training pairs found", file=sys.stderr)
        return EXIT_IO
    arch = fgn_mod.FgnArch.paper_scale(width_factor=args.arch_scale)
    opts = fgn_mod.TrainOpts(
        seed=args.seed, epochs=args.epochs, batch=args.batch, lr=args.lr,
        fovea_radius=args.fovea_radius,
    )
    try:
        params = fgn_mod.train(pairs, arch, opts)
    except DivergedLoss as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ShapeMismatch as exc:
        print(f"bad training data: {exc}", file=sys.stderr)
        return EXIT_IO
    args.out_checkpoint.parent.mkdir(parents=True, exist_ok=True)
    args.out_checkpoint.write_bytes(fgn_mod.save_checkpoint(params))
    out_dir = args.out_checkpoint.parent
    _write_manifest(out_dir, _resolved(
        args, final_loss=params.training_meta.get("final_loss"), n_pairs=len(pairs)
    ))
    return 0


def _load_eval_pairs(args):
    from .imagekit import decode_png

    pairs = []
    cands = sorted(args.candidate_dir.glob("*.png"))
    for cand in cands:
        ref = args.reference_dir / cand.name
        if ref.exists():
            pairs.append((decode_png(cand.read_bytes()), decode_png(ref.read_bytes())))
    return pairs


def _cmd_eval(args) -> int:
    from .errors import BadMagic, PayloadSizeMismatch, VersionUnsupported
    from . import evalharness as ev
    from . import figures

    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    try:
        if args.mode == "pixel":
            report = _eval_pixel(args)
            figures.render_pixel_figure(report, fig_dir / "pixel_diff.png")
        elif args.mode == "stats":
            report = _eval_stats(args)
            figures.render_stat_error_figure(report, fig_dir / "stat_errors.png")
        else:
            report = _eval_bench(args, fig_dir)
    except (BadMagic, VersionUnsupported, PayloadSizeMismatch) as exc:
        print(f"bad checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_IO
    (out / "report.json").write_text(ev.report_to_json(report))
    (out / "report.csv").write_text(ev.report_to_csv(report))
    _write_manifest(out, _resolved(args))
    return 0


def _eval_pixel(args):
    from . import evalharness as ev
    from .imagekit import center_fixation

    if args.candidate_dir and args.reference_dir:
        pairs = _load_eval_pairs(args)
        if not pairs:
            raise FileNotFoundError("no matching candidate/reference pairs")
        h, w = pairs[0][0].height, pairs[0][0].width
        fix = center_fixation(h, w, args.fovea_radius)
        return ev.pixel_report(pairs, fix, _resolved(args))
    pairs, fix = _generated_pairs(args)
    return ev.pixel_report(pairs, fix, _resolved(args))


def _generated_pairs(args):
    """Run the checkpoint against the blur reference over a corpus."""
    from . import fgn as fgn_mod
    from . import radialblur
    from .corpus import load_corpus_dir
    from .imagekit import center_fixation

    if args.checkpoint is None or args.corpus is None:
        raise FileNotFoundError("--checkpoint and --corpus (or explicit dirs) are required")
    params = fgn_mod.load_checkpoint(args.checkpoint.read_bytes())
    corpus = load_corpus_dir(args.corpus, size=args.size)
    if not corpus:
        raise FileNotFoundError(f"no .png files in {args.corpus}")
    h, w = corpus[0][1].height, corpus[0][1].width
    fix = center_fixation(h, w, args.fovea_radius)
    profile = radialblur.default_profile(h, w, fix, sigma_max=4.0, fovea_radius=fix.fovea_radius)
    pairs = []
    for _name, img in corpus:
        ref = radialblur.radial_blur(img, fix, profile)
        cand = fgn_mod.foveate_image(params, img, fix)
        pairs.append((cand, ref))
    return pairs, fix


def _eval_stats(args):
    from . import evalharness as ev
    from .imagekit import center_fixation
    from .pooling import build_layout

    if args.candidate_dir and args.reference_dir:
        pairs = _load_eval_pairs(args)
        if not pairs:
            raise FileNotFoundError("no matching candidate/reference pairs")
    else:
        pairs, _fix = _generated_pairs(args)
    h, w = pairs[0][0].height, pairs[0][0].width
    fix = center_fixation(h, w, args.fovea_radius)
    layout = build_layout(h, w, fix)
    return ev.stat_error_report(pairs, layout, _resolved(args))


def _eval_bench(args, fig_dir):
    import numpy as np

    from . import evalharness as ev
    from . import fgn as fgn_mod
    from . import figures, statmatch
    from .corpus import load_corpus_dir
    from .imagekit import center_fixation, to_grayscale
    from .pooling import build_layout, normalize_weights

    if args.checkpoint is None or args.corpus is None:
        raise FileNotFoundError("--checkpoint and --corpus are required for bench mode")
    params = fgn_mod.load_checkpoint(args.checkpoint.read_bytes())
    corpus = load_corpus_dir(args.corpus, size=args.size)
    if not corpus:
        raise FileNotFoundError(f"no .png files in {args.corpus}")
    images = [img for _name, img in corpus[:2]]
    h, w = images[0].height, images[0].width
    fix = center_fixation(h, w, args.fovea_radius)
    layout = normalize_weights(build_layout(h, w, fix))

    def run_fgn(img):
        return fgn_mod.foveate_image(params, img, fix)

    def run_statmatch(img):
        gray = to_grayscale(img)
        targets = statmatch.compute_targets(gray, layout)
        opts = statmatch.SynthOptions(seed=args.seed, max_iters=args.bench_iters)
        return statmatch.synthesize(gray, layout, targets, opts).canvas

    result = ev.benchmark({"fgn": run_fgn, "statmatch": run_statmatch}, images,
                          repetitions=args.repetitions)
    figures.render_bench_figure(result, fig_dir / "bench.png")
    report = ev.EvalReport(config_hash=ev.config_hash(_resolved(args)))
    report.runtimes = {k: v["mean_seconds"] for k, v in result.per_backend.items()}
    report.speedup = result.speedups.get("statmatch/fgn")
    report.records = [ev.EvalRecord(image_id=ev.image_content_hash(img)) for img in images]
    return report.finalize()


def _cmd_make_corpus(args) -> int:
    from .corpus import make_corpus, make_fixture_set, write_corpus_dir

    if args.kind == "scene":
        corpus = make_corpus(args.n, size=args.size, seed=args.seed)
    else:
        corpus = make_fixture_set(args.n, size=args.size, seed=args.seed)
    write_corpus_dir(corpus, args.output_dir)
    _write_manifest(args.output_dir, _resolved(args))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        storage_dir=args.storage_dir,
        checkpoint_path=args.checkpoint,
        workers=args.workers,
        static_dir=args.static,
    )
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def parser_error(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)
    sys.exit(EXIT_BAD_FLAGS)


if __name__ == "__main__":
    sys.exit(main())
