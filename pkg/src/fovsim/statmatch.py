"""Statistics-matching synthesis: the desk-scale ground-truth generator.

Given a grayscale image, a pooling layout, and per-region target statistic
vectors, gradient descent with backtracking step halving drives a canvas
(source + seeded peripheral noise) toward the targets while the fovea
stays clamped to the source. The loss is the sum over regions and
statistics of squared residuals, each divided by max(|target|, 1e-3) so
the families stay commensurate; this matches the percent-difference
metric used for validation.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadChannelCount, NonFiniteLoss, SchemaMismatch
from .imagekit import Fixation, Image, decode_png, encode_png
from .pooling import PoolingLayout, build_layout, eccentricity_map, normalize_weights
from .pyramid import _build_pyramid_array
from .texstats import DEFAULT_CONFIG, StatsConfig, StatsEngine, StatVector, percent_diff

RESIDUAL_FLOOR = 1e-3
NOISE_SIGMA = 0.2


@dataclass(frozen=True)
class SynthOptions:
    seed: int = 0
    max_iters: int = 400
    tol: float = 1e-4
    noise_sigma: float = NOISE_SIGMA


@dataclass
class SynthState:
    canvas: Image
    iteration: int
    loss: float
    rng_seed: int
    loss_history: list[float] = field(default_factory=list)


def compute_targets(src: Image, layout: PoolingLayout, cfg: StatsConfig = DEFAULT_CONFIG) -> list[StatVector]:
    """Region statistics of the source image itself, the usual target set."""
    engine = StatsEngine(layout, cfg)
    return engine.compute(_build_pyramid_array(_as_gray2d(src)))


def _as_gray2d(img: Image) -> np.ndarray:
    if img.channels != 1:
        raise BadChannelCount("statmatch operates on single-channel images")
    return img.data[:, :, 0].astype(np.float64)


class _Problem:
    """Bound (layout, targets) with cached engine and fovea mask."""

    def __init__(self, layout: PoolingLayout, targets: list[StatVector], cfg: StatsConfig):
        self.engine = StatsEngine(layout, cfg)
        if len(targets) != len(layout.regions):
            raise SchemaMismatch(
                f"{len(targets)} targets for {len(layout.regions)} regions"
            )
        for t in targets:
            if t.schema != self.engine.schema:
                raise SchemaMismatch("target schema does not match configuration")
        self.tvals = np.stack([t.values for t in targets])
        self.denom = np.maximum(np.abs(self.tvals), RESIDUAL_FLOOR)
        ecc = eccentricity_map(layout.height, layout.width, layout.fixation)
        self.fovea = ecc <= layout.fixation.fovea_radius

    def loss(self, canvas: np.ndarray) -> float:
        vals, _ = self.engine.forward(_build_pyramid_array(canvas))
        return self._loss_from_vals(vals)

    def _residuals(self, vals: np.ndarray) -> np.ndarray:
        return (vals - self.tvals) / self.denom

    def _loss_from_vals(self, vals: np.ndarray) -> float:
        r = self._residuals(vals)
        return float((r * r).sum())

    def loss_and_grad(self, canvas: np.ndarray) -> tuple[float, np.ndarray]:
        vals, cache = self.engine.forward(_build_pyramid_array(canvas))
        r = self._residuals(vals)
        loss = float((r * r).sum())
        if not np.isfinite(loss):
            bad = np.argwhere(~np.isfinite(r))
            where = ", ".join(
                f"region {i} stat {self.engine.schema[j].name}{self.engine.schema[j][1:]}"
                for i, j in bad[:4]
            )
            raise NonFiniteLoss(f"non-finite residuals at: {where}")
        grad = self.engine.backward(cache, 2.0 * r / self.denom)
        grad[self.fovea] = 0.0
        if not np.all(np.isfinite(grad)):
            raise NonFiniteLoss("non-finite gradient")
        return loss, grad


def loss_and_grad(
    canvas: Image,
    layout: PoolingLayout,
    targets: list[StatVector],
    cfg: StatsConfig = DEFAULT_CONFIG,
) -> tuple[float, np.ndarray]:
    """Loss plus analytic gradient w.r.t. every canvas pixel (fovea zeroed)."""
    return _Problem(layout, targets, cfg).loss_and_grad(_as_gray2d(canvas))


def synthesize(
    src: Image,
    layout: PoolingLayout,
    targets: list[StatVector],
    opts: SynthOptions = SynthOptions(),
    cfg: StatsConfig = DEFAULT_CONFIG,
) -> SynthState:
    """Optimize a peripheral canvas whose region statistics match the targets.

    Deterministic in (src, layout, targets, opts): the canvas starts as the
    source plus seeded Gaussian noise (opts.noise_sigma) in the periphery,
    and every accepted step strictly decreases the loss.
    """
    problem = _Problem(layout, targets, cfg)
    src2d = _as_gray2d(src)
    if src2d.shape != (layout.height, layout.width):
        raise SchemaMismatch("source dimensions do not match layout")
    rng = np.random.default_rng(opts.seed)
    canvas = src2d.copy()
    if opts.noise_sigma > 0.0:
        noise = opts.noise_sigma * rng.standard_normal(src2d.shape)
        canvas = np.clip(canvas + np.where(problem.fovea, 0.0, noise), 0.0, 1.0)
    canvas[problem.fovea] = src2d[problem.fovea]

    history: list[float] = []
    loss, grad = problem.loss_and_grad(canvas)
    history.append(loss)
    prev: tuple[np.ndarray, np.ndarray] | None = None
    step = 1.0 / max(float(np.abs(grad).max()), 1e-9)
    iteration = 0
    for iteration in range(1, opts.max_iters + 1):
        if loss < opts.tol:
            break
        if prev is not None:
            # Barzilai-Borwein secant step (alternating variants), then
            # backtracking halving until the loss strictly decreases
            dx = canvas - prev[0]
            dg = grad - prev[1]
            sy = float((dx * dg).sum())
            if sy > 1e-18:
                if iteration % 2 == 0:
                    bb = float((dx * dx).sum()) / sy
                else:
                    bb = sy / max(float((dg * dg).sum()), 1e-300)
                step = float(np.clip(bb, 1e-12, 1e5))
        s = step
        accepted = False
        for _ in range(60):
            trial = np.clip(canvas - s * grad, 0.0, 1.0)
            trial[problem.fovea] = src2d[problem.fovea]
            trial_loss = problem.loss(trial)
            if trial_loss < loss:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
        prev = (canvas, grad)
        canvas = trial
        loss = trial_loss
        history.append(loss)
        if iteration < opts.max_iters and loss >= opts.tol:
            loss, grad = problem.loss_and_grad(canvas)
            history[-1] = loss
    out = Image(canvas.astype(np.float32)[:, :, None])
    return SynthState(
        canvas=out,
        iteration=iteration,
        loss=history[-1],
        rng_seed=opts.seed,
        loss_history=history,
    )


# ---------------------------------------------------------------------------
# Batch driver: corpus directory -> (input, target) PNG pairs + manifest
# ---------------------------------------------------------------------------

def run_batch(
    corpus: list[tuple[str, Image]],
    output_dir: str | Path,
    seed: int = 0,
    fovea_radius: float | None = None,
    opts: SynthOptions | None = None,
    cfg: StatsConfig = DEFAULT_CONFIG,
    bouma: float = 0.5,
    r_min: float = 8.0,
) -> dict:
    """Synthesize a training target for every corpus image; write a manifest.

    Images must share dimensions. Per-image seeds derive from (seed, index)
    so reruns are bit-identical and images are independent.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    layout = None
    t0 = time.perf_counter()
    for i, (name, img) in enumerate(corpus):
        gray = img if img.channels == 1 else _luma(img)
        if layout is None:
            fr = gray.width / 8.0 if fovea_radius is None else fovea_radius
            fix = Fixation(fx=gray.width / 2.0, fy=gray.height / 2.0, fovea_radius=fr)
            layout = normalize_weights(
                build_layout(gray.height, gray.width, fix, bouma=bouma, r_min=r_min)
            )
        engine = StatsEngine(layout, cfg)
        targets = engine.compute(_build_pyramid_array(gray.data[:, :, 0].astype(np.float64)))
        o = opts or SynthOptions()
        per_seed = int(np.random.default_rng([seed, i]).integers(0, 2**31 - 1))
        state = synthesize(gray, layout, targets, SynthOptions(
            seed=per_seed, max_iters=o.max_iters, tol=o.tol, noise_sigma=o.noise_sigma,
        ), cfg)
        result = engine.compute(_build_pyramid_array(state.canvas.data[:, :, 0].astype(np.float64)))
        pct = float(np.mean([percent_diff(rv, tv).mean for rv, tv in zip(result, targets)]))
        in_path = out / f"{name}_input.png"
        tgt_path = out / f"{name}_target.png"
        in_path.write_bytes(encode_png(gray))
        tgt_path.write_bytes(encode_png(state.canvas))
        entries.append({
            "name": name,
            "input": in_path.name,
            "target": tgt_path.name,
            "seed": per_seed,
            "iterations": state.iteration,
            "final_loss": state.loss,
            "mean_percent_error": pct,
        })
    manifest = {
        "seed": seed,
        "layout_schema_id": layout.schema_id if layout else None,
        "elapsed_seconds": time.perf_counter() - t0,
        "entries": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _luma(img: Image) -> Image:
    from .imagekit import to_grayscale

    return to_grayscale(img)


def load_pairs(manifest_path: str | Path) -> list[tuple[Image, Image]]:
    """Read (input, target) image pairs back from a batch manifest."""
    path = Path(manifest_path)
    manifest = json.loads(path.read_text())
    pairs = []
    for e in manifest["entries"]:
        src = decode_png((path.parent / e["input"]).read_bytes())
        tgt = decode_png((path.parent / e["target"]).read_bytes())
        pairs.append((src, tgt))
    return pairs
