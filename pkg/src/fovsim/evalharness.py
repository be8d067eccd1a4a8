"""Evaluation battery: pixel metrics, statistics reports, benchmarks.

Pixel differences are reported on the 0-255 scale (mean absolute
difference over pixels and channels, times 255) to match the published
reference numbers. Reports serialize to JSON and CSV; aggregates are
recomputed and cross-checked on load. Benchmark timings wrap the
in-memory calls only, never file IO.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyFovea
from .imagekit import Fixation, Image, to_grayscale
from .pooling import PoolingLayout
from .pyramid import _build_pyramid_array
from .texstats import StatsEngine, percent_diff


def pixel_diff(a: Image, b: Image) -> float:
    """Mean |a-b| over pixels and channels, expressed on the 0-255 scale."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"{a.data.shape} vs {b.data.shape}")
    return float(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)).mean() * 255.0)


def fovea_diff(a: Image, b: Image, fix: Fixation) -> float:
    """pixel_diff restricted to the closed disk of the fovea radius."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"{a.data.shape} vs {b.data.shape}")
    yy = np.arange(a.height, dtype=np.float64)[:, None] - fix.fy
    xx = np.arange(a.width, dtype=np.float64)[None, :] - fix.fx
    disk = np.hypot(yy, xx) <= fix.fovea_radius
    if not disk.any():
        raise EmptyFovea("foveal disk contains no pixels")
    d = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))
    return float(d[disk].mean() * 255.0)


def image_content_hash(img: Image) -> str:
    return hashlib.sha256(img.data.tobytes()).hexdigest()[:16]


@dataclass
class EvalRecord:
    image_id: str
    pixel_diff_mean: float | None = None
    fovea_diff_mean: float | None = None
    stat_err_mean: float | None = None
    stat_err_std: float | None = None


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)
    speedup: float | None = None
    config_hash: str = ""

    def recompute_aggregates(self) -> dict:
        agg = {}
        for key in ("pixel_diff_mean", "fovea_diff_mean", "stat_err_mean", "stat_err_std"):
            vals = [getattr(r, key) for r in self.records if getattr(r, key) is not None]
            if vals:
                agg[key] = {"mean": float(np.mean(vals)), "max": float(np.max(vals))}
        return agg

    def finalize(self) -> "EvalReport":
        self.aggregates = self.recompute_aggregates()
        return self


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def pixel_report(pairs: list[tuple[Image, Image]], fix: Fixation, cfg: dict | None = None) -> EvalReport:
    """Per-image pixel and fovea differences for (candidate, reference) pairs."""
    report = EvalReport(config_hash=config_hash(cfg or {}))
    for cand, ref in pairs:
        report.records.append(EvalRecord(
            image_id=image_content_hash(ref),
            pixel_diff_mean=pixel_diff(cand, ref),
            fovea_diff_mean=fovea_diff(cand, ref, fix),
        ))
    return report.finalize()


def stat_error_report(
    pairs: list[tuple[Image, Image]],
    layout: PoolingLayout,
    cfg: dict | None = None,
) -> EvalReport:
    """Region-statistics percent error per (candidate, reference) pair.

    Records are sorted by descending mean error, mirroring the standard
    highest-to-lowest presentation.
    """
    engine = StatsEngine(layout)
    report = EvalReport(config_hash=config_hash(cfg or {}))
    for cand, ref in pairs:
        cand_stats = engine.compute(_build_pyramid_array(_gray2d(cand)))
        ref_stats = engine.compute(_build_pyramid_array(_gray2d(ref)))
        per_image = np.concatenate(
            [percent_diff(c, r).per_entry for c, r in zip(cand_stats, ref_stats)]
        )
        report.records.append(EvalRecord(
            image_id=image_content_hash(ref),
            stat_err_mean=float(per_image.mean()),
            stat_err_std=float(per_image.std()),
        ))
    report.records.sort(key=lambda r: -(r.stat_err_mean or 0.0))
    return report.finalize()


def _gray2d(img: Image) -> np.ndarray:
    g = img if img.channels == 1 else to_grayscale(img)
    return g.data[:, :, 0].astype(np.float64)


@dataclass
class BenchmarkResult:
    per_backend: dict  # name -> {"mean_seconds": float, "min_seconds": float, "per_image": list}
    speedups: dict     # "slow/fast" -> ratio


def benchmark(backends: dict, images: list[Image], repetitions: int = 5) -> BenchmarkResult:
    """Wall-clock per-image timings for in-memory foveation callables.

    backends maps name -> callable(Image) -> Image. Timing excludes IO by
    construction; repetitions must be >= 3 and the minimum per image is
    retained alongside the mean.
    """
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    per_backend = {}
    for name, fn in backends.items():
        per_image = []
        for img in images:
            times = []
            for _ in range(repetitions):
                t0 = time.perf_counter()
                fn(img)
                times.append(time.perf_counter() - t0)
            per_image.append({"mean": float(np.mean(times)), "min": float(np.min(times))})
        per_backend[name] = {
            "mean_seconds": float(np.mean([p["mean"] for p in per_image])),
            "min_seconds": float(np.min([p["min"] for p in per_image])),
            "per_image": per_image,
        }
    speedups = {}
    names = list(per_backend)
    for slow in names:
        for fast in names:
            if slow != fast:
                speedups[f"{slow}/{fast}"] = (
                    per_backend[slow]["mean_seconds"] / per_backend[fast]["mean_seconds"]
                )
    return BenchmarkResult(per_backend=per_backend, speedups=speedups)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def report_to_json(report: EvalReport) -> str:
    return json.dumps({
        "config_hash": report.config_hash,
        "aggregates": report.aggregates,
        "runtimes": report.runtimes,
        "speedup": report.speedup,
        "records": [vars(r) for r in report.records],
    }, indent=2, sort_keys=True)


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    report = EvalReport(
        records=[EvalRecord(**r) for r in doc["records"]],
        aggregates=doc["aggregates"],
        runtimes=doc.get("runtimes", {}),
        speedup=doc.get("speedup"),
        config_hash=doc.get("config_hash", ""),
    )
    recomputed = report.recompute_aggregates()
    for key, val in recomputed.items():
        stored = report.aggregates.get(key, {})
        for stat_name, v in val.items():
            if abs(stored.get(stat_name, float("nan")) - v) > 1e-9:
                raise ValueError(f"aggregate {key}.{stat_name} does not match records")
    return report


def report_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["image_id", "pixel_diff_mean", "fovea_diff_mean", "stat_err_mean", "stat_err_std"])
    for r in report.records:
        writer.writerow([
            r.image_id,
            _fmt(r.pixel_diff_mean), _fmt(r.fovea_diff_mean),
            _fmt(r.stat_err_mean), _fmt(r.stat_err_std),
        ])
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))
