"""Overlapping pooling regions growing linearly with eccentricity.

Region centers sit on log-polar rings: ring eccentricities grow
geometrically (ratio 1 + bouma/2) and angular spacing keeps neighboring
centers within 0.75 of the local region radius, which guarantees every
peripheral pixel falls strictly inside at least two regions. Each region
weights pixels with a raised-cosine radial window (1 at the center, 0 at
the radius). Windows can be evaluated analytically at any resolution, so
downsampled pyramid levels reuse the same geometry.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import UncoveredPixel
from .imagekit import Fixation
from .radialblur import corner_distance

DEFAULT_BOUMA = 0.5
DEFAULT_R_MIN = 8.0
_ANGULAR_OVERLAP = 0.75  # neighbor-center spacing as a fraction of region radius


@dataclass(frozen=True)
class PoolingRegion:
    """One circular pooling region with its raised-cosine weight patch."""

    center: tuple[float, float]  # (row, col)
    radius: float
    origin: tuple[int, int]      # bounding-box top-left (y0, x0), frame-clipped
    weights: np.ndarray          # weight map over the bounding box, [0, 1]


@dataclass(frozen=True)
class PoolingLayout:
    fixation: Fixation
    height: int
    width: int
    bouma: float
    r_min: float
    regions: tuple[PoolingRegion, ...]
    schema_id: str
    normalized: bool = False


def _raised_cosine(dist: np.ndarray, radius: float) -> np.ndarray:
    w = 0.5 * (1.0 + np.cos(np.pi * np.minimum(dist / radius, 1.0)))
    return np.where(dist < radius, w, 0.0)


def _level_coords(n_level: int, n_full: int) -> np.ndarray:
    """Full-resolution coordinates of level pixel centers (half-pixel mapping)."""
    if n_level == n_full:
        return np.arange(n_full, dtype=np.float64)
    return (np.arange(n_level, dtype=np.float64) + 0.5) * (n_full / n_level) - 0.5


def window_patch(
    region: PoolingRegion,
    level_h: int,
    level_w: int,
    full_h: int,
    full_w: int,
) -> tuple[slice, slice, np.ndarray]:
    """Evaluate the region window at an arbitrary resolution.

    Returns row/col slices into the (level_h, level_w) grid plus the weight
    patch over that box. The patch can be all-zero for regions that shrink
    below one pixel at coarse levels.
    """
    cy, cx = region.center
    sy = level_h / full_h
    sx = level_w / full_w
    y0 = max(0, int(math.floor((cy - region.radius + 0.5) * sy - 0.5)))
    y1 = min(level_h - 1, int(math.ceil((cy + region.radius + 0.5) * sy - 0.5)))
    x0 = max(0, int(math.floor((cx - region.radius + 0.5) * sx - 0.5)))
    x1 = min(level_w - 1, int(math.ceil((cx + region.radius + 0.5) * sx - 0.5)))
    if y1 < y0 or x1 < x0:
        return slice(0, 0), slice(0, 0), np.zeros((0, 0), dtype=np.float64)
    yy = _level_coords(level_h, full_h)[y0 : y1 + 1][:, None] - cy
    xx = _level_coords(level_w, full_w)[x0 : x1 + 1][None, :] - cx
    w = _raised_cosine(np.hypot(yy, xx), region.radius)
    return slice(y0, y1 + 1), slice(x0, x1 + 1), w


def eccentricity_map(h: int, w: int, fix: Fixation) -> np.ndarray:
    yy = np.arange(h, dtype=np.float64)[:, None] - fix.fy
    xx = np.arange(w, dtype=np.float64)[None, :] - fix.fx
    return np.hypot(yy, xx)


def _region_radius(ecc: float, bouma: float, r_min: float) -> float:
    return max(bouma * ecc, r_min)


def _ring_eccentricities(fix: Fixation, bouma: float, r_min: float, d_far: float) -> list[float]:
    e0 = max(fix.fovea_radius, r_min)
    growth = 1.0 + bouma / 2.0
    eccs = []
    e = e0
    while e - _region_radius(e, bouma, r_min) <= d_far:
        eccs.append(e)
        e *= growth
    return eccs


def _disk_intersects_frame(cy: float, cx: float, radius: float, h: int, w: int) -> bool:
    ny = min(max(cy, 0.0), float(h - 1))
    nx = min(max(cx, 0.0), float(w - 1))
    return math.hypot(cy - ny, cx - nx) < radius


def _make_region(cy: float, cx: float, radius: float, h: int, w: int) -> PoolingRegion:
    stub = PoolingRegion((cy, cx), radius, (0, 0), np.zeros((0, 0)))
    sly, slx, wgt = window_patch(stub, h, w, h, w)
    return PoolingRegion((cy, cx), radius, (sly.start, slx.start), wgt)


def build_layout(
    h: int,
    w: int,
    fix: Fixation,
    bouma: float = DEFAULT_BOUMA,
    r_min: float = DEFAULT_R_MIN,
) -> PoolingLayout:
    """Place raised-cosine pooling regions on geometric log-polar rings."""
    if not (0.0 < bouma <= 1.0):
        raise ValueError("bouma must be in (0, 1]")
    if r_min < 2.0:
        raise ValueError("r_min must be >= 2")
    fix.bound_check(h, w)
    d_far = corner_distance(h, w, fix)
    regions: list[PoolingRegion] = []
    if fix.fovea_radius < r_min:
        regions.append(_make_region(fix.fy, fix.fx, r_min, h, w))
    for k, ecc in enumerate(_ring_eccentricities(fix, bouma, r_min, d_far)):
        radius = _region_radius(ecc, bouma, r_min)
        n = max(6, int(math.ceil(2.0 * math.pi * ecc / (_ANGULAR_OVERLAP * radius))))
        phase = (k % 2) * math.pi / n
        for m in range(n):
            theta = phase + 2.0 * math.pi * m / n
            cy = fix.fy + ecc * math.sin(theta)
            cx = fix.fx + ecc * math.cos(theta)
            if _disk_intersects_frame(cy, cx, radius, h, w):
                regions.append(_make_region(cy, cx, radius, h, w))
    params = {
        "h": h,
        "w": w,
        "fx": fix.fx,
        "fy": fix.fy,
        "fovea_radius": fix.fovea_radius,
        "bouma": bouma,
        "r_min": r_min,
        "construction": "logpolar-rings-v1",
    }
    schema_id = hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()[:16]
    return PoolingLayout(
        fixation=fix,
        height=h,
        width=w,
        bouma=bouma,
        r_min=r_min,
        regions=tuple(regions),
        schema_id=schema_id,
    )


def coverage_at_shape(layout: PoolingLayout, level_h: int, level_w: int) -> np.ndarray:
    """Sum of raw region windows evaluated at the given resolution."""
    cov = np.zeros((level_h, level_w), dtype=np.float64)
    for region in layout.regions:
        sly, slx, wgt = window_patch(region, level_h, level_w, layout.height, layout.width)
        cov[sly, slx] += wgt
    return cov


def normalize_weights(layout: PoolingLayout) -> PoolingLayout:
    """Rescale region weights so overlapping windows sum to 1 per pixel.

    Raises UncoveredPixel if any in-frame peripheral pixel (eccentricity
    greater than the fovea radius) has zero total weight.
    """
    cov = coverage_at_shape(layout, layout.height, layout.width)
    ecc = eccentricity_map(layout.height, layout.width, layout.fixation)
    peripheral = ecc > layout.fixation.fovea_radius
    uncovered = peripheral & (cov <= 0.0)
    if uncovered.any():
        ys, xs = np.nonzero(uncovered)
        raise UncoveredPixel(
            f"{uncovered.sum()} peripheral pixels uncovered, first at ({ys[0]}, {xs[0]})"
        )
    inv = np.where(cov > 0.0, 1.0 / np.maximum(cov, 1e-300), 0.0)
    regions = []
    for r in layout.regions:
        y0, x0 = r.origin
        hh, ww = r.weights.shape
        regions.append(replace(r, weights=r.weights * inv[y0 : y0 + hh, x0 : x0 + ww]))
    return replace(layout, regions=tuple(regions), normalized=True)


def layout_to_json(layout: PoolingLayout) -> str:
    doc = {
        "schema_id": layout.schema_id,
        "normalized": layout.normalized,
        "params": {
            "h": layout.height,
            "w": layout.width,
            "fx": layout.fixation.fx,
            "fy": layout.fixation.fy,
            "fovea_radius": layout.fixation.fovea_radius,
            "bouma": layout.bouma,
            "r_min": layout.r_min,
        },
        "regions": [
            {"center": [r.center[0], r.center[1]], "radius": r.radius}
            for r in layout.regions
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def layout_from_json(text: str) -> PoolingLayout:
    doc = json.loads(text)
    p = doc["params"]
    fix = Fixation(fx=p["fx"], fy=p["fy"], fovea_radius=p["fovea_radius"])
    layout = build_layout(int(p["h"]), int(p["w"]), fix, bouma=p["bouma"], r_min=p["r_min"])
    if doc.get("normalized"):
        layout = normalize_weights(layout)
    return layout
