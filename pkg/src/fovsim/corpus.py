"""Procedural desk-scale corpus: seeded synthetic scenes plus directory IO.

Stands in for the large natural-image training set. Scenes mix smooth
gradients, oriented gratings, Gaussian blobs, and sharp rectangles so the
blur-learning task sees both smooth and high-frequency content. Loading
from a directory center-crops to square before resizing (convention).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imagekit import Image, decode_png, image_from_array, resize_bilinear


def make_image(seed_key, size: int = 64, color: bool = True) -> Image:
    """One deterministic synthetic scene; seed_key may be an int or sequence."""
    rng = np.random.default_rng(seed_key)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    canvas = 0.2 + 0.6 * rng.random()
    canvas = canvas + (rng.random() - 0.5) * xx + (rng.random() - 0.5) * yy
    for _ in range(rng.integers(1, 4)):
        theta = rng.random() * np.pi
        period = rng.uniform(4.0, 24.0) / size
        phase = rng.random() * 2.0 * np.pi
        amp = rng.uniform(0.05, 0.25)
        canvas = canvas + amp * np.sin(
            2.0 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase
        )
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.random(2)
        s = rng.uniform(0.05, 0.25)
        amp = rng.uniform(-0.4, 0.4)
        canvas = canvas + amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * s * s))
    for _ in range(rng.integers(0, 3)):
        y0, x0 = rng.random(2) * 0.7
        hh, ww = rng.uniform(0.1, 0.3, 2)
        amp = rng.uniform(-0.5, 0.5)
        box = ((yy >= y0) & (yy < y0 + hh) & (xx >= x0) & (xx < x0 + ww)).astype(np.float64)
        canvas = canvas + amp * box
    lo, hi = canvas.min(), canvas.max()
    canvas = 0.05 + 0.90 * (canvas - lo) / max(hi - lo, 1e-9)
    if not color:
        return image_from_array(canvas.astype(np.float32))
    shifts = rng.uniform(-0.12, 0.12, 3)
    gains = rng.uniform(0.85, 1.0, 3)
    chans = [np.clip(canvas * gains[c] + shifts[c], 0.02, 0.98) for c in range(3)]
    return image_from_array(np.stack(chans, axis=2).astype(np.float32))


def make_corpus(n: int, size: int = 64, seed: int = 0, color: bool = True) -> list[tuple[str, Image]]:
    return [(f"img{i:04d}", make_image([seed, i], size=size, color=color)) for i in range(n)]


def make_texture_fixture(seed_key, size: int = 64) -> Image:
    """Grayscale texture fixture used for statistics-matching synthesis.

    High-contrast mix of anisotropic streaks, cross-hatched fine gratings,
    a coarse grating, a smooth field, and grain, so every statistic family
    carries targets well above the percent-difference floor.
    """
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed_key)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    x = 0.9 * gaussian_filter(rng.standard_normal((size, size)), (0.5, 2.2))
    x = x + 0.9 * gaussian_filter(rng.standard_normal((size, size)), (2.2, 0.5))
    theta = rng.choice([0, np.pi / 4, np.pi / 2, 3 * np.pi / 4]) + rng.normal(0, 0.1)
    period = rng.uniform(3.0, 6.0) / size
    x = x + 1.1 * np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / period
                         + rng.uniform(0, 2 * np.pi))
    theta_c = theta + np.pi / 2
    period_c = rng.uniform(3.0, 6.0) / size
    x = x + 1.1 * np.sin(2 * np.pi * (np.cos(theta_c) * xx + np.sin(theta_c) * yy) / period_c
                         + rng.uniform(0, 2 * np.pi))
    theta2 = rng.choice([0, np.pi / 4, np.pi / 2, 3 * np.pi / 4]) + rng.normal(0, 0.1)
    period2 = rng.uniform(8.0, 16.0) / size
    x = x + 0.7 * np.sin(2 * np.pi * (np.cos(theta2) * xx + np.sin(theta2) * yy) / period2
                         + rng.uniform(0, 2 * np.pi))
    x = x + 1.2 * gaussian_filter(rng.standard_normal((size, size)), 3.5)
    x = x + 0.75 * gaussian_filter(rng.standard_normal((size, size)), 0.45)
    x = (x - x.mean()) / x.std()
    return image_from_array(np.clip(0.5 + 0.30 * x, 0.01, 0.99).astype(np.float32))


def make_fixture_set(n: int, size: int = 64, seed: int = 0) -> list[tuple[str, Image]]:
    return [(f"fix{i:04d}", make_texture_fixture([seed, i], size=size)) for i in range(n)]


def center_crop_square(img: Image) -> Image:
    side = min(img.height, img.width)
    y0 = (img.height - side) // 2
    x0 = (img.width - side) // 2
    return Image(np.ascontiguousarray(img.data[y0 : y0 + side, x0 : x0 + side]))


def load_corpus_dir(path: str | Path, size: int | None = None) -> list[tuple[str, Image]]:
    """Decode every .png in a directory (sorted by name); optional square resize."""
    out = []
    for p in sorted(Path(path).glob("*.png")):
        img = decode_png(p.read_bytes())
        if size is not None:
            img = resize_bilinear(center_crop_square(img), size, size)
        out.append((p.stem, img))
    return out


def write_corpus_dir(corpus: list[tuple[str, Image]], path: str | Path) -> None:
    from .imagekit import encode_png

    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    for name, img in corpus:
        (d / f"{name}.png").write_bytes(encode_png(img))
