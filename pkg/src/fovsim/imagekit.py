"""Image substrate: float32 unit-range images, PNG codec, color and resize ops.

Images are (height, width, channels) float32 arrays with samples in [0, 1],
channels in {1, 3, 4}. The PNG codec is self-contained (zlib + scanline
filters) so that 16-bit samples are scaled exactly and golden files stay
bit-stable. Encoding always writes 8-bit non-interlaced PNG with filter 0.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadChannelCount, DimensionMismatch, MalformedInput

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# Rec.601 luma weights.
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class Image:
    """A row-major (y, x, c) float32 image with samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (1, 3, 4):
            raise BadChannelCount(f"expected (h, w, c) with c in {{1,3,4}}, got {d.shape}")
        if d.dtype != np.float32:
            raise MalformedInput(f"image data must be float32, got {d.dtype}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def validate(self) -> "Image":
        """Check the unit-range/finiteness invariant, returning self."""
        if not np.all(np.isfinite(self.data)):
            raise MalformedInput("image contains non-finite samples")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise MalformedInput("image samples outside [0, 1]")
        return self


def image_from_array(arr: np.ndarray) -> Image:
    """Wrap an array as an Image, adding a channel axis to 2-D input."""
    a = np.asarray(arr)
    if a.ndim == 2:
        a = a[:, :, None]
    return Image(np.ascontiguousarray(a, dtype=np.float32))


@dataclass(frozen=True)
class Fixation:
    """Pixel-space fixation point (fx = column, fy = row) plus fovea radius."""

    fx: float
    fy: float
    fovea_radius: float

    def __post_init__(self):
        if self.fovea_radius < 0:
            raise MalformedInput("fovea_radius must be >= 0")

    def bound_check(self, height: int, width: int) -> "Fixation":
        if not (0 <= self.fx < width and 0 <= self.fy < height):
            raise DimensionMismatch(
                f"fixation ({self.fx}, {self.fy}) outside {height}x{width} image"
            )
        return self


def center_fixation(height: int, width: int, fovea_radius: float | None = None) -> Fixation:
    """Fixation at (w/2, h/2); default fovea radius w/8 (64 px at width 512)."""
    if fovea_radius is None:
        fovea_radius = width / 8.0
    return Fixation(fx=width / 2.0, fy=height / 2.0, fovea_radius=fovea_radius)


# ---------------------------------------------------------------------------
# PNG decode
# ---------------------------------------------------------------------------

# (channels, has_alpha) per PNG color type
_COLOR_TYPES = {0: (1, False), 2: (3, False), 3: (1, False), 4: (2, True), 6: (4, True)}

# Adam7 pass layout: (x_start, y_start, x_step, y_step)
_ADAM7 = (
    (0, 0, 8, 8), (4, 0, 8, 8), (0, 4, 4, 8), (2, 0, 4, 4),
    (0, 2, 2, 4), (1, 0, 2, 2), (0, 1, 1, 2),
)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, width: int, height: int, bpp: int, stride: int) -> np.ndarray:
    """Undo PNG scanline filters; returns (height, stride) uint8 array."""
    if len(raw) != height * (stride + 1):
        raise MalformedInput("PNG pixel data has wrong length")
    src = np.frombuffer(raw, dtype=np.uint8).reshape(height, stride + 1)
    filters = src[:, 0]
    data = src[:, 1:].astype(np.int64)
    out = np.zeros((height, stride), dtype=np.int64)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(height):
        f = int(filters[y])
        row = data[y]
        if f == 0:
            cur = row.copy()
        elif f == 1:  # Sub: prefix sums per byte lane
            cur = row.copy()
            for lane in range(bpp):
                cur[lane::bpp] = np.cumsum(cur[lane::bpp])
            cur &= 0xFF
        elif f == 2:  # Up
            cur = (row + prev) & 0xFF
        elif f == 3:  # Average
            cur = row.copy()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif f == 4:  # Paeth
            cur = row.copy()
            for i in range(stride):
                left = int(cur[i - bpp]) if i >= bpp else 0
                up = int(prev[i])
                ul = int(prev[i - bpp]) if i >= bpp else 0
                cur[i] = (cur[i] + _paeth(left, up, ul)) & 0xFF
        else:
            raise MalformedInput(f"unknown PNG filter type {f}")
        out[y] = cur
        prev = cur
    return out.astype(np.uint8)


def _bytes_to_samples(rows: np.ndarray, width: int, n_chan: int, depth: int) -> np.ndarray:
    """Convert unfiltered scanline bytes to (h, w, n_chan) integer samples."""
    h = rows.shape[0]
    if depth == 8:
        return rows[:, : width * n_chan].reshape(h, width, n_chan).astype(np.uint16)
    hi = rows[:, 0 : 2 * width * n_chan : 2].astype(np.uint16)
    lo = rows[:, 1 : 2 * width * n_chan : 2].astype(np.uint16)
    return ((hi << 8) | lo).reshape(h, width, n_chan)


def decode_png(data: bytes) -> Image:
    """Decode an 8- or 16-bit grayscale/RGB(A)/palette PNG to a unit-range Image.

    Alpha is composited over white; palette images expand to RGB. Raises
    MalformedInput for anything that is not a decodable PNG of that family.
    """
    if len(data) < 8 or data[:8] != _PNG_SIGNATURE:
        raise MalformedInput("not a PNG stream")
    pos = 8
    ihdr = None
    palette = None
    idat = bytearray()
    seen_iend = False
    try:
        while pos < len(data):
            length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
            chunk = data[pos + 8 : pos + 8 + length]
            if len(chunk) != length:
                raise MalformedInput("truncated PNG chunk")
            pos += 12 + length
            if ctype == b"IHDR":
                ihdr = struct.unpack(">IIBBBBB", chunk)
            elif ctype == b"PLTE":
                palette = np.frombuffer(chunk, dtype=np.uint8).reshape(-1, 3)
            elif ctype == b"IDAT":
                idat.extend(chunk)
            elif ctype == b"IEND":
                seen_iend = True
                break
        if ihdr is None or not seen_iend or not idat:
            raise MalformedInput("missing IHDR/IDAT/IEND")
        width, height, depth, color, comp, filt, interlace = ihdr
        if width < 1 or height < 1:
            raise MalformedInput("bad PNG dimensions")
        if comp != 0 or filt != 0 or interlace not in (0, 1):
            raise MalformedInput("unsupported PNG compression/filter/interlace")
        if color not in _COLOR_TYPES:
            raise MalformedInput(f"unsupported PNG color type {color}")
        if depth not in (8, 16) or (color == 3 and depth != 8):
            raise MalformedInput(f"unsupported PNG bit depth {depth}")
        n_chan = _COLOR_TYPES[color][0]
        bpp = max(1, n_chan * depth // 8)
        raw = zlib.decompress(bytes(idat))
        if interlace == 0:
            stride = width * n_chan * depth // 8
            samples = _bytes_to_samples(_unfilter(raw, width, height, bpp, stride), width, n_chan, depth)
        else:
            samples = np.zeros((height, width, n_chan), dtype=np.uint16)
            off = 0
            for x0, y0, dx, dy in _ADAM7:
                pw = (width - x0 + dx - 1) // dx
                ph = (height - y0 + dy - 1) // dy
                if pw == 0 or ph == 0:
                    continue
                stride = pw * n_chan * depth // 8
                chunk_len = ph * (stride + 1)
                sub = _unfilter(raw[off : off + chunk_len], pw, ph, bpp, stride)
                off += chunk_len
                samples[y0::dy, x0::dx] = _bytes_to_samples(sub, pw, n_chan, depth)
    except (struct.error, zlib.error, ValueError) as exc:
        raise MalformedInput(f"PNG decode failed: {exc}") from exc

    scale = 65535.0 if depth == 16 else 255.0
    if color == 3:
        if palette is None:
            raise MalformedInput("palette PNG without PLTE")
        idx = samples[:, :, 0]
        if idx.max() >= palette.shape[0]:
            raise MalformedInput("palette index out of range")
        out = palette[idx].astype(np.float64) / 255.0
    else:
        vals = samples.astype(np.float64) / scale
        if color == 0:
            out = vals
        elif color == 2:
            out = vals
        elif color == 4:
            gray, alpha = vals[:, :, :1], vals[:, :, 1:]
            out = gray * alpha + (1.0 - alpha)
        else:  # RGBA
            rgb, alpha = vals[:, :, :3], vals[:, :, 3:]
            out = rgb * alpha + (1.0 - alpha)
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# PNG encode
# ---------------------------------------------------------------------------

def _chunk(ctype: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(ctype + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + ctype + payload + struct.pack(">I", crc)


def encode_png(img: Image) -> bytes:
    """Encode a 1- or 3-channel image as 8-bit PNG (filter 0, zlib level 6)."""
    if img.channels not in (1, 3):
        raise BadChannelCount(f"cannot encode {img.channels}-channel image as PNG")
    quant = np.clip(np.rint(img.data.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w, c = quant.shape
    color = 0 if c == 1 else 2
    rows = np.concatenate(
        [np.zeros((h, 1), dtype=np.uint8), quant.reshape(h, w * c)], axis=1
    )
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color, 0, 0, 0)
    return (
        _PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(rows.tobytes(), 6))
        + _chunk(b"IEND", b"")
    )


# ---------------------------------------------------------------------------
# Color / geometry
# ---------------------------------------------------------------------------

def to_grayscale(img: Image) -> Image:
    """Rec.601 luma; 1-channel input passes through unchanged."""
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise BadChannelCount("to_grayscale expects 1 or 3 channels")
    d = img.data.astype(np.float64)
    gray = _LUMA[0] * d[:, :, 0] + _LUMA[1] * d[:, :, 1] + _LUMA[2] * d[:, :, 2]
    return Image(np.clip(gray, 0.0, 1.0).astype(np.float32)[:, :, None])


def _interp_axis(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-centered bilinear sampling: (lo index, hi index, hi weight)."""
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1.0)
    lo = np.floor(x).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, x - lo


def resize_bilinear(img: Image, new_h: int, new_w: int) -> Image:
    """Bilinear resize with half-pixel-centered coordinate mapping."""
    if new_h < 1 or new_w < 1:
        raise DimensionMismatch("target dimensions must be >= 1")
    d = img.data.astype(np.float64)
    y0, y1, wy = _interp_axis(new_h, img.height)
    x0, x1, wx = _interp_axis(new_w, img.width)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = d[y0][:, x0] * (1.0 - wx) + d[y0][:, x1] * wx
    bot = d[y1][:, x0] * (1.0 - wx) + d[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    out = np.clip(out, d.min(), d.max())
    return Image(out.astype(np.float32))
