"""Foveated generative network: 4 tanh conv layers with mask-driven biases.

The network maps a 4-channel input (color pre-mapped to [-1, 1] plus the
normalized eccentricity mask) to a 3-channel foveated image. Every layer
is a stride-1 "same" convolution (pad floor((k-1)/2) before, ceil after,
clamp-to-edge) followed by tanh; each layer also adds a learned scalar
gain times the normalized mask to every channel's pre-activation, which
is how the fixation geometry reaches deep layers. The final tanh output
is mapped from [-1, 1] to [0, 1].

Convolutions run as im2col matrix products (BLAS); training is mini-batch
gradient descent with momentum on the mean-squared error, in float32.
Gradient checks run the identical code path in float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    DivergedLoss,
    PayloadSizeMismatch,
    ShapeMismatch,
    VersionUnsupported,
)
from .foveamask import MaskChannel, attach_mask, build_mask, diagonal_normalizer
from .imagekit import Fixation, Image

_MAGIC_PREFIX = b"FGN"
_VERSION = b"1"

PAPER_LAYERS = ((256, 16, 16, 4), (512, 8, 8, 256), (512, 1, 1, 512), (3, 8, 8, 512))


@dataclass(frozen=True)
class FgnArch:
    """Layer list of (kernel_count, kernel_h, kernel_w, in_channels)."""

    layers: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        if not self.layers:
            raise ShapeMismatch("architecture needs at least one layer")
        if self.layers[0][3] != 4:
            raise ShapeMismatch("first layer must take 4 input channels")
        if self.layers[-1][0] != 3:
            raise ShapeMismatch("final layer must emit 3 channels")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur[3] != prev[0]:
                raise ShapeMismatch(f"channel chain broken: {prev} -> {cur}")

    @property
    def max_kernel(self) -> int:
        return max(max(k[1], k[2]) for k in self.layers)

    def parameter_count(self) -> int:
        total = 0
        for k, kh, kw, cin in self.layers:
            total += k * cin * kh * kw + k + 1  # kernels + biases + mask gain
        return total

    @staticmethod
    def paper_scale(width_factor: int = 1) -> "FgnArch":
        """The published architecture with kernel counts divided by a factor."""
        layers = []
        prev = 4
        for i, (k, kh, kw, _cin) in enumerate(PAPER_LAYERS):
            k_scaled = 3 if i == len(PAPER_LAYERS) - 1 else max(1, k // width_factor)
            layers.append((k_scaled, kh, kw, prev))
            prev = k_scaled
        return FgnArch(tuple(layers))


@dataclass
class FgnParams:
    arch: FgnArch
    kernels: list[np.ndarray]      # per layer: (K, C_in, kh, kw)
    biases: list[np.ndarray]       # per layer: (K,)
    mask_gains: np.ndarray         # per layer scalar, same dtype as kernels
    mask_normalizer: float
    training_meta: dict = field(default_factory=dict)

    def astype(self, dtype) -> "FgnParams":
        return FgnParams(
            arch=self.arch,
            kernels=[k.astype(dtype) for k in self.kernels],
            biases=[b.astype(dtype) for b in self.biases],
            mask_gains=self.mask_gains.astype(dtype),
            mask_normalizer=self.mask_normalizer,
            training_meta=dict(self.training_meta),
        )


def init_params(arch: FgnArch, seed: int, mask_normalizer: float, dtype=np.float32) -> FgnParams:
    """Seeded uniform(+-1/sqrt(fan_in)) kernels, zero biases and gains."""
    rng = np.random.default_rng(seed)
    kernels, biases = [], []
    for k, kh, kw, cin in arch.layers:
        bound = 1.0 / np.sqrt(cin * kh * kw)
        kernels.append(rng.uniform(-bound, bound, size=(k, cin, kh, kw)).astype(dtype))
        biases.append(np.zeros(k, dtype=dtype))
    return FgnParams(
        arch=arch,
        kernels=kernels,
        biases=biases,
        mask_gains=np.zeros(len(arch.layers), dtype=dtype),
        mask_normalizer=mask_normalizer,
    )


# ---------------------------------------------------------------------------
# Convolution core (im2col, stride 1, same padding)
# ---------------------------------------------------------------------------

def _pad_amounts(kh: int, kw: int) -> tuple[int, int, int, int]:
    return (kh - 1) // 2, kh // 2, (kw - 1) // 2, kw // 2


def _pad(x: np.ndarray, kh: int, kw: int, mode: str) -> np.ndarray:
    pt, pb, pl, pr = _pad_amounts(kh, kw)
    np_mode = "edge" if mode == "clamp" else "wrap"
    return np.pad(x, ((0, 0), (pt, pb), (pl, pr)), mode=np_mode)


def _im2col(padded: np.ndarray, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    """(C, Hp, Wp) -> (h*w, C*kh*kw) patch matrix."""
    c = padded.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    # windows: (C, h, w, kh, kw) -> (h, w, C, kh, kw)
    return np.ascontiguousarray(windows.transpose(1, 2, 0, 3, 4)).reshape(h * w, c * kh * kw)


def _conv_layer(x: np.ndarray, kernel: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Stride-1 same convolution; returns (output (K, H, W), patch matrix)."""
    k, c, kh, kw = kernel.shape
    h, w = x.shape[1], x.shape[2]
    cols = _im2col(_pad(x, kh, kw, mode), kh, kw, h, w)
    out = cols @ kernel.reshape(k, c * kh * kw).T
    return out.T.reshape(k, h, w), cols


def _pad_adjoint(gp: np.ndarray, kh: int, kw: int, mode: str) -> np.ndarray:
    """Fold the gradient of a padded array back onto the original."""
    pt, pb, pl, pr = _pad_amounts(kh, kw)
    c, hp, wp = gp.shape
    h, w = hp - pt - pb, wp - pl - pr
    if mode == "clamp":
        rows = gp[:, pt : pt + h].copy()
        if pt:
            rows[:, 0] += gp[:, :pt].sum(axis=1)
        if pb:
            rows[:, h - 1] += gp[:, pt + h :].sum(axis=1)
        out = rows[:, :, pl : pl + w].copy()
        if pl:
            out[:, :, 0] += rows[:, :, :pl].sum(axis=2)
        if pr:
            out[:, :, w - 1] += rows[:, :, pl + w :].sum(axis=2)
        return out
    rows = gp[:, pt : pt + h].copy()
    if pt:
        rows[:, h - pt :] += gp[:, :pt]
    if pb:
        rows[:, :pb] += gp[:, pt + h :]
    out = rows[:, :, pl : pl + w].copy()
    if pl:
        out[:, :, w - pl :] += rows[:, :, :pl]
    if pr:
        out[:, :, :pr] += rows[:, :, pl + w :]
    return out


def _conv_input_grad(dpre: np.ndarray, kernel: np.ndarray, mode: str) -> np.ndarray:
    """Gradient w.r.t. the layer input: transposed convolution as a GEMM.

    Full cross-correlation of dpre with the flipped kernels gives the
    gradient on the padded input; the pad adjoint folds it back.
    """
    k, c, kh, kw = kernel.shape
    h, w = dpre.shape[1], dpre.shape[2]
    if kh == 1 and kw == 1:
        dX = kernel.reshape(k, c).T @ dpre.reshape(k, h * w)
        return dX.reshape(c, h, w)
    hp, wp = h + kh - 1, w + kw - 1
    z = np.zeros((k, h + 2 * (kh - 1), w + 2 * (kw - 1)), dtype=dpre.dtype)
    z[:, kh - 1 : kh - 1 + h, kw - 1 : kw - 1 + w] = dpre
    cols = _im2col(z, kh, kw, hp, wp)
    wmat = np.ascontiguousarray(
        kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    ).reshape(c, k * kh * kw)
    gp = (cols @ wmat.T).T.reshape(c, hp, wp)
    return _pad_adjoint(gp, kh, kw, mode)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _premap(input4: Image, mask_normalizer: float, dtype) -> np.ndarray:
    """Channels-first tensor: color channels to [-1, 1], mask channel as-is."""
    x = input4.data.astype(dtype).transpose(2, 0, 1).copy()
    x[:3] = 2.0 * x[:3] - 1.0
    return x


def forward(
    params: FgnParams,
    input4: Image,
    mask: MaskChannel,
    pad_mode: str = "clamp",
    collect_activations: bool = False,
):
    """Run the generator; returns the [0, 1] 3-channel Image.

    With collect_activations=True returns (Image, list of hidden tanh
    activations) instead.
    """
    if input4.channels != 4:
        raise ShapeMismatch("forward expects a 4-channel input")
    if (input4.height, input4.width) != (mask.height, mask.width):
        raise ShapeMismatch("mask dimensions do not match input")
    if min(input4.height, input4.width) < params.arch.max_kernel:
        raise ShapeMismatch("spatial dimensions smaller than the largest kernel")
    dtype = params.kernels[0].dtype
    x = _premap(input4, params.mask_normalizer, dtype)
    m = (mask.values.astype(dtype) / dtype.type(params.mask_normalizer))[None]
    acts = []
    for li, kernel in enumerate(params.kernels):
        out, _ = _conv_layer(x, kernel, pad_mode)
        out += params.biases[li][:, None, None]
        out += params.mask_gains[li] * m
        x = np.tanh(out)
        if collect_activations:
            acts.append(x)
    y = ((x + 1.0) * 0.5).transpose(1, 2, 0)
    img = Image(np.ascontiguousarray(y, dtype=np.float32))
    return (img, acts) if collect_activations else img


def _forward_full(params, x, m, pad_mode):
    """Forward keeping caches for backprop: returns (y01, acts, cols_list)."""
    acts, cols_list = [], []
    cur = x
    for li, kernel in enumerate(params.kernels):
        out, cols = _conv_layer(cur, kernel, pad_mode)
        out += params.biases[li][:, None, None]
        out += params.mask_gains[li] * m
        cur = np.tanh(out)
        acts.append(cur)
        cols_list.append(cols)
    return ((acts[-1] + 1.0) * 0.5), acts, cols_list


def _backward_full(params, x, m, acts, cols_list, dy01, pad_mode):
    """Backprop dLoss/dy01 through the network; returns per-layer grads."""
    n_layers = len(params.kernels)
    g_k = [None] * n_layers
    g_b = [None] * n_layers
    g_g = [0.0] * n_layers
    da = 0.5 * dy01  # output mapping y = (a+1)/2
    for li in range(n_layers - 1, -1, -1):
        a = acts[li]
        dpre = da * (1.0 - a * a)
        kshape = params.kernels[li].shape
        k, c, kh, kw = kshape
        h, w = a.shape[1], a.shape[2]
        dpre_flat = dpre.reshape(k, h * w)
        g_b[li] = dpre.sum(axis=(1, 2))
        g_g[li] = float((dpre * m).sum())
        g_k[li] = (dpre_flat @ cols_list[li]).reshape(kshape)
        if li > 0:
            da = _conv_input_grad(dpre, params.kernels[li], pad_mode)
    return g_k, g_b, g_g


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainOpts:
    seed: int = 0
    epochs: int = 30
    batch: int = 5
    lr: float = 0.05
    momentum: float = 0.9
    fovea_radius: float | None = None  # default: width / 8
    lr_decay_at: tuple[float, ...] = (0.6, 0.85)  # epoch fractions, halve lr
    diverge_factor: float = 10.0


def prepare_pair_inputs(images: list[Image], fovea_radius: float | None):
    """Shared fixation/mask for a corpus of same-sized images (center gaze)."""
    h, w = images[0].height, images[0].width
    fr = w / 8.0 if fovea_radius is None else fovea_radius
    fix = Fixation(fx=w / 2.0, fy=h / 2.0, fovea_radius=fr)
    mask = build_mask(h, w, fix)
    return fix, mask


def train(pairs: list[tuple[Image, Image]], arch: FgnArch, opts: TrainOpts = TrainOpts()) -> FgnParams:
    """Mini-batch momentum gradient descent on MSE; deterministic per seed."""
    if not pairs:
        raise ShapeMismatch("no training pairs")
    h, w = pairs[0][0].height, pairs[0][0].width
    for src, tgt in pairs:
        if (src.height, src.width) != (h, w) or (tgt.height, tgt.width) != (h, w):
            raise ShapeMismatch("all pairs must share dimensions")
    fix, mask = prepare_pair_inputs([p[0] for p in pairs], opts.fovea_radius)
    normalizer = diagonal_normalizer(h, w)
    params = init_params(arch, opts.seed, normalizer)
    dtype = np.float32
    m = (mask.values.astype(dtype) / dtype(normalizer))[None]

    # precompute channels-first tensors once
    xs, ts = [], []
    for src, tgt in pairs:
        src3 = src if src.channels == 3 else Image(np.repeat(src.data, 3, axis=2))
        tgt3 = tgt if tgt.channels == 3 else Image(np.repeat(tgt.data, 3, axis=2))
        xs.append(_premap(attach_mask(src3, mask, normalizer), normalizer, dtype))
        ts.append(tgt3.data.astype(dtype).transpose(2, 0, 1))

    rng = np.random.default_rng(opts.seed)
    vel_k = [np.zeros_like(k) for k in params.kernels]
    vel_b = [np.zeros_like(b) for b in params.biases]
    vel_g = np.zeros(len(params.kernels), dtype=dtype)
    n = len(xs)
    history = []
    initial_loss = None
    lr = opts.lr
    decay_epochs = {int(f * opts.epochs) for f in opts.lr_decay_at}
    for epoch in range(opts.epochs):
        if epoch in decay_epochs:
            lr *= 0.5
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, opts.batch):
            idx = order[start : start + opts.batch]
            g_k = [np.zeros_like(k) for k in params.kernels]
            g_b = [np.zeros_like(b) for b in params.biases]
            g_g = [0.0] * len(params.kernels)
            batch_loss = 0.0
            for i in idx:
                y01, acts, cols_list = _forward_full(params, xs[i], m, "clamp")
                diff = y01 - ts[i]
                batch_loss += float((diff * diff).mean())
                dy01 = (2.0 / diff.size) * diff
                bk, bb, bg = _backward_full(params, xs[i], m, acts, cols_list, dy01, "clamp")
                for li in range(len(g_k)):
                    g_k[li] += bk[li]
                    g_b[li] += bb[li]
                    g_g[li] += bg[li]
            scale = 1.0 / len(idx)
            for li in range(len(g_k)):
                vel_k[li] = opts.momentum * vel_k[li] - lr * scale * g_k[li]
                vel_b[li] = opts.momentum * vel_b[li] - lr * scale * g_b[li]
                vel_g[li] = opts.momentum * vel_g[li] - dtype(lr * scale * g_g[li])
                params.kernels[li] += vel_k[li]
                params.biases[li] += vel_b[li]
                params.mask_gains[li] += vel_g[li]
            epoch_loss += batch_loss
        epoch_loss /= n
        history.append(epoch_loss)
        if initial_loss is None:
            initial_loss = epoch_loss
        if not np.isfinite(epoch_loss) or epoch_loss > opts.diverge_factor * initial_loss:
            raise DivergedLoss(f"epoch {epoch} loss {epoch_loss:.4g} vs initial {initial_loss:.4g}")
    params.training_meta = {
        "seed": opts.seed,
        "epochs": opts.epochs,
        "batch": opts.batch,
        "lr": opts.lr,
        "momentum": opts.momentum,
        "fovea_radius": fix.fovea_radius,
        "loss_history": history,
        "final_loss": history[-1] if history else None,
    }
    return params


def foveate_image(params: FgnParams, img: Image, fix: Fixation) -> Image:
    """One-call inference: build mask, attach, run the network."""
    img3 = img if img.channels == 3 else Image(np.repeat(img.data, 3, axis=2))
    mask = build_mask(img.height, img.width, fix)
    input4 = attach_mask(img3, mask, params.mask_normalizer)
    return forward(params, input4, mask)


# ---------------------------------------------------------------------------
# Checkpoint container: magic FGN1, JSON header, raw little-endian payload
# ---------------------------------------------------------------------------

def save_checkpoint(params: FgnParams) -> bytes:
    header = {
        "layers": [list(l) for l in params.arch.layers],
        "mask_normalizer": params.mask_normalizer,
        "training_meta": params.training_meta,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = []
    for li in range(len(params.kernels)):
        chunks.append(params.kernels[li].astype("<f4").tobytes(order="C"))
        chunks.append(params.biases[li].astype("<f4").tobytes())
        chunks.append(np.asarray([params.mask_gains[li]], dtype="<f4").tobytes())
    payload = b"".join(chunks)
    return (
        _MAGIC_PREFIX
        + _VERSION
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + payload
    )


def load_checkpoint(data: bytes) -> FgnParams:
    if len(data) < 8 or data[:3] != _MAGIC_PREFIX:
        raise BadMagic("not an FGN checkpoint")
    if data[3:4] != _VERSION:
        raise VersionUnsupported(f"unsupported checkpoint version {data[3:4]!r}")
    (header_len,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
        arch = FgnArch(tuple(tuple(int(v) for v in l) for l in header["layers"]))
    except (ValueError, KeyError, ShapeMismatch) as exc:
        raise BadMagic(f"corrupt checkpoint header: {exc}") from exc
    payload = data[8 + header_len :]
    expected = params_payload_bytes(arch)
    if len(payload) != expected:
        raise PayloadSizeMismatch(f"payload {len(payload)} bytes, expected {expected}")
    kernels, biases, gains = [], [], []
    off = 0
    raw = np.frombuffer(payload, dtype="<f4")
    for k, kh, kw, cin in arch.layers:
        n_k = k * cin * kh * kw
        kernels.append(raw[off : off + n_k].reshape(k, cin, kh, kw).astype(np.float32))
        off += n_k
        biases.append(raw[off : off + k].astype(np.float32))
        off += k
        gains.append(raw[off])
        off += 1
    return FgnParams(
        arch=arch,
        kernels=kernels,
        biases=biases,
        mask_gains=np.asarray(gains, dtype=np.float32),
        mask_normalizer=float(header["mask_normalizer"]),
        training_meta=header.get("training_meta", {}),
    )


def params_payload_bytes(arch: FgnArch) -> int:
    return 4 * arch.parameter_count()
