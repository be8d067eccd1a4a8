"""Texture statistics per pooling region, with analytic gradients.

The statistic vector for one region is a fixed 109-entry schema:

  * 4 weighted marginals of the grayscale pixels (mean, variance,
    skewness, kurtosis),
  * 12 mean oriented-band magnitudes (3 scales x 4 orientations),
  * 18 correlation coefficients between orientation-band magnitudes at
    the same scale (3 scales x 6 pairs),
  * 75 weighted autocorrelations of lowpass levels 1..3 over a 5x5 lag
    window, normalized by the zero-lag value.

Band magnitude uses the smooth surrogate sqrt(B^2 + eps^2) - eps so every
statistic is differentiable; degenerate moments (variance below 1e-12)
define skewness/kurtosis/correlations as 0. The StatsEngine precomputes
region windows at every pyramid level (analytic raised-cosine evaluation,
optionally divided by layout coverage for normalized layouts) and exposes
a backward pass mapping statistic adjoints to an input-image gradient.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DegenerateRegion, SchemaMismatch
from .pooling import PoolingLayout, PoolingRegion, coverage_at_shape, window_patch
from .pyramid import N_BAND_SCALES, ORIENTATIONS, Pyramid, pyramid_backward

PERCENT_DIFF_EPS = 1e-3

_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass(frozen=True)
class StatsConfig:
    acorr_radius: int = 2
    lowpass_levels: tuple[int, ...] = (0, 1, 2)
    mag_eps: float = 1e-8
    degenerate_eps: float = 1e-12
    # ratio statistics (skew/kurtosis/correlations/autocorr) are defined as 0
    # when the window's effective sample size 1/sum(wn^2) falls below this;
    # correlation estimates from fewer effective samples carry no signal
    ratio_min_neff: float = 48.0


DEFAULT_CONFIG = StatsConfig()


class StatDescriptor(NamedTuple):
    name: str
    scale: int | None
    orientation: int | tuple[int, int] | None
    lag: tuple[int, int] | None


@lru_cache(maxsize=8)
def schema(cfg: StatsConfig = DEFAULT_CONFIG) -> tuple[StatDescriptor, ...]:
    """Ordered statistic descriptors; a pure function of the configuration."""
    entries = [
        StatDescriptor("mean", None, None, None),
        StatDescriptor("variance", None, None, None),
        StatDescriptor("skewness", None, None, None),
        StatDescriptor("kurtosis", None, None, None),
    ]
    for s in range(N_BAND_SCALES):
        for o in ORIENTATIONS:
            entries.append(StatDescriptor("band_energy", s, o, None))
    for s in range(N_BAND_SCALES):
        for a, b in _PAIRS:
            entries.append(StatDescriptor("band_corr", s, (ORIENTATIONS[a], ORIENTATIONS[b]), None))
    r = cfg.acorr_radius
    for lvl in cfg.lowpass_levels:
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                entries.append(StatDescriptor("autocorr", lvl, None, (dy, dx)))
    return tuple(entries)


@dataclass(frozen=True)
class StatVector:
    values: np.ndarray
    schema: tuple[StatDescriptor, ...]
    region_id: int


class _Window(NamedTuple):
    sly: slice
    slx: slice
    wn: np.ndarray   # normalized to sum 1 (empty/zero patches stay zero)
    ok: bool         # total raw weight above threshold
    neff: float      # effective sample size 1 / sum(wn^2)


def _normalize_patch(w: np.ndarray) -> tuple[np.ndarray, bool, float]:
    total = w.sum()
    if w.size == 0 or total < 1e-12:
        return np.zeros_like(w), False, 0.0
    wn = w / total
    return wn, True, float(1.0 / (wn * wn).sum())


def _lag_indices(n: int, radius: int) -> list[np.ndarray]:
    return [np.clip(np.arange(n) + d, 0, n - 1) for d in range(-radius, radius + 1)]


def _scatter_axis(z: np.ndarray, d: int, axis: int) -> np.ndarray:
    """Adjoint of the clamped-index gather x[clip(arange(n)+d)] along one axis."""
    if d == 0:
        return z
    zm = np.moveaxis(z, axis, 0)
    out = np.zeros_like(zm)
    n = zm.shape[0]
    if d > 0:
        out[d : n - 1] = zm[0 : n - 1 - d]
        out[n - 1] = zm[n - 1 - d :].sum(axis=0)
    else:
        e = -d
        out[1 : n - e] = zm[1 + e : n]
        out[0] = zm[0 : e + 1].sum(axis=0)
    return np.moveaxis(out, 0, axis)


def _scatter_shift2d(z: np.ndarray, dy: int, dx: int) -> np.ndarray:
    return _scatter_axis(_scatter_axis(z, dy, 0), dx, 1)


class StatsEngine:
    """Precomputed windows + forward/backward statistics over a layout."""

    def __init__(self, layout: PoolingLayout, cfg: StatsConfig = DEFAULT_CONFIG):
        self.layout = layout
        self.cfg = cfg
        self.schema = schema(cfg)
        self.n_stats = len(self.schema)
        shapes = [(layout.height, layout.width)]
        for _ in range(3):
            h, w = shapes[-1]
            shapes.append(((h + 1) // 2, (w + 1) // 2))
        self.shapes = shapes
        coverage = None
        if layout.normalized:
            coverage = [coverage_at_shape(layout, h, w) for h, w in shapes]
        self.windows = [
            _windows_for_region(r, shapes, (layout.height, layout.width), coverage)
            for r in layout.regions
        ]
        ridx = cfg.acorr_radius
        self._rowidx = {lvl: _lag_indices(shapes[lvl][0], ridx) for lvl in cfg.lowpass_levels}
        self._colidx = {lvl: _lag_indices(shapes[lvl][1], ridx) for lvl in cfg.lowpass_levels}

    # -- forward ------------------------------------------------------------

    def compute(self, pyr: Pyramid) -> list[StatVector]:
        vals, _ = self.forward(pyr)
        return [StatVector(vals[i].copy(), self.schema, i) for i in range(vals.shape[0])]

    def forward(self, pyr: Pyramid):
        """Return (values array of shape (n_regions, n_stats), backward cache)."""
        cfg = self.cfg
        n_reg = len(self.windows)
        vals = np.zeros((n_reg, self.n_stats))
        bstack = []
        mags = []
        for s in range(N_BAND_SCALES):
            bs = np.stack(pyr.bands[s])
            bstack.append(bs)
            mags.append(np.sqrt(bs * bs + cfg.mag_eps ** 2) - cfg.mag_eps)
        shifts = {}
        for lvl in cfg.lowpass_levels:
            v = pyr.lowpass[lvl]
            stack = np.stack([
                v[ri][:, ci]
                for ri in self._rowidx[lvl]
                for ci in self._colidx[lvl]
            ])
            shifts[lvl] = stack
        cache = {"pyr": pyr, "bstack": bstack, "mags": mags, "shifts": shifts,
                 "marg": np.zeros((n_reg, 4)), "be": np.zeros((n_reg, N_BAND_SCALES, 4)),
                 "bc": np.zeros((n_reg, N_BAND_SCALES, 4, 4)),
                 "ac_n": {lvl: np.zeros((n_reg, self._n_lags())) for lvl in cfg.lowpass_levels},
                 "ac_b": {lvl: np.zeros((n_reg, self._n_lags())) for lvl in cfg.lowpass_levels},
                 "ac_mu": {lvl: np.zeros(n_reg) for lvl in cfg.lowpass_levels}}
        for i, wins in enumerate(self.windows):
            vals[i] = self._region_forward(i, pyr, mags, shifts, wins, cache)
        return vals, cache

    def _n_lags(self) -> int:
        side = 2 * self.cfg.acorr_radius + 1
        return side * side

    def _region_forward(self, i, pyr, mags, shifts, wins, cache) -> np.ndarray:
        cfg = self.cfg
        eps = cfg.degenerate_eps
        out = np.zeros(self.n_stats)
        pos = 0
        # marginals on L0
        w0 = wins[0]
        if w0.ok:
            x = pyr.lowpass[0][w0.sly, w0.slx]
            mu = float((w0.wn * x).sum())
            c = x - mu
            m2 = float((w0.wn * c * c).sum())
            m3 = float((w0.wn * c ** 3).sum())
            m4 = float((w0.wn * c ** 4).sum())
            ratio_ok = m2 >= eps and w0.neff >= cfg.ratio_min_neff
            skew = m3 / m2 ** 1.5 if ratio_ok else 0.0
            kurt = m4 / m2 ** 2 if ratio_ok else 0.0
            out[0:4] = (mu, m2, skew, kurt)
            cache["marg"][i] = (mu, m2, m3, m4)
        pos = 4
        # band energies
        for s in range(N_BAND_SCALES):
            w = wins[s]
            if w.ok:
                e = (w.wn[None] * mags[s][:, w.sly, w.slx]).sum(axis=(1, 2))
                out[pos : pos + 4] = e
                cache["be"][i, s] = e
            pos += 4
        # band magnitude correlations
        for s in range(N_BAND_SCALES):
            w = wins[s]
            if w.ok and w.neff >= cfg.ratio_min_neff:
                m = mags[s][:, w.sly, w.slx]
                e = cache["be"][i, s]
                cmat = np.einsum("aij,bij->ab", w.wn[None] * m, m) - np.outer(e, e)
                cache["bc"][i, s] = cmat
                var = np.diag(cmat)
                for j, (a, b) in enumerate(_PAIRS):
                    if var[a] >= eps and var[b] >= eps:
                        out[pos + j] = cmat[a, b] / np.sqrt(var[a] * var[b])
            pos += len(_PAIRS)
        # autocorrelations of lowpass levels
        center = self._n_lags() // 2
        for lvl in cfg.lowpass_levels:
            w = wins[lvl]
            if w.ok and w.neff >= cfg.ratio_min_neff:
                v = pyr.lowpass[lvl][w.sly, w.slx]
                sh = shifts[lvl][:, w.sly, w.slx]
                mu = float((w.wn * v).sum())
                a_vec = ((w.wn * v)[None] * sh).sum(axis=(1, 2))
                b_vec = (w.wn[None] * sh).sum(axis=(1, 2))
                n_vec = a_vec - mu * b_vec
                cache["ac_n"][lvl][i] = n_vec
                cache["ac_b"][lvl][i] = b_vec
                cache["ac_mu"][lvl][i] = mu
                if n_vec[center] >= eps:
                    out[pos : pos + self._n_lags()] = n_vec / n_vec[center]
            pos += self._n_lags()
        return out

    # -- backward -----------------------------------------------------------

    def backward(self, cache, dvals: np.ndarray) -> np.ndarray:
        """Map adjoints on the statistic values back to the input image."""
        cfg = self.cfg
        eps = cfg.degenerate_eps
        pyr: Pyramid = cache["pyr"]
        mags = cache["mags"]
        shifts = cache["shifts"]
        n_reg = dvals.shape[0]
        n_lags = self._n_lags()
        center = n_lags // 2
        d_low: list[np.ndarray | None] = [None] * 4
        d_bands: list[list[np.ndarray | None]] = [[None] * 4 for _ in range(N_BAND_SCALES)]

        def low_acc(lvl):
            if d_low[lvl] is None:
                d_low[lvl] = np.zeros(self.shapes[lvl])
            return d_low[lvl]

        # vectorized adjoint algebra over all regions (scalar chain rules)
        marg = cache["marg"]
        m2a, m3a, m4a = marg[:, 1], marg[:, 2], marg[:, 3]
        neff0 = np.array([w[0].neff for w in self.windows])
        ratio_ok = (m2a >= eps) & (neff0 >= cfg.ratio_min_neff)
        safe_m2 = np.where(ratio_ok, m2a, 1.0)
        a2 = dvals[:, 1].copy()
        a2 += np.where(ratio_ok, dvals[:, 2] * (-1.5 * m3a * safe_m2 ** -2.5), 0.0)
        a2 += np.where(ratio_ok, dvals[:, 3] * (-2.0 * m4a * safe_m2 ** -3), 0.0)
        a3 = np.where(ratio_ok, dvals[:, 2] * safe_m2 ** -1.5, 0.0)
        a4 = np.where(ratio_ok, dvals[:, 3] * safe_m2 ** -2, 0.0)

        de_all = dvals[:, 4 : 4 + 4 * N_BAND_SCALES].reshape(n_reg, N_BAND_SCALES, 4)
        dc_all = dvals[
            :, 4 + 4 * N_BAND_SCALES : 4 + 4 * N_BAND_SCALES + len(_PAIRS) * N_BAND_SCALES
        ].reshape(n_reg, N_BAND_SCALES, len(_PAIRS))
        # symmetric pair-adjoint matrix T (off-diagonals from the correlation
        # numerator, diagonals from the variance chain, covering both orders)
        cmat_all = cache["bc"]
        var_all = np.einsum("rsaa->rsa", cmat_all)
        t_all = np.zeros((n_reg, N_BAND_SCALES, 4, 4))
        for j, (a, b) in enumerate(_PAIRS):
            va, vb = var_all[:, :, a], var_all[:, :, b]
            good = (va >= eps) & (vb >= eps)
            inv = np.where(good, 1.0 / np.sqrt(np.where(good, va * vb, 1.0)), 0.0)
            dcj = dc_all[:, :, j]
            rho = cmat_all[:, :, a, b] * inv
            t_all[:, :, a, b] += dcj * inv
            t_all[:, :, b, a] += dcj * inv
            t_all[:, :, a, a] += np.where(good, -dcj * rho / np.where(good, va, 1.0), 0.0)
            t_all[:, :, b, b] += np.where(good, -dcj * rho / np.where(good, vb, 1.0), 0.0)

        dn_all: dict[int, np.ndarray] = {}
        ac_active: dict[int, np.ndarray] = {}
        pos = 4 + 4 * N_BAND_SCALES + len(_PAIRS) * N_BAND_SCALES
        for lvl in cfg.lowpass_levels:
            dn_out = dvals[:, pos : pos + n_lags]
            n_vec = cache["ac_n"][lvl]
            n0 = n_vec[:, center]
            active = n0 >= eps
            safe_n0 = np.where(active, n0, 1.0)
            dn = dn_out / safe_n0[:, None]
            dn[:, center] -= (dn_out * n_vec).sum(axis=1) / safe_n0 ** 2
            dn[~active] = 0.0
            dn_all[lvl] = dn
            ac_active[lvl] = active
            pos += n_lags

        ac_direct: dict[int, np.ndarray] = {}
        ac_scatter: dict[int, np.ndarray] = {}
        ac_bterm: dict[int, np.ndarray] = {}
        min_neff = cfg.ratio_min_neff

        for i, wins in enumerate(self.windows):
            # marginals on L0
            w0 = wins[0]
            if w0.ok:
                x = pyr.lowpass[0][w0.sly, w0.slx]
                c = x - float(marg[i, 0])
                g = w0.wn * (
                    dvals[i, 0]
                    + a2[i] * 2.0 * c
                    + a3[i] * (3.0 * c * c - 3.0 * m2a[i])
                    + a4[i] * (4.0 * c ** 3 - 4.0 * m3a[i])
                )
                low_acc(0)[w0.sly, w0.slx] += g
            # band energies + correlations share the magnitude adjoint per scale
            for s in range(N_BAND_SCALES):
                w = wins[s]
                if not w.ok:
                    continue
                dm = de_all[i, s][:, None, None] * w.wn[None]
                if w.neff >= min_neff:
                    m = mags[s][:, w.sly, w.slx]
                    chat = m - cache["be"][i, s][:, None, None]
                    dm = dm + w.wn[None] * np.einsum("ab,bij->aij", t_all[i, s], chat)
                bs = cache["bstack"][s][:, w.sly, w.slx]
                db = dm * bs / np.sqrt(bs * bs + cfg.mag_eps ** 2)
                if d_bands[s][0] is None:
                    for o in range(4):
                        d_bands[s][o] = np.zeros(self.shapes[s])
                for o in range(4):
                    d_bands[s][o][w.sly, w.slx] += db[o]
            # autocorrelations: paste per-region terms into level-wide buffers
            for lvl in cfg.lowpass_levels:
                w = wins[lvl]
                if not (w.ok and w.neff >= min_neff and ac_active[lvl][i]):
                    continue
                dn = dn_all[lvl][i]
                if lvl not in ac_direct:
                    ac_direct[lvl] = np.zeros((n_lags, *self.shapes[lvl]))
                    ac_scatter[lvl] = np.zeros((n_lags, *self.shapes[lvl]))
                    ac_bterm[lvl] = np.zeros(self.shapes[lvl])
                v = pyr.lowpass[lvl][w.sly, w.slx]
                wc = w.wn * (v - cache["ac_mu"][lvl][i])
                ac_direct[lvl][:, w.sly, w.slx] += dn[:, None, None] * w.wn[None]
                ac_scatter[lvl][:, w.sly, w.slx] += dn[:, None, None] * wc[None]
                ac_bterm[lvl][w.sly, w.slx] += w.wn * float((dn * cache["ac_b"][lvl][i]).sum())

        r = cfg.acorr_radius
        offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
        for lvl, direct in ac_direct.items():
            # direct terms: dN(lag)/dv_p = wn_p * (v_shift_p - b(lag))
            dl = (direct * shifts[lvl]).sum(axis=0) - ac_bterm[lvl]
            # scatter terms: dN(lag)/dv_{T(p)} += wn_p * (v_p - mu)
            for li, (dy, dx) in enumerate(offsets):
                dl += _scatter_shift2d(ac_scatter[lvl][li], dy, dx)
            low_acc(lvl)[...] += dl
        return pyramid_backward(d_low, d_bands, self.shapes)


def _windows_for_region(region, shapes, full_shape, coverage) -> list[_Window]:
    wins = []
    for lvl, (h, w) in enumerate(shapes):
        sly, slx, wgt = window_patch(region, h, w, full_shape[0], full_shape[1])
        if coverage is not None and wgt.size:
            cov = coverage[lvl][sly, slx]
            wgt = np.where(cov > 0.0, wgt / np.maximum(cov, 1e-300), 0.0)
        wn, ok, neff = _normalize_patch(wgt)
        wins.append(_Window(sly, slx, wn, ok, neff))
    return wins


# ---------------------------------------------------------------------------
# Single-region convenience op
# ---------------------------------------------------------------------------

def region_stats(pyr: Pyramid, region: PoolingRegion, cfg: StatsConfig = DEFAULT_CONFIG) -> StatVector:
    """Statistics of one region under its own (raw) raised-cosine window."""
    h, w = pyr.input_shape
    sly, slx, wgt = window_patch(region, h, w, h, w)
    if wgt.sum() < 1e-6:
        raise DegenerateRegion(f"region at {region.center} has total weight {wgt.sum():.2e}")
    shapes = [pyr.lowpass[s].shape for s in range(4)]
    wins = [
        _Window(*_win_parts(region, sh, (h, w)))
        for sh in shapes
    ]
    eng = object.__new__(StatsEngine)
    eng.cfg = cfg
    eng.schema = schema(cfg)
    eng.n_stats = len(eng.schema)
    eng.shapes = shapes
    eng.windows = [wins]
    r = cfg.acorr_radius
    eng._rowidx = {lvl: _lag_indices(shapes[lvl][0], r) for lvl in cfg.lowpass_levels}
    eng._colidx = {lvl: _lag_indices(shapes[lvl][1], r) for lvl in cfg.lowpass_levels}
    vals, _ = eng.forward(pyr)
    return StatVector(vals[0], eng.schema, 0)


def _win_parts(region, shape, full_shape):
    sly, slx, wgt = window_patch(region, shape[0], shape[1], full_shape[0], full_shape[1])
    wn, ok, neff = _normalize_patch(wgt)
    return sly, slx, wn, ok, neff


def layout_stats(pyr: Pyramid, layout: PoolingLayout, cfg: StatsConfig = DEFAULT_CONFIG) -> list[StatVector]:
    return StatsEngine(layout, cfg).compute(pyr)


# ---------------------------------------------------------------------------
# Percent difference and serialization
# ---------------------------------------------------------------------------

class PercentDiff(NamedTuple):
    per_entry: np.ndarray
    mean: float
    std: float


def percent_diff(a: StatVector, b: StatVector) -> PercentDiff:
    """Entrywise 100*|a-b| / max(|b|, 1e-3), plus mean/std over entries."""
    if a.schema != b.schema:
        raise SchemaMismatch("statistic vectors have different schemas")
    denom = np.maximum(np.abs(b.values), PERCENT_DIFF_EPS)
    pe = 100.0 * np.abs(a.values - b.values) / denom
    return PercentDiff(pe, float(pe.mean()), float(pe.std()))


def _descriptor_doc(d: StatDescriptor) -> dict:
    return {"name": d.name, "scale": d.scale, "orientation": d.orientation, "lag": d.lag}


def stats_to_json(vectors: list[StatVector]) -> str:
    if not vectors:
        return json.dumps({"schema": [], "regions": []})
    doc = {
        "schema": [_descriptor_doc(d) for d in vectors[0].schema],
        "regions": [
            {"region_id": v.region_id, "values": [float(x) for x in v.values]}
            for v in vectors
        ],
    }
    return json.dumps(doc)


def stats_from_json(text: str, cfg: StatsConfig = DEFAULT_CONFIG) -> list[StatVector]:
    doc = json.loads(text)
    sch = schema(cfg)
    if len(doc["schema"]) != len(sch):
        raise SchemaMismatch("serialized schema length does not match configuration")
    return [
        StatVector(np.asarray(r["values"], dtype=np.float64), sch, int(r["region_id"]))
        for r in doc["regions"]
    ]


def stats_to_csv(vectors: list[StatVector]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    if vectors:
        header = ["region_id"] + [
            f"{d.name}|s={d.scale}|o={d.orientation}|lag={d.lag}" for d in vectors[0].schema
        ]
        writer.writerow(header)
        for v in vectors:
            writer.writerow([v.region_id] + [repr(float(x)) for x in v.values])
    return buf.getvalue()
