"""Timestep-conditioned entropy model, frequency tables and symbol coding.

Each quantization index ``k`` of a pixel is modelled by the mass a Gaussian
``N(mu, scale^2)`` puts on the pixel's dithered bin ``[(k + u - 1/2) delta,
(k + u + 1/2) delta]``. With timestep conditioning the Gaussian is the exact
push-forward of the source prior through the pixel's ``alpha``; without it the
prior is used as is.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .normal import interval_mass
from .rangecoder import RangeCoderError, RangeDecoder, RangeEncoder

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS
SCALE_FLOOR = 1e-6
# two-sided standard normal tail beyond TAIL_Z is 5.7e-7 < 2**-20
TAIL_Z = 5.0
MAX_RADIUS = 4096
CONDITIONING_MODES = ("timestep_conditioned", "unconditioned")


def gaussian_bin_pmf(mu, scale, delta, dither_unit, k):
    """Probability of bin ``k`` for the dithered grid of width ``delta``."""
    scale = np.asarray(scale, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(scale <= 0) or np.any(delta <= 0):
        raise ValueError("scale and delta must be positive")
    c = (np.asarray(k, dtype=np.float64) + dither_unit) * delta
    lo = (c - 0.5 * delta - mu) / scale
    hi = (c + 0.5 * delta - mu) / scale
    return interval_mass(lo, hi)


@dataclass(frozen=True)
class PredictorConfig:
    prior_mean: tuple[float, ...] = (0.0,)
    prior_std: tuple[float, ...] = (1.0,)
    conditioning: str = "timestep_conditioned"

    def __post_init__(self):
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")
        if len(self.prior_mean) != len(self.prior_std):
            raise ValueError("prior_mean and prior_std need the same length")
        if any(s <= 0 for s in self.prior_std):
            raise ValueError("prior_std must be positive")

    def channel_prior(self, channels: int) -> tuple[np.ndarray, np.ndarray]:
        mu = np.asarray(self.prior_mean, dtype=np.float64)
        sd = np.asarray(self.prior_std, dtype=np.float64)
        if mu.size == 1:
            mu, sd = np.repeat(mu, channels), np.repeat(sd, channels)
        if mu.size != channels:
            raise ValueError(f"prior has {mu.size} channels, latent has {channels}")
        return mu, sd


@dataclass(frozen=True)
class SymbolModel:
    """Per-symbol Gaussian parameters, all shaped like the latent ``(C, H, W)``."""

    mu: np.ndarray
    scale: np.ndarray
    delta: np.ndarray
    dither_unit: np.ndarray

    @property
    def shape(self):
        return self.dither_unit.shape

    def pmf(self, k):
        return gaussian_bin_pmf(self.mu, self.scale, self.delta, self.dither_unit, k)

    def flat(self):
        return tuple(np.broadcast_to(a, self.shape).ravel() for a in
                     (self.mu, self.scale, self.delta, self.dither_unit))


def predict_params(alpha_map, delta_map, cfg: PredictorConfig, dither_unit) -> SymbolModel:
    """Gaussian symbol parameters for a quantized latent.

    Conditioned: ``mu = alpha * mu0`` and ``scale = alpha * s0`` (the coded
    quantity is ``alpha * y0``). Unconditioned: ``mu0`` and ``s0`` everywhere.
    """
    dither_unit = np.asarray(dither_unit, dtype=np.float64)
    if dither_unit.ndim != 3:
        raise ValueError("dither_unit must have shape (C, H, W)")
    channels = dither_unit.shape[0]
    mu0, s0 = cfg.channel_prior(channels)
    mu0 = mu0[:, None, None]
    s0 = s0[:, None, None]
    alpha = np.asarray(alpha_map, dtype=np.float64)[None]
    if cfg.conditioning == "timestep_conditioned":
        mu = alpha * mu0
        scale = alpha * s0
    else:
        mu = np.broadcast_to(mu0, dither_unit.shape)
        scale = np.broadcast_to(s0, dither_unit.shape)
    shape = dither_unit.shape
    return SymbolModel(
        np.broadcast_to(mu, shape).copy(),
        np.maximum(np.broadcast_to(scale, shape), SCALE_FLOOR),
        np.broadcast_to(np.asarray(delta_map, dtype=np.float64)[None], shape).copy(),
        dither_unit,
    )


# ---------------------------------------------------------------------------
# integer frequency tables


@dataclass(frozen=True)
class FrequencyTable:
    """Symbols ``lo .. lo + len(freqs) - 2`` followed by one escape entry; sums to 2**16."""

    lo: int
    freqs: np.ndarray

    @property
    def cum(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.freqs)])

    @property
    def hi(self) -> int:
        return self.lo + len(self.freqs) - 2

    @property
    def escape(self) -> int:
        return len(self.freqs) - 1

    def slot(self, symbol: int) -> int:
        return symbol - self.lo if self.lo <= symbol <= self.hi else self.escape

    def probabilities(self) -> np.ndarray:
        return self.freqs / TOTAL


def window_radius(scale, delta):
    r = np.ceil(TAIL_Z * np.asarray(scale) / np.asarray(delta)) + 1
    return np.minimum(r, MAX_RADIUS).astype(np.int64)


def _tables_batch(mu, scale, delta, u, radius):
    """Frequency rows for symbols sharing a window radius; returns ``(lo, freqs)``."""
    center = np.copysign(np.floor(np.abs(mu / delta) + 0.5), mu / delta).astype(np.int64)
    lo = center - radius
    edges = (lo[:, None] + np.arange(2 * radius + 2)[None, :] + u[:, None] - 0.5) * delta[:, None]
    z = (edges - mu[:, None]) / scale[:, None]
    p = interval_mass(z[:, :-1], z[:, 1:])
    p_escape = interval_mass(np.full(len(mu), -np.inf), z[:, 0]) + interval_mass(
        z[:, -1], np.full(len(mu), np.inf)
    )
    p = np.concatenate([p, p_escape[:, None]], axis=1)

    n = p.shape[1]
    spare = TOTAL - n
    scaled = p * spare
    base = np.floor(scaled).astype(np.int64)
    frac = scaled - base
    leftover = spare - base.sum(axis=1)
    order = np.argsort(-frac, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(n)[None, :].repeat(len(mu), 0), axis=1)
    freqs = 1 + base + (rank < leftover[:, None])
    # floating sums a hair above 1 can overshoot; take the excess from the largest entries
    over = freqs.sum(axis=1) - TOTAL
    for row in np.nonzero(over > 0)[0]:
        for j in np.argsort(-freqs[row], kind="stable")[: over[row]]:
            freqs[row, j] -= 1
    return lo, freqs


def quantize_pmf(model: SymbolModel, pixel) -> FrequencyTable:
    """Integer table for one symbol; ``pixel`` is a ``(c, y, x)`` tuple or flat index."""
    flat = model.flat()
    i = int(np.ravel_multi_index(pixel, model.shape)) if isinstance(pixel, tuple) else int(pixel)
    mu, scale, delta, u = (a[i : i + 1] for a in flat)
    radius = int(window_radius(scale, delta)[0])
    lo, freqs = _tables_batch(mu, scale, delta, u, radius)
    return FrequencyTable(int(lo[0]), freqs[0])


class TableBank:
    """Frequency tables for every symbol of a model, built in vectorised groups."""

    def __init__(self, model: SymbolModel):
        mu, scale, delta, u = model.flat()
        radius = window_radius(scale, delta)
        self.lo = [0] * mu.size
        self.cum = [None] * mu.size
        for r in np.unique(radius):
            sel = np.nonzero(radius == r)[0]
            lo, freqs = _tables_batch(mu[sel], scale[sel], delta[sel], u[sel], int(r))
            cum = np.concatenate([np.zeros((len(sel), 1), np.int64), np.cumsum(freqs, 1)], 1)
            for j, i in enumerate(sel.tolist()):
                self.lo[i] = int(lo[j])
                self.cum[i] = cum[j].tolist()

    def __len__(self):
        return len(self.lo)

    def subset(self, rows) -> TableBank:
        """A bank holding the tables at ``rows`` (repeats allowed), in that order."""
        out = object.__new__(TableBank)
        out.lo = [self.lo[i] for i in rows]
        out.cum = [self.cum[i] for i in rows]
        return out

    def table(self, i: int) -> FrequencyTable:
        return FrequencyTable(self.lo[i], np.diff(self.cum[i]))


# ---------------------------------------------------------------------------
# symbol coding

RAW_BITS = 32


def _encode_symbol(enc: RangeEncoder, symbol: int, lo: int, cum: list) -> None:
    escape = len(cum) - 2
    slot = symbol - lo
    if 0 <= slot < escape:
        enc.encode(cum[slot], cum[slot + 1] - cum[slot], TOTAL)
        return
    if not -(1 << 31) <= symbol < (1 << 31):
        raise OverflowError(f"symbol {symbol} does not fit the 32-bit escape code")
    enc.encode(cum[escape], cum[escape + 1] - cum[escape], TOTAL)
    raw = symbol & 0xFFFFFFFF
    enc.encode_raw16(raw >> 16)
    enc.encode_raw16(raw & 0xFFFF)


def _decode_symbol(dec: RangeDecoder, lo: int, cum: list) -> int:
    v = dec.target(TOTAL)
    slot = bisect.bisect_right(cum, v) - 1
    dec.consume(cum[slot], cum[slot + 1] - cum[slot])
    if slot < len(cum) - 2:
        return lo + slot
    raw = (dec.decode_raw16() << 16) | dec.decode_raw16()
    return raw - (1 << 32) if raw >= (1 << 31) else raw


def range_encode(symbols, tables) -> bytes:
    """Code each symbol with its own :class:`FrequencyTable`."""
    enc = RangeEncoder()
    for s, t in zip(symbols, tables, strict=True):
        _encode_symbol(enc, int(s), t.lo, t.cum.tolist())
    return enc.finish()


def range_decode(data: bytes, tables, count: int) -> list[int]:
    if len(tables) < count:
        raise RangeCoderError(f"only {len(tables)} tables for {count} symbols")
    dec = RangeDecoder(data)
    return [_decode_symbol(dec, tables[i].lo, tables[i].cum.tolist()) for i in range(count)]


def encode_with_bank(symbols, bank: TableBank) -> bytes:
    flat = np.asarray(symbols).ravel().tolist()
    if len(flat) != len(bank):
        raise ValueError("symbols and tables disagree in count")
    enc = RangeEncoder()
    lo, cum = bank.lo, bank.cum
    for i, s in enumerate(flat):
        _encode_symbol(enc, s, lo[i], cum[i])
    return enc.finish()


def decode_with_bank(data: bytes, bank: TableBank) -> list[int]:
    dec = RangeDecoder(data)
    lo, cum = bank.lo, bank.cum
    return [_decode_symbol(dec, lo[i], cum[i]) for i in range(len(bank))]


def encode_symbols(indices, model: SymbolModel, bank: TableBank | None = None) -> bytes:
    """Range-code a latent's indices in channel-major, row-major order."""
    return encode_with_bank(indices, bank or TableBank(model))


def decode_symbols(data: bytes, model: SymbolModel, bank: TableBank | None = None) -> np.ndarray:
    out = decode_with_bank(data, bank or TableBank(model))
    return np.asarray(out, dtype=np.int64).reshape(model.shape)


def symbol_bits(indices, model: SymbolModel) -> np.ndarray:
    """Ideal code length ``-log2 P(k)`` of every symbol (``inf`` where ``P`` underflows)."""
    p = model.pmf(np.asarray(indices))
    with np.errstate(divide="ignore"):
        return -np.log2(p)


def rate_estimate(indices, model: SymbolModel) -> float:
    """Total ideal bits of the latent under the model; ``inf`` flags a zero-probability symbol."""
    if np.shape(indices) != model.shape:
        raise ValueError("indices and model disagree in shape")
    return float(symbol_bits(indices, model).sum())


# ---------------------------------------------------------------------------
# lossless timestep-map coding

TMAP_INCREMENT = 32
TMAP_RESCALE_LIMIT = 1 << 15


class AdaptiveModel:
    """Order-0 counts over ``n`` symbols, all starting at 1.

    After each symbol its count grows by 32; when the total passes 2**15 all
    counts are halved (rounding up, so none reaches 0).
    """

    def __init__(self, n: int):
        self.freq = [1] * n
        self.total = n

    def cum(self, s: int) -> int:
        return sum(self.freq[:s])

    def find(self, target: int) -> tuple[int, int]:
        acc = 0
        for s, f in enumerate(self.freq):
            if acc + f > target:
                return s, acc
            acc += f
        raise RangeCoderError("target beyond adaptive model total")

    def update(self, s: int) -> None:
        self.freq[s] += TMAP_INCREMENT
        self.total += TMAP_INCREMENT
        if self.total > TMAP_RESCALE_LIMIT:
            self.freq = [(f + 1) // 2 for f in self.freq]
            self.total = sum(self.freq)


def encode_tmap(tmap) -> bytes:
    """Range-code the map's levels (row-major) with an adaptive order-0 model."""
    values = np.asarray(tmap.values).ravel().tolist()
    model = AdaptiveModel(tmap.levels)
    enc = RangeEncoder()
    for v in values:
        s = v - 1
        enc.encode(model.cum(s), model.freq[s], model.total)
        model.update(s)
    return enc.finish()


def decode_tmap(data: bytes, width: int, height: int, levels: int):
    from .roi import TimestepMap

    model = AdaptiveModel(levels)
    dec = RangeDecoder(data)
    out = []
    for _ in range(width * height):
        s, c = model.find(dec.target(model.total))
        dec.consume(c, model.freq[s])
        model.update(s)
        out.append(s + 1)
    return TimestepMap(np.asarray(out, dtype=np.int64).reshape(height, width), levels)


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def table_code_length(table: FrequencyTable, p) -> float:
    """Expected bits per symbol when a source with probabilities ``p`` is coded with ``table``."""
    q = table.probabilities()
    return float(-(np.asarray(p) * np.log2(q)).sum()) if len(p) == len(q) else math.nan
