"""Per-pixel universal quantization with a shared counter-based dither.

The encoder computes ``k = round((alpha * y0 - u) / delta)`` and both sides
reconstruct ``y_hat = k * delta + u`` with ``delta = sqrt(12) * sigma`` and
``u = delta * dither_at(seed, i)``, ``i`` being the channel-major, row-major
position of the symbol. The reconstruction error ``y_hat - alpha * y0`` is then
uniform on ``[-sqrt(3) sigma, sqrt(3) sigma]``, which is exactly the uniform
forward-diffusion state at the pixel's timestep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
SQRT12 = np.sqrt(12.0)


def dither_at(seed: int, index):
    """Dither in ``[-1/2, 1/2)`` for symbol ``index`` under ``seed``.

    SplitMix64 output for the state ``seed + index * GOLDEN_GAMMA``: the state
    is advanced once by the golden gamma, mixed with the two SplitMix64
    multiply/xor-shift rounds and a final ``xor >> 31``; the top 53 bits give a
    uniform double in ``[0, 1)`` which is shifted by ``-1/2``. All arithmetic is
    modulo 2**64. Accepts a scalar or an integer array of indices.
    """
    idx = np.asarray(index)
    scalar = idx.ndim == 0
    idx = np.atleast_1d(idx).astype(np.uint64)
    s = np.uint64(int(seed) & MASK64)
    with np.errstate(over="ignore"):
        z = s + idx * np.uint64(GOLDEN_GAMMA)
        z = z + np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
        z = z ^ (z >> np.uint64(31))
    out = (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0) - 0.5
    return float(out[0]) if scalar else out


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def symbol_indices(shape) -> np.ndarray:
    """Linear dither index of every element of a ``(C, H, W)`` latent."""
    return np.arange(int(np.prod(shape)), dtype=np.int64).reshape(shape)


def universal_quantize(x, delta, u):
    """Integer bins of ``x - u`` at width ``delta``; ``u`` is the absolute dither."""
    return round_half_away((np.asarray(x) - u) / delta).astype(np.int64)


def dequantize(k, delta, u):
    return np.asarray(k, dtype=np.float64) * delta + u


@dataclass(frozen=True)
class QuantizedLatent:
    indices: np.ndarray  # (C, H, W) int64
    delta_map: np.ndarray  # (H, W)
    alpha_map: np.ndarray  # (H, W)
    sigma_map: np.ndarray  # (H, W)
    seed: int
    tmap: object = None

    @property
    def dither_unit(self) -> np.ndarray:
        return dither_at(self.seed, symbol_indices(self.indices.shape))


def bin_width(sigma_map):
    sigma_map = np.asarray(sigma_map, dtype=np.float64)
    if np.any(sigma_map <= 0):
        raise ValueError("zero bin width: every pixel needs sigma > 0 (timestep level >= 1)")
    return SQRT12 * sigma_map


def quantize(y0, alpha_map, sigma_map, seed: int, tmap=None) -> QuantizedLatent:
    """Quantize a ``(C, H, W)`` latent to its per-pixel forward-diffusion state."""
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.ndim != 3:
        raise ValueError("latent must have shape (C, H, W)")
    alpha_map = np.asarray(alpha_map, dtype=np.float64)
    if alpha_map.shape != y0.shape[1:] or np.shape(sigma_map) != y0.shape[1:]:
        raise ValueError("alpha/sigma maps must match the latent's spatial shape")
    if not np.all(np.isfinite(y0)):
        raise ValueError("latent contains non-finite values")
    delta = bin_width(sigma_map)
    u = delta * dither_at(seed, symbol_indices(y0.shape))
    k = universal_quantize(alpha_map * y0, delta, u)
    return QuantizedLatent(k, delta, alpha_map, np.asarray(sigma_map, dtype=np.float64), int(seed), tmap)


def reconstruct(q: QuantizedLatent, seed: int | None = None) -> np.ndarray:
    """``k * delta + u``; bitwise identical on encoder and decoder for the same seed."""
    seed = q.seed if seed is None else seed
    u = q.delta_map * dither_at(seed, symbol_indices(q.indices.shape))
    return dequantize(q.indices, q.delta_map, u)


def effective_timestep_noise(y_hat, y0, alpha_map) -> np.ndarray:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    if y_hat.shape != y0.shape:
        raise ValueError(f"shape mismatch: {y_hat.shape} vs {y0.shape}")
    return y_hat - np.asarray(alpha_map) * y0
