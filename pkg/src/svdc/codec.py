"""End-to-end region-adaptive codec and the ``.svdc`` container.

Stream layout (all integers little-endian)::

    offset  size  field
    0       4     magic "SVDC"
    4       1     version (1)
    5       4     width
    9       4     height
    13      1     channels C
    14      1     schedule kind (0 cosine, 1 scaled_linear)
    15      1     predictor (0 timestep-conditioned, 1 unconditioned)
    16      2     T
    18      2     DDIM step count N
    20      8     dither seed
    28      16*C  per-channel normalisation (mean, std) as float64
    ..      4     timestep-map payload length
    ..      4     latent payload length
    ..      4     CRC-32 of all preceding header bytes
    then the timestep-map payload, then the latent payload:
            4     symbol count (C*H*W)
            ..    range-coded indices, channel-major then row-major

The analysis/synthesis transform is the identity with per-channel affine
normalisation, so the latent grid is the image grid.
"""

from __future__ import annotations

import secrets
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .diffusion import CountingDenoiser, GaussianPrior, MMSEDenoiser, repaint_sample, sample
from .entropy import (
    PredictorConfig,
    SymbolModel,
    decode_symbols,
    decode_tmap,
    encode_symbols,
    encode_tmap,
    predict_params,
    symbol_bits,
)
from .quantizer import QuantizedLatent, dither_at, quantize, reconstruct, symbol_indices
from .rangecoder import RangeCoderError
from .roi import TimestepMap, validate_map
from .schedule import SCHEDULE_KINDS, build_ddim_grid, build_plan, build_schedule

MAGIC = b"SVDC"
VERSION = 1
SAMPLERS = ("resampled", "repaint")
_FIXED = struct.Struct("<4sBIIBBBHHQ")
_LENGTHS = struct.Struct("<II")
_CRC = struct.Struct("<I")
STD_FLOOR = 1e-8


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    schedule: str = "cosine"
    T: int = 1000
    ddim_steps: int = 50
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    sampler: str = "resampled"
    seed: int | None = 0  # None draws a fresh seed per encode

    def __post_init__(self):
        if self.schedule not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 1 <= self.ddim_steps <= self.T:
            raise ValueError("ddim_steps must lie in [1, T]")
        if self.T >= 1 << 16 or self.ddim_steps >= 1 << 16:
            raise ValueError("T and ddim_steps must fit in 16 bits")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")


@dataclass(frozen=True)
class Header:
    width: int
    height: int
    channels: int
    schedule: str
    conditioning: str
    T: int
    ddim_steps: int
    seed: int
    means: tuple[float, ...]
    stds: tuple[float, ...]
    tmap_length: int
    latent_length: int

    def pack(self) -> bytes:
        body = _FIXED.pack(
            MAGIC,
            VERSION,
            self.width,
            self.height,
            self.channels,
            SCHEDULE_KINDS.index(self.schedule),
            _CONDITIONING.index(self.conditioning),
            self.T,
            self.ddim_steps,
            self.seed,
        )
        body += b"".join(struct.pack("<dd", m, s) for m, s in zip(self.means, self.stds))
        body += _LENGTHS.pack(self.tmap_length, self.latent_length)
        return body + _CRC.pack(zlib.crc32(body))

    @property
    def size(self) -> int:
        return header_size(self.channels)

    @property
    def pixels(self) -> int:
        return self.width * self.height


_CONDITIONING = ("timestep_conditioned", "unconditioned")


def header_size(channels: int) -> int:
    return _FIXED.size + 16 * channels + _LENGTHS.size + _CRC.size


def parse_header(data: bytes) -> Header:
    if len(data) < _FIXED.size:
        raise StreamError("stream shorter than the fixed header")
    magic, version, width, height, channels, kind, cond, T, N, seed = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamError(f"unsupported stream version {version}")
    size = header_size(channels)
    if len(data) < size:
        raise StreamError("truncated header")
    (crc,) = _CRC.unpack_from(data, size - _CRC.size)
    if zlib.crc32(data[: size - _CRC.size]) != crc:
        raise StreamError("header checksum mismatch")
    if kind >= len(SCHEDULE_KINDS) or cond >= len(_CONDITIONING):
        raise StreamError("unknown schedule or predictor code")
    if channels < 1 or width < 1 or height < 1 or not 1 <= N <= T:
        raise StreamError("invalid dimensions in header")
    stats = struct.unpack_from(f"<{2 * channels}d", data, _FIXED.size)
    tmap_len, latent_len = _LENGTHS.unpack_from(data, _FIXED.size + 16 * channels)
    return Header(width, height, channels, SCHEDULE_KINDS[kind], _CONDITIONING[cond], T, N, seed,
                  tuple(stats[0::2]), tuple(stats[1::2]), tmap_len, latent_len)


def _split(data: bytes, header: Header) -> tuple[bytes, bytes]:
    start = header.size
    end = start + header.tmap_length + header.latent_length
    if len(data) < end:
        raise StreamError(f"truncated payload: need {end} bytes, have {len(data)}")
    if len(data) > end:
        raise StreamError(f"{len(data) - end} trailing bytes after payload")
    return data[start : start + header.tmap_length], data[start + header.tmap_length : end]


def _as_chw(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3:
        raise ValueError("image must be (H, W) or (C, H, W)")
    if image.shape[0] > 255:
        raise ValueError("at most 255 channels")
    return image


def _normalisation(image):
    means = image.mean(axis=(1, 2))
    stds = image.std(axis=(1, 2))
    # a flat channel normalises to an all-zero latent; a tiny std keeps decode errors tiny too
    stds = np.maximum(stds, STD_FLOOR)
    return means, stds


def _prior_for(header: Header) -> PredictorConfig:
    # the latent is standardised per channel, so the source prior is N(0, 1)
    return PredictorConfig((0.0,), (1.0,), header.conditioning)


@dataclass
class EncodeResult:
    stream: bytes
    header: Header
    tmap: TimestepMap
    y0: np.ndarray  # normalised latent
    quantized: QuantizedLatent
    y_hat: np.ndarray
    model: SymbolModel

    @property
    def total_bits(self) -> int:
        return 8 * len(self.stream)

    @property
    def latent_bits(self) -> int:
        return 8 * self.header.latent_length

    @property
    def tmap_bits(self) -> int:
        return 8 * self.header.tmap_length


def _model_for(header: Header, alpha_map, delta_map) -> SymbolModel:
    shape = (header.channels, header.height, header.width)
    return predict_params(alpha_map, delta_map, _prior_for(header), dither_at(header.seed, symbol_indices(shape)))


def encode_detailed(image, tmap: TimestepMap, cfg: CodecConfig = CodecConfig()) -> EncodeResult:
    image = _as_chw(image)
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    if not isinstance(tmap, TimestepMap):
        tmap = TimestepMap(tmap, cfg.ddim_steps)
    if tmap.levels != cfg.ddim_steps:
        raise ValueError(f"map is defined for N={tmap.levels}, codec uses N={cfg.ddim_steps}")
    problems = validate_map(tmap, cfg.ddim_steps, shape=image.shape[1:])
    if problems:
        raise ValueError("; ".join(problems))
    seed = secrets.randbits(64) if cfg.seed is None else int(cfg.seed) & 0xFFFFFFFFFFFFFFFF

    schedule = build_schedule(cfg.schedule, cfg.T)
    grid = build_ddim_grid(cfg.ddim_steps, schedule)
    alpha, sigma = schedule.alpha_sigma(grid.start_index(tmap.values))
    means, stds = _normalisation(image)
    y0 = (image - means[:, None, None]) / stds[:, None, None]
    q = quantize(y0, alpha, sigma, seed, tmap)

    tmap_payload = encode_tmap(tmap)
    header = Header(image.shape[2], image.shape[1], image.shape[0], cfg.schedule, cfg.predictor.conditioning,
                    cfg.T, cfg.ddim_steps, seed, tuple(map(float, means)), tuple(map(float, stds)),
                    len(tmap_payload), 0)
    model = _model_for(header, alpha, q.delta_map)
    coded = encode_symbols(q.indices, model)
    latent_payload = struct.pack("<I", q.indices.size) + coded
    header = Header(**{**header.__dict__, "latent_length": len(latent_payload)})
    stream = header.pack() + tmap_payload + latent_payload
    return EncodeResult(stream, header, tmap, y0, q, reconstruct(q), model)


def encode(image, tmap: TimestepMap, cfg: CodecConfig = CodecConfig()) -> bytes:
    """Compress an image in ``[-1, 1]`` (``(H, W)`` or ``(C, H, W)``) under a timestep map."""
    return encode_detailed(image, tmap, cfg).stream


@dataclass
class DecodeResult:
    image: np.ndarray
    header: Header
    tmap: TimestepMap
    indices: np.ndarray
    y_hat: np.ndarray
    latent: np.ndarray  # denoised normalised latent
    denoiser_calls: int


def _parse_payloads(data: bytes):
    header = parse_header(data)
    tmap_payload, latent_payload = _split(data, header)
    try:
        tmap = decode_tmap(tmap_payload, header.width, header.height, header.ddim_steps)
    except (RangeCoderError, ValueError) as exc:
        raise StreamError(f"corrupt timestep map: {exc}") from None
    schedule = build_schedule(header.schedule, header.T)
    grid = build_ddim_grid(header.ddim_steps, schedule)
    alpha, sigma = schedule.alpha_sigma(grid.start_index(tmap.values))
    delta = np.sqrt(12.0) * sigma
    model = _model_for(header, alpha, delta)
    if len(latent_payload) < 4:
        raise StreamError("truncated latent payload")
    (count,) = struct.unpack_from("<I", latent_payload)
    if count != header.channels * header.pixels:
        raise StreamError("latent symbol count disagrees with header dimensions")
    try:
        indices = decode_symbols(latent_payload[4:], model)
    except RangeCoderError as exc:
        raise StreamError(f"corrupt latent payload: {exc}") from None
    q = QuantizedLatent(indices, delta, alpha, sigma, header.seed, tmap)
    return header, tmap, schedule, grid, model, q


def decode_detailed(data: bytes, denoiser=None, sampler: str = "resampled", seed: int = 0) -> DecodeResult:
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}")
    header, tmap, schedule, grid, _, q = _parse_payloads(data)
    y_hat = reconstruct(q)
    counter = CountingDenoiser(denoiser if denoiser is not None else MMSEDenoiser(GaussianPrior()))
    if sampler == "resampled":
        latent = sample(y_hat, build_plan(tmap, grid, schedule), counter)
    else:
        latent = repaint_sample(y_hat, tmap, grid, schedule, counter, seed=seed)
    means = np.asarray(header.means)[:, None, None]
    stds = np.asarray(header.stds)[:, None, None]
    image = np.clip(latent * stds + means, -1.0, 1.0)
    return DecodeResult(image, header, tmap, q.indices, y_hat, latent, counter.calls)


def decode(data: bytes, denoiser=None, sampler: str = "resampled") -> np.ndarray:
    """Reconstruct a ``(C, H, W)`` image in ``[-1, 1]``; the MMSE Gaussian denoiser is the default."""
    return decode_detailed(data, denoiser, sampler).image


@dataclass
class BitAllocation:
    bits: np.ndarray  # (H, W) ideal latent bits per pixel, summed over channels
    overhead_bits: float  # header, map payload, framing and coder slack
    total_bits: int
    tmap: TimestepMap

    def per_level(self) -> dict[int, dict[str, float]]:
        out = {}
        overhead_pp = self.overhead_bits / self.bits.size
        for level in np.unique(self.tmap.values):
            mask = self.tmap.values == level
            latent = float(self.bits[mask].sum())
            out[int(level)] = {
                "pixels": int(mask.sum()),
                "latent_bits": latent,
                "bits_per_pixel": latent / mask.sum(),
                "total_bits": latent + overhead_pp * mask.sum(),
            }
        return out


def bit_allocation(indices, model: SymbolModel, tmap: TimestepMap, total_bits: int | None = None) -> BitAllocation:
    bits = symbol_bits(indices, model).sum(axis=0)
    estimate = float(bits.sum())
    total = int(round(estimate)) if total_bits is None else int(total_bits)
    return BitAllocation(bits, total - estimate, total, tmap)


def bpp_map(data: bytes) -> BitAllocation:
    """Per-pixel bit cost of a stream; the remainder of the stream is reported as overhead."""
    header, tmap, _, _, model, q = _parse_payloads(data)
    return bit_allocation(q.indices, model, tmap, 8 * len(data))
