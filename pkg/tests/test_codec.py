import struct
import zlib

import numpy as np
import pytest

from svdc.codec import (
    CodecConfig, StreamError, bpp_map, decode, decode_detailed, encode, encode_detailed, header_size, parse_header,
)
from svdc.corpus import gaussian_image, markov_image, two_level_map
from svdc.diffusion import CountingDenoiser, MMSEDenoiser
from svdc.entropy import PredictorConfig
from svdc.roi import TimestepMap, region_map


@pytest.fixture
def image():
    return gaussian_image(np.random.default_rng(0), 32, 24)


def test_header_layout(image):
    tmap = TimestepMap.constant(7, 32, 24, 50)
    data = encode(image, tmap, CodecConfig(seed=99))
    assert data[:4] == b"SVDC" and data[4] == 1
    assert struct.unpack_from("<II", data, 5) == (32, 24)
    assert data[13] == 1 and data[14] == 0 and data[15] == 0
    assert struct.unpack_from("<HHQ", data, 16) == (1000, 50, 99)
    size = header_size(1)
    assert size == 28 + 16 + 8 + 4
    assert struct.unpack_from("<I", data, size - 4)[0] == zlib.crc32(data[: size - 4])
    h = parse_header(data)
    assert len(data) == h.size + h.tmap_length + h.latent_length
    mean, std = struct.unpack_from("<dd", data, 28)
    assert mean == pytest.approx(image.mean()) and std == pytest.approx(image.std())


def test_determinism_and_round_trip(image):
    tmap = region_map("rectangle", 2, 32, 24, seed=1)
    a = encode_detailed(image, tmap, CodecConfig(seed=5))
    assert a.stream == encode(image, tmap, CodecConfig(seed=5))
    d1, d2 = decode_detailed(a.stream), decode_detailed(a.stream)
    assert d1.tmap == tmap
    assert np.array_equal(d1.image, d2.image)
    assert np.array_equal(d1.y_hat, a.y_hat)
    assert np.array_equal(d1.indices, a.quantized.indices)
    assert d1.denoiser_calls == tmap.tau


def test_fresh_seed_policy(image):
    tmap = TimestepMap.constant(3, 32, 24, 50)
    a = encode_detailed(image, tmap, CodecConfig(seed=None))
    b = encode_detailed(image, tmap, CodecConfig(seed=None))
    assert a.header.seed != b.header.seed
    assert decode_detailed(a.stream).tmap == tmap


def test_rgb_and_2d_input():
    rng = np.random.default_rng(1)
    rgb = markov_image(rng, 16, 12, channels=3)
    tmap = TimestepMap.constant(4, 16, 12, 50)
    out = decode(encode(rgb, tmap))
    assert out.shape == (3, 12, 16)
    assert np.mean((out - rgb) ** 2) < 0.01
    assert decode(encode(rgb[0], tmap)).shape == (1, 12, 16)


def test_level_40_smaller_than_level_5():
    x = gaussian_image(np.random.default_rng(2), 64, 64)
    a = encode(x, TimestepMap.constant(5, 64, 64, 50))
    b = encode(x, TimestepMap.constant(40, 64, 64, 50))
    assert len(b) < len(a)


def test_custom_denoiser_and_samplers(image):
    tmap = two_level_map(np.random.default_rng(3), 32, 24, 3, 12)
    data = encode(image, tmap)
    counter = CountingDenoiser(MMSEDenoiser())
    res = decode_detailed(data, counter, sampler="repaint")
    assert counter.calls == res.denoiser_calls == 12
    with pytest.raises(ValueError):
        decode(data, sampler="ddpm")


def test_bpp_map_accounting(image):
    tmap = two_level_map(np.random.default_rng(4), 32, 24, 5, 40)
    data = encode(image, tmap)
    alloc = bpp_map(data)
    assert alloc.total_bits == 8 * len(data)
    assert abs(alloc.bits.sum() + alloc.overhead_bits - 8 * len(data)) < 64
    per = alloc.per_level()
    assert sum(v["total_bits"] for v in per.values()) == pytest.approx(8 * len(data))
    assert per[5]["bits_per_pixel"] > per[40]["bits_per_pixel"]


def test_constant_map_bits_are_flat(image):
    alloc = bpp_map(encode(image, TimestepMap.constant(20, 32, 24, 50)))
    half = alloc.bits.shape[1] // 2
    left, right = alloc.bits[:, :half].mean(), alloc.bits[:, half:].mean()
    assert abs(left - right) < 0.25 * alloc.bits.mean()


def _corrupt(data, pos, value):
    b = bytearray(data)
    b[pos] = value
    return bytes(b)


def test_stream_errors(image):
    data = encode(image, TimestepMap.constant(5, 32, 24, 50))
    with pytest.raises(StreamError, match="magic"):
        decode(b"XVDC" + data[4:])
    with pytest.raises(StreamError, match="version"):
        decode(_corrupt(data, 4, 2))
    with pytest.raises(StreamError, match="checksum"):
        decode(_corrupt(data, 20, data[20] ^ 1))
    with pytest.raises(StreamError, match="truncated"):
        decode(data[:-1])
    with pytest.raises(StreamError, match="truncated"):
        decode(data[:30])
    with pytest.raises(StreamError):
        decode(data + b"\0")
    with pytest.raises(StreamError):
        decode(b"")


def test_encode_validation(image):
    with pytest.raises(ValueError, match="dimension mismatch"):
        encode(image, TimestepMap.constant(5, 24, 32, 50))
    with pytest.raises(ValueError):
        encode(image, TimestepMap.constant(5, 32, 24, 20))
    with pytest.raises(ValueError, match="exceeds"):
        encode(image, np.full((24, 32), 51))
    with pytest.raises(ValueError):
        encode(np.full((1, 24, 32), np.nan), TimestepMap.constant(5, 32, 24, 50))
    with pytest.raises(ValueError):
        CodecConfig(ddim_steps=2000)
    with pytest.raises(ValueError):
        CodecConfig(schedule="linear")


def test_flat_image_survives():
    flat = np.full((1, 8, 8), 0.25)
    out = decode(encode(flat, TimestepMap.constant(10, 8, 8, 50)))
    np.testing.assert_allclose(out, 0.25, atol=1e-12)


@pytest.mark.parametrize("kind", ["cosine", "scaled_linear"])
@pytest.mark.parametrize("cond", ["timestep_conditioned", "unconditioned"])
def test_config_variants_round_trip(image, kind, cond):
    cfg = CodecConfig(schedule=kind, ddim_steps=25, predictor=PredictorConfig(conditioning=cond), seed=3)
    tmap = region_map("grid", 4, 32, 24, levels=25, seed=2)
    res = decode_detailed(encode(image, tmap, cfg))
    assert res.header.schedule == kind and res.header.conditioning == cond
    assert res.tmap == tmap
