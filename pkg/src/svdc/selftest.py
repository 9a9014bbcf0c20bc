"""Release checks shared by ``svdc selftest`` and the test-suite.

Each check returns a :class:`CheckResult`; none of them raises on failure.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .codec import CodecConfig, decode_detailed, encode
from .diffusion import GaussianPrior, MMSEDenoiser
from .entropy import PredictorConfig, SymbolModel, TableBank, decode_with_bank, encode_with_bank
from .pnm import read_image
from .quantizer import quantize, reconstruct
from .roi import TimestepMap, read_map
from .schedule import build_ddim_grid, build_schedule
from .tiny import TinyDenoiser

# (alpha, sigma) pairs along the cosine schedule plus two extremes
KS_PAIRS = ((0.999, 0.0447), (0.9, 0.4359), (0.6, 0.8), (0.2, 0.9798), (0.02, 0.9998))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(name, fn, *args, **kw) -> CheckResult:
    start = time.perf_counter()
    try:
        passed, detail = fn(*args, **kw)
    except Exception as exc:
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


# -- quantization noise law --


def ks_uniform(samples, half_width) -> float:
    """Kolmogorov-Smirnov distance between samples and U(-half_width, half_width)."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    cdf = np.clip((x + half_width) / (2.0 * half_width), 0.0, 1.0)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def quantization_ks(alpha, sigma, n, seed=0) -> float:
    rng = np.random.default_rng(seed)
    y0 = rng.normal(0.0, 1.0, size=(1, 1, n))
    amap = np.full((1, n), alpha)
    smap = np.full((1, n), sigma)
    q = quantize(y0, amap, smap, seed)
    return ks_uniform(reconstruct(q) - alpha * y0, np.sqrt(3.0) * sigma)


def check_ks(n=1_000_000, tol=0.005):
    stats = [quantization_ks(a, s, n, seed=i) for i, (a, s) in enumerate(KS_PAIRS)]
    return max(stats) < tol, f"max KS {max(stats):.5f} (tol {tol}, n={n})"


# -- coder bijectivity --


def fuzz_bank(n_tables=4096, seed=0) -> TableBank:
    """Tables for random Gaussian models, from very peaked to very wide."""
    rng = np.random.default_rng(seed)
    shape = (1, 1, n_tables)
    delta = np.exp(rng.uniform(np.log(0.05), np.log(5.0), shape))
    model = SymbolModel(
        rng.normal(0.0, 3.0, shape),
        np.exp(rng.uniform(np.log(1e-3), np.log(50.0), shape)),
        delta,
        rng.uniform(-0.5, 0.5, shape),
    )
    return TableBank(model)


def fuzz_sequence(rng, bank: TableBank, max_len=32):
    """Random table choice and symbols, a few of them far outside the table window."""
    n = int(rng.integers(0, max_len + 1))
    rows = rng.integers(0, len(bank), size=n)
    sub = bank.subset(rows.tolist())
    lo = np.asarray(sub.lo, dtype=np.int64)
    width = np.asarray([len(c) - 2 for c in sub.cum], dtype=np.int64)
    symbols = lo + (rng.random(n) * width).astype(np.int64)
    wild = rng.random(n) < 0.05
    symbols[wild] = rng.integers(-(1 << 31), 1 << 31, size=int(wild.sum()))
    return symbols, sub


def check_fuzz(rounds=100_000, seed=0):
    rng = np.random.default_rng(seed)
    bank = fuzz_bank(seed=seed)
    for r in range(rounds):
        symbols, sub = fuzz_sequence(rng, bank)
        data = encode_with_bank(symbols, sub)
        if decode_with_bank(data, sub) != symbols.tolist():
            return False, f"round {r} failed to round-trip"
    return True, f"{rounds} sequences round-tripped"


# -- golden streams --

GOLDEN_CASES = {
    "gray_constant": CodecConfig(seed=1234),
    "gray_roi": CodecConfig(schedule="scaled_linear", seed=42,
                            predictor=PredictorConfig(conditioning="unconditioned")),
    "rgb_voronoi": CodecConfig(ddim_steps=20, seed=(1 << 63) + 5),
}


def data_dir() -> Path:
    return Path(str(resources.files("svdc") / "data"))


def golden_inputs(name, directory=None):
    d = Path(directory) if directory else data_dir()
    ext = "ppm" if name.startswith("rgb") else "pgm"
    return read_image(d / f"{name}.{ext}"), read_map(d / f"{name}.map.pgm")


def write_golden(directory) -> None:
    """Regenerate the pinned inputs and streams; only run when the format changes on purpose."""
    from .corpus import markov_image, two_level_map, gaussian_image
    from .pnm import write_image
    from .roi import region_map, write_map

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)
    inputs = {
        "gray_constant": (markov_image(rng, 32, 32), TimestepMap.constant(10, 32, 32, 50)),
        "gray_roi": (gaussian_image(rng, 32, 32), two_level_map(rng, 32, 32, 5, 40)),
        "rgb_voronoi": (markov_image(rng, 24, 16, channels=3), region_map("voronoi", 4, 24, 16, levels=20, seed=3)),
    }
    for name, (image, tmap) in inputs.items():
        ext = "ppm" if image.shape[0] == 3 else "pgm"
        write_image(d / f"{name}.{ext}", image)
        write_map(d / f"{name}.map.pgm", tmap)
        image, tmap = golden_inputs(name, d)
        (d / f"{name}.svdc").write_bytes(encode(image, tmap, GOLDEN_CASES[name]))


def check_golden(directory=None):
    d = Path(directory) if directory else data_dir()
    bad = []
    for name, cfg in GOLDEN_CASES.items():
        image, tmap = golden_inputs(name, d)
        expected = (d / f"{name}.svdc").read_bytes()
        if encode(image, tmap, cfg) != expected:
            bad.append(name)
    return not bad, "all golden streams identical" if not bad else f"mismatch: {', '.join(bad)}"


# -- tiny denoiser gradients --


def gradient_check(model: TinyDenoiser, x, target, eps=1e-6):
    """Largest relative error between analytic and central-difference gradients."""
    _, gw, gb = model.loss_and_grads(x, target)
    analytic = model.flatten_grads(gw, gb)
    theta = model.get_flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        t = theta.copy()
        t[i] += eps
        model.set_flat(t)
        up = model.loss_and_grads(x, target)[0]
        t[i] -= 2 * eps
        model.set_flat(t)
        down = model.loss_and_grads(x, target)[0]
        numeric[i] = (up - down) / (2 * eps)
    model.set_flat(theta)
    rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(rel.max())


def check_gradients(tol=1e-4, seed=0):
    rng = np.random.default_rng(seed)
    model = TinyDenoiser.init(patch_size=3, hidden=(3, 6), seed=seed)
    x = rng.normal(size=(16, 10))
    target = rng.normal(size=16)
    err = gradient_check(model, x, target, eps=1e-5)
    return err < tol, f"max relative error {err:.2e} over {model.num_parameters} parameters"


# -- reduction to uniform diffusion --


def uniform_ddim_decode(y_hat, level, grid, schedule, denoiser):
    """Plain DDIM over the grid from ``level`` down, every pixel at the same index."""
    y = np.asarray(y_hat, dtype=np.float64)
    shape = y.shape[-2:]
    for lvl in range(level, 0, -1):
        idx = int(grid.start_index(lvl))
        a, s = schedule.alphas[idx], schedule.sigmas[idx]
        v = denoiser(y, np.full(shape, idx, dtype=np.int64), schedule)
        x0 = a * y - s * v
        if lvl == 1:
            return x0
        nxt = int(grid.start_index(lvl - 1))
        y = schedule.alphas[nxt] * x0 + schedule.sigmas[nxt] * (s * y + a * v)


def check_reduction(levels=(1, 7, 25, 50), seed=0):
    rng = np.random.default_rng(seed)
    cfg = CodecConfig(seed=seed)
    schedule = build_schedule(cfg.schedule, cfg.T)
    grid = build_ddim_grid(cfg.ddim_steps, schedule)
    den = MMSEDenoiser(GaussianPrior())
    for level in levels:
        image = np.clip(rng.normal(0.0, 0.25, size=(1, 16, 16)), -1, 1)
        dec = decode_detailed(encode(image, TimestepMap.constant(level, 16, 16, cfg.ddim_steps), cfg), den)
        ref = uniform_ddim_decode(dec.y_hat, level, grid, schedule, den)
        if not np.array_equal(dec.latent, ref):
            return False, f"level {level}: resampled decode differs from uniform DDIM"
    return True, f"bit-identical at levels {list(levels)}"


def run_all(quick=False, golden_dir=None) -> list[CheckResult]:
    """The release gate; ``quick`` uses 1e4 KS samples at tolerance 0.05 and a shorter fuzz."""
    return [
        _timed("ks_uniformity", check_ks, 10_000 if quick else 1_000_000, 0.05 if quick else 0.005),
        _timed("coder_fuzz", check_fuzz, 2_000 if quick else 100_000),
        _timed("golden_streams", check_golden, golden_dir),
        _timed("gradient_check", check_gradients),
        _timed("reduction_to_uniform", check_reduction),
    ]
