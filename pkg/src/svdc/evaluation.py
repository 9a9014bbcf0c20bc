"""Rate-distortion sweeps, bit-allocation heatmaps and CSV reporting."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .codec import BitAllocation, CodecConfig, bit_allocation, bpp_map, decode_detailed, encode_detailed
from .entropy import PredictorConfig
from .pnm import format_pnm
from .roi import TimestepMap

SCHEMA_VERSION = 1
PREDICTORS = {"cond": "timestep_conditioned", "uncond": "unconditioned"}
MODES = tuple((p, s) for p in PREDICTORS for s in ("resampled", "repaint"))
CSV_FIELDS = (
    "schema_version", "image_id", "map_id", "predictor", "sampler", "total_bpp", "tmap_bpp", "latent_bpp",
    "header_bpp", "per_level_bpp", "mse", "psnr", "per_level_mse", "denoiser_calls", "wall_time", "error",
)


@dataclass
class EvalRecord:
    image_id: str
    map_id: str
    predictor: str
    sampler: str
    total_bpp: float = float("nan")
    tmap_bpp: float = float("nan")
    latent_bpp: float = float("nan")
    header_bpp: float = float("nan")  # header and latent framing
    per_level_bpp: dict = field(default_factory=dict)
    mse: float = float("nan")  # on the [-1, 1] scale
    psnr: float = float("nan")  # 8-bit scale, peak 255
    per_level_mse: dict = field(default_factory=dict)
    denoiser_calls: int = 0
    wall_time: float = 0.0
    error: str = ""

    def row(self) -> dict:
        d = asdict(self)
        d["per_level_bpp"] = _fmt_levels(self.per_level_bpp)
        d["per_level_mse"] = _fmt_levels(self.per_level_mse)
        return {"schema_version": SCHEMA_VERSION, **d}


def _fmt_levels(d: dict) -> str:
    return ";".join(f"{k}:{v:.6g}" for k, v in sorted(d.items()))


def psnr(mse: float) -> float:
    """PSNR at peak 255 for an MSE measured on the ``[-1, 1]`` scale."""
    mse255 = mse * 127.5 ** 2
    return float("inf") if mse255 == 0 else float(10.0 * np.log10(255.0 ** 2 / mse255))


def evaluate(image, tmap: TimestepMap, cfg: CodecConfig, image_id="img", map_id="map", denoiser=None) -> EvalRecord:
    """Encode and decode one image under one configuration; failures are recorded, not raised."""
    pred = next(k for k, v in PREDICTORS.items() if v == cfg.predictor.conditioning)
    rec = EvalRecord(image_id, map_id, pred, cfg.sampler)
    start = time.perf_counter()
    try:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = image[None]
        enc = encode_detailed(image, tmap, cfg)
        dec = decode_detailed(enc.stream, denoiser, cfg.sampler, seed=enc.header.seed)
        pixels = tmap.values.size
        alloc = bit_allocation(enc.quantized.indices, enc.model, tmap, enc.total_bits)
        rec.total_bpp = enc.total_bits / pixels
        rec.tmap_bpp = enc.tmap_bits / pixels
        rec.latent_bpp = (enc.latent_bits - 32) / pixels
        rec.header_bpp = (8 * enc.header.size + 32) / pixels
        rec.per_level_bpp = {lvl: v["bits_per_pixel"] for lvl, v in alloc.per_level().items()}
        err = ((dec.image - image) ** 2).mean(axis=0)
        rec.mse = float(err.mean())
        rec.psnr = psnr(rec.mse)
        rec.per_level_mse = {int(lvl): float(err[tmap.values == lvl].mean()) for lvl in np.unique(tmap.values)}
        rec.denoiser_calls = dec.denoiser_calls
    except Exception as exc:  # a sweep keeps going past single failures
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - start
    return rec


def _eval_job(args):
    return evaluate(*args)


def eval_rd(images, maps, cfg: CodecConfig = CodecConfig(), modes=MODES, image_ids=None, jobs: int = 1) -> list[EvalRecord]:
    """Sweep every (image, map, mode); ``maps`` maps an id to a TimestepMap or to a per-image list of them.

    Rows come back ordered by (image, map, mode) whatever ``jobs`` is.
    """
    image_ids = image_ids or [f"img{i:03d}" for i in range(len(images))]
    tasks = []
    for i, (iid, image) in enumerate(zip(image_ids, images)):
        for mid, m in maps.items():
            tmap = m[i] if isinstance(m, (list, tuple)) else m
            for pred, sampler in modes:
                mcfg = replace(cfg, predictor=PredictorConfig(conditioning=PREDICTORS[pred]), sampler=sampler)
                tasks.append((image, tmap, mcfg, iid, mid))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_eval_job, tasks, chunksize=4))
    return [_eval_job(t) for t in tasks]


def constant_maps(levels, width, height, n_levels=50) -> dict[str, TimestepMap]:
    return {f"const{lvl}": TimestepMap.constant(lvl, width, height, n_levels) for lvl in levels}


def write_csv(path, records) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(r.row())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# -- bit-allocation heatmaps --


def heatmap(alloc: BitAllocation) -> np.ndarray:
    """Per-pixel bits scaled so the largest cost maps to 255."""
    peak = float(alloc.bits.max())
    if peak <= 0:
        return np.zeros(alloc.bits.shape, dtype=np.uint8)
    return np.clip(np.floor(alloc.bits / peak * 255.0 + 0.5), 0, 255).astype(np.uint8)


def level_rows(alloc: BitAllocation) -> list[dict]:
    rows = [{"level": lvl, **v} for lvl, v in alloc.per_level().items()]
    return rows


def write_bitmap(stream: bytes, pgm_path, csv_path=None) -> BitAllocation:
    alloc = bpp_map(stream)
    with open(pgm_path, "wb") as f:
        f.write(format_pnm(heatmap(alloc)))
    if csv_path:
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=("schema_version", "level", "pixels", "latent_bits",
                                                   "bits_per_pixel", "total_bits"))
            writer.writeheader()
            for row in level_rows(alloc):
                writer.writerow({"schema_version": SCHEMA_VERSION, **row})
    return alloc
