"""``svdc`` command line: encode, decode, genmap, eval-rd, bitmap, train, selftest.

Commands print one JSON object per line on stdout. Exit status is 0 on
success, 1 when a self-test check fails and 2 for bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .codec import CodecConfig, StreamError, decode_detailed, encode_detailed
from .entropy import PredictorConfig
from .evaluation import PREDICTORS, constant_maps, eval_rd, write_bitmap, write_csv
from .pnm import read_image, write_image
from .roi import REGION_KINDS, MapGenConfig, TimestepMap, generate_training_map, read_map, region_map, write_map
from .schedule import SCHEDULE_KINDS

GLOBAL_DEFAULTS = {
    "seed": 0,
    "schedule": "cosine",
    "ddim_steps": 50,
    "predictor": "cond",
    "sampler": "resampled",
    "quick": False,
}


class CliError(Exception):
    pass


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _read_file(path, reader):
    if not os.path.exists(path):
        raise CliError(f"no such file: {path}")
    try:
        return reader(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from None


def codec_config(args, seed=None) -> CodecConfig:
    return CodecConfig(
        schedule=args.schedule,
        ddim_steps=args.ddim_steps,
        predictor=PredictorConfig(conditioning=PREDICTORS[args.predictor]),
        sampler=args.sampler,
        seed=args.seed if seed is None else seed,
    )


def _load_denoiser(path):
    if path is None:
        return None
    from .tiny import TinyDenoiser

    return _read_file(path, lambda p: TinyDenoiser.from_bytes(Path(p).read_bytes()))


def cmd_encode(args) -> int:
    image = _read_file(args.image, read_image)
    if args.map is not None:
        tmap = _read_file(args.map, read_map)
    else:
        tmap = TimestepMap.constant(args.level, image.shape[2], image.shape[1], args.ddim_steps)
    cfg = codec_config(args)
    if args.fresh_seed:
        cfg = replace(cfg, seed=None)
    start = time.perf_counter()
    try:
        res = encode_detailed(image, tmap, cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    Path(args.output).write_bytes(res.stream)
    pixels = tmap.values.size
    _emit({
        "command": "encode", "output": args.output, "bytes": len(res.stream),
        "bpp": res.total_bits / pixels, "tmap_bpp": res.tmap_bits / pixels,
        "seed": res.header.seed, "seconds": round(time.perf_counter() - start, 4),
    })
    return 0


def cmd_decode(args) -> int:
    data = _read_file(args.stream, lambda p: Path(p).read_bytes())
    denoiser = _load_denoiser(args.weights)
    start = time.perf_counter()
    try:
        res = decode_detailed(data, denoiser, args.sampler, seed=args.seed)
    except (StreamError, ValueError) as exc:
        raise CliError(f"{args.stream}: {exc}") from None
    write_image(args.output, res.image)
    _emit({
        "command": "decode", "output": args.output, "bpp": 8 * len(data) / res.tmap.values.size,
        "denoiser_calls": res.denoiser_calls, "tau": res.tmap.tau,
        "seconds": round(time.perf_counter() - start, 4),
    })
    return 0


def _histogram(tmap: TimestepMap) -> dict:
    levels, counts = np.unique(tmap.values, return_counts=True)
    return {str(int(lv)): int(c) for lv, c in zip(levels, counts)}


def cmd_genmap(args) -> int:
    if args.width < 1 or args.height < 1:
        raise CliError("map dimensions must be positive")
    n = args.ddim_steps
    lo, hi = args.level_range or (1, n)
    try:
        if args.training_draw:
            cfg = MapGenConfig(levels=n, level_range=(lo, hi), seed=args.seed)
            rng = np.random.default_rng(args.seed)
            maps = [generate_training_map(cfg, args.width, args.height, rng) for _ in range(args.count)]
        elif args.constant is not None:
            maps = [TimestepMap.constant(args.constant, args.width, args.height, n)]
        else:
            maps = [region_map(args.kind, args.regions, args.width, args.height, n, (lo, hi), args.seed)]
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.output)
    if len(maps) == 1:
        write_map(out, maps[0])
        _emit({"command": "genmap", "output": str(out), "histogram": _histogram(maps[0])})
        return 0
    out.mkdir(parents=True, exist_ok=True)
    constant = 0
    for i, m in enumerate(maps):
        write_map(out / f"map{i:05d}.pgm", m)
        constant += int(m.values.min() == m.values.max())
    _emit({"command": "genmap", "output": str(out), "maps": len(maps), "constant_fraction": constant / len(maps)})
    return 0


def _load_corpus(args):
    if args.corpus:
        paths = sorted(p for p in Path(args.corpus).iterdir() if p.suffix in (".pgm", ".ppm"))
        if not paths:
            raise CliError(f"corpus directory {args.corpus} holds no PGM/PPM images")
        return [_read_file(p, read_image) for p in paths], [p.stem for p in paths]
    from .corpus import make_corpus

    images = make_corpus(args.images, args.kind, args.width, args.height, seed=args.seed)
    return images, [f"{args.kind}{i:03d}" for i in range(len(images))]


def _parse_levels(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_eval_rd(args) -> int:
    images, ids = _load_corpus(args)
    if args.quick:
        images, ids = images[:4], ids[:4]
    h, w = images[0].shape[1:]
    maps = constant_maps(args.levels, w, h, args.ddim_steps)
    for path in args.maps or []:
        maps[Path(path).stem] = _read_file(path, read_map)
    modes = [(p, s) for p in args.predictors for s in args.samplers]
    cfg = codec_config(args)
    start = time.perf_counter()
    records = eval_rd(images, maps, cfg, modes=modes, image_ids=ids, jobs=args.jobs)
    write_csv(args.output, records)
    failures = sum(1 for r in records if r.error)
    _emit({"command": "eval-rd", "output": args.output, "rows": len(records), "failures": failures,
           "seconds": round(time.perf_counter() - start, 3)})
    return 0


def cmd_bitmap(args) -> int:
    data = _read_file(args.stream, lambda p: Path(p).read_bytes())
    csv_path = args.csv or str(Path(args.output).with_suffix(".csv"))
    try:
        alloc = write_bitmap(data, args.output, csv_path)
    except (StreamError, ValueError) as exc:
        raise CliError(f"{args.stream}: {exc}") from None
    _emit({"command": "bitmap", "output": args.output, "csv": csv_path, "total_bits": alloc.total_bits,
           "levels": {str(k): v["bits_per_pixel"] for k, v in alloc.per_level().items()}})
    return 0


def cmd_train(args) -> int:
    from .schedule import build_ddim_grid, build_schedule
    from .tiny import TrainConfig, train_tiny_denoiser

    images, _ = _load_corpus(args)
    latents = [(x - x.mean(axis=(1, 2), keepdims=True)) / np.maximum(x.std(axis=(1, 2), keepdims=True), 1e-8)
               for x in images]
    schedule = build_schedule(args.schedule)
    grid = build_ddim_grid(args.ddim_steps, schedule)
    steps = min(args.steps, 200) if args.quick else args.steps
    cfg = TrainConfig(steps=steps, learning_rate=args.lr, patch_size=args.patch, seed=args.seed,
                      hidden=tuple(args.hidden))
    model = _load_denoiser(args.resume) if args.resume else None
    start = time.perf_counter()
    try:
        model, losses = train_tiny_denoiser(latents, MapGenConfig(levels=args.ddim_steps), schedule, grid, cfg, model)
    except FloatingPointError as exc:
        raise CliError(str(exc)) from None
    Path(args.output).write_bytes(model.to_bytes())
    tail = losses[-min(len(losses), 50):]
    _emit({"command": "train", "output": args.output, "steps": len(losses), "parameters": model.num_parameters,
           "final_loss": float(tail.mean()), "seconds": round(time.perf_counter() - start, 3)})
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all(quick=args.quick, golden_dir=args.golden_dir)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.seconds:7.2f}s  {r.detail}")
    ok = all(r.passed for r in results)
    _emit({"command": "selftest", "passed": ok, "checks": {r.name: r.passed for r in results}})
    return 0 if ok else 1


def _global_flags(parser, suppress: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, help="dither / RNG seed (default 0)", **kw)
    g.add_argument("--schedule", choices=SCHEDULE_KINDS, help="noise schedule (default cosine)", **kw)
    g.add_argument("--ddim-steps", type=int, help="DDIM step count N (default 50)", **kw)
    g.add_argument("--predictor", choices=tuple(PREDICTORS), help="entropy model (default cond)", **kw)
    g.add_argument("--sampler", choices=("resampled", "repaint"), help="decoder sampler (default resampled)", **kw)
    g.add_argument("--quick", action="store_true", help="shorter runs for smoke testing", **kw)


def _corpus_flags(p) -> None:
    p.add_argument("--corpus", help="directory of PGM/PPM images (default: synthetic corpus)")
    p.add_argument("--images", type=int, default=50, help="synthetic corpus size")
    p.add_argument("--kind", choices=("gaussian", "markov"), default="gaussian", help="synthetic corpus kind")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svdc", description="Region-adaptive diffusion dequantization codec")
    _global_flags(parser, suppress=False)
    parser.set_defaults(**GLOBAL_DEFAULTS)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("encode", cmd_encode, "compress a PGM/PPM image")
    p.add_argument("image")
    p.add_argument("-m", "--map", help="timestep map (PGM); default is a constant map")
    p.add_argument("--level", type=int, default=10, help="level of the constant map when --map is absent")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--fresh-seed", action="store_true", help="draw a new dither seed instead of --seed")

    p = add("decode", cmd_decode, "reconstruct an image from a .svdc stream")
    p.add_argument("stream")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--weights", help="tiny-denoiser weights; default is the analytic MMSE denoiser")

    p = add("genmap", cmd_genmap, "write a timestep map")
    p.add_argument("-o", "--output", required=True, help="map file, or a directory with --training-draw")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--kind", choices=REGION_KINDS, default="rectangle")
    p.add_argument("--regions", type=int, default=3)
    p.add_argument("--constant", type=int, help="write a constant map at this level")
    p.add_argument("--level-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--training-draw", action="store_true", help="draw maps like the training sampler")
    p.add_argument("--count", type=int, default=1, help="number of maps for --training-draw")

    p = add("eval-rd", cmd_eval_rd, "rate-distortion sweep to CSV")
    _corpus_flags(p)
    p.add_argument("--levels", type=_parse_levels, default=[5, 10, 20, 40])
    p.add_argument("--maps", nargs="*", help="extra ROI maps (PGM)")
    p.add_argument("--predictors", nargs="+", choices=tuple(PREDICTORS), default=list(PREDICTORS))
    p.add_argument("--samplers", nargs="+", choices=("resampled", "repaint"), default=["resampled", "repaint"])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", required=True)

    p = add("bitmap", cmd_bitmap, "per-pixel bit-cost heatmap of a stream")
    p.add_argument("stream")
    p.add_argument("-o", "--output", required=True, help="heatmap PGM")
    p.add_argument("--csv", help="per-level totals (default: next to the heatmap)")

    p = add("train", cmd_train, "train the tiny patch denoiser")
    _corpus_flags(p)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--patch", type=int, default=5)
    p.add_argument("--hidden", type=int, nargs="+", default=[32, 32])
    p.add_argument("--resume", help="start from existing weights")
    p.add_argument("-o", "--output", required=True)

    p = add("selftest", cmd_selftest, "run the release checks")
    p.add_argument("--golden-dir", help="directory holding golden inputs and streams")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"svdc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"svdc {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
