"""Timestep maps: type, validation, PGM storage and the random training-map sampler."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

REGION_KINDS = ("rectangle", "circle", "grid", "voronoi")


class MapDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class TimestepMap:
    """Per-pixel DDIM level map; ``levels`` is the DDIM step count N."""

    values: np.ndarray
    levels: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int64, copy=True)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("timestep map must be a non-empty 2-D array")
        problems = validate_map(values, self.levels)
        if problems:
            raise ValueError("; ".join(problems))
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "levels", int(self.levels))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def tau(self) -> int:
        return int(self.values.max())

    @classmethod
    def constant(cls, level: int, width: int, height: int, levels: int) -> TimestepMap:
        return cls(np.full((height, width), level, dtype=np.int64), levels)

    def __eq__(self, other):
        if not isinstance(other, TimestepMap):
            return NotImplemented
        return self.levels == other.levels and np.array_equal(self.values, other.values)

    __hash__ = None


def validate_map(tmap, grid, shape: tuple[int, int] | None = None) -> list[str]:
    """Return a list of problems; empty means the map is usable with ``grid``.

    ``grid`` may be a ``DdimGrid`` or the step count itself.
    """
    step_count = int(getattr(grid, "step_count", grid))
    values = np.asarray(getattr(tmap, "values", tmap))
    problems = []
    if values.ndim != 2:
        problems.append(f"expected a 2-D map, got {values.ndim} dimensions")
        return problems
    if shape is not None and tuple(values.shape) != tuple(shape):
        problems.append(f"dimension mismatch: map is {values.shape}, latent grid is {tuple(shape)}")
    if values.size == 0:
        problems.append("empty map")
        return problems
    if not np.issubdtype(values.dtype, np.integer):
        if not np.all(values == np.round(values)):
            problems.append("non-integer levels")
    if values.min() < 1:
        problems.append(f"below minimum level: {int((values < 1).sum())} values < 1")
    if values.max() > step_count:
        problems.append(
            f"exceeds DDIM step count: {int((values > step_count).sum())} values > {step_count}"
        )
    return problems


# ---------------------------------------------------------------------------
# PGM storage

_HEADER_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")
_LEVELS_COMMENT = re.compile(rb"#\s*svdc\s+ddim_steps=(\d+)")


def store_map(tmap: TimestepMap) -> bytes:
    """Binary PGM (P5) with ``maxval = N`` and a comment recording N."""
    n = tmap.levels
    header = b"P5\n# svdc ddim_steps=%d\n%d %d\n%d\n" % (n, tmap.width, tmap.height, n)
    dtype = ">u1" if n < 256 else ">u2"
    return header + tmap.values.astype(dtype).tobytes()


def load_map(data: bytes) -> TimestepMap:
    if not data.startswith(b"P5"):
        raise MapDecodeError("not a binary PGM (missing P5 magic)")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        m = _HEADER_TOKEN.match(data, pos)
        if m is None:
            raise MapDecodeError("truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    if pos >= len(data) or data[pos : pos + 1] not in (b"\n", b" ", b"\t", b"\r"):
        raise MapDecodeError("malformed PGM header")
    pos += 1
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MapDecodeError(f"malformed PGM header: {exc}") from None
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise MapDecodeError("invalid PGM dimensions or maxval")
    comment = _LEVELS_COMMENT.search(data[:pos])
    levels = int(comment.group(1)) if comment else maxval
    if levels != maxval:
        raise MapDecodeError(f"maxval {maxval} disagrees with recorded ddim_steps {levels}")
    dtype = ">u1" if maxval < 256 else ">u2"
    nbytes = width * height * np.dtype(dtype).itemsize
    payload = data[pos : pos + nbytes]
    if len(payload) != nbytes:
        raise MapDecodeError(f"expected {nbytes} bytes of map data, found {len(payload)}")
    values = np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(np.int64)
    if values.max() > levels:
        raise MapDecodeError(f"map value {int(values.max())} exceeds N={levels}")
    if values.min() < 1:
        raise MapDecodeError("map contains level 0")
    return TimestepMap(values, levels)


def read_map(path) -> TimestepMap:
    with open(path, "rb") as f:
        return load_map(f.read())


def write_map(path, tmap: TimestepMap) -> None:
    with open(path, "wb") as f:
        f.write(store_map(tmap))


# ---------------------------------------------------------------------------
# training-map sampler


@dataclass(frozen=True)
class MapGenConfig:
    """Settings for random ROI maps.

    Region extents are drawn as fractions of the image side in
    ``[min_extent, max_extent]``. Only ``constant_probability`` has a source
    value; the rest are defaults of this implementation.
    """

    levels: int = 50
    constant_probability: float = 0.15
    region_kinds: tuple[str, ...] = REGION_KINDS
    level_range: tuple[int, int] = (1, 50)
    max_regions: int = 6
    min_extent: float = 0.1
    max_extent: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if not self.region_kinds:
            raise ValueError("region_kinds must not be empty")
        unknown = set(self.region_kinds) - set(REGION_KINDS)
        if unknown:
            raise ValueError(f"unknown region kinds {sorted(unknown)}")
        lo, hi = self.level_range
        if not 1 <= lo <= hi <= self.levels:
            raise ValueError(f"level_range {self.level_range} not inside [1, {self.levels}]")
        if not 0.0 <= self.constant_probability <= 1.0:
            raise ValueError("constant_probability must lie in [0, 1]")
        if self.max_regions < 1:
            raise ValueError("max_regions must be positive")


def generate_training_map(
    cfg: MapGenConfig, width: int, height: int, rng: np.random.Generator | None = None
) -> TimestepMap:
    """Draw one random map: constant with probability ``cfg.constant_probability``,
    otherwise regions of one randomly chosen kind over a constant canvas.

    Uses ``np.random.default_rng(cfg.seed)`` unless a generator is passed.
    """
    if width < 1 or height < 1:
        raise ValueError("map dimensions must be positive")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.level_range
    canvas = int(rng.integers(lo, hi + 1))
    if rng.random() < cfg.constant_probability:
        return TimestepMap.constant(canvas, width, height, cfg.levels)
    kind = cfg.region_kinds[int(rng.integers(len(cfg.region_kinds)))]
    fewest = 2 if kind in ("grid", "voronoi") else 1
    count = int(rng.integers(fewest, max(fewest, cfg.max_regions) + 1))
    return TimestepMap(_draw_regions(kind, count, canvas, cfg, width, height, rng), cfg.levels)


def region_map(
    kind: str,
    count: int,
    width: int,
    height: int,
    levels: int = 50,
    level_range: tuple[int, int] | None = None,
    seed: int = 0,
) -> TimestepMap:
    """Non-random-kind variant of the sampler, for command-line map generation."""
    if kind not in REGION_KINDS:
        raise ValueError(f"unknown region kind {kind!r}")
    if count < 1:
        raise ValueError("count must be positive")
    level_range = level_range or (1, levels)
    cfg = MapGenConfig(levels=levels, level_range=level_range, max_regions=count, seed=seed)
    rng = np.random.default_rng(seed)
    canvas = int(rng.integers(level_range[0], level_range[1] + 1))
    return TimestepMap(_draw_regions(kind, count, canvas, cfg, width, height, rng), levels)


def _other_level(rng, lo, hi, avoid):
    if lo == hi:
        return lo
    v = int(rng.integers(lo, hi))
    return v + 1 if v >= avoid else v


def _distinct_levels(rng, lo, hi, n):
    span = hi - lo + 1
    if span >= n:
        return lo + rng.choice(span, size=n, replace=False)
    return rng.integers(lo, hi + 1, size=n)


def _draw_regions(kind, count, canvas, cfg, width, height, rng):
    lo, hi = cfg.level_range
    out = np.full((height, width), canvas, dtype=np.int64)
    yy, xx = np.mgrid[0:height, 0:width]

    def extent(side):
        a = max(1, int(round(cfg.min_extent * side)))
        b = max(a, int(round(cfg.max_extent * side)))
        return int(rng.integers(a, b + 1))

    if kind == "rectangle":
        for _ in range(count):
            w, h = extent(width), extent(height)
            x0 = int(rng.integers(0, width - w + 1))
            y0 = int(rng.integers(0, height - h + 1))
            out[y0 : y0 + h, x0 : x0 + w] = _other_level(rng, lo, hi, canvas)
    elif kind == "circle":
        for _ in range(count):
            r = 0.5 * extent(min(width, height))
            cx = int(rng.integers(0, width))
            cy = int(rng.integers(0, height))
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
            out[mask] = _other_level(rng, lo, hi, canvas)
    elif kind == "grid":
        rows = int(rng.integers(1, min(count, height) + 1))
        cols = max(1, min(width, count // rows))
        if rows * cols < 2 and width > 1:
            cols = 2
        tile_levels = _distinct_levels(rng, lo, hi, rows * cols).reshape(rows, cols)
        ri = (yy * rows) // height
        ci = (xx * cols) // width
        out = tile_levels[ri, ci].astype(np.int64)
    elif kind == "voronoi":
        sites = min(count, width * height)
        flat = rng.choice(width * height, size=sites, replace=False)
        sy, sx = np.divmod(flat, width)
        d2 = (yy[..., None] - sy) ** 2 + (xx[..., None] - sx) ** 2
        label = np.argmin(d2, axis=-1)  # ties go to the lowest site index
        out = _distinct_levels(rng, lo, hi, sites)[label].astype(np.int64)
    else:
        raise ValueError(f"unknown region kind {kind!r}")
    return out
