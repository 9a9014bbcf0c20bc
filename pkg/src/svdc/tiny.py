"""A small patch-MLP v-predictor trained with the v-prediction MSE loss on uniform noise.

Each pixel's prediction sees a ``patch_size x patch_size`` neighbourhood of the
noisy state (reflect padded) plus that pixel's own ``alpha``; channels are
processed independently with shared weights. Gradients come from hand-written
backpropagation; training is plain SGD with global-norm clipping.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .roi import MapGenConfig, generate_training_map
from .schedule import DdimGrid, NoiseSchedule

MAGIC = b"SVTD"
VERSION = 1


def patch_features(y: np.ndarray, alpha_map: np.ndarray, patch_size: int) -> np.ndarray:
    """``(C*H*W, patch_size**2 + 1)`` feature matrix for a ``(C, H, W)`` state."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        y = y[None]
    c, h, w = y.shape
    r = patch_size // 2
    padded = np.pad(y, ((0, 0), (r, r), (r, r)), mode="reflect" if min(h, w) > r else "edge")
    cols = [padded[:, i : i + h, j : j + w] for i in range(patch_size) for j in range(patch_size)]
    cols.append(np.broadcast_to(alpha_map, (c, h, w)))
    return np.stack(cols, axis=-1).reshape(c * h * w, patch_size * patch_size + 1)


@dataclass
class TinyDenoiser:
    patch_size: int = 5
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, patch_size: int = 5, hidden: tuple[int, ...] = (32, 32), seed: int = 0) -> TinyDenoiser:
        if patch_size < 1 or patch_size % 2 == 0:
            raise ValueError("patch_size must be a positive odd integer")
        rng = np.random.default_rng(seed)
        dims = [patch_size * patch_size + 1, *hidden, 1]
        weights = [rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(b) for b in dims[1:]]
        return cls(patch_size, weights, biases)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        out = h[:, 0]
        return (out, acts) if keep else out

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray):
        """Mean squared error and its gradients w.r.t. every weight and bias."""
        out, acts = self.forward(x, keep=True)
        n = len(target)
        err = out - target
        loss = float(np.mean(err * err))
        g = (2.0 / n) * err[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return loss, gw, gb

    def __call__(self, y, index_map, schedule):
        alpha = schedule.alphas[np.asarray(index_map)]
        y = np.asarray(y, dtype=np.float64)
        return self.forward(patch_features(y, alpha, self.patch_size)).reshape(y.shape)

    # -- parameter vector helpers (finite-difference checks) --

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_flat(self, theta: np.ndarray) -> None:
        pos = 0
        for p in [p for pair in zip(self.weights, self.biases) for p in pair]:
            p[...] = theta[pos : pos + p.size].reshape(p.shape)
            pos += p.size

    @staticmethod
    def flatten_grads(gw, gb) -> np.ndarray:
        return np.concatenate([g.ravel() for pair in zip(gw, gb) for g in pair])

    # -- serialisation --

    def to_bytes(self) -> bytes:
        """``SVTD`` magic, version, patch size, layer count, layer dims (u32), then float64 weights/biases."""
        dims = self.dims
        head = MAGIC + struct.pack("<BBH", VERSION, self.patch_size, len(dims))
        head += struct.pack(f"<{len(dims)}I", *dims)
        body = b"".join(p.astype("<f8").tobytes() for pair in zip(self.weights, self.biases) for p in pair)
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> TinyDenoiser:
        if data[:4] != MAGIC:
            raise ValueError("not a tiny-denoiser weight file")
        version, patch, ndims = struct.unpack_from("<BBH", data, 4)
        if version != VERSION:
            raise ValueError(f"unsupported weight-file version {version}")
        dims = struct.unpack_from(f"<{ndims}I", data, 8)
        pos = 8 + 4 * ndims
        weights, biases = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            for shape, bucket in (((a, b), weights), ((b,), biases)):
                n = int(np.prod(shape))
                chunk = data[pos : pos + 8 * n]
                if len(chunk) != 8 * n:
                    raise ValueError("truncated weight file")
                bucket.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64))
                pos += 8 * n
        if pos != len(data):
            raise ValueError("trailing bytes in weight file")
        if dims[0] != patch * patch + 1:
            raise ValueError("input width does not match patch size")
        return cls(patch, weights, biases)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 0.05
    clip_norm: float = 1.0
    batch_images: int = 1
    patch_size: int = 5
    hidden: tuple[int, ...] = (32, 32)
    seed: int = 0
    fixed_batch: bool = False  # reuse one noisy batch every step (overfit sanity runs)
    log_every: int = 0


def make_training_batch(latents, map_cfg: MapGenConfig, grid: DdimGrid, schedule: NoiseSchedule,
                        rng: np.random.Generator, batch_images: int, patch_size: int):
    """Features and v targets for randomly mapped, uniformly noised latents."""
    xs, ts = [], []
    for _ in range(batch_images):
        y0 = np.asarray(latents[int(rng.integers(len(latents)))], dtype=np.float64)
        if y0.ndim == 2:
            y0 = y0[None]
        tmap = generate_training_map(map_cfg, y0.shape[2], y0.shape[1], rng=rng)
        alpha, sigma = schedule.alpha_sigma(grid.start_index(tmap.values))
        u = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=y0.shape)
        yt = alpha * y0 + sigma * u
        xs.append(patch_features(yt, alpha, patch_size))
        ts.append(((alpha * yt - y0) / sigma).ravel())
    return np.concatenate(xs), np.concatenate(ts)


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


def train_tiny_denoiser(latents, map_cfg: MapGenConfig, schedule: NoiseSchedule, grid: DdimGrid,
                        cfg: TrainConfig = TrainConfig(), model: TinyDenoiser | None = None):
    """Fit a :class:`TinyDenoiser`; returns ``(model, per-step losses)``."""
    if len(latents) == 0:
        raise ValueError("training needs at least one latent")
    rng = np.random.default_rng(cfg.seed)
    model = model or TinyDenoiser.init(cfg.patch_size, cfg.hidden, seed=cfg.seed)
    if map_cfg.levels != grid.step_count:
        raise ValueError("map generator and DDIM grid disagree on the level count")
    batch = None
    losses = []
    for it in range(cfg.steps):
        if batch is None or not cfg.fixed_batch:
            batch = make_training_batch(latents, map_cfg, grid, schedule, rng, cfg.batch_images, model.patch_size)
        loss, gw, gb = model.loss_and_grads(*batch)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"training diverged at step {it}: loss={loss}, last finite loss="
                f"{next((l for l in reversed(losses) if np.isfinite(l)), None)}"
            )
        clip_by_global_norm(gw + gb, cfg.clip_norm)
        for p, g in zip(model.weights + model.biases, gw + gb):
            p -= cfg.learning_rate * g
        losses.append(loss)
        if cfg.log_every and it % cfg.log_every == 0:
            print(f"step {it:6d}  loss {loss:.6f}")
    return model, np.asarray(losses)
