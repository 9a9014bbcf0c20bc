"""Discrete variance-preserving noise schedules, DDIM grids and timestep resampling.

A schedule is defined on the dense DDPM grid ``k = 0 .. T`` with ``alphas[0] = 1``.
Timestep-map levels are expressed in DDIM steps: level ``t`` starts at the
``t``-th smallest index of the DDIM grid, so for ``T=1000, N=50`` level 4 starts
at DDPM index 61.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SCHEDULE_KINDS = ("cosine", "scaled_linear")

# cosine offset and per-step beta cap of the improved-DDPM cosine schedule
COSINE_OFFSET = 0.008
MAX_BETA = 0.999
# Stable Diffusion's scaled-linear endpoints
SCALED_LINEAR_BETAS = (0.00085, 0.012)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    T: int
    alphas: np.ndarray
    sigmas: np.ndarray

    def alpha_sigma(self, index) -> tuple[np.ndarray, np.ndarray]:
        """Look up ``(alpha, sigma)`` for an integer index or index map."""
        index = np.asarray(index)
        if index.size and (index.min() < 0 or index.max() > self.T):
            raise IndexError(f"DDPM index outside [0, {self.T}]")
        return self.alphas[index], self.sigmas[index]


@dataclass(frozen=True)
class DdimGrid:
    step_count: int
    T: int
    indices: np.ndarray  # strictly decreasing, last element 1

    def start_index(self, level):
        """DDPM index at which a pixel of the given level starts denoising."""
        level = np.asarray(level)
        if level.size and (level.min() < 1 or level.max() > self.step_count):
            raise ValueError(f"level outside [1, {self.step_count}]")
        return self.indices[self.step_count - level]


@dataclass(frozen=True)
class SamplingPlan:
    tau: int
    trajectories: dict[int, np.ndarray]
    index_maps: np.ndarray  # (tau, H, W) DDPM indices
    alpha_maps: np.ndarray  # (tau, H, W)
    sigma_maps: np.ndarray  # (tau, H, W)
    schedule: NoiseSchedule

    @property
    def shape(self) -> tuple[int, int]:
        return self.index_maps.shape[1:]

    def next_alpha_sigma(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Target (alpha, sigma) after iteration ``k``; the clean state after the last one."""
        if not 0 <= k < self.tau:
            raise IndexError(f"iteration {k} outside plan of length {self.tau}")
        if k == self.tau - 1:
            return np.ones(self.shape), np.zeros(self.shape)
        return self.alpha_maps[k + 1], self.sigma_maps[k + 1]


def build_schedule(kind: str = "cosine", T: int = 1000) -> NoiseSchedule:
    """Build a VP schedule on ``T + 1`` DDPM indices.

    ``cosine``: ``alpha_bar(k) = f(k) / f(0)`` with
    ``f(k) = cos(pi/2 * (k/T + s) / (1 + s))**2`` and ``s = 0.008``; wherever the
    implied per-step beta would exceed 0.999 (only the last step for usual ``T``)
    it is capped, which keeps ``alphas[T] > 0``.

    ``scaled_linear``: ``beta`` linear in sqrt-space between 0.00085 and 0.012,
    ``alpha_bar = cumprod(1 - beta)``.

    In both cases ``alphas = sqrt(alpha_bar)``, ``sigmas = sqrt(1 - alpha_bar)``.
    """
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T!r}")
    T = int(T)
    if kind == "cosine":
        s = COSINE_OFFSET
        k = np.arange(T + 1, dtype=np.float64)
        f = np.cos(0.5 * np.pi * (k / T + s) / (1.0 + s)) ** 2
        abar = f / f[0]
        for i in range(1, T + 1):
            if abar[i] < (1.0 - MAX_BETA) * abar[i - 1]:
                abar[i] = (1.0 - MAX_BETA) * abar[i - 1]
    elif kind == "scaled_linear":
        lo, hi = SCALED_LINEAR_BETAS
        betas = np.linspace(math.sqrt(lo), math.sqrt(hi), T, dtype=np.float64) ** 2
        abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    abar[0] = 1.0
    alphas = np.sqrt(abar)
    sigmas = np.sqrt(1.0 - abar)
    return NoiseSchedule(kind, T, _frozen(alphas), _frozen(sigmas))


def build_ddim_grid(N: int, schedule: NoiseSchedule) -> DdimGrid:
    """Evenly spaced DDIM subset ``{1 + i * (T // N)}`` listed from noisiest to cleanest.

    >>> build_ddim_grid(50, build_schedule("cosine", 1000)).indices[:3]
    array([981, 961, 941])
    """
    T = schedule.T
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError(f"DDIM step count must be a positive integer, got {N!r}")
    if N > T:
        raise ValueError(f"DDIM step count {N} exceeds DDPM grid size {T}")
    step = T // int(N)
    indices = 1 + step * np.arange(int(N) - 1, -1, -1, dtype=np.int64)
    return DdimGrid(int(N), T, _frozen(indices))


def resample_trajectory(start_index: int, tau: int) -> np.ndarray:
    """Spread ``tau`` DDPM indices evenly from ``start_index`` down to 1.

    ``d_k = round(start - k * (start - 1) / (tau - 1))`` with ties rounded away
    from zero, evaluated in exact integer arithmetic. Strictly decreasing when
    ``start_index >= tau``; otherwise some indices repeat (zero-length steps).

    >>> resample_trajectory(61, 4).tolist()
    [61, 41, 21, 1]
    """
    start_index, tau = int(start_index), int(tau)
    if start_index < 1:
        raise ValueError("start_index must be >= 1")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if tau == 1:
        return np.array([start_index], dtype=np.int64)
    den = tau - 1
    k = np.arange(tau, dtype=np.int64)
    num = start_index * den - k * (start_index - 1)
    # num > 0 throughout, so half-away-from-zero is floor(x + 1/2)
    return (2 * num + den) // (2 * den)


def build_plan(tmap, grid: DdimGrid, schedule: NoiseSchedule) -> SamplingPlan:
    """Per-iteration DDPM index and (alpha, sigma) maps for a timestep map.

    Every pixel runs ``tau = max(tmap)`` iterations; a pixel of level ``t``
    follows ``resample_trajectory(grid.start_index(t), tau)``.
    """
    values = np.asarray(getattr(tmap, "values", tmap))
    if values.ndim != 2:
        raise ValueError("timestep map must be 2-D")
    if grid.T != schedule.T:
        raise ValueError("grid and schedule disagree on T")
    if values.size == 0:
        raise ValueError("empty timestep map")
    if values.min() < 1 or values.max() > grid.step_count:
        raise ValueError(f"timestep map values must lie in [1, {grid.step_count}]")
    values = values.astype(np.int64)
    tau = int(values.max())
    levels = np.unique(values)
    trajectories = {}
    lut = np.zeros((grid.step_count + 1, tau), dtype=np.int64)
    for level in levels:
        traj = _frozen(resample_trajectory(int(grid.start_index(level)), tau))
        trajectories[int(level)] = traj
        lut[level] = traj
    index_maps = np.moveaxis(lut[values], -1, 0).copy()
    alpha_maps = schedule.alphas[index_maps]
    sigma_maps = schedule.sigmas[index_maps]
    return SamplingPlan(
        tau,
        trajectories,
        _frozen(index_maps),
        _frozen(alpha_maps),
        _frozen(sigma_maps),
        schedule,
    )
