"""Spatially varying uniform-noise diffusion: parameterisations, denoisers and samplers.

States follow ``y = alpha * y0 + sigma * u`` pixelwise with ``u`` of zero mean
and unit variance. Denoisers predict ``v = (alpha * y - y0) / sigma``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .normal import erfcx, interval_mass, npdf
from .schedule import DdimGrid, NoiseSchedule, SamplingPlan

SQRT3 = np.sqrt(3.0)
_SQRT_HALF = np.sqrt(0.5)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def x0_from_v(y, v, alpha, sigma):
    return alpha * y - sigma * v


def v_from_x0(x0, y, alpha, sigma):
    sigma = np.asarray(sigma)
    if np.any(sigma == 0):
        raise ZeroDivisionError("v is undefined where sigma == 0")
    return (alpha * y - x0) / sigma


def noise_from_v(y, v, alpha, sigma):
    return sigma * y + alpha * v


class Denoiser(Protocol):
    def __call__(self, y: np.ndarray, index_map: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
        """Predict ``v`` for a ``(C, H, W)`` state whose pixels sit at ``index_map``."""


class CountingDenoiser:
    """Wraps a denoiser and counts its evaluations."""

    def __init__(self, inner: Denoiser):
        self.inner = inner
        self.calls = 0

    def __call__(self, y, index_map, schedule):
        self.calls += 1
        return self.inner(y, index_map, schedule)


@dataclass(frozen=True)
class GaussianPrior:
    mean: tuple[float, ...] = (0.0,)
    std: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if any(s <= 0 for s in self.std):
            raise ValueError("prior std must be positive")

    def broadcast(self, y: np.ndarray):
        """Prior mean and std shaped to broadcast against ``y`` (per channel for 3-D states)."""
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.size == 1:
            return mean[0], std[0]
        if y.ndim != 3 or y.shape[0] != mean.size:
            raise ValueError(f"prior has {mean.size} channels, state has shape {y.shape}")
        return mean[:, None, None], std[:, None, None]


def truncated_normal_mean(mu, s, lo, hi):
    """Mean of ``N(mu, s^2)`` restricted to ``[lo, hi]``.

    Evaluated as ``mu + s (phi(a) - phi(b)) / (Phi(b) - Phi(a))`` on standardised
    bounds. Intervals entirely in one tail use the scaled complementary error
    function so deep-tail intervals keep full precision; an interval too narrow
    to resolve returns its midpoint.
    """
    mu, s, lo, hi = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (mu, s, lo, hi)))
    a = (lo - mu) / s
    b = (hi - mu) / s
    flip = b <= 0
    # mirror the lower tail onto the upper one
    a_t = np.where(flip, -b, a)
    b_t = np.where(flip, -a, b)
    upper = a_t >= 0

    au = np.where(upper, a_t, 0.0)
    bu = np.where(upper, b_t, 1.0)
    e = np.exp(-0.5 * (bu - au) * (bu + au))
    num = -np.expm1(-0.5 * (bu - au) * (bu + au))
    den = erfcx(au * _SQRT_HALF) - e * erfcx(bu * _SQRT_HALF)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_tail = _SQRT_2_OVER_PI * num / den
        r_tail = np.where(flip, -r_tail, r_tail)
        mass = interval_mass(a, b)
        r_mid = (npdf(a) - npdf(b)) / mass
    r = np.where(upper, r_tail, r_mid)
    out = np.where(np.isfinite(r), mu + s * r, 0.5 * (lo + hi))
    return np.clip(out, lo, hi)


def mmse_denoise_gaussian(y, alpha_map, sigma_map, prior: GaussianPrior = GaussianPrior()):
    """Posterior mean of ``y0`` given ``y = alpha y0 + sigma u``, ``u ~ U(-sqrt3, sqrt3)``.

    With a Gaussian prior the posterior is the prior truncated to
    ``{y0 : |y - alpha y0| <= sqrt(3) sigma}``.
    """
    y = np.asarray(y, dtype=np.float64)
    sigma = np.asarray(sigma_map, dtype=np.float64)
    alpha = np.asarray(alpha_map, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive; clean pixels need no denoising")
    mean, std = prior.broadcast(y)
    half = SQRT3 * sigma
    return truncated_normal_mean(mean, std, (y - half) / alpha, (y + half) / alpha)


class MMSEDenoiser:
    """Exact one-step posterior-mean denoiser for an i.i.d. Gaussian source, as a v-predictor."""

    def __init__(self, prior: GaussianPrior = GaussianPrior()):
        self.prior = prior

    def __call__(self, y, index_map, schedule):
        alpha, sigma = schedule.alpha_sigma(index_map)
        x0 = mmse_denoise_gaussian(y, alpha, sigma, self.prior)
        return v_from_x0(x0, y, alpha, sigma)


def _ddim_update(y, v, alpha, sigma, alpha_next, sigma_next):
    x0 = alpha * y - sigma * v
    if alpha_next is None:
        return x0
    eps = np.where(sigma > 0, sigma * y + alpha * v, 0.0)
    return alpha_next * x0 + sigma_next * eps


def step(y, plan: SamplingPlan, k: int, denoiser: Denoiser) -> np.ndarray:
    """One deterministic DDIM update from iteration ``k`` to ``k + 1`` (or to the clean state)."""
    if not 0 <= k < plan.tau:
        raise IndexError(f"plan has {plan.tau} iterations, asked for {k}")
    v = denoiser(y, plan.index_maps[k], plan.schedule)
    if k == plan.tau - 1:
        return _ddim_update(y, v, plan.alpha_maps[k], plan.sigma_maps[k], None, None)
    return _ddim_update(
        y, v, plan.alpha_maps[k], plan.sigma_maps[k], plan.alpha_maps[k + 1], plan.sigma_maps[k + 1]
    )


def sample(y_hat, plan: SamplingPlan, denoiser: Denoiser) -> np.ndarray:
    """Denoise a quantized state in ``plan.tau`` evaluations with timestep resampling."""
    y = np.asarray(y_hat, dtype=np.float64)
    if y.shape[-2:] != tuple(plan.shape):
        raise ValueError(f"state {y.shape} does not match plan {plan.shape}")
    for k in range(plan.tau):
        y = step(y, plan, k, denoiser)
    return y


def repaint_sample(
    y_hat, tmap, grid: DdimGrid, schedule: NoiseSchedule, denoiser: Denoiser, seed: int = 0
) -> np.ndarray:
    """Multi-region RePaint baseline with one resampling pass per step (n = j = 1).

    The whole image walks the plain DDIM grid from level ``max(tmap)`` down.
    Before each evaluation, pixels whose own level is below the current one are
    re-noised from their known quantized state with the uniform forward
    transition; after it, pixels that are not yet active get their known state
    back.
    """
    levels = np.asarray(getattr(tmap, "values", tmap))
    known = np.asarray(y_hat, dtype=np.float64)
    if known.shape[-2:] != levels.shape:
        raise ValueError(f"state {known.shape} does not match map {levels.shape}")
    top = int(levels.max())
    rng = np.random.default_rng(seed)
    y = known.copy()
    for level in range(top, 0, -1):
        idx = int(grid.start_index(level))
        a, s = schedule.alphas[idx], schedule.sigmas[idx]
        for lower in np.unique(levels[levels < level]):
            j = int(grid.start_index(lower))
            ratio = a / schedule.alphas[j]
            extra = np.sqrt(max(s * s - (ratio * schedule.sigmas[j]) ** 2, 0.0))
            mask = np.broadcast_to(levels == lower, y.shape)
            noise = rng.uniform(-SQRT3, SQRT3, size=int(mask.sum()))
            y[mask] = ratio * known[mask] + extra * noise
        index_map = np.full(levels.shape, idx, dtype=np.int64)
        v = denoiser(y, index_map, schedule)
        if level == 1:
            return _ddim_update(y, v, a, s, None, None)
        nxt = int(grid.start_index(level - 1))
        y = _ddim_update(y, v, a, s, schedule.alphas[nxt], schedule.sigmas[nxt])
        waiting = np.broadcast_to(levels < level, y.shape)
        y[waiting] = known[waiting]
    raise AssertionError("unreachable")
