# %% [markdown]
# # Quantization as a diffusion state
#
# Universal quantization with a shared dither turns a clean latent into a
# noisy one whose error is exactly uniform. Pick the bin width from the noise
# schedule and the quantized value *is* a forward-diffusion state at that
# timestep, so a denoiser can pick up from there.

# %%
import numpy as np

from svdc.quantizer import quantize, reconstruct
from svdc.schedule import build_ddim_grid, build_plan, build_schedule, resample_trajectory

schedule = build_schedule("cosine", 1000)
grid = build_ddim_grid(50, schedule)
print("DDIM grid head:", grid.indices[:5], "... tail:", grid.indices[-3:])

# %% [markdown]
# A pixel at level ``t`` starts at the ``t``-th smallest grid index. Level 10
# is index 181.

# %%
idx = int(grid.start_index(10))
alpha, sigma = schedule.alphas[idx], schedule.sigmas[idx]
print(f"level 10 -> index {idx}, alpha={alpha:.4f}, sigma={sigma:.4f}")

rng = np.random.default_rng(0)
y0 = rng.normal(size=(1, 1, 200_000))
q = quantize(y0, np.full((1, 200_000), alpha), np.full((1, 200_000), sigma), seed=7)
err = (reconstruct(q) - alpha * y0).ravel()
half = np.sqrt(3) * sigma
print(f"error range [{err.min():.4f}, {err.max():.4f}] vs +-{half:.4f}")
hist, _ = np.histogram(err, bins=10, range=(-half, half))
print("histogram (flat means uniform):", hist)

# %% [markdown]
# ## Timestep resampling
#
# Different regions start at different levels but must finish together.
# Each pixel's path is stretched to ``tau = max(t)`` evenly spaced indices.

# %%
print("level 4 over 7 steps:", resample_trajectory(61, 7).tolist())
print("level 4 over 4 steps:", resample_trajectory(61, 4).tolist())

tmap = np.full((4, 6), 7)
tmap[:, :3] = 4
plan = build_plan(tmap, grid, schedule)
print("tau =", plan.tau)
for level, traj in plan.trajectories.items():
    print(f"  level {level}: {traj.tolist()}")
