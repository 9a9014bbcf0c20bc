# %% [markdown]
# # Training the tiny denoiser
#
# A patch MLP learns v-prediction under uniform noise with random timestep
# maps. On Gaussian data the analytic MMSE denoiser is the target to beat.

# %%
import numpy as np

from svdc.codec import CodecConfig, decode_detailed, encode
from svdc.corpus import make_corpus
from svdc.roi import MapGenConfig, TimestepMap
from svdc.schedule import build_ddim_grid, build_schedule
from svdc.tiny import TrainConfig, train_tiny_denoiser

schedule = build_schedule()
grid = build_ddim_grid(50, schedule)
train = [(x - x.mean()) / x.std() for x in make_corpus(16, "markov", 16, 16, seed=1)]
cfg = TrainConfig(steps=1500, batch_images=2, patch_size=3, hidden=(16, 16), seed=0)
model, losses = train_tiny_denoiser(train, MapGenConfig(), schedule, grid, cfg)
print(f"loss: first 50 steps {losses[:50].mean():.3f}, last 50 steps {losses[-50:].mean():.3f} "
      f"(zero predictor: 1.0)")

# %%
test = make_corpus(4, "markov", 32, 32, seed=99)
for level in (5, 20):
    mse = {"mmse": [], "tiny": []}
    for x in test:
        stream = encode(x, TimestepMap.constant(level, 32, 32, 50), CodecConfig())
        mse["mmse"].append(np.mean((decode_detailed(stream).image - x) ** 2))
        mse["tiny"].append(np.mean((decode_detailed(stream, model).image - x) ** 2))
    print(f"level {level}: MSE gaussian-MMSE {np.mean(mse['mmse']):.5f}, tiny {np.mean(mse['tiny']):.5f}")
