# %% [markdown]
# # A small rate-distortion sweep
#
# Constant maps trade rate for distortion; the timestep-conditioned entropy
# model is compared against one that ignores the map.

# %%
import numpy as np

from svdc.codec import CodecConfig
from svdc.corpus import make_corpus
from svdc.evaluation import constant_maps, eval_rd

images = make_corpus(6, "gaussian", 32, 32, seed=0)
records = eval_rd(images, constant_maps([2, 5, 10, 20, 40], 32, 32), CodecConfig(),
                  modes=[("cond", "resampled"), ("uncond", "resampled")])

# %%
print(f"{'map':>8} {'mode':>7} {'bpp':>7} {'PSNR':>7}")
for mid in dict.fromkeys(r.map_id for r in records):
    for pred in ("cond", "uncond"):
        rows = [r for r in records if r.map_id == mid and r.predictor == pred]
        print(f"{mid:>8} {pred:>7} {np.mean([r.total_bpp for r in rows]):7.3f} "
              f"{np.mean([r.psnr for r in rows]):7.2f}")

# %% [markdown]
# PSNR only depends on the level, since the entropy model changes the bits
# and not the reconstruction. The conditioned model's advantage grows with
# the level, because the map tells it how much the signal has been scaled
# down.
