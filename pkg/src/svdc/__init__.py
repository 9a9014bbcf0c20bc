"""Region-adaptive diffusion dequantization codec."""

from .codec import CodecConfig, StreamError, bpp_map, decode, encode
from .diffusion import GaussianPrior, MMSEDenoiser, repaint_sample, sample
from .entropy import PredictorConfig
from .roi import TimestepMap, generate_training_map, read_map, write_map
from .schedule import build_ddim_grid, build_plan, build_schedule, resample_trajectory

__version__ = "0.1.0"

__all__ = [
    "CodecConfig", "StreamError", "bpp_map", "decode", "encode", "GaussianPrior", "MMSEDenoiser", "repaint_sample",
    "sample", "PredictorConfig", "TimestepMap", "generate_training_map", "read_map", "write_map", "build_ddim_grid",
    "build_plan", "build_schedule", "resample_trajectory",
]
