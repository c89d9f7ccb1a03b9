"""Light-field synthesis from a single image and a normalized inverse-depth map."""
from __future__ import annotations

import numpy as np

from .diffusion import NoiseSchedule, SamplerConfig, ddim_sample, ddpm_sample
from .errors import LFError
from .lightfield import build_condition, central_index, rescale_inverse_depth
from .net import DistgUnet, NetDenoiser


def make_condition(center, d_norm, disparity_range, U: int, V: int, dim: int, center_only: bool = False):
    """Condition for sampling.

    With ``center_only`` the image stays in the central view and every other
    channel (other views' warps and the encoding) is zero.
    """
    center = np.asarray(center, dtype=np.float64)
    if center.shape[:2] != np.shape(d_norm):
        raise LFError(f"image {center.shape[:2]} and depth {np.shape(d_norm)} differ in size")
    if center_only:
        c = np.zeros((U, V, *center.shape[:2], center.shape[-1] + dim))
        pc, qc = central_index(U, V)
        c[pc, qc, ..., :center.shape[-1]] = center
        return c
    d = rescale_inverse_depth(d_norm, *disparity_range)
    return build_condition(center, d, U, V, dim)


def synthesize(model: DistgUnet, center, d_norm, disparity_range, cfg: SamplerConfig,
               sched: NoiseSchedule, center_only: bool = False) -> np.ndarray:
    """Sample a ``[A, A, H, W, C]`` light field whose central view is conditioned on ``center``."""
    mc = model.config
    center = np.asarray(center, dtype=np.float64)
    if center.ndim != 3 or center.shape[-1] != mc.out_channels:
        raise LFError(f"image must be [H, W, {mc.out_channels}], got {center.shape}")
    H, W = center.shape[:2]
    step = 2**mc.scales
    if H % step or W % step:
        raise LFError(f"image size {H}x{W} must be divisible by {step} for this network")
    A = mc.angular
    c = make_condition(center, d_norm, disparity_range, A, A, mc.pe_dim, center_only)
    shape = (A, A, H, W, mc.out_channels)
    den = NetDenoiser(model)
    if cfg.kind == "ddpm":
        return ddpm_sample(den, c, sched, shape, seed=cfg.seed)
    return ddim_sample(den, c, cfg, sched, shape)
