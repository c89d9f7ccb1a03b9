"""DistgUnet: a U-shaped noise estimator built from disentangling blocks.

All feature maps inside the network are macro-pixel mosaics in torch layout
``[B, F, A*H, A*W]`` where row ``s*A + p`` / column ``t*A + q`` holds view
``(p, q)`` at pixel ``(s, t)``. The public :meth:`DistgUnet.forward` takes
SAI-grid tensors ``[B, C, A*H, A*W]`` (view ``(p, q)`` tiled at block
``(p, q)``) and converts on the way in and out.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import LFError
from .lightfield import lf_to_sai_grid

LEAK = 0.1
GROUPS = 8


@dataclass(frozen=True)
class DistgNetConfig:
    angular: int = 5
    base_channels: int = 32
    scales: int = 3
    blocks_per_scale: int = 2
    time_embed_dim: int = 64
    in_channels: int = 22
    out_channels: int = 3
    max_mult: int = 4

    def __post_init__(self):
        if self.angular < 1 or self.angular % 2 == 0:
            raise LFError(f"angular size must be odd, got {self.angular}")
        if self.scales < 1:
            raise LFError(f"scales must be >= 1, got {self.scales}")
        if self.in_channels <= 2 * self.out_channels:
            raise LFError("in_channels must cover noisy sample, image condition and encoding")
        if self.time_embed_dim % 2:
            raise LFError("time_embed_dim must be even")
        for ch in self.level_channels():
            if ch % GROUPS:
                raise LFError(f"channel width {ch} not divisible by {GROUPS} groups")

    @property
    def pe_dim(self) -> int:
        return self.in_channels - 2 * self.out_channels

    def level_channels(self) -> list[int]:
        return [self.base_channels * min(2**i, self.max_mult) for i in range(self.scales + 1)]

    def to_dict(self) -> dict:
        return asdict(self)


def sai_to_mpi(x: torch.Tensor, A: int) -> torch.Tensor:
    B, C, AH, AW = x.shape
    H, W = AH // A, AW // A
    return x.reshape(B, C, A, H, A, W).permute(0, 1, 3, 2, 5, 4).reshape(B, C, AH, AW)


def mpi_to_sai(x: torch.Tensor, A: int) -> torch.Tensor:
    B, C, AH, AW = x.shape
    H, W = AH // A, AW // A
    return x.reshape(B, C, H, A, W, A).permute(0, 1, 3, 2, 5, 4).reshape(B, C, AH, AW)


def macro_pad(x: torch.Tensor, A: int, rows: int, cols: int) -> torch.Tensor:
    """Replicate the border macro-pixels ``rows``/``cols`` times (edge clamp per view)."""
    if cols:
        x = torch.cat([x[..., :A].repeat(1, 1, 1, cols), x, x[..., -A:].repeat(1, 1, 1, cols)], dim=-1)
    if rows:
        x = torch.cat([x[..., :A, :].repeat(1, 1, rows, 1), x, x[..., -A:, :].repeat(1, 1, rows, 1)], dim=-2)
    return x


def _check_mpi(x: torch.Tensor, A: int) -> None:
    if x.shape[-1] % A or x.shape[-2] % A:
        raise LFError(f"macro-pixel extent {tuple(x.shape[-2:])} not divisible by angular size {A}")


class SpatialConv(nn.Module):
    """3x3 kernel dilated by ``A``: mixes neighbouring pixels of the same view."""

    def __init__(self, cin, cout, A):
        super().__init__()
        self.A = A
        self.conv = nn.Conv2d(cin, cout, 3, dilation=A)

    def forward(self, x):
        _check_mpi(x, self.A)
        return self.conv(macro_pad(x, self.A, 1, 1))


class AngularConv(nn.Module):
    """``A x A`` stride-``A`` kernel over each macro-pixel, broadcast back by nearest upsampling."""

    def __init__(self, cin, cout, A):
        super().__init__()
        self.A = A
        self.conv = nn.Conv2d(cin, cout, A, stride=A)

    def forward(self, x):
        _check_mpi(x, self.A)
        y = self.conv(x)
        return y.repeat_interleave(self.A, dim=-2).repeat_interleave(self.A, dim=-1)


class EpiConv(nn.Module):
    """``1 x A^2`` kernel with stride ``(1, A)`` on the horizontal EPI lattice.

    Each output mixes one angular row with ``A`` neighbouring pixels; results
    are upsampled by ``A`` along the angular axis. ``axis="vertical"`` applies
    the same construction to the transposed mosaic.
    """

    def __init__(self, cin, cout, A, axis="horizontal"):
        super().__init__()
        if axis not in ("horizontal", "vertical"):
            raise LFError(f"unknown EPI axis {axis!r}")
        self.A = A
        self.axis = axis
        self.conv = nn.Conv2d(cin, cout, (1, A * A), stride=(1, A))

    def forward(self, x):
        _check_mpi(x, self.A)
        A = self.A
        if self.axis == "vertical":
            x = x.transpose(-1, -2)
        # Same result as conv(macro_pad(x), stride=(1, A)); folding the angular
        # taps into channels is about twice as fast on CPU.
        B, C, R, AW = x.shape
        W = AW // A
        xf = x.reshape(B, C, R, W, A).permute(0, 1, 4, 2, 3).reshape(B, C * A, R, W)
        pad = (A - 1) // 2
        if pad:
            xf = F.pad(xf, (pad, pad, 0, 0), mode="replicate")
        w = self.conv.weight
        wf = w.reshape(w.shape[0], C, A, A).transpose(-1, -2).reshape(w.shape[0], C * A, 1, A)
        y = F.conv2d(xf, wf, self.conv.bias)
        y = y.repeat_interleave(A, dim=-1)
        if self.axis == "vertical":
            y = y.transpose(-1, -2)
        return y


def timestep_embedding(t, dim: int) -> torch.Tensor:
    """Sinusoidal embedding, sines first, frequencies geometric from 1 to 1/10000."""
    if dim < 2 or dim % 2:
        raise LFError(f"embedding dim must be even, got {dim}")
    scalar = not torch.is_tensor(t) and np.ndim(t) == 0
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if torch.any(t < 0):
        raise LFError("timestep must be non-negative")
    half = dim // 2
    if half > 1:
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / (half - 1))
    else:
        freqs = torch.ones(1, dtype=torch.float64)
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    return emb[0] if scalar else emb


class DistgBlock(nn.Module):
    def __init__(self, channels, A, temb_dim):
        super().__init__()
        self.norm = nn.GroupNorm(GROUPS, channels)
        spa, ang, epi = channels, max(channels // 4, 1), max(channels // 2, 1)
        self.spatial = SpatialConv(channels, spa, A)
        self.angular = AngularConv(channels, ang, A)
        self.epi_h = EpiConv(channels, epi, A, "horizontal")
        self.epi_v = EpiConv(channels, epi, A, "vertical")
        self.fuse = nn.Conv2d(spa + ang + 2 * epi, channels, 1)
        self.shift = nn.Linear(temb_dim, channels)
        nn.init.zeros_(self.fuse.weight)
        nn.init.zeros_(self.fuse.bias)

    def forward(self, x, temb):
        h = self.norm(x)
        feats = [F.leaky_relu(m(h), LEAK) for m in (self.spatial, self.angular, self.epi_h, self.epi_v)]
        y = self.fuse(torch.cat(feats, dim=1)) + self.shift(temb)[:, :, None, None]
        return x + F.leaky_relu(y, LEAK)


def view_pool(x: torch.Tensor, A: int) -> torch.Tensor:
    """Average 2x2 pixels within each view; angular layout is untouched."""
    B, C, AH, AW = x.shape
    H, W = AH // A, AW // A
    return x.reshape(B, C, H // 2, 2, A, W // 2, 2, A).mean(dim=(3, 6)).reshape(B, C, AH // 2, AW // 2)


def view_upsample(x: torch.Tensor, A: int) -> torch.Tensor:
    B, C, AH, AW = x.shape
    H, W = AH // A, AW // A
    x = x.reshape(B, C, H, 1, A, W, 1, A).expand(B, C, H, 2, A, W, 2, A)
    return x.reshape(B, C, AH * 2, AW * 2)


class DistgUnet(nn.Module):
    def __init__(self, config: DistgNetConfig):
        super().__init__()
        self.config = cfg = config
        A, td = cfg.angular, cfg.time_embed_dim
        chs = cfg.level_channels()
        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.LeakyReLU(LEAK), nn.Linear(td, td))
        self.in_conv = SpatialConv(cfg.in_channels, chs[0], A)

        def stage(ch):
            return nn.ModuleList(DistgBlock(ch, A, td) for _ in range(cfg.blocks_per_scale))

        self.enc = nn.ModuleList(stage(chs[i]) for i in range(cfg.scales))
        self.down = nn.ModuleList(nn.Conv2d(chs[i], chs[i + 1], 1) for i in range(cfg.scales))
        self.mid = stage(chs[-1])
        self.up = nn.ModuleList(nn.Conv2d(chs[i + 1] + chs[i], chs[i], 1) for i in range(cfg.scales))
        self.dec = nn.ModuleList(stage(chs[i]) for i in range(cfg.scales))
        self.out_norm = nn.GroupNorm(GROUPS, chs[0])
        self.out_conv = SpatialConv(chs[0], cfg.out_channels, A)
        nn.init.zeros_(self.out_conv.conv.weight)
        nn.init.zeros_(self.out_conv.conv.bias)
        # time-gated per-channel linear path from x_t and the warped views
        self.skip_gate = nn.Linear(td, 2 * cfg.out_channels)
        nn.init.zeros_(self.skip_gate.weight)
        nn.init.zeros_(self.skip_gate.bias)

    def forward(self, x_t: torch.Tensor, cond: torch.Tensor, t) -> torch.Tensor:
        """Noise estimate for SAI-grid ``x_t`` given SAI-grid condition ``cond``."""
        cfg = self.config
        A = cfg.angular
        if x_t.shape[-2:] != cond.shape[-2:] or x_t.shape[0] != cond.shape[0]:
            raise LFError(f"x_t {tuple(x_t.shape)} and condition {tuple(cond.shape)} disagree")
        if x_t.shape[1] + cond.shape[1] != cfg.in_channels or x_t.shape[1] != cfg.out_channels:
            raise LFError("channel counts do not match the network configuration")
        AH, AW = x_t.shape[-2:]
        step = 2**cfg.scales
        if AH % A or AW % A or (AH // A) % step or (AW // A) % step:
            raise LFError(f"spatial extent {AH // A}x{AW // A} not divisible by {step} (A={A})")
        t = torch.as_tensor(t).reshape(-1).expand(x_t.shape[0])
        temb = self.time_mlp(timestep_embedding(t, cfg.time_embed_dim).to(x_t.dtype))

        h = self.in_conv(sai_to_mpi(torch.cat([x_t, cond], dim=1), A))
        skips = []
        for blocks, down in zip(self.enc, self.down):
            for blk in blocks:
                h = blk(h, temb)
            skips.append(h)
            h = down(view_pool(h, A))
        for blk in self.mid:
            h = blk(h, temb)
        for i in reversed(range(cfg.scales)):
            h = self.up[i](torch.cat([view_upsample(h, A), skips[i]], dim=1))
            for blk in self.dec[i]:
                h = blk(h, temb)
        h = self.out_conv(F.leaky_relu(self.out_norm(h), LEAK))
        C = cfg.out_channels
        gate = self.skip_gate(temb)[:, :, None, None]
        return mpi_to_sai(h, A) + gate[:, :C] * x_t + gate[:, C:] * cond[:, :C]


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def condition_to_tensor(c: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """``[..., U, V, H, W, F]`` condition -> ``[B, F, U*H, V*W]`` SAI-grid tensor."""
    grid = lf_to_sai_grid(c)
    grid = grid.reshape((-1,) + grid.shape[-3:])
    return torch.from_numpy(np.ascontiguousarray(grid.transpose(0, 3, 1, 2))).to(dtype)


class NetDenoiser:
    """Adapts a :class:`DistgUnet` to the numpy sampler interface.

    Called as ``denoiser(x_t, t, cond)`` with ``x_t`` in SAI-grid layout
    ``[..., U*H, V*W, C]`` and ``cond`` a condition signal
    ``[..., U, V, H, W, C + dim]``.
    """

    def __init__(self, model: DistgUnet, dtype=torch.float32):
        self.model = model.eval()
        self.dtype = dtype
        self._cond_src = None
        self._cond = None

    def _condition(self, c):
        if self._cond_src is not c:
            U, V = c.shape[-5], c.shape[-4]
            A = self.model.config.angular
            if (U, V) != (A, A):
                raise LFError(f"condition angular size {U}x{V} does not match network A={A}")
            self._cond_src = c
            self._cond = condition_to_tensor(c, self.dtype)
        return self._cond

    @torch.no_grad()
    def __call__(self, x_t, t, c):
        x_t = np.asarray(x_t)
        lead = x_t.shape[:-3]
        xb = x_t.reshape((-1,) + x_t.shape[-3:]).transpose(0, 3, 1, 2)
        xb = torch.from_numpy(np.ascontiguousarray(xb)).to(self.dtype)
        out = self.model(xb, self._condition(c), int(t))
        out = out.to(torch.float64).numpy().transpose(0, 2, 3, 1)
        return out.reshape(lead + out.shape[1:])
