"""Light-field data model and exact layout conversions.

Arrays follow the ``[U, V, H, W, C]`` convention (angular rows, angular
columns, spatial rows, spatial columns, channels), optionally with leading
batch axes. Angular indices run ``0..U-1`` / ``0..V-1`` and the central view
sits at ``((U-1)/2, (V-1)/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LFError

DEFAULT_PE_DIM = 16


def check_lightfield(lf: np.ndarray) -> tuple[int, int, int, int, int]:
    """Validate a light field and return its trailing ``(U, V, H, W, C)``."""
    lf = np.asarray(lf)
    if lf.ndim < 5:
        raise LFError(f"light field needs at least 5 axes, got shape {lf.shape}")
    U, V, H, W, C = lf.shape[-5:]
    if min(U, V, H, W, C) < 1:
        raise LFError(f"empty light field axis in shape {lf.shape}")
    return U, V, H, W, C


def central_index(U: int, V: int) -> tuple[int, int]:
    if U % 2 == 0 or V % 2 == 0:
        raise LFError(f"central view needs odd angular size, got {U}x{V}")
    return (U - 1) // 2, (V - 1) // 2


def central_view(lf: np.ndarray) -> np.ndarray:
    U, V = check_lightfield(lf)[:2]
    pc, qc = central_index(U, V)
    return lf[..., pc, qc, :, :, :]


def _trailing_perm(ndim: int, order: tuple[int, ...]) -> tuple[int, ...]:
    lead = ndim - len(order)
    return tuple(range(lead)) + tuple(lead + i for i in order)


@dataclass(frozen=True)
class MacroPixelImage:
    """Macro-pixel mosaic ``[..., U*H, V*W, C]`` plus the angular size.

    Element ``[s*U + p, t*V + q, c]`` holds light-field sample ``[p, q, s, t, c]``.
    """

    data: np.ndarray
    U: int
    V: int


def sai_to_macropixel(lf: np.ndarray) -> MacroPixelImage:
    lf = np.asarray(lf)
    U, V, H, W, C = check_lightfield(lf)
    lead = lf.shape[:-5]
    # [..., H, U, W, V, C]
    data = lf.transpose(_trailing_perm(lf.ndim, (2, 0, 3, 1, 4)))
    return MacroPixelImage(data.reshape(lead + (H * U, W * V, C)), U, V)


def macropixel_to_sai(mp: MacroPixelImage) -> np.ndarray:
    """Invert :func:`sai_to_macropixel`, returning ``[..., U, V, H, W, C]``."""
    data = np.asarray(mp.data)
    U, V = int(mp.U), int(mp.V)
    if data.ndim < 3 or U < 1 or V < 1:
        raise LFError(f"bad macro-pixel image shape {data.shape} for angular {U}x{V}")
    HU, WV, C = data.shape[-3:]
    if HU % U or WV % V:
        raise LFError(f"angular size {U}x{V} does not divide mosaic {HU}x{WV}")
    H, W = HU // U, WV // V
    lead = data.shape[:-3]
    x = data.reshape(lead + (H, U, W, V, C))
    return x.transpose(_trailing_perm(x.ndim, (1, 3, 0, 2, 4)))


def lf_to_sai_grid(lf: np.ndarray) -> np.ndarray:
    """Tile the views into ``[..., U*H, V*W, C]`` with view ``(p, q)`` at block ``(p, q)``."""
    lf = np.asarray(lf)
    U, V, H, W, C = check_lightfield(lf)
    lead = lf.shape[:-5]
    x = lf.transpose(_trailing_perm(lf.ndim, (0, 2, 1, 3, 4)))
    return x.reshape(lead + (U * H, V * W, C))


def sai_grid_to_lf(grid: np.ndarray, U: int, V: int) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.ndim < 3:
        raise LFError(f"SAI grid needs [.., UH, VW, C], got {grid.shape}")
    UH, VW, C = grid.shape[-3:]
    if U < 1 or V < 1 or UH % U or VW % V:
        raise LFError(f"angular size {U}x{V} does not divide SAI grid {UH}x{VW}")
    H, W = UH // U, VW // V
    lead = grid.shape[:-3]
    x = grid.reshape(lead + (U, H, V, W, C))
    return x.transpose(_trailing_perm(x.ndim, (0, 2, 1, 3, 4)))


def extract_epi(lf: np.ndarray, axis: str, fixed_angular: int, fixed_spatial: int) -> np.ndarray:
    """Slice an epipolar-plane image.

    ``axis="horizontal"`` fixes angular row ``p`` and spatial row ``s`` and
    returns ``[V, W, C]``; ``axis="vertical"`` fixes angular column ``q`` and
    spatial column ``t`` and returns ``[U, H, C]``.
    """
    U, V, H, W, _ = check_lightfield(lf)
    if axis == "horizontal":
        if not (0 <= fixed_angular < U and 0 <= fixed_spatial < H):
            raise LFError(f"EPI index ({fixed_angular}, {fixed_spatial}) out of range for U={U}, H={H}")
        return lf[..., fixed_angular, :, fixed_spatial, :, :]
    if axis == "vertical":
        if not (0 <= fixed_angular < V and 0 <= fixed_spatial < W):
            raise LFError(f"EPI index ({fixed_angular}, {fixed_spatial}) out of range for V={V}, W={W}")
        return lf[..., :, fixed_angular, :, fixed_spatial, :]
    raise LFError(f"unknown EPI axis {axis!r}")


def rescale_inverse_depth(d_norm: np.ndarray, d_min: float, d_max: float, tol: float = 1e-6) -> np.ndarray:
    """Affinely map a normalized inverse depth in [0, 1] onto ``[d_min, d_max]``."""
    if not d_min < d_max:
        raise LFError(f"need d_min < d_max, got [{d_min}, {d_max}]")
    d_norm = np.asarray(d_norm, dtype=np.float64)
    if not np.all(np.isfinite(d_norm)):
        raise LFError("inverse depth has non-finite values")
    if d_norm.size and (d_norm.min() < -tol or d_norm.max() > 1 + tol):
        raise LFError(f"inverse depth not normalized: range [{d_norm.min()}, {d_norm.max()}]")
    d_norm = np.clip(d_norm, 0.0, 1.0)
    return d_min + d_norm * (d_max - d_min)


def sample_clamped(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, interp: str = "bilinear") -> np.ndarray:
    """Sample ``img[H, W, ...]`` at real coordinates with edge clamping.

    Integer coordinates return stored values bit-exactly for both kernels.
    """
    img = np.asarray(img)
    H, W = img.shape[:2]
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0, H - 1)
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0, W - 1)
    if interp == "nearest":
        yi = np.minimum(np.floor(ys + 0.5).astype(np.intp), H - 1)
        xi = np.minimum(np.floor(xs + 0.5).astype(np.intp), W - 1)
        return img[yi, xi]
    if interp != "bilinear":
        raise LFError(f"unknown interpolation {interp!r}")
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = ys - y0
    wx = xs - x0
    extra = (...,) + (None,) * (img.ndim - 2)
    wy, wx = wy[extra], wx[extra]
    src = img.astype(np.float64, copy=False)
    top = (1 - wx) * src[y0, x0] + wx * src[y0, x1]
    bot = (1 - wx) * src[y1, x0] + wx * src[y1, x1]
    out = (1 - wy) * top + wy * bot
    return out.astype(np.result_type(img.dtype, np.float32), copy=False)


def warp_central_view(r: np.ndarray, d: np.ndarray, U: int, V: int, interp: str = "bilinear") -> np.ndarray:
    """Backward-warp the central image to every view of a ``U x V`` grid.

    View ``(p, q)`` at pixel ``(s, t)`` reads ``r`` at
    ``(s + (pc - p) * d[s, t], t + (qc - q) * d[s, t])``; the disparity of the
    central view is evaluated at the target pixel and no occlusion reasoning
    is done.
    """
    r = np.asarray(r)
    if r.ndim == 2:
        r = r[..., None]
    if r.ndim != 3:
        raise LFError(f"image must be [H, W, C], got {r.shape}")
    H, W, C = r.shape
    pc, qc = central_index(U, V)
    d = np.broadcast_to(np.asarray(d, dtype=np.float64), (H, W))
    if not np.all(np.isfinite(d)):
        raise LFError("disparity has non-finite values")
    ss, tt = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    out = np.empty((U, V, H, W, C), dtype=np.result_type(r.dtype, np.float32))
    for p in range(U):
        for q in range(V):
            if p == pc and q == qc:
                out[p, q] = r
            else:
                out[p, q] = sample_clamped(r, ss + (pc - p) * d, tt + (qc - q) * d, interp)
    return out


def positional_encoding(U: int, V: int, dim: int = DEFAULT_PE_DIM) -> np.ndarray:
    """View-level encoding ``[U, V, dim]``.

    Channel ``2i`` is ``sin(p / 10000**(2i/dim)) + sin(q / 10000**(2i/dim))``
    and channel ``2i+1`` the cosine analogue with exponent ``(2i+1)/dim``.
    Being a sum over ``p`` and ``q``, the encoding is symmetric under ``p <-> q``.
    """
    if dim < 2 or dim % 2:
        raise LFError(f"encoding dimension must be even and >= 2, got {dim}")
    if U < 1 or V < 1:
        raise LFError(f"bad angular size {U}x{V}")
    p = np.arange(U, dtype=np.float64)[:, None, None]
    q = np.arange(V, dtype=np.float64)[None, :, None]
    i = np.arange(dim // 2, dtype=np.float64)
    even_freq = 1.0 / 10000.0 ** (2 * i / dim)
    odd_freq = 1.0 / 10000.0 ** ((2 * i + 1) / dim)
    pe = np.empty((U, V, dim), dtype=np.float64)
    pe[..., 0::2] = np.sin(p * even_freq) + np.sin(q * even_freq)
    pe[..., 1::2] = np.cos(p * odd_freq) + np.cos(q * odd_freq)
    return pe


def build_condition(
    r: np.ndarray,
    d: np.ndarray,
    U: int,
    V: int,
    dim: int = DEFAULT_PE_DIM,
    interp: str = "bilinear",
) -> np.ndarray:
    """Warped views concatenated with the view encoding: ``[U, V, H, W, C + dim]``."""
    warped = warp_central_view(r, d, U, V, interp)
    pe = positional_encoding(U, V, dim).astype(warped.dtype)
    H, W = warped.shape[2:4]
    pe = np.broadcast_to(pe[:, :, None, None, :], (U, V, H, W, dim))
    return np.concatenate([warped, pe], axis=-1)
