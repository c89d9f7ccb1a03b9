"""Fidelity metrics, EPI-slope estimation and shift-and-add refocusing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateRegionError, LFError
from .lightfield import central_index, check_lightfield, lf_to_sai_grid, sample_clamped

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LFError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise LFError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    tmp = sliding_window_view(img, n, axis=0) @ g
    return sliding_window_view(tmp, n, axis=1) @ g


def _ssim_2d(a, b, data_range):
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a**2
    sbb = _filter_valid(b * b, g) - mu_b**2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, k1=0.01, k2=0.03).

    ``[H, W, C]`` inputs are scored per channel and averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LFError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise LFError(f"expected [H, W] or [H, W, C], got {a.shape}")
    if a.shape[0] < SSIM_WIN or a.shape[1] < SSIM_WIN:
        raise LFError(f"image {a.shape[:2]} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    if a.ndim == 2:
        return _ssim_2d(a, b, data_range)
    return float(np.mean([_ssim_2d(a[..., c], b[..., c], data_range) for c in range(a.shape[2])]))


def per_view_psnr(lf, ref, peak: float = 1.0) -> np.ndarray:
    U, V = check_lightfield(lf)[:2]
    if np.shape(lf) != np.shape(ref):
        raise LFError(f"shape mismatch {np.shape(lf)} vs {np.shape(ref)}")
    return np.array([[psnr(lf[p, q], ref[p, q], peak) for q in range(V)] for p in range(U)])


def lf_metrics(lf, ref, peak: float = 1.0) -> dict:
    """Mosaic PSNR/SSIM plus the per-view PSNR grid and its mean."""
    if np.shape(lf) != np.shape(ref):
        raise LFError(f"shape mismatch {np.shape(lf)} vs {np.shape(ref)}")
    grid = per_view_psnr(lf, ref, peak)
    return {
        "psnr": psnr(lf, ref, peak),
        "ssim": ssim(lf_to_sai_grid(lf), lf_to_sai_grid(ref), peak),
        "per_view_psnr": grid.tolist(),
        "mean_view_psnr": float(np.mean(grid)),
    }


def _ncc(patch: np.ndarray, windows: np.ndarray) -> np.ndarray:
    p = patch - patch.mean()
    w = windows - windows.mean(axis=(-2, -1), keepdims=True)
    num = np.einsum("...ij,ij->...", w, p)
    den = np.sqrt(np.einsum("...ij,...ij->...", w, w) * np.sum(p * p))
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), -1.0)


def _parabolic(cm: float, c0: float, cp: float) -> float:
    denom = cm - 2 * c0 + cp
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (cm - cp) / denom, -0.5, 0.5))


def view_displacements(lf, region=None, max_slope: float = 3.0) -> dict:
    """Sub-pixel displacement of each view relative to the central view.

    Returns ``{(p, q): (ds, dt)}`` where view ``(p, q)`` best matches the
    central ``region`` when read at an offset ``(ds, dt)``.
    """
    U, V, H, W, _ = check_lightfield(lf)
    pc, qc = central_index(U, V)
    gray = np.asarray(lf, dtype=np.float64).mean(axis=-1)
    y0, y1, x0, x1 = region if region is not None else (0, H, 0, W)
    if not (0 <= y0 < y1 <= H and 0 <= x0 < x1 <= W):
        raise LFError(f"region {region} outside {H}x{W}")
    patch = gray[pc, qc, y0:y1, x0:x1]
    if patch.std() < 1e-4:
        raise DegenerateRegionError("region is textureless")
    K = int(math.ceil(max_slope * max(pc, qc))) + 1
    h, w = y1 - y0, x1 - x0
    out = {}
    for p in range(U):
        for q in range(V):
            if p == pc and q == qc:
                continue
            padded = np.pad(gray[p, q], K, mode="edge")
            sub = padded[y0:y1 + 2 * K, x0:x1 + 2 * K]
            scores = _ncc(patch, sliding_window_view(sub, (h, w)))
            iy, ix = np.unravel_index(np.argmax(scores), scores.shape)
            dy = float(iy)
            dx = float(ix)
            if 0 < iy < scores.shape[0] - 1:
                dy += _parabolic(scores[iy - 1, ix], scores[iy, ix], scores[iy + 1, ix])
            if 0 < ix < scores.shape[1] - 1:
                dx += _parabolic(scores[iy, ix - 1], scores[iy, ix], scores[iy, ix + 1])
            out[(p, q)] = (dy - K, dx - K)
    return out


def estimate_epi_slope(lf, region=None, max_slope: float = 3.0) -> float:
    """Least-squares disparity (pixels per view) of a region of ``lf``.

    ``region`` is ``(y0, y1, x0, x1)`` in central-view pixels and should be
    free of occlusion boundaries. Raises :class:`DegenerateRegionError` for a
    flat region.
    """
    U, V = check_lightfield(lf)[:2]
    pc, qc = central_index(U, V)
    if U == 1 and V == 1:
        raise DegenerateRegionError("a single view carries no disparity")
    disp = view_displacements(lf, region, max_slope)
    num = den = 0.0
    for (p, q), (ds, dt) in disp.items():
        a, b = p - pc, q - qc
        num += a * ds + b * dt
        den += a * a + b * b
    return num / den


@dataclass(frozen=True)
class RefocusParams:
    slope: float
    interp: str = "bilinear"

    def __post_init__(self):
        if not math.isfinite(self.slope):
            raise LFError("refocus slope must be finite")


def refocus(lf, params: RefocusParams | float) -> np.ndarray:
    """Shift-and-add: mean over views after aligning the plane of disparity ``slope``."""
    if not isinstance(params, RefocusParams):
        params = RefocusParams(float(params))
    U, V, H, W, C = check_lightfield(lf)
    pc, qc = central_index(U, V)
    ss, tt = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    acc = np.zeros((H, W, C))
    for p in range(U):
        for q in range(V):
            acc += sample_clamped(lf[p, q], ss + (p - pc) * params.slope, tt + (q - qc) * params.slope, params.interp)
    return acc / (U * V)
