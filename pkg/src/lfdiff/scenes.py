"""Procedural layered scenes with exact ground-truth disparity.

Every layer is a texture raster plus a binary mask raster, both in
central-view coordinates, moving with one constant disparity. Views are
rendered by compositing layers back to front, each sampled with the same
clamped sampler that :func:`lfdiff.lightfield.warp_central_view` uses, so a
single-layer scene is reproduced exactly by warping its central view.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import lfio
from .errors import LFError
from .lightfield import central_index, check_lightfield, sample_clamped

TEXTURES = ("grating", "blobs", "checker", "noise")
MASKS = ("full", "rect", "disk")


@dataclass(frozen=True)
class Layer:
    texture: str
    texture_seed: int
    disparity: float
    mask: str = "full"
    mask_seed: int = 0


@dataclass(frozen=True)
class SceneSpec:
    layers: tuple[Layer, ...]
    U: int = 5
    V: int = 5
    H: int = 32
    W: int = 32
    disparity_range: tuple[float, float] = (-2.0, 2.0)
    channels: int = 3

    def validate(self) -> None:
        if not self.layers:
            raise LFError("scene needs at least one layer")
        central_index(self.U, self.V)
        lo, hi = self.disparity_range
        if not lo < hi:
            raise LFError(f"bad disparity range {self.disparity_range}")
        if self.layers[0].mask != "full":
            raise LFError("the back layer must cover the frame (mask 'full')")
        prev = -np.inf
        for layer in self.layers:
            if layer.texture not in TEXTURES or layer.mask not in MASKS:
                raise LFError(f"unknown texture/mask in {layer}")
            if not lo <= layer.disparity <= hi:
                raise LFError(f"layer disparity {layer.disparity} outside {self.disparity_range}")
            if layer.disparity < prev:
                raise LFError("layers must be ordered back to front (non-decreasing disparity)")
            prev = layer.disparity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(layer) for layer in self.layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["layers"] = tuple(Layer(**layer) for layer in d["layers"])
        d["disparity_range"] = tuple(d["disparity_range"])
        return cls(**d)


def _seed_words(seed) -> list[int]:
    return [int(v) for v in np.atleast_1d(seed)]


def _colors(rng, n, channels):
    return rng.uniform(0.05, 0.95, size=(n, channels))


def make_texture(kind: str, seed: int, H: int, W: int, channels: int = 3) -> np.ndarray:
    rng = np.random.default_rng(_seed_words(seed) + [7])
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    if kind == "grating":
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.08, 0.3)
        phase = rng.uniform(0, 2 * np.pi)
        a, b = _colors(rng, 2, channels)
        w = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        return w[..., None] * a + (1 - w[..., None]) * b
    if kind == "blobs":
        img = np.broadcast_to(_colors(rng, 1, channels)[0], (H, W, channels)).copy()
        n = max(4, (H * W) // 24)
        for _ in range(n):
            cy, cx = rng.uniform(-2, H + 2), rng.uniform(-2, W + 2)
            sig = rng.uniform(0.8, 3.5)
            g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))[..., None]
            img = g * _colors(rng, 1, channels)[0] + (1 - g) * img
        return img
    if kind == "checker":
        size = int(rng.integers(2, 6))
        oy, ox = rng.integers(0, size, size=2)
        a, b = _colors(rng, 2, channels)
        sel = (((yy + oy) // size + (xx + ox) // size) % 2)[..., None]
        return sel * a + (1 - sel) * b
    if kind == "noise":
        return rng.uniform(0.0, 1.0, size=(H, W, channels))
    raise LFError(f"unknown texture {kind!r}")


def make_mask(kind: str, seed: int, H: int, W: int) -> np.ndarray:
    if kind == "full":
        return np.ones((H, W))
    rng = np.random.default_rng(_seed_words(seed) + [11])
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    if kind == "rect":
        h = int(rng.integers(max(2, H // 4), max(3, (3 * H) // 4) + 1))
        w = int(rng.integers(max(2, W // 4), max(3, (3 * W) // 4) + 1))
        y0 = int(rng.integers(0, H - h + 1))
        x0 = int(rng.integers(0, W - w + 1))
        return ((yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)).astype(np.float64)
    if kind == "disk":
        r = rng.uniform(min(H, W) / 6, min(H, W) / 2.5)
        cy, cx = rng.uniform(r / 2, H - r / 2), rng.uniform(r / 2, W - r / 2)
        return (((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r).astype(np.float64)
    raise LFError(f"unknown mask {kind!r}")


def layer_rasters(spec: SceneSpec, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray, float]]:
    out = []
    for layer in spec.layers:
        tex = make_texture(layer.texture, (int(seed), layer.texture_seed), spec.H, spec.W, spec.channels)
        mask = make_mask(layer.mask, (int(seed), layer.mask_seed), spec.H, spec.W)
        out.append((tex, mask, float(layer.disparity)))
    return out


def generate_scene(spec: SceneSpec, seed: int = 0, interp: str = "bilinear"):
    """Render ``(light_field, central_view, gt_disparity)`` for ``spec``.

    Layer ``k`` seen from view ``(p, q)`` is its rasters sampled at
    ``(s + (pc - p) * d_k, t + (qc - q) * d_k)``.
    """
    spec.validate()
    U, V, H, W, C = spec.U, spec.V, spec.H, spec.W, spec.channels
    pc, qc = central_index(U, V)
    layers = layer_rasters(spec, seed)
    ss, tt = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    lf = np.zeros((U, V, H, W, C))
    for p in range(U):
        for q in range(V):
            view = np.zeros((H, W, C))
            for tex, mask, d in layers:
                ys, xs = ss + (pc - p) * d, tt + (qc - q) * d
                t_img = sample_clamped(tex, ys, xs, interp)
                m = sample_clamped(mask, ys, xs, interp)[..., None]
                view = m * t_img + (1 - m) * view
            lf[p, q] = view
    disp = np.zeros((H, W))
    for _, mask, d in layers:
        disp = np.where(mask > 0.5, d, disp)
    return lf, lf[pc, qc].copy(), disp


def disocclusion_set(spec: SceneSpec, seed: int = 0) -> np.ndarray:
    """Pixels ``[U, V, H, W]`` where central-view warping with the GT map must fail.

    Valid for two-layer scenes at integer disparities: a pixel is predicted
    correctly exactly when the warp picks the same layer, at the same
    source position, as the renderer does.
    """
    if len(spec.layers) != 2:
        raise LFError("disocclusion set is defined for two-layer scenes")
    (_, _, d_b), (_, front, d_f) = layer_rasters(spec, seed)
    if d_b != int(d_b) or d_f != int(d_f):
        raise LFError("disocclusion set needs integer disparities")
    U, V, H, W = spec.U, spec.V, spec.H, spec.W
    pc, qc = central_index(U, V)
    fr = front > 0.5
    ss, tt = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")

    def src(op, oq, d):
        return np.clip(ss + op * int(d), 0, H - 1), np.clip(tt + oq * int(d), 0, W - 1)

    out = np.zeros((U, V, H, W), dtype=bool)
    for p in range(U):
        for q in range(V):
            op, oq = pc - p, qc - q
            yf, xf = src(op, oq, d_f)
            yb, xb = src(op, oq, d_b)
            front_seen = fr[yf, xf]
            back_src_is_front = fr[yb, xb]
            # clamping can make both layers read the same source pixel
            same = (yf == yb) & (xf == xb)
            agree = (fr & (front_seen | same)) | (~fr & ((~front_seen & ~back_src_is_front) | same))
            out[p, q] = ~agree
    return out


def random_scene_spec(
    rng: np.random.Generator,
    U: int = 5,
    V: int = 5,
    H: int = 32,
    W: int = 32,
    disparity_range=(-2.0, 2.0),
    max_layers: int = 3,
) -> SceneSpec:
    n = int(rng.integers(1, max_layers + 1))
    lo, hi = disparity_range
    disps = np.sort(rng.uniform(lo, hi, size=n))
    layers = []
    for k, d in enumerate(disps):
        layers.append(Layer(
            texture=str(rng.choice(TEXTURES)),
            texture_seed=int(rng.integers(0, 2**31)),
            disparity=float(d),
            mask="full" if k == 0 else str(rng.choice(MASKS[1:])),
            mask_seed=int(rng.integers(0, 2**31)),
        ))
    return SceneSpec(tuple(layers), U, V, H, W, (float(lo), float(hi)))


@dataclass
class TrainingPatch:
    lf_patch: np.ndarray
    center: np.ndarray
    gt_disparity: np.ndarray
    origin: tuple[int, int] = (0, 0)


def crop_patches(lf, disparity, patch: int = 32, stride: int | None = None, seed: int = 0, jitter: int = 0):
    """Grid crops (optionally jittered) sharing windows between the LF and its disparity."""
    U, V, H, W, _ = check_lightfield(lf)
    if patch < 1 or patch > min(H, W):
        raise LFError(f"patch {patch} larger than frame {H}x{W}")
    stride = stride or patch
    rng = np.random.default_rng(seed)
    pc, qc = central_index(U, V)
    out = []
    for y in range(0, H - patch + 1, stride):
        for x in range(0, W - patch + 1, stride):
            if jitter:
                y = int(np.clip(y + rng.integers(-jitter, jitter + 1), 0, H - patch))
                x = int(np.clip(x + rng.integers(-jitter, jitter + 1), 0, W - patch))
            win = (slice(y, y + patch), slice(x, x + patch))
            lf_p = lf[:, :, win[0], win[1], :]
            out.append(TrainingPatch(lf_p, lf_p[pc, qc], disparity[win], (y, x)))
    return out


def ingest_depth(path) -> np.ndarray:
    """Load an inverse-depth map and min-max normalize it to [0, 1].

    Accepts a raw ``disparity.f32`` (shape from the ``meta.json`` beside it)
    or a PNG; multi-channel PNGs use their first channel. Constant maps
    normalize to 0.5.
    """
    path = Path(path)
    if not path.exists():
        raise LFError(f"depth file {path} does not exist")
    if path.suffix.lower() == ".png":
        d = lfio.read_png(path)[..., 0]
    else:
        d = lfio.read_disparity(path)
    if not np.all(np.isfinite(d)):
        raise LFError(f"depth map {path} has non-finite values")
    return normalize_depth(d)


def normalize_depth(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    lo, hi = d.min(), d.max()
    if hi - lo <= 0:
        return np.full(d.shape, 0.5)
    return (d - lo) / (hi - lo)


def box_downsample(lf: np.ndarray, factor: int) -> np.ndarray:
    U, V, H, W, C = check_lightfield(lf)
    if H % factor or W % factor:
        raise LFError(f"spatial size {H}x{W} not divisible by {factor}")
    return lf.reshape(U, V, H // factor, factor, W // factor, factor, C).mean(axis=(3, 5))


def export_sr_pairs(lf_list, factor: int, out_dir, provenance=None, bit_depth: int = 16) -> dict:
    """Write (low-res, high-res) light-field pairs plus ``sr_manifest.json``.

    ``provenance`` is an optional per-pair list of dicts (sampler seed,
    disparity range, ...) copied into the manifest.
    """
    if factor not in (2, 4):
        raise LFError(f"factor must be 2 or 4, got {factor}")
    lf_list = list(lf_list)
    for lf in lf_list:
        _, _, H, W, _ = check_lightfield(lf)
        if H % factor or W % factor:
            raise LFError(f"spatial size {H}x{W} not divisible by {factor}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = list(provenance) if provenance is not None else [{} for _ in lf_list]
    pairs = []
    for i, (lf, prov) in enumerate(zip(lf_list, provenance)):
        name = f"pair_{i:05d}"
        lfio.write_lightfield(out_dir / name / "hr", lf, bit_depth)
        lfio.write_lightfield(out_dir / name / "lr", box_downsample(lf, factor), bit_depth)
        pairs.append({"id": name, "hr": f"{name}/hr", "lr": f"{name}/lr", "provenance": prov})
    manifest = {"factor": factor, "count": len(pairs), "pairs": pairs}
    lfio.write_json_atomic(out_dir / "sr_manifest.json", manifest)
    return manifest


def manifest_digest(manifest: dict) -> str:

    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
