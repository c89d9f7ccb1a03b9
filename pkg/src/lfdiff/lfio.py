"""Light-field directory format.

A light field lives in a directory holding ``view_{p}_{q}.png`` for every
view (8- or 16-bit), a ``meta.json`` with
``{U, V, H, W, channels, disparity_range, bit_depth}`` and optionally a
``disparity.f32`` raw little-endian float32 map (row-major, ``H`` then ``W``).
Directories are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import json
import os
import shutil
import tempfile
from pathlib import Path

import cv2
import numpy as np

from .errors import LFError
from .lightfield import check_lightfield

META_NAME = "meta.json"
DISPARITY_NAME = "disparity.f32"


def view_name(p: int, q: int) -> str:
    return f"view_{p}_{q}.png"


def write_json_atomic(path, obj) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bytes_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def quantize(img: np.ndarray, bit_depth: int) -> np.ndarray:
    if bit_depth not in (8, 16):
        raise LFError(f"bit depth must be 8 or 16, got {bit_depth}")
    peak = 2**bit_depth - 1
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return np.round(np.clip(img, 0.0, 1.0) * peak).astype(dtype)


def write_png(path, img: np.ndarray, bit_depth: int = 16) -> None:
    """Write a float image in [0, 1] (``[H, W]`` or ``[H, W, C]``, RGB order)."""
    q = quantize(np.asarray(img), bit_depth)
    if q.ndim == 3 and q.shape[2] == 1:
        q = q[..., 0]
    elif q.ndim == 3 and q.shape[2] == 3:
        q = q[..., ::-1]
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(q))
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    write_bytes_atomic(path, buf.tobytes())


def read_png(path) -> np.ndarray:
    """Read a PNG as float64 in [0, 1], ``[H, W, C]`` in RGB order."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise LFError(f"cannot read image {path}")
    peak = 65535.0 if raw.dtype == np.uint16 else 255.0
    img = raw.astype(np.float64) / peak
    if img.ndim == 2:
        return img[..., None]
    if img.shape[2] == 4:
        img = img[..., :3]
    return img[..., ::-1].copy()


def write_disparity(path, disp: np.ndarray) -> None:
    disp = np.asarray(disp, dtype="<f4")
    if disp.ndim != 2:
        raise LFError(f"disparity must be [H, W], got {disp.shape}")
    write_bytes_atomic(path, disp.tobytes(order="C"))


def read_disparity(path, H: int | None = None, W: int | None = None) -> np.ndarray:
    """Read a raw float32 disparity map; the shape comes from ``meta.json`` when not given."""
    path = Path(path)
    if H is None or W is None:
        meta_path = path.parent / META_NAME
        if not meta_path.exists():
            raise LFError(f"no {META_NAME} beside {path}")
        meta = json.loads(meta_path.read_text())
        H, W = int(meta["H"]), int(meta["W"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != H * W:
        raise LFError(f"{path} holds {data.size} values, expected {H}x{W}")
    return data.reshape(H, W).astype(np.float64)


def _replace_dir(tmp: Path, dest: Path) -> None:
    if dest.exists():
        shutil.rmtree(dest)
    os.replace(tmp, dest)


def write_lightfield(
    out_dir,
    lf: np.ndarray,
    bit_depth: int = 16,
    disparity: np.ndarray | None = None,
    disparity_range=None,
    extra_files: dict | None = None,
) -> Path:
    """Write ``lf`` (``[U, V, H, W, C]`` in [0, 1]) in the directory format.

    ``extra_files`` maps file names to JSON-serializable objects written
    alongside (e.g. a ``sample.json`` sidecar).
    """
    U, V, H, W, C = check_lightfield(lf)
    if lf.ndim != 5:
        raise LFError("write_lightfield expects a single light field")
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=f".{out_dir.name}."))
    try:
        for p in range(U):
            for q in range(V):
                write_png(tmp / view_name(p, q), lf[p, q], bit_depth)
        meta = {
            "U": U, "V": V, "H": H, "W": W, "channels": C,
            "disparity_range": None if disparity_range is None else [float(v) for v in disparity_range],
            "bit_depth": bit_depth,
        }
        write_json_atomic(tmp / META_NAME, meta)
        if disparity is not None:
            write_disparity(tmp / DISPARITY_NAME, disparity)
        for name, obj in (extra_files or {}).items():
            write_json_atomic(tmp / name, obj)
        _replace_dir(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out_dir


def read_meta(lf_dir) -> dict:
    path = Path(lf_dir) / META_NAME
    if not path.exists():
        raise LFError(f"{lf_dir} is not a light-field directory (missing {META_NAME})")
    return json.loads(path.read_text())


def read_lightfield(lf_dir) -> tuple[np.ndarray, dict]:
    lf_dir = Path(lf_dir)
    meta = read_meta(lf_dir)
    U, V, H, W, C = (int(meta[k]) for k in ("U", "V", "H", "W", "channels"))
    lf = np.empty((U, V, H, W, C), dtype=np.float64)
    for p in range(U):
        for q in range(V):
            img = read_png(lf_dir / view_name(p, q))
            if img.shape != (H, W, C):
                raise LFError(f"view ({p}, {q}) has shape {img.shape}, expected {(H, W, C)}")
            lf[p, q] = img
    return lf, meta


def read_lightfield_disparity(lf_dir) -> np.ndarray:
    meta = read_meta(lf_dir)
    return read_disparity(Path(lf_dir) / DISPARITY_NAME, int(meta["H"]), int(meta["W"]))
