"""Dataset loading and the denoiser training loop."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import torch

from . import lfio
from .checkpoint import save_checkpoint
from .config import RunConfig
from .diffusion import make_schedule, training_loss
from .errors import LFError, NumericalAbort
from .lightfield import build_condition, central_view, lf_to_sai_grid
from .net import DistgUnet, count_parameters

DATASET_NAME = "dataset.json"
LOG_NAME = "train_log.csv"
CKPT_NAME = "model.ckpt"


def load_manifest(root) -> dict:
    path = Path(root) / DATASET_NAME
    if not path.exists():
        raise LFError(f"{root} has no {DATASET_NAME}")
    return json.loads(path.read_text())


def load_patches(root, split: str = "train", pe_dim: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """SAI-grid targets ``[N, C, U*h, V*w]`` and conditions ``[N, C+dim, U*h, V*w]``.

    Conditions are built from the ground-truth disparity of each scene.
    """
    root = Path(root)
    manifest = load_manifest(root)
    ids = set(manifest["splits"].get(split, []))
    cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    xs, cs = [], []
    for entry in manifest["patches"]:
        sid = entry["scene"]
        if sid not in ids:
            continue
        if sid not in cache:
            scene_dir = root / "scenes" / sid
            lf, _ = lfio.read_lightfield(scene_dir)
            cache[sid] = (lf, lfio.read_lightfield_disparity(scene_dir))
        lf, disp = cache[sid]
        (y, x), n = entry["origin"], entry["size"]
        lf_p = lf[:, :, y:y + n, x:x + n]
        U, V = lf_p.shape[:2]
        cond = build_condition(central_view(lf_p), disp[y:y + n, x:x + n], U, V, pe_dim)
        xs.append(lf_to_sai_grid(lf_p).transpose(2, 0, 1))
        cs.append(lf_to_sai_grid(cond).transpose(2, 0, 1))
    if not xs:
        raise LFError(f"split {split!r} of {root} has no patches")
    return np.stack(xs), np.stack(cs)


def _grad_norm(model) -> float:
    sq = sum(float((p.grad.detach() ** 2).sum()) for p in model.parameters() if p.grad is not None)
    return math.sqrt(sq)


def train(cfg: RunConfig, dataset, out_dir, log=print) -> dict:
    """Train a fresh DistgUnet on ``dataset``; returns a summary dict.

    Writes ``train_log.csv`` (step, loss, lr) and ``model.ckpt`` under
    ``out_dir``; the checkpoint is refreshed every ``train.checkpoint_every``
    steps and at the end. Deterministic for a fixed seed and thread count.
    """
    tc = cfg.train
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(tc.threads)
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)

    X, Cc = load_patches(dataset, "train", cfg.model.pe_dim)
    X = torch.from_numpy(X).float()
    Cc = torch.from_numpy(Cc).float()
    n = X.shape[0]
    model = DistgUnet(cfg.model)
    sched = make_schedule(cfg.diffusion.T, cfg.diffusion.beta_1, cfg.diffusion.beta_T)
    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    lr_sched = None
    if tc.schedule == "cosine":
        lr_sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, tc.steps)
    log(f"training {count_parameters(model)} parameters on {n} patches")

    def denoiser(x, t, c):
        return model(x, c, torch.as_tensor(t))

    extra = {"diffusion": {"T": sched.T, "beta_1": cfg.diffusion.beta_1, "beta_T": cfg.diffusion.beta_T},
             "data": {"disparity_range": list(cfg.data.disparity_range)}}
    rows, losses = [], []
    for step in range(tc.steps):
        idx = rng.choice(n, tc.batch, replace=n < tc.batch)
        t = rng.integers(1, sched.T + 1, tc.batch)
        eps = torch.from_numpy(rng.standard_normal(X[idx].shape)).float()
        lr = opt.param_groups[0]["lr"]
        loss = training_loss(denoiser, X[idx], Cc[idx], t, eps, sched)
        opt.zero_grad()
        loss.backward()
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericalAbort("training loss is not finite", step=step, lr=lr, grad_norm=_grad_norm(model))
        opt.step()
        if lr_sched is not None:
            lr_sched.step()
        rows.append((step, value, lr))
        losses.append(value)
        if (step + 1) % tc.checkpoint_every == 0 or step + 1 == tc.steps:
            _write_log(out_dir / LOG_NAME, rows)
            save_checkpoint(out_dir / CKPT_NAME, model, dict(extra, step=step + 1))
            log(f"step {step + 1}: mean loss {np.mean(losses[-tc.checkpoint_every:]):.4f}")
    k = min(100, len(losses))
    return {
        "steps": tc.steps,
        "parameters": count_parameters(model),
        "lead_loss": float(np.mean(losses[:k])),
        "trail_loss": float(np.mean(losses[-k:])),
        "checkpoint": CKPT_NAME,
    }


def _write_log(path, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss", "lr"])
    for step, loss, lr in rows:
        w.writerow([step, repr(loss), repr(lr)])
    lfio.write_bytes_atomic(path, buf.getvalue().encode())


def read_log(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as f:
        return [(int(r["step"]), float(r["loss"]), float(r["lr"])) for r in csv.DictReader(f)]
