"""Run configuration in a flat ``section.key = value`` text format.

Values are JSON literals (numbers, strings, lists, booleans). Lines starting
with ``#`` and blank lines are ignored. Unknown keys are rejected.

    train.lr = 1.5e-4
    data.disparity_range = [-2.0, 2.0]
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import LFError
from .net import DistgNetConfig


@dataclass(frozen=True)
class DataConfig:
    scenes: int = 256
    val_scenes: int = 8
    U: int = 5
    V: int = 5
    H: int = 32
    W: int = 32
    channels: int = 3
    patch: int = 32
    stride: int = 32
    jitter: int = 0
    max_layers: int = 3
    disparity_range: tuple = (-2.0, 2.0)
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 16
    lr: float = 1.5e-4
    weight_decay: float = 0.01
    optimizer: str = "adamw"
    schedule: str = "cosine"
    steps: int = 2000
    checkpoint_every: int = 500
    threads: int = 1
    seed: int = 0


@dataclass(frozen=True)
class DiffusionConfig:
    T: int = 1000
    beta_1: float = 1e-4
    beta_T: float = 2e-2


@dataclass(frozen=True)
class SampleConfig:
    sampler: str = "ddim"
    steps: int = 100
    eta: float = 0.0
    seed: int = 0
    disparity_range: tuple = (-2.0, 2.0)


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: DistgNetConfig = field(default_factory=DistgNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    def validate(self) -> "RunConfig":
        d, m, tr, s = self.data, self.model, self.train, self.sample
        if d.U != d.V or d.U != m.angular:
            raise LFError(f"data angular size {d.U}x{d.V} does not match model A={m.angular}")
        if d.channels != m.out_channels:
            raise LFError("data channels and model out_channels differ")
        if not 0 < d.patch <= min(d.H, d.W):
            raise LFError(f"patch {d.patch} does not fit a {d.H}x{d.W} frame")
        for name, rng in (("data", d.disparity_range), ("sample", s.disparity_range)):
            if len(rng) != 2 or not rng[0] < rng[1]:
                raise LFError(f"{name}.disparity_range must be [min, max] with min < max")
        if tr.optimizer != "adamw":
            raise LFError(f"unsupported optimizer {tr.optimizer!r}")
        if tr.schedule not in ("cosine", "constant"):
            raise LFError(f"unsupported schedule {tr.schedule!r}")
        if tr.batch < 1 or tr.steps < 1 or tr.checkpoint_every < 1 or tr.lr <= 0:
            raise LFError("train.batch, train.steps, train.checkpoint_every and train.lr must be positive")
        if s.sampler not in ("ddim", "ddpm"):
            raise LFError(f"unknown sampler {s.sampler!r}")
        if d.scenes < 1 or d.val_scenes < 0:
            raise LFError("data.scenes must be >= 1 and data.val_scenes >= 0")
        return self


SECTIONS = ("data", "model", "train", "diffusion", "sample")


def _coerce(value, default, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise LFError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise LFError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise LFError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise LFError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise LFError(f"{key}: expected a list of {len(default)} numbers, got {value!r}")
        return tuple(_coerce(v, d, key) for v, d in zip(value, default))
    raise LFError(f"{key}: unsupported field type")


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    updates: dict[str, dict] = {s: {} for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in SECTIONS:
            raise LFError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        current = getattr(cfg, section)
        known = {f.name for f in fields(current)}
        if name not in known:
            raise LFError(f"line {lineno}: unknown key {key!r}")
        try:
            parsed = json.loads(value.strip())
        except json.JSONDecodeError as e:
            raise LFError(f"line {lineno}: bad value for {key}: {e}") from None
        updates[section][name] = _coerce(parsed, getattr(current, name), key)
    try:
        cfg = replace(cfg, **{s: replace(getattr(cfg, s), **u) for s, u in updates.items() if u})
    except ValueError as e:
        raise LFError(str(e)) from None
    return cfg.validate()


def format_config(cfg: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        part = getattr(cfg, section)
        for f in fields(part):
            v = getattr(part, f.name)
            lines.append(f"{section}.{f.name} = {json.dumps(list(v) if isinstance(v, tuple) else v)}")
        lines.append("")
    return "\n".join(lines)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise LFError(f"cannot read config {path}: {e}") from None
    return parse_config(text)
