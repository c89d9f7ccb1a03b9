"""Noise schedules, forward corruption and DDPM/DDIM reverse samplers.

Samples live in the SAI-grid layout ``[..., U*H, V*W, C]``. A denoiser is any
callable ``denoiser(x_t, t, cond) -> noise_estimate`` returning an array of the
same shape as ``x_t``; ``t`` is the timestep of ``x_t`` in ``1..T``.

Timesteps are 1-based as in the usual DDPM notation. Schedule arrays are
stored 0-based, so ``beta[t - 1]`` is the schedule value at step ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LFError, NumericalAbort
from .lightfield import sai_grid_to_lf


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def abar(self, t: int) -> float:
        """Cumulative signal retention at step ``t``; ``abar(0) == 1``."""
        if not 0 <= t <= self.T:
            raise LFError(f"timestep {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_schedule(T: int = 1000, beta_1: float = 1e-4, beta_T: float = 2e-2) -> NoiseSchedule:
    """Linear beta schedule with posterior-variance sigmas."""
    if T < 2:
        raise LFError(f"need T >= 2, got {T}")
    if not 0 < beta_1 < beta_T < 1:
        raise LFError(f"need 0 < beta_1 < beta_T < 1, got {beta_1}, {beta_T}")
    beta = np.linspace(beta_1, beta_T, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    abar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    var = (1.0 - abar_prev) / (1.0 - alpha_bar) * beta
    var[0] = beta[0]
    if not (np.all(np.diff(beta) > 0) and np.all(np.diff(alpha_bar) < 0)):
        raise LFError("schedule is not monotone")
    for arr in (beta, alpha, alpha_bar, var):
        arr.setflags(write=False)
    sigma = np.sqrt(var)
    sigma.setflags(write=False)
    return NoiseSchedule(T, beta, alpha, alpha_bar, sigma)


def _coef(values: np.ndarray, t, x):
    """Gather ``values[t - 1]`` shaped to broadcast against ``x``.

    ``t`` may be an int or a per-sample vector matching ``x``'s first axis.
    Works for numpy arrays and torch tensors alike.
    """
    if np.ndim(t) == 0:
        return float(values[int(t) - 1])
    idx = np.asarray(t.detach().cpu() if hasattr(t, "detach") else t, dtype=np.intp) - 1
    c = values[idx].reshape((-1,) + (1,) * (x.ndim - 1))
    if hasattr(x, "new_tensor"):
        return x.new_tensor(c)
    return c


def _check_t(t, T: int) -> None:
    tt = np.asarray(t.detach().cpu() if hasattr(t, "detach") else t)
    if tt.size and (tt.min() < 1 or tt.max() > T):
        raise LFError(f"timestep must lie in [1, {T}]")


def forward_sample(x0, t, eps, sched: NoiseSchedule):
    """Draw ``x_t`` from ``q(x_t | x_0)`` given the noise ``eps``."""
    if tuple(x0.shape) != tuple(eps.shape):
        raise LFError(f"x0 {tuple(x0.shape)} and eps {tuple(eps.shape)} differ in shape")
    _check_t(t, sched.T)
    a = _coef(np.sqrt(sched.alpha_bar), t, x0)
    b = _coef(np.sqrt(1.0 - sched.alpha_bar), t, x0)
    return a * x0 + b * eps


def training_loss(denoiser, x0, c, t, eps, sched: NoiseSchedule):
    """Mean squared error between ``eps`` and the denoiser's estimate."""
    x_t = forward_sample(x0, t, eps, sched)
    est = denoiser(x_t, t, c)
    if tuple(est.shape) != tuple(eps.shape):
        raise LFError(f"denoiser output {tuple(est.shape)} does not match noise {tuple(eps.shape)}")
    return ((eps - est) ** 2).mean()


def ddpm_step(x_next, n_est, t: int, sched: NoiseSchedule, z=None):
    """One ancestral step from ``x_{t+1}`` to ``x_t``.

    ``z`` must be omitted (or all zero) when ``t == 0``.
    """
    if not 0 <= t < sched.T:
        raise LFError(f"ddpm_step target t={t} outside [0, {sched.T - 1}]")
    if tuple(x_next.shape) != tuple(n_est.shape):
        raise LFError("x_next and n_est differ in shape")
    a = float(sched.alpha[t])
    ab = float(sched.alpha_bar[t])
    out = (x_next - ((1.0 - a) / math.sqrt(1.0 - ab)) * n_est) / math.sqrt(a)
    if z is None:
        return out
    if t == 0 and np.any(np.asarray(z) != 0):
        raise LFError("noise must be zero on the final step (t = 0)")
    return out + float(sched.sigma[t]) * z


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "ddim"
    steps: int = 100
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ddpm", "ddim"):
            raise LFError(f"unknown sampler {self.kind!r}")
        if self.steps < 1:
            raise LFError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.eta <= 1.0:
            raise LFError(f"eta must be in [0, 1], got {self.eta}")


def step_noise(seed: int, t: int, shape) -> np.ndarray:
    """Unit Gaussian draw that depends only on ``(seed, t)``."""
    return np.random.default_rng([int(seed), int(t)]).standard_normal(shape)


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Uniform-stride sub-sequence of ``1..T`` that starts at ``T``, descending."""
    if not 1 <= steps <= T:
        raise LFError(f"DDIM steps must be in [1, {T}], got {steps}")
    stride = T // steps
    return [T - k * stride for k in range(steps)]


def _sai_shape(shape) -> tuple[tuple[int, ...], int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) < 5:
        raise LFError(f"sample shape must be [..., U, V, H, W, C], got {shape}")
    U, V, H, W, C = shape[-5:]
    return shape[:-5] + (U * H, V * W, C), U, V


def _checked(est, t: int):
    est = np.asarray(est, dtype=np.float64)
    if not np.all(np.isfinite(est)):
        raise NumericalAbort("denoiser returned non-finite values", timestep=t)
    return est


def _finish(x, U, V):
    return sai_grid_to_lf(np.clip(x, 0.0, 1.0), U, V)


def ddim_sample(denoiser, c, cfg: SamplerConfig, sched: NoiseSchedule, shape, x_T=None) -> np.ndarray:
    """Run the DDIM reverse process and return a clamped ``[..., U, V, H, W, C]`` light field.

    ``shape`` is the light-field shape of the result. ``x_T`` overrides the
    initial Gaussian draw (given in SAI-grid layout).
    """
    sai_shape, U, V = _sai_shape(shape)
    x = step_noise(cfg.seed, sched.T, sai_shape) if x_T is None else np.array(x_T, dtype=np.float64)
    taus = ddim_timesteps(sched.T, cfg.steps)
    for i, t in enumerate(taus):
        t_prev = taus[i + 1] if i + 1 < len(taus) else 0
        ab, ab_prev = sched.abar(t), sched.abar(t_prev)
        eps = _checked(denoiser(x, t, c), t)
        x0_hat = (x - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)
        sigma = 0.0
        if cfg.eta > 0 and t_prev > 0:
            sigma = cfg.eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev))
        x = math.sqrt(ab_prev) * x0_hat + math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps
        if sigma > 0:
            x = x + sigma * step_noise(cfg.seed, t_prev, sai_shape)
    return _finish(x, U, V)


def ddpm_sample(denoiser, c, sched: NoiseSchedule, shape, seed: int = 0, x_T=None) -> np.ndarray:
    """Full-length ancestral sampling; fresh noise on every step except the last."""
    sai_shape, U, V = _sai_shape(shape)
    x = step_noise(seed, sched.T, sai_shape) if x_T is None else np.array(x_T, dtype=np.float64)
    for t in range(sched.T - 1, -1, -1):
        eps = _checked(denoiser(x, t + 1, c), t + 1)
        z = step_noise(seed, t, sai_shape) if t > 0 else None
        x = ddpm_step(x, eps, t, sched, z)
    return _finish(x, U, V)


def sample(denoiser, c, cfg: SamplerConfig, sched: NoiseSchedule, shape) -> np.ndarray:
    if cfg.kind == "ddpm":
        return ddpm_sample(denoiser, c, sched, shape, seed=cfg.seed)
    return ddim_sample(denoiser, c, cfg, sched, shape)
