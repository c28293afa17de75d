"""Noise schedules and closed-form diffusion updates.

Timesteps are 1-indexed (t = 1..T) with the convention alpha_bar(0) = 1.
All functions are pure and dtype-agnostic: schedule coefficients are python
floats derived from float64 arrays, so they compose with numpy arrays and
torch tensors without changing the operand dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta diffusion schedule with derived quantities."""

    timesteps: int
    beta: np.ndarray        # beta_t, index t-1
    alpha: np.ndarray       # 1 - beta_t
    alpha_bar: np.ndarray   # prod_{s<=t} alpha_s
    beta_tilde: np.ndarray  # posterior variance (1-abar_{t-1})/(1-abar_t) * beta_t
    beta_start: float
    beta_end: float

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.timesteps:
            raise ValueError(f"t={t} outside schedule range [1, {self.timesteps}]")

    def beta_at(self, t: int) -> float:
        self._check_t(t)
        return float(self.beta[t - 1])

    def alpha_at(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bar[t - 1])

    def beta_tilde_at(self, t: int) -> float:
        self._check_t(t)
        return float(self.beta_tilde[t - 1])

    def echo(self) -> dict:
        """Schedule parameters for checkpoints and manifests."""
        return {
            "timesteps": self.timesteps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
        }


def linear_schedule(
    timesteps: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 2e-2,
) -> NoiseSchedule:
    """Linearly interpolated beta schedule, endpoints inclusive."""
    if timesteps < 1:
        raise ConfigError(f"timesteps must be >= 1, got {timesteps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )
    if timesteps == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    beta_tilde = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta
    return NoiseSchedule(
        timesteps=timesteps,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        beta_tilde=beta_tilde,
        beta_start=float(beta_start),
        beta_end=float(beta_end),
    )


def schedule_from_echo(echo: dict) -> NoiseSchedule:
    return linear_schedule(echo["timesteps"], echo["beta_start"], echo["beta_end"])


def q_sample(z0, t: int, eps, schedule: NoiseSchedule):
    """Forward corruption: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    abar = schedule.alpha_bar_at(t)
    if t == 0:
        raise ValueError("q_sample requires t >= 1")
    return math.sqrt(abar) * z0 + math.sqrt(1.0 - abar) * eps


def predict_z0(z_t, t: int, eps_hat, schedule: NoiseSchedule):
    """Invert q_sample for a given noise estimate."""
    abar = schedule.alpha_bar_at(t)
    if t == 0:
        raise ValueError("predict_z0 requires t >= 1")
    return (z_t - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)


def ddpm_step(z_t, t: int, eps_hat, noise, schedule: NoiseSchedule):
    """One ancestral step z_t -> z_{t-1}.

    Mean is (1/sqrt(alpha_t)) (z_t - (1-alpha_t)/sqrt(1-abar_t) eps_hat) and
    the variance is beta_tilde_t; the caller supplies the standard-normal
    noise so sampling stays reproducible. The terminal step t=1 is
    deterministic (sigma = 0).
    """
    if t < 1:
        raise ValueError(f"ddpm_step requires t >= 1, got {t}")
    alpha = schedule.alpha_at(t)
    abar = schedule.alpha_bar_at(t)
    mean = (z_t - (1.0 - alpha) / math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(alpha)
    if t == 1:
        return mean
    sigma = math.sqrt(schedule.beta_tilde_at(t))
    return mean + sigma * noise


def ddim_step(z_t, t: int, t_prev: int, eps_hat, schedule: NoiseSchedule):
    """Deterministic (eta = 0) step from t to t_prev < t.

    z_{t_prev} = sqrt(abar_{t_prev}) z0_hat + sqrt(1 - abar_{t_prev}) eps_hat,
    with abar(0) = 1 so t_prev = 0 returns z0_hat exactly.
    """
    if not 0 <= t_prev < t:
        raise ValueError(f"need 0 <= t_prev < t, got t={t}, t_prev={t_prev}")
    z0_hat = predict_z0(z_t, t, eps_hat, schedule)
    abar_prev = schedule.alpha_bar_at(t_prev)
    return math.sqrt(abar_prev) * z0_hat + math.sqrt(1.0 - abar_prev) * eps_hat


def ddim_timesteps(timesteps: int, num_steps: int) -> list[int]:
    """Uniformly strided descending timestep subsequence starting at T."""
    if not 1 <= num_steps <= timesteps:
        raise ValueError(f"need 1 <= num_steps <= {timesteps}, got {num_steps}")
    stride = timesteps // num_steps
    seq = [timesteps - k * stride for k in range(num_steps)]
    assert seq[-1] >= 1
    return seq
