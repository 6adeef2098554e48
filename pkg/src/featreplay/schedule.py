"""Noise schedules for the feature diffusion process.

A schedule with K steps holds the per-step noise variances ``beta[k]`` and the
derived quantities ``alpha = 1 - beta``, the cumulative products ``alpha_bar``
and the reverse-process posterior variances ``sigma^2``. Arrays are 0-indexed:
index ``k - 1`` holds the coefficients of diffusion step ``k`` for
``k = 1 .. K``; step 0 is the clean data (``alpha_bar(0) = 1``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Endpoints of the reference 1000-step linear schedule. Short schedules are
# built by rescaling this trajectory so the signal-to-noise path is preserved
# regardless of the step count.
REFERENCE_STEPS = 1000
REFERENCE_BETA_MIN = 1e-4
REFERENCE_BETA_MAX = 2e-2


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward/reverse coefficient tables for a K-step diffusion."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    posterior_variances: np.ndarray

    @classmethod
    def from_betas(cls, betas: np.ndarray | list[float]) -> "NoiseSchedule":
        """Build the derived tables from a raw beta sequence."""
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-d sequence")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie strictly inside (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        prev_bars = np.concatenate(([1.0], alpha_bars[:-1]))
        posterior_variances = (1.0 - prev_bars) / (1.0 - alpha_bars) * betas
        return cls(betas, alphas, alpha_bars, posterior_variances)

    @property
    def num_steps(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, k: int) -> float:
        """Cumulative signal coefficient at step k; k = 0 is the clean limit."""
        if not 0 <= k <= self.num_steps:
            raise ValueError(f"step {k} outside [0, {self.num_steps}]")
        if k == 0:
            return 1.0
        return float(self.alpha_bars[k - 1])

    def posterior_std(self, k: int) -> float:
        if not 1 <= k <= self.num_steps:
            raise ValueError(f"step {k} outside [1, {self.num_steps}]")
        return float(np.sqrt(self.posterior_variances[k - 1]))

    def to_dict(self) -> dict:
        return {"betas": self.betas.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "NoiseSchedule":
        return cls.from_betas(payload["betas"])


def _reference_log_alpha_bar(t: np.ndarray) -> np.ndarray:
    """log alpha_bar of the 1000-step linear schedule at (fractional) step t.

    Values between integer steps are log-linearly interpolated, which keeps the
    rescaled trajectory exact whenever the target step count divides 1000.
    """
    ref_betas = np.linspace(REFERENCE_BETA_MIN, REFERENCE_BETA_MAX, REFERENCE_STEPS)
    ref = np.concatenate(([0.0], np.cumsum(np.log1p(-ref_betas))))
    return np.interp(np.asarray(t, dtype=np.float64), np.arange(REFERENCE_STEPS + 1), ref)


def make_schedule(num_steps: int, kind: str = "linear") -> NoiseSchedule:
    """Build a K-step schedule by rescaling the reference linear trajectory.

    beta_k = 1 - alpha_bar_ref(k * 1000 / K) / alpha_bar_ref((k - 1) * 1000 / K),
    so the cumulative alpha_bar values land on the reference curve.
    """
    if num_steps < 1:
        raise ValueError(f"schedule needs at least one step, got {num_steps}")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    grid = np.arange(num_steps + 1) * (REFERENCE_STEPS / num_steps)
    log_bars = _reference_log_alpha_bar(grid)
    betas = -np.expm1(np.diff(log_bars))
    return NoiseSchedule.from_betas(np.clip(betas, 1e-12, 1.0 - 1e-12))


def forward_diffuse(
    features: np.ndarray,
    step: int,
    schedule: NoiseSchedule,
    noise: np.ndarray,
) -> np.ndarray:
    """Closed-form forward noising: sqrt(ab_k) * f0 + sqrt(1 - ab_k) * eps."""
    if not 1 <= step <= schedule.num_steps:
        raise ValueError(f"step {step} outside [1, {schedule.num_steps}]")
    features = np.asarray(features)
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    alpha_bar = schedule.alpha_bar(step)
    return np.sqrt(alpha_bar) * features + np.sqrt(1.0 - alpha_bar) * noise
