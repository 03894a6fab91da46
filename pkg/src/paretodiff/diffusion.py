"""Noise schedules and closed-form score models on Gaussian-mixture manifolds.

The data distribution is an isotropic Gaussian mixture, so the forward-noised
marginal at every step stays a Gaussian mixture and its score, the optimal
noise prediction, and the exact data log-density are all available in closed
form. This replaces a trained denoiser in the sampling loop.

Step indices are 1-based: ``t`` ranges over ``1..t_steps`` and indexes the
arrays ``betas[t-1]``, ``alphas_bar[t-1]``, ``step_sizes[t-1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSchedule",
    "GaussianMixtureManifold",
    "make_linear_schedule",
    "log_density",
    "noised_score",
    "eps_star",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise scales, their cumulative products and Langevin step sizes."""

    betas: np.ndarray
    alphas_bar: np.ndarray
    step_sizes: np.ndarray

    def __post_init__(self):
        for name in ("betas", "alphas_bar", "step_sizes"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        b, ab, eta = self.betas, self.alphas_bar, self.step_sizes
        if b.ndim != 1 or b.size < 1:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if ab.shape != b.shape or eta.shape != b.shape:
            raise ValueError("betas, alphas_bar and step_sizes must have equal length")
        if np.any(b <= 0.0) or np.any(b >= 1.0):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if b.size > 1 and np.any(np.diff(b) <= 0.0):
            raise ValueError("betas must be strictly increasing")
        if np.any(ab <= 0.0) or np.any(ab >= 1.0):
            raise ValueError("alphas_bar must lie strictly inside (0, 1)")
        if ab.size > 1 and np.any(np.diff(ab) >= 0.0):
            raise ValueError("alphas_bar must be strictly decreasing")
        if np.any(eta <= 0.0):
            raise ValueError("step_sizes must be positive")

    @property
    def t_steps(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas_bar[t - 1])

    def eta(self, t: int) -> float:
        self._check_t(t)
        return float(self.step_sizes[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.t_steps:
            raise ValueError(f"step index t={t} outside 1..{self.t_steps}")


def make_linear_schedule(
    t_steps: int,
    beta_min: float = 1e-4,
    beta_max: float = 0.02,
    step_scale: float = 0.05,
) -> NoiseSchedule:
    """Linearly spaced betas with step sizes annealed by the noise level.

    ``eta_t = step_scale * (1 - alpha_bar_t)``: large moves at high noise,
    vanishing moves near the data.
    """
    if t_steps < 1:
        raise ValueError("t_steps must be >= 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    if t_steps > 1 and beta_min == beta_max:
        raise ValueError("beta_min must be < beta_max when t_steps > 1")
    if step_scale <= 0.0:
        raise ValueError("step_scale must be positive")
    betas = np.linspace(beta_min, beta_max, t_steps)
    alphas_bar = np.cumprod(1.0 - betas)
    step_sizes = step_scale * (1.0 - alphas_bar)
    return NoiseSchedule(betas, alphas_bar, step_sizes)


@dataclass(frozen=True)
class GaussianMixtureManifold:
    """Isotropic Gaussian mixture standing in for the data manifold."""

    weights: np.ndarray
    means: np.ndarray
    stdevs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        sd = np.asarray(self.stdevs, dtype=float)
        if mu.ndim == 1:
            mu = mu[None, :]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stdevs", sd)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-D sequence")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if mu.ndim != 2 or mu.shape[0] != w.size:
            raise ValueError("means must be (n_components, dim)")
        if sd.shape != w.shape:
            raise ValueError("stdevs must match weights length")
        if np.any(sd <= 0.0):
            raise ValueError("stdevs must be positive")

    @property
    def n_components(self) -> int:
        return int(self.weights.size)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])


def _as_batch(model: GaussianMixtureManifold, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"x must have dimension {model.dim}")
    return x, single


def log_density_batch(model: GaussianMixtureManifold, x: np.ndarray) -> np.ndarray:
    """Exact log of the mixture density, computed in log-space."""
    x, _ = _as_batch(model, x)
    d = model.dim
    var = model.stdevs**2
    diff = x[:, None, :] - model.means[None, :, :]
    logp = (
        np.log(model.weights)[None, :]
        - 0.5 * d * np.log(2.0 * np.pi * var)[None, :]
        - (diff**2).sum(axis=2) / (2.0 * var)[None, :]
    )
    peak = logp.max(axis=1, keepdims=True)
    return peak[:, 0] + np.log(np.exp(logp - peak).sum(axis=1))


def log_density(model: GaussianMixtureManifold, x: np.ndarray) -> float:
    """Exact data log-density at a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("log_density takes a single point; see log_density_batch")
    return float(log_density_batch(model, x)[0])


def _noised_params(model: GaussianMixtureManifold, alpha_bar: float):
    """Component centers and variances of the forward-noised mixture."""
    centers = np.sqrt(alpha_bar) * model.means
    variances = (1.0 - alpha_bar) + alpha_bar * model.stdevs**2
    return centers, variances


def noised_score_batch(
    model: GaussianMixtureManifold, x: np.ndarray, alpha_bar: float
) -> np.ndarray:
    """Gradient of log of the noised mixture density at noise level ``alpha_bar``."""
    x, _ = _as_batch(model, x)
    d = model.dim
    centers, variances = _noised_params(model, alpha_bar)
    diff = x[:, None, :] - centers[None, :, :]
    logr = (
        np.log(model.weights)[None, :]
        - 0.5 * d * np.log(2.0 * np.pi * variances)[None, :]
        - (diff**2).sum(axis=2) / (2.0 * variances)[None, :]
    )
    logr -= logr.max(axis=1, keepdims=True)
    resp = np.exp(logr)
    resp /= resp.sum(axis=1, keepdims=True)
    return (resp[:, :, None] * (-diff / variances[None, :, None])).sum(axis=1)


def noised_score(
    model: GaussianMixtureManifold, x: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    """Score of the forward-noised mixture at step ``t`` (1-based)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("noised_score takes a single point; see noised_score_batch")
    return noised_score_batch(model, x, sched.alpha_bar(t))[0]


def eps_star_batch(
    model: GaussianMixtureManifold, x: np.ndarray, alpha_bar: float
) -> np.ndarray:
    return -np.sqrt(1.0 - alpha_bar) * noised_score_batch(model, x, alpha_bar)


def eps_star(
    model: GaussianMixtureManifold, x: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    """Optimal noise prediction: the quality-only update direction."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("eps_star takes a single point; see eps_star_batch")
    return eps_star_batch(model, x, sched.alpha_bar(t))[0]
