"""Guided denoising directions: the constrained blend and its baselines.

The guided direction solves

    min_g 0.5 ||g - eps||^2   s.t.   grad_f_i . g >= phi  for all i,

whose solution is ``g = eps + sum_i lambda_i grad_f_i`` with nonnegative dual
multipliers. The switch sets ``phi = alpha * ||mgd||`` while the min-norm
gradient combination is large (far from Pareto stationarity) and ``-inf``
(no property guidance) once it is small.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .mgd import min_norm_weights

__all__ = [
    "METHODS",
    "GuidanceConfig",
    "GuidanceOutcome",
    "DualUnboundedError",
    "phi_switch",
    "solve_dual",
    "proud_direction",
    "baseline_direction",
]

METHOD_PROUD = "proud"
METHOD_DM_MMGD = "dm_mmgd"
METHOD_DM_SINGLE = "dm_single"
METHOD_MPLUS1_MGD = "mplus1_mgd"
METHOD_M_MGD = "m_mgd"
METHODS = (
    METHOD_PROUD,
    METHOD_DM_MMGD,
    METHOD_DM_SINGLE,
    METHOD_MPLUS1_MGD,
    METHOD_M_MGD,
)

# Methods whose update direction includes the diversity repulsion. Following
# the evaluation protocol, only the MGD-equipped methods carry it: the
# (m+1)-objective variant has no separable quality objective to regularize and
# the scalarized baseline is plain single-objective guidance.
DIVERSITY_METHODS = frozenset({METHOD_PROUD, METHOD_DM_MMGD, METHOD_M_MGD})


class DualUnboundedError(RuntimeError):
    """The constraint set admits no direction; the dual diverges."""


@dataclass(frozen=True)
class GuidanceConfig:
    """Method selector plus hyper-parameters of the guided sampler."""

    method: str = METHOD_PROUD
    alpha: float = 0.5
    e_threshold: float = 0.03
    gamma: float = 0.2
    fixed_lambda: float = 1.0
    single_weights: tuple[float, ...] | None = None
    diversity_cap: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if not self.e_threshold > 0.0:
            raise ValueError("e_threshold must be positive")
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        if self.fixed_lambda < 0.0:
            raise ValueError("fixed_lambda must be nonnegative")
        if self.diversity_cap <= 0.0:
            raise ValueError("diversity_cap must be positive")
        if self.single_weights is not None:
            w = tuple(float(v) for v in self.single_weights)
            object.__setattr__(self, "single_weights", w)
            if any(v < 0.0 for v in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ValueError("single_weights must be nonnegative and sum to 1")

    def weights_for(self, m: int) -> np.ndarray:
        if self.single_weights is None:
            return np.full(m, 1.0 / m)
        if len(self.single_weights) != m:
            raise ValueError(f"single_weights has length {len(self.single_weights)}, need {m}")
        return np.asarray(self.single_weights, dtype=float)


@dataclass(frozen=True)
class GuidanceOutcome:
    """Direction with its multipliers and the switch diagnostics."""

    direction: np.ndarray
    multipliers: np.ndarray
    phi: float
    mgd_norm: float


def phi_switch(mgd_norm: float, cfg: GuidanceConfig) -> float:
    """Demanded per-objective progress; -inf disables the constraints."""
    if mgd_norm < 0.0:
        raise ValueError("mgd_norm must be nonnegative")
    if mgd_norm > cfg.e_threshold:
        return cfg.alpha * mgd_norm
    return -np.inf


def solve_dual(eps, gradients, phi: float) -> np.ndarray:
    """Nonnegative multipliers maximizing the dual of the constrained blend.

    For m <= 3 every active set is enumerated and solved exactly; larger m
    falls back to projected gradient ascent. Raises DualUnboundedError when
    the constraints are infeasible.
    """
    eps = np.asarray(eps, dtype=float)
    g = np.asarray(gradients, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if not np.isfinite(phi):
        raise ValueError("phi must be finite; the -inf branch has no dual problem")
    m = g.shape[0]
    gram = g @ g.T
    b = g @ eps
    if m <= 3:
        lam = _dual_enumerate(gram, b, phi)
    else:
        lam = _dual_ascent(gram, b, phi)
    if lam is None:
        raise DualUnboundedError("constraint directions conflict; dual is unbounded")
    return lam


def _dual_objective(gram, b, phi, lam) -> float:
    return float(-0.5 * (lam @ gram @ lam) - lam @ b + phi * lam.sum())


def _dual_enumerate(gram, b, phi):
    """Exact active-set enumeration; returns None when no KKT point exists."""
    m = b.size
    feas_tol = 1e-9 * (1.0 + abs(phi) + float(np.abs(b).max(initial=0.0)))
    best = None
    best_obj = -np.inf
    for size in range(m + 1):
        for active in combinations(range(m), size):
            lam = np.zeros(m)
            if active:
                idx = list(active)
                sub = gram[np.ix_(idx, idx)]
                rhs = phi - b[idx]
                sol = _solve_small(sub, rhs)
                if sol is None or np.any(sol < -1e-12):
                    continue
                lam[idx] = np.maximum(sol, 0.0)
            slack = gram @ lam + b  # grad_f_i . (eps + sum lam g)
            if np.any(slack < phi - feas_tol):
                continue
            obj = -0.5 * float(lam @ gram @ lam) - float(lam @ b) + phi * float(lam.sum())
            if obj > best_obj:
                best, best_obj = lam, obj
    return best


# Active sets whose Gram determinant falls below this relative threshold are
# skipped: a smaller subset attains the same optimum (Caratheodory) without
# the catastrophic multiplier amplification of a near-singular solve.
_DET_RTOL = 1e-10


def _cramer(a: np.ndarray, rhs: np.ndarray):
    n = rhs.size
    if n == 1:
        det = a[0, 0]
        if abs(det) <= _DET_RTOL * np.abs(a).max() or det == 0.0:
            return None
        return np.array([rhs[0] / det])
    if n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        scale = np.abs(a).max()
        if abs(det) <= _DET_RTOL * scale * scale:
            return None
        return np.array(
            [
                (rhs[0] * a[1, 1] - a[0, 1] * rhs[1]) / det,
                (a[0, 0] * rhs[1] - rhs[0] * a[1, 0]) / det,
            ]
        )
    c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    c01 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    c02 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    det = a[0, 0] * c00 + a[0, 1] * c01 + a[0, 2] * c02
    scale = np.abs(a).max()
    if abs(det) <= _DET_RTOL * scale * scale * scale:
        return None
    x0 = (
        rhs[0] * c00
        + a[0, 1] * (a[1, 2] * rhs[2] - rhs[1] * a[2, 2])
        + a[0, 2] * (rhs[1] * a[2, 1] - a[1, 1] * rhs[2])
    ) / det
    x1 = (
        a[0, 0] * (rhs[1] * a[2, 2] - a[1, 2] * rhs[2])
        + rhs[0] * c01
        + a[0, 2] * (a[1, 0] * rhs[2] - rhs[1] * a[2, 0])
    ) / det
    x2 = (
        a[0, 0] * (a[1, 1] * rhs[2] - rhs[1] * a[2, 1])
        + a[0, 1] * (rhs[1] * a[2, 0] - a[1, 0] * rhs[2])
        + rhs[0] * c02
    ) / det
    return np.array([x0, x1, x2])


def _solve_small(a: np.ndarray, rhs: np.ndarray):
    """Guarded Cramer solve with one round of iterative refinement."""
    sol = _cramer(a, rhs)
    if sol is None:
        return None
    delta = _cramer(a, rhs - a @ sol)
    if delta is not None:
        sol = sol + delta
    return sol


def _dual_ascent(gram, b, phi, tol: float = 1e-9, max_iter: int = 1_000_000):
    """Projected gradient ascent with step 1/L, L bounded by the Gram trace."""
    m = b.size
    lam = np.zeros(m)
    lip = max(float(np.trace(gram)), 1e-300)
    prev_obj = _dual_objective(gram, b, phi, lam)
    for _ in range(max_iter):
        grad = phi - b - gram @ lam
        lam_new = np.maximum(lam + grad / lip, 0.0)
        pg = np.where(lam > 0.0, grad, np.maximum(grad, 0.0))
        if np.linalg.norm(pg) < tol:
            return lam
        obj = _dual_objective(gram, b, phi, lam_new)
        if np.linalg.norm(lam_new) > 1e8 and obj > prev_obj:
            return None
        lam, prev_obj = lam_new, obj
    raise RuntimeError("dual ascent did not converge")


def proud_direction(eps, gradients, cfg: GuidanceConfig) -> GuidanceOutcome:
    """Switched constrained blend of the noise prediction and objective gradients."""
    eps = np.asarray(eps, dtype=float)
    g = np.asarray(gradients, dtype=float)
    if g.size == 0:
        return GuidanceOutcome(eps.copy(), np.zeros(0), -np.inf, 0.0)
    if g.ndim == 1:
        g = g[None, :]
    sol = min_norm_weights(g)
    phi = phi_switch(sol.norm, cfg)
    if not np.isfinite(phi):
        return GuidanceOutcome(eps.copy(), np.zeros(g.shape[0]), phi, sol.norm)
    lam = solve_dual(eps, g, phi)
    return GuidanceOutcome(eps + lam @ g, lam, phi, sol.norm)


def baseline_direction(eps, gradients, cfg: GuidanceConfig) -> np.ndarray:
    """Update direction for the non-switched baselines."""
    eps = np.asarray(eps, dtype=float)
    g = np.asarray(gradients, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    m = g.shape[0]
    if cfg.method == METHOD_DM_MMGD:
        return eps + cfg.fixed_lambda * min_norm_weights(g).direction
    if cfg.method == METHOD_DM_SINGLE:
        return eps + cfg.fixed_lambda * (cfg.weights_for(m) @ g)
    if cfg.method == METHOD_MPLUS1_MGD:
        stacked = np.vstack([g, eps[None, :]])
        return min_norm_weights(stacked).direction
    if cfg.method == METHOD_M_MGD:
        return min_norm_weights(g).direction
    raise ValueError(f"method {cfg.method!r} is not a baseline; use proud_direction")
