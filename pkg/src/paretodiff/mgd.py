"""Multiple gradient descent machinery: min-norm directions and dominance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MinNormSolution",
    "min_norm_weights",
    "dominates",
    "pareto_filter",
    "is_stationary",
]


@dataclass(frozen=True)
class MinNormSolution:
    """Convex combination of gradients with minimum Euclidean norm."""

    weights: np.ndarray
    direction: np.ndarray
    norm: float


def _as_gradient_matrix(gradients) -> np.ndarray:
    g = np.asarray(gradients, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2 or g.shape[0] == 0:
        raise ValueError("gradients must be a non-empty list of equal-length vectors")
    return g


def min_norm_weights(gradients) -> MinNormSolution:
    """Simplex weights minimizing ``|| sum_i w_i g_i ||^2``.

    m = 2 is solved in closed form. Larger m runs Frank-Wolfe with away steps
    and analytic line search (iteration cap 10*m*d), stopping when the duality
    gap falls below 1e-10 relative to the Gram scale; away steps give the
    linear convergence needed to certify that gap within the cap.
    """
    g = _as_gradient_matrix(gradients)
    m, d = g.shape
    if m == 1:
        v = g[0]
        return MinNormSolution(np.ones(1), v.copy(), float(np.linalg.norm(v)))
    if m == 2:
        w1 = _pair_weight(g[0], g[1])
        w = np.array([w1, 1.0 - w1])
        v = w @ g
        return MinNormSolution(w, v, float(np.linalg.norm(v)))
    gram = g @ g.T
    w = _frank_wolfe_simplex(gram, max_iter=10 * m * d)
    v = w @ g
    return MinNormSolution(w, v, float(np.linalg.norm(v)))


def _pair_weight(g1: np.ndarray, g2: np.ndarray) -> float:
    """Weight on g1 minimizing ||w g1 + (1-w) g2||, clamped to [0, 1]."""
    diff = g1 - g2
    den = float(diff @ diff)
    if den <= 0.0:
        return 0.5
    return float(min(max((g2 @ (g2 - g1)) / den, 0.0), 1.0))


def _support_polish(gram: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Exact minimizer on the face spanned by the current support, if feasible.

    Solves the bordered stationarity system (min w^T gram w with the weights
    summing to one on the support), which stays well-posed even when the Gram
    block is singular. The candidate is kept only when it lies in the simplex
    and does not increase the objective.
    """
    support = np.nonzero(w > 0.0)[0]
    if support.size < 2:
        return w
    k = support.size
    bordered = np.zeros((k + 1, k + 1))
    bordered[:k, :k] = 2.0 * gram[np.ix_(support, support)]
    bordered[:k, k] = 1.0
    bordered[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(bordered, rhs)
    except np.linalg.LinAlgError:
        return w
    u = sol[:k]
    if not np.all(np.isfinite(u)) or np.any(u < -1e-12):
        return w
    cand = np.zeros_like(w)
    cand[support] = np.maximum(u, 0.0)
    cand /= cand.sum()
    if cand @ gram @ cand <= w @ gram @ w:
        return cand
    return w


def _frank_wolfe_simplex(gram: np.ndarray, max_iter: int) -> np.ndarray:
    """Away-step Frank-Wolfe for min w^T gram w over the probability simplex.

    A fully corrective polish (exact solve on the final support) follows the
    iteration loop, so interior and face optima come out exact even when the
    iteration cap bites first.
    """
    m = gram.shape[0]
    w = np.zeros(m)
    w[int(np.argmin(np.diag(gram)))] = 1.0
    gap_tol = 1e-10 * max(float(np.trace(gram)), 1e-300)
    for _ in range(max_iter):
        q = gram @ w  # 0.5 * gradient
        f = float(w @ q)
        s = int(np.argmin(q))
        if 2.0 * (f - q[s]) <= gap_tol:
            break
        a = int(np.argmax(np.where(w > 0.0, q, -np.inf)))
        if f - q[s] >= q[a] - f:
            direction = -w.copy()
            direction[s] += 1.0
            gamma_max = 1.0
        else:
            direction = w.copy()
            direction[a] -= 1.0
            gamma_max = w[a] / (1.0 - w[a]) if w[a] < 1.0 else np.inf
        slope = float(direction @ q)  # 0.5 * directional derivative
        curv = float(direction @ (gram @ direction))
        if curv <= 0.0:
            gamma = gamma_max
        else:
            gamma = min(max(-slope / curv, 0.0), gamma_max)
        if not np.isfinite(gamma) or gamma <= 0.0:
            break
        w = w + gamma * direction
        w = np.maximum(w, 0.0)
        w /= w.sum()
    return _support_polish(gram, w)


def dominates(y1, y2) -> bool:
    """Componentwise <= with at least one coordinate different (minimization)."""
    a = np.asarray(y1, dtype=float)
    b = np.asarray(y2, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("objective vectors must have equal length")
    return bool(np.all(a <= b) and np.any(a != b))


def pareto_filter(points) -> list[int]:
    """Indices of non-dominated points, in stable (input) order."""
    y = np.asarray(points, dtype=float)
    if y.ndim != 2 or y.shape[0] == 0:
        raise ValueError("points must be a non-empty (n, m) array")
    n = y.shape[0]
    keep = np.ones(n, dtype=bool)
    chunk = 256
    for start in range(0, n, chunk):
        block = y[start : start + chunk]  # (b, m)
        le = np.all(y[None, :, :] <= block[:, None, :], axis=2)  # (b, n): j dominates-or-ties i
        lt = np.any(y[None, :, :] < block[:, None, :], axis=2)
        dominated = np.any(le & lt, axis=1)
        keep[start : start + chunk] &= ~dominated
    return [int(i) for i in np.nonzero(keep)[0]]


def is_stationary(gradients, tol: float = 1e-6) -> bool:
    """Whether some convex combination of the gradients (nearly) vanishes."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    return min_norm_weights(gradients).norm <= tol
