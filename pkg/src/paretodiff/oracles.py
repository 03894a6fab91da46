"""Brute-force oracles backing the derived expectations, plus the check suite.

Everything here is deliberately independent of the implementation paths it
checks: dense grids instead of solvers, finite differences instead of
analytic gradients, permutation enumeration instead of the assignment solver,
a plain double loop instead of the vectorized dominance filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import metrics
from .guidance import DualUnboundedError, GuidanceConfig, proud_direction, solve_dual
from .mgd import min_norm_weights, pareto_filter
from .objectives import AnchorObjective, ObjectiveSet
from .sampler import Population, diversity_gradient

__all__ = [
    "simplex_grid",
    "grid_min_norm_value",
    "grid_dual_value",
    "finite_difference_gradient",
    "brute_pareto_filter",
    "brute_emd",
    "OracleCheck",
    "oracle_suite",
]


def simplex_grid(m: int, step: float) -> np.ndarray:
    """All simplex points with coordinates on a uniform grid of spacing step."""
    k = int(round(1.0 / step))
    if m == 1:
        return np.ones((1, 1))
    if m == 2:
        w = np.arange(k + 1) / k
        return np.column_stack([w, 1.0 - w])
    if m == 3:
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        keep = i + j <= k
        i, j = i[keep], j[keep]
        return np.column_stack([i, j, k - i - j]) / k
    raise ValueError("simplex_grid supports m <= 3")


def grid_min_norm_value(gradients: np.ndarray, step: float = 1e-3) -> float:
    """Min over the simplex grid of ||sum_i w_i g_i||^2."""
    g = np.asarray(gradients, dtype=float)
    gram = g @ g.T
    w = simplex_grid(g.shape[0], step)
    vals = np.einsum("ki,ij,kj->k", w, gram, w)
    return float(vals.min())


def grid_dual_value(eps, gradients, phi, lam_max: float = 10.0, step: float = 1e-3) -> float:
    """Max of the dual objective over the box [0, lam_max]^m on a dense grid."""
    eps = np.asarray(eps, dtype=float)
    g = np.asarray(gradients, dtype=float)
    m = g.shape[0]
    gram = g @ g.T
    b = g @ eps
    const = -0.5 * float(eps @ eps)
    axis = np.arange(int(round(lam_max / step)) + 1) * step
    if m == 1:
        lam = axis
        vals = const - 0.5 * gram[0, 0] * lam**2 - b[0] * lam + phi * lam
        return float(vals.max())
    if m == 2:
        best = -np.inf
        l2 = axis
        quad2 = -0.5 * gram[1, 1] * l2**2 + (phi - b[1]) * l2
        for l1 in axis:
            vals = (
                const
                - 0.5 * gram[0, 0] * l1 * l1
                + (phi - b[0]) * l1
                - gram[0, 1] * l1 * l2
                + quad2
            )
            best = max(best, float(vals.max()))
        return best
    raise ValueError("grid_dual_value supports m <= 2")


def finite_difference_gradient(func, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[j] += h
        lo[j] -= h
        out[j] = (func(hi) - func(lo)) / (2.0 * h)
    return out


def brute_pareto_filter(points) -> list[int]:
    """Quadratic double-loop dominance filter."""
    y = np.asarray(points, dtype=float)
    keep = []
    for i in range(y.shape[0]):
        dominated = False
        for j in range(y.shape[0]):
            if j == i:
                continue
            if np.all(y[j] <= y[i]) and np.any(y[j] < y[i]):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


def brute_emd(a, b) -> float:
    """Mean matching cost by enumerating every assignment (n <= 7)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if n > 7:
        raise ValueError("permutation enumeration capped at n = 7")
    cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    best = np.inf
    for perm in permutations(range(n)):
        best = min(best, cost[np.arange(n), perm].sum())
    return float(best / n)


@dataclass(frozen=True)
class OracleCheck:
    name: str
    passed: bool
    detail: str


def _check_min_norm(rng) -> OracleCheck:
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 4))
        d = int(rng.integers(1, 5))
        g = rng.normal(size=(m, d))
        sol = min_norm_weights(g)
        gap = float(sol.norm**2) - grid_min_norm_value(g, 1e-3)
        worst = max(worst, gap)
    return OracleCheck("min_norm_vs_simplex_grid", worst <= 1e-6, f"max objective gap {worst:.2e}")


def _check_dual_kkt(rng) -> OracleCheck:
    worst = 0.0
    solved = 0
    for _ in range(500):
        m = int(rng.integers(1, 4))
        d = int(rng.integers(2, 4))
        eps = rng.normal(size=d)
        g = rng.normal(size=(m, d))
        phi = float(rng.uniform(0.05, 1.0))
        try:
            lam = solve_dual(eps, g, phi)
        except DualUnboundedError:
            continue
        solved += 1
        out = eps + lam @ g
        resid = max(
            float(np.max(-lam, initial=0.0)),
            float(np.max(phi - g @ out, initial=0.0)),
            float(np.max(np.abs(lam * (g @ out - phi)), initial=0.0)),
        )
        worst = max(worst, resid)
    ok = worst <= 1e-6 and solved >= 400
    return OracleCheck("dual_kkt_residuals", ok, f"max residual {worst:.2e} over {solved} solved")


def _check_dual_grid(rng) -> OracleCheck:
    worst = 0.0
    n_done = 0
    while n_done < 8:
        m = int(rng.integers(1, 3))
        d = int(rng.integers(2, 4))
        eps = rng.normal(size=d)
        g = rng.normal(size=(m, d))
        g += np.sign(g) * 0.5  # keep gradients away from zero so lambda* stays small
        phi = float(rng.uniform(0.05, 0.5))
        try:
            lam = solve_dual(eps, g, phi)
        except DualUnboundedError:
            continue
        if np.any(lam > 9.0):
            continue
        gram = g @ g.T
        b = g @ eps
        val = -0.5 * float(lam @ gram @ lam) - float(lam @ b) + phi * float(lam.sum()) - 0.5 * float(eps @ eps)
        gap = abs(val - grid_dual_value(eps, g, phi))
        worst = max(worst, gap)
        n_done += 1
    return OracleCheck("dual_vs_grid_search", worst <= 1e-4, f"max objective gap {worst:.2e}")


def _check_gradients(rng) -> OracleCheck:
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        k = int(rng.integers(1, d + 1))
        mask = rng.choice(d, size=k, replace=False)
        obj = AnchorObjective(rng.normal(size=k), mask)
        x = rng.normal(size=d)
        fd = finite_difference_gradient(obj.value, x)
        an = obj.grad(x)
        rel = np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(rel))
    return OracleCheck("objective_grad_vs_fd", worst <= 1e-5, f"max rel err {worst:.2e}")


def _check_diversity(rng) -> OracleCheck:
    worst = 0.0
    for _ in range(20):
        d = 3
        objs = [AnchorObjective(rng.normal(size=d)) for _ in range(2)]
        objset = ObjectiveSet(objs, d)
        pos = rng.normal(size=(3, d))
        pop = Population(pos, step=0, cached_F=objset.eval_batch(pos))
        i = int(rng.integers(0, 3))

        def loss(xi):
            pts = pos.copy()
            pts[i] = xi
            f = objset.eval_batch(pts)
            total = 0.0
            for p in range(3):
                for q in range(3):
                    if p != q:
                        total += 1.0 / float(((f[p] - f[q]) ** 2).sum())
            return total

        fd = finite_difference_gradient(loss, pos[i])
        an = diversity_gradient(pop, objset, i)
        rel = np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(rel))
    return OracleCheck("diversity_grad_vs_fd", worst <= 1e-5, f"max rel err {worst:.2e}")


def _check_hv3(rng) -> OracleCheck:
    failures = 0
    worst = 0.0
    for _ in range(50):
        pts = rng.random((int(rng.integers(3, 20)), 3))
        ref = np.ones(3)
        exact = metrics.hypervolume(pts, ref)
        mc, se = metrics.hypervolume_mc(pts, ref, n_samples=1_000_000, seed=int(rng.integers(1 << 30)))
        dev = abs(exact - mc)
        worst = max(worst, dev / max(se, 1e-12))
        if dev > 3.0 * max(se, 1e-12):
            failures += 1
    return OracleCheck("hv3_exact_vs_monte_carlo", failures == 0, f"worst deviation {worst:.2f} SE")


def _check_emd(rng) -> OracleCheck:
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 8))
        a = rng.normal(size=(n, 2))
        b = rng.normal(size=(n, 2))
        worst = max(worst, abs(metrics.emd(a, b) - brute_emd(a, b)))
    return OracleCheck("emd_vs_permutations", worst <= 1e-10, f"max diff {worst:.2e}")


def _check_pareto(rng) -> OracleCheck:
    ok = True
    for _ in range(50):
        pts = rng.normal(size=(200, 3))
        if pareto_filter(pts) != brute_pareto_filter(pts):
            ok = False
            break
    return OracleCheck("pareto_filter_vs_brute", ok, "exact index match" if ok else "mismatch")


def _check_proud_constraints(rng) -> OracleCheck:
    """Direction feasibility re-checked on random switched instances."""
    cfg = GuidanceConfig(method="proud", alpha=0.5, e_threshold=1e-9)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 4))
        m = int(rng.integers(1, 4))
        eps = rng.normal(size=d)
        g = rng.normal(size=(m, d))
        try:
            out = proud_direction(eps, g, cfg)
        except DualUnboundedError:
            continue
        if np.isfinite(out.phi):
            slack = g @ out.direction - out.phi
            worst = max(worst, float(np.max(-slack, initial=0.0)))
    return OracleCheck("proud_direction_feasibility", worst <= 1e-6, f"max violation {worst:.2e}")


def oracle_suite(seed: int = 0) -> list[OracleCheck]:
    """Run every brute-force oracle check; independent of the paths verified."""
    rng = np.random.default_rng(seed)
    return [
        _check_min_norm(rng),
        _check_dual_kkt(rng),
        _check_dual_grid(rng),
        _check_gradients(rng),
        _check_diversity(rng),
        _check_hv3(rng),
        _check_emd(rng),
        _check_pareto(rng),
        _check_proud_constraints(rng),
    ]
