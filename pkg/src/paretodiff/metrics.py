"""Evaluation metrics: hypervolume, assignment distance, likelihood quality.

Hypervolume follows the minimization convention: the Lebesgue measure of the
union of boxes [p, ref] over the point set, so points with any coordinate at
or beyond the reference contribute nothing. m = 2 and m = 3 are computed
exactly; higher dimensions fall back to seeded Monte Carlo with a reported
standard error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import engine
from .diffusion import GaussianMixtureManifold, log_density_batch
from .mgd import pareto_filter
from .objectives import ObjectiveSet
from .sampler import Population

__all__ = [
    "MetricReport",
    "hypervolume",
    "hypervolume_mc",
    "emd",
    "quality_scores",
    "report",
]


@dataclass(frozen=True)
class MetricReport:
    """Flat summary of one finished run."""

    hv: float
    hv_reference: tuple[float, ...]
    emd: float | None
    mean_front_distance: float
    mean_log_likelihood: float
    pct_stationary: float
    n_points: int
    spread: float


def _clip_points(points: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Drop points whose dominated box [p, ref] is empty."""
    keep = np.all(points < ref[None, :], axis=1)
    return points[keep]


def _hv2(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact 2-D sweep: sort by the first objective, sum staircase rectangles."""
    pts = _clip_points(points, ref)
    if pts.shape[0] == 0:
        return 0.0
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    running = np.minimum.accumulate(pts[:, 1])
    keep = np.ones(pts.shape[0], dtype=bool)
    keep[1:] = pts[1:, 1] < running[:-1]
    pts = pts[keep]
    rights = np.append(pts[1:, 0], ref[0])
    return float(((rights - pts[:, 0]) * (ref[1] - pts[:, 1])).sum())


class _Staircase:
    """Mutually non-dominated 2-D points with an incrementally maintained area."""

    def __init__(self, ref0: float, ref1: float):
        self.ref0 = ref0
        self.ref1 = ref1
        self.xs: list[float] = []
        self.ys: list[float] = []
        self.area = 0.0

    def insert(self, x: float, y: float) -> None:
        from bisect import bisect_left

        xs, ys = self.xs, self.ys
        pos = bisect_left(xs, x)
        if pos > 0 and ys[pos - 1] <= y:
            return  # dominated by the left neighbor
        if pos < len(xs) and xs[pos] == x and ys[pos] <= y:
            return
        end = pos
        delta = 0.0
        while end < len(xs) and ys[end] >= y:
            right = xs[end + 1] if end + 1 < len(xs) else self.ref0
            delta -= (right - xs[end]) * (self.ref1 - ys[end])
            end += 1
        if pos > 0:
            old_right = xs[pos] if pos < len(xs) else self.ref0
            delta -= (old_right - x) * (self.ref1 - ys[pos - 1])
        x_after = xs[end] if end < len(xs) else self.ref0
        delta += (x_after - x) * (self.ref1 - y)
        del xs[pos:end]
        del ys[pos:end]
        xs.insert(pos, x)
        ys.insert(pos, y)
        self.area += delta


def _hv3(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact 3-D hypervolume by sweeping the third objective over a staircase."""
    pts = _clip_points(points, ref)
    if pts.shape[0] == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0], pts[:, 2]))]
    stair = _Staircase(float(ref[0]), float(ref[1]))
    volume = 0.0
    z_cur = float(pts[0, 2])
    for x, y, z in pts:
        if z > z_cur:
            volume += stair.area * (z - z_cur)
            z_cur = float(z)
        stair.insert(float(x), float(y))
    volume += stair.area * (float(ref[2]) - z_cur)
    return float(volume)


def hypervolume(points, ref, n_samples: int = 1_000_000, seed: int = 0) -> float:
    """Dominated hypervolume of a point set w.r.t. a reference point.

    Exact for one to three objectives; Monte Carlo beyond that (see
    ``hypervolume_mc`` for the standard error).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(ref, dtype=float)
    if ref.ndim != 1 or pts.shape[1] != ref.size:
        raise ValueError("reference point dimension must match the points")
    m = ref.size
    if m == 1:
        good = pts[:, 0] < ref[0]
        return float(ref[0] - pts[good, 0].min()) if good.any() else 0.0
    if m == 2:
        return _hv2(pts, ref)
    if m == 3:
        return _hv3(pts, ref)
    return hypervolume_mc(points, ref, n_samples=n_samples, seed=seed)[0]


def hypervolume_mc(points, ref, n_samples: int = 1_000_000, seed: int = 0):
    """Monte Carlo hypervolume estimate; returns (value, standard_error)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(ref, dtype=float)
    pts = _clip_points(pts, ref)
    if pts.shape[0] == 0:
        return 0.0, 0.0
    pts = pts[pareto_filter(pts)]
    lo = pts.min(axis=0)
    vol = float(np.prod(ref - lo))
    rng = np.random.default_rng(seed)
    hit = 0
    chunk = 65_536
    remaining = int(n_samples)
    while remaining > 0:
        take = min(chunk, remaining)
        u = lo + (ref - lo) * rng.random((take, ref.size))
        dominated = np.zeros(take, dtype=bool)
        for p in pts:
            dominated |= np.all(u >= p[None, :], axis=1)
        hit += int(dominated.sum())
        remaining -= take
    p_hat = hit / n_samples
    se = vol * float(np.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n_samples))
    return vol * p_hat, se


def emd(generated, reference_front, max_points: int = 2000) -> float:
    """Mean optimal-assignment Euclidean cost between two equal-size sets."""
    a = np.atleast_2d(np.asarray(generated, dtype=float))
    b = np.atleast_2d(np.asarray(reference_front, dtype=float))
    if a.shape != b.shape:
        raise ValueError("sets must have equal size and dimension (subsample first)")
    if a.shape[0] > max_points:
        raise ValueError(f"assignment capped at {max_points} points, got {a.shape[0]}")
    cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def quality_scores(positions, model: GaussianMixtureManifold):
    """Ground-truth log-likelihood quality: (mean, per-sample array)."""
    scores = log_density_batch(model, np.atleast_2d(np.asarray(positions, dtype=float)))
    return float(scores.mean()), scores


def _even_subsample(arr: np.ndarray, k: int) -> np.ndarray:
    """Deterministic evenly spaced subsample of k rows."""
    n = arr.shape[0]
    if n <= k:
        return arr
    idx = (np.arange(k) * n) // k
    return arr[idx]


def report(
    pop: Population,
    objset: ObjectiveSet,
    model: GaussianMixtureManifold,
    reference_point,
    emd_enabled: bool = True,
    front_points: int = 2000,
    stationarity_tol: float = 0.06,
) -> MetricReport:
    """Assemble the metric summary for a finished run."""
    ref = np.asarray(reference_point, dtype=float)
    if ref.size != objset.n_objectives:
        raise ValueError("reference point dimension must match the objective count")
    f_values = pop.cached_F
    if f_values is None:
        f_values = objset.eval_batch(pop.positions)
    nd_idx = pareto_filter(f_values)
    nd = f_values[nd_idx]
    hv = hypervolume(nd, ref)

    emd_value = None
    if emd_enabled and objset.front is not None:
        front = objset.front.discretize(front_points)
        k = min(f_values.shape[0], front.shape[0], 2000)
        emd_value = emd(_even_subsample(f_values, k), _even_subsample(front, k))

    mean_fd = float("nan")
    if objset.front is not None:
        mean_fd = float(np.mean([objset.front_distance(y) for y in f_values]))

    mean_ll, _ = quality_scores(pop.positions, model)

    grads = objset.grad_batch(pop.positions)
    _, _, norms = engine.min_norm_batch(grads)
    pct = float(np.mean(norms <= stationarity_tol))

    spread = 0.0
    if nd.shape[0] > 1:
        sub = _even_subsample(nd, 4096)
        d2 = ((sub[:, None, :] - sub[None, :, :]) ** 2).sum(axis=2)
        spread = float(np.sqrt(d2.max()))

    return MetricReport(
        hv=hv,
        hv_reference=tuple(float(r) for r in ref),
        emd=emd_value,
        mean_front_distance=mean_fd,
        mean_log_likelihood=mean_ll,
        pct_stationary=pct,
        n_points=int(f_values.shape[0]),
        spread=spread,
    )
