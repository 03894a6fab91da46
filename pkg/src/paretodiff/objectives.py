"""Differentiable property objectives with exact gradients and analytic fronts.

The benchmark objectives measure the mean squared deviation of a coordinate
subset from an anchor vector. With two or three anchors sharing a mask, the
Pareto set is the segment (resp. triangle) spanned by the anchors, so the
front is known exactly and front distances can be computed to machine
precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AnchorObjective",
    "ObjectiveSet",
    "SegmentFront",
    "TriangleFront",
    "two_anchor_benchmark",
    "three_anchor_benchmark",
]


@dataclass(frozen=True)
class AnchorObjective:
    """Mean squared deviation from ``anchor`` over the coordinate subset ``mask``.

    ``mask`` is a sequence of unique coordinate indices; ``None`` means all
    coordinates. Value is averaged over the subset so objective scales do not
    grow with dimension.
    """

    anchor: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float)
        object.__setattr__(self, "anchor", anchor)
        if anchor.ndim != 1 or anchor.size < 1:
            raise ValueError("anchor must be a non-empty vector")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=int)
            object.__setattr__(self, "mask", mask)
            if mask.ndim != 1 or mask.size != anchor.size:
                raise ValueError("mask must list one index per anchor entry")
            if np.unique(mask).size != mask.size:
                raise ValueError("mask indices must be unique")
            if np.any(mask < 0):
                raise ValueError("mask indices must be non-negative")

    def indices(self, dim: int) -> np.ndarray:
        if self.mask is None:
            if self.anchor.size != dim:
                raise ValueError("anchor dimension does not match ambient dimension")
            return np.arange(dim)
        if np.any(self.mask >= dim):
            raise ValueError("mask index out of bounds")
        return self.mask

    def value(self, x: np.ndarray) -> float:
        idx = self.indices(x.shape[-1])
        d = x[..., idx] - self.anchor
        return (d**2).mean(axis=-1)

    def grad(self, x: np.ndarray) -> np.ndarray:
        idx = self.indices(x.shape[-1])
        g = np.zeros_like(x)
        g[..., idx] = (2.0 / idx.size) * (x[..., idx] - self.anchor)
        return g


class ObjectiveSet:
    """Ordered collection of objectives over a shared ambient dimension."""

    def __init__(self, objectives, dim: int, front=None):
        if not objectives:
            raise ValueError("need at least one objective")
        self.objectives = list(objectives)
        self.dim = int(dim)
        self.front = front
        for obj in self.objectives:
            if isinstance(obj, AnchorObjective):
                obj.indices(self.dim)  # validates bounds

    @property
    def n_objectives(self) -> int:
        return len(self.objectives)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point dimension {x.shape[-1]} != {self.dim}")
        return x

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Objective values at a single point, shape (m,)."""
        x = self._check(x)
        return np.array([obj.value(x) for obj in self.objectives], dtype=float)

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Objective gradients at a single point, shape (m, d)."""
        x = self._check(x)
        return np.stack([obj.grad(x) for obj in self.objectives])

    def eval_batch(self, x: np.ndarray) -> np.ndarray:
        """Objective values for a batch of points, shape (n, m)."""
        x = self._check(np.atleast_2d(x))
        return np.stack([obj.value(x) for obj in self.objectives], axis=1)

    def grad_batch(self, x: np.ndarray) -> np.ndarray:
        """Objective gradients for a batch, shape (n, m, d)."""
        x = self._check(np.atleast_2d(x))
        return np.stack([obj.grad(x) for obj in self.objectives], axis=1)

    def front_distance(self, y: np.ndarray) -> float:
        """Euclidean distance in objective space from y to the analytic front."""
        if self.front is None:
            raise ValueError("objective set has no analytic front description")
        return self.front.distance(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class SegmentFront:
    """Front of two mean-squared-anchor objectives: image of the anchor segment.

    Parametrized by kappa in [0, 1]: F(kappa) = (G (1-kappa)^2, G kappa^2)
    with G the mean squared anchor gap. Distances are found from the cubic
    stationarity condition, solved exactly.
    """

    gap: float  # mean squared per-coordinate anchor difference

    def __post_init__(self):
        if self.gap <= 0.0:
            raise ValueError("anchors must be distinct")

    def points(self, kappa: np.ndarray) -> np.ndarray:
        kappa = np.asarray(kappa, dtype=float)
        return np.stack([self.gap * (1.0 - kappa) ** 2, self.gap * kappa**2], axis=-1)

    def discretize(self, n: int) -> np.ndarray:
        return self.points(np.linspace(0.0, 1.0, n))

    def distance(self, y: np.ndarray) -> float:
        if y.shape != (2,):
            raise ValueError("expected a 2-vector of objective values")
        g = self.gap
        coeffs = [2.0 * g, -3.0 * g, 3.0 * g - y[0] - y[1], y[0] - g]
        roots = np.roots(coeffs)
        cands = [0.0, 1.0]
        for r in roots:
            if abs(r.imag) < 1e-9 and -1e-9 <= r.real <= 1.0 + 1e-9:
                cands.append(min(max(r.real, 0.0), 1.0))
        pts = self.points(np.array(cands))
        return float(np.sqrt(((pts - y[None, :]) ** 2).sum(axis=1)).min())


@dataclass(frozen=True)
class TriangleFront:
    """Front of three mean-squared-anchor objectives: image of the anchor triangle.

    In the plane spanned by the anchors the objectives reduce to scaled
    squared distances to three planar points, so distance queries split
    exactly: edge minima come from cubic stationarity conditions and interior
    minima from damped Newton started at a cached grid point. Points on the
    front measure as zero to machine precision.
    """

    anchors: np.ndarray  # (3, k) anchor vectors over the shared mask
    grid_per_edge: int = 60
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float)
        object.__setattr__(self, "anchors", anchors)
        if anchors.shape[0] != 3:
            raise ValueError("need exactly three anchors")

    def _values(self, bary: np.ndarray) -> np.ndarray:
        """Objective values for barycentric points, shape (n, 3)."""
        x = bary @ self.anchors  # (n, k)
        diff = x[:, None, :] - self.anchors[None, :, :]
        return (diff**2).mean(axis=2)

    def _reduced(self):
        """Planar anchor coordinates: u_i in R^2 with F_i(u) = |u - u_i|^2 / k."""
        if "reduced" not in self._cache:
            a = self.anchors
            e1 = a[1] - a[0]
            e2 = a[2] - a[0]
            b1 = e1 / max(np.linalg.norm(e1), 1e-300)
            e2p = e2 - (e2 @ b1) * b1
            n2 = np.linalg.norm(e2p)
            rank2 = n2 > 1e-12 * max(np.linalg.norm(e2), 1.0)
            b2 = e2p / n2 if rank2 else np.zeros_like(e2p)
            basis = np.stack([b1, b2])  # (2, k)
            planar = (a - a[0]) @ basis.T  # (3, 2)
            self._cache["reduced"] = (planar, bool(rank2))
        return self._cache["reduced"]

    def _grid(self):
        if "grid" not in self._cache:
            n = self.grid_per_edge
            ij = [(i, j) for i in range(n + 1) for j in range(n + 1 - i)]
            ij = np.asarray(ij, dtype=float) / n
            bary = np.column_stack([ij[:, 0], ij[:, 1], 1.0 - ij.sum(axis=1)])
            planar, _ = self._reduced()
            self._cache["grid"] = (bary @ planar, self._values(bary))
        return self._cache["grid"]

    def discretize(self, n: int) -> np.ndarray:
        """About n front points on a uniform barycentric grid."""
        per_edge = max(int(np.ceil((np.sqrt(8.0 * n + 1) - 3.0) / 2.0)), 1)
        ij = [(i, j) for i in range(per_edge + 1) for j in range(per_edge + 1 - i)]
        ij = np.asarray(ij, dtype=float) / per_edge
        bary = np.column_stack([ij[:, 0], ij[:, 1], 1.0 - ij.sum(axis=1)])
        return self._values(bary)

    def _h(self, u: np.ndarray, planar: np.ndarray, y: np.ndarray) -> float:
        k = self.anchors.shape[1]
        f = ((u[None, :] - planar) ** 2).sum(axis=1) / k
        return float(((f - y) ** 2).sum())

    def _edge_candidates(self, planar, y):
        """Exact minima of the squared residual along each triangle edge."""
        k = self.anchors.shape[1]
        best = []
        for ia, ib in ((0, 1), (1, 2), (2, 0)):
            va, vb = planar[ia], planar[ib]
            step = vb - va
            a_coef = float(step @ step) / k
            poly = np.zeros(4)
            for i in range(3):
                b_coef = 2.0 * float((va - planar[i]) @ step) / k
                c_coef = float((va - planar[i]) @ (va - planar[i])) / k - y[i]
                poly += np.polymul([a_coef, b_coef, c_coef], [2.0 * a_coef, b_coef])
            cands = [0.0, 1.0]
            for r in np.roots(poly):
                if abs(r.imag) < 1e-9 and -1e-9 <= r.real <= 1.0 + 1e-9:
                    cands.append(min(max(r.real, 0.0), 1.0))
            for s in cands:
                best.append(va + s * step)
        return best

    def _newton_interior(self, u0, planar, y):
        """Damped Newton on the unconstrained planar residual."""
        k = self.anchors.shape[1]
        u = u0.copy()
        h = self._h(u, planar, y)
        for _ in range(60):
            diff = u[None, :] - planar  # (3, 2)
            f = (diff**2).sum(axis=1) / k
            r = f - y
            grad = (4.0 / k) * (r[:, None] * diff).sum(axis=0)
            hess = (8.0 / (k * k)) * diff.T @ diff + (4.0 / k) * r.sum() * np.eye(2)
            try:
                delta = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                delta = grad
            step = 1.0
            improved = False
            for _ in range(40):
                cand = u - step * delta
                h_new = self._h(cand, planar, y)
                if h_new < h:
                    u, h = cand, h_new
                    improved = True
                    break
                step *= 0.5
            if not improved or np.linalg.norm(step * delta) < 1e-15:
                break
        return u

    def distance(self, y: np.ndarray) -> float:
        if y.shape != (3,):
            raise ValueError("expected a 3-vector of objective values")
        planar, rank2 = self._reduced()
        grid_u, grid_f = self._grid()
        d2 = ((grid_f - y[None, :]) ** 2).sum(axis=1)
        u0 = grid_u[int(np.argmin(d2))]
        candidates = [u0]
        candidates += self._edge_candidates(planar, y)
        if rank2:
            u_star = self._newton_interior(u0, planar, y)
            if _in_triangle(u_star, planar):
                candidates.append(u_star)
        h_best = min(self._h(u, planar, y) for u in candidates)
        return float(np.sqrt(h_best))


def _in_triangle(u: np.ndarray, planar: np.ndarray, tol: float = 1e-9) -> bool:
    """Barycentric membership test for a planar point."""
    t = np.column_stack([planar[1] - planar[0], planar[2] - planar[0]])
    try:
        ab = np.linalg.solve(t, u - planar[0])
    except np.linalg.LinAlgError:
        return False
    return bool(ab[0] >= -tol and ab[1] >= -tol and ab.sum() <= 1.0 + tol)


def two_anchor_benchmark(dim: int, high: float = 1.0, low: float = 0.5, mask=None) -> ObjectiveSet:
    """The two-anchor benchmark: anchors at ``high`` and ``low`` on all masked coords."""
    idx = np.arange(dim) if mask is None else np.asarray(mask, dtype=int)
    a = np.full(idx.size, float(high))
    b = np.full(idx.size, float(low))
    objs = [AnchorObjective(a, None if mask is None else idx),
            AnchorObjective(b, None if mask is None else idx)]
    gap = float(((a - b) ** 2).mean())
    return ObjectiveSet(objs, dim, front=SegmentFront(gap))


def three_anchor_benchmark(dim: int, level: float = 0.5, mask=None) -> ObjectiveSet:
    """Three anchors mirroring the black / dark-red / dark-yellow construction.

    Coordinates are grouped into three interleaved channels; anchor one is all
    zeros, anchor two sets channel 0 to ``level``, anchor three sets channels
    0 and 1 to ``level``.
    """
    idx = np.arange(dim) if mask is None else np.asarray(mask, dtype=int)
    k = idx.size
    channel = np.arange(k) % 3
    a = np.zeros(k)
    b = np.where(channel == 0, level, 0.0)
    c = np.where(channel <= 1, level, 0.0)
    objs = [AnchorObjective(v, None if mask is None else idx) for v in (a, b, c)]
    return ObjectiveSet(objs, dim, front=TriangleFront(np.stack([a, b, c])))
