"""Vectorized per-step direction computation for particle populations.

This NumPy backend mirrors the single-point operations in ``mgd`` and
``guidance`` exactly (same formulas, same tie-breaking, same tolerances) but
runs them across all particles at once. The optional compiled extension in
``_speedups`` implements the same computation fused into C loops; the sampler
picks between them at import time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .guidance import (
    DIVERSITY_METHODS,
    METHOD_DM_MMGD,
    METHOD_DM_SINGLE,
    METHOD_M_MGD,
    METHOD_MPLUS1_MGD,
    METHOD_PROUD,
    GuidanceConfig,
)

__all__ = ["DirectionsResult", "directions_numpy", "min_norm_batch", "diversity_batch"]

_PAIR_GUARD = 1e-8  # pairs closer than this in objective space contribute zero


@dataclass
class DirectionsResult:
    """Per-particle directions plus switch diagnostics for one reverse step."""

    directions: np.ndarray  # (n, d)
    mgd_norms: np.ndarray  # (n,)
    phis: np.ndarray  # (n,), nan for baselines without a switch
    multipliers: np.ndarray  # (n, m)
    dual_fallbacks: np.ndarray  # (n,) bool


def min_norm_batch(grads: np.ndarray, max_iter: int | None = None):
    """Batched min-norm convex combination; returns (direction, weights, norm)."""
    n, m, d = grads.shape
    if m == 1:
        v = grads[:, 0, :].copy()
        return v, np.ones((n, 1)), np.linalg.norm(v, axis=1)
    if m == 2:
        g1, g2 = grads[:, 0, :], grads[:, 1, :]
        diff = g1 - g2
        den = (diff * diff).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w1 = (g2 * (g2 - g1)).sum(axis=1) / den
        w1 = np.where(den > 0.0, np.clip(w1, 0.0, 1.0), 0.5)
        w = np.stack([w1, 1.0 - w1], axis=1)
        v = w[:, :, None] * grads
        v = v.sum(axis=1)
        return v, w, np.linalg.norm(v, axis=1)
    gram = np.einsum("nid,njd->nij", grads, grads)
    if max_iter is None:
        max_iter = 10 * m * d
    w = _fw_simplex_batch(gram, max_iter)
    v = np.einsum("nm,nmd->nd", w, grads)
    return v, w, np.linalg.norm(v, axis=1)


def _fw_simplex_batch(gram: np.ndarray, max_iter: int) -> np.ndarray:
    """Batched away-step Frank-Wolfe matching ``mgd._frank_wolfe_simplex``."""
    n, m, _ = gram.shape
    diag = np.einsum("nii->ni", gram)
    w = np.zeros((n, m))
    w[np.arange(n), np.argmin(diag, axis=1)] = 1.0
    trace = diag.sum(axis=1)
    gap_tol = 1e-10 * np.maximum(trace, 1e-300)
    live = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(live)[0]
        if idx.size == 0:
            break
        gw = w[idx]
        gg = gram[idx]
        q = np.einsum("nij,nj->ni", gg, gw)
        f = np.einsum("ni,ni->n", gw, q)
        s = np.argmin(q, axis=1)
        fw_gap = f - q[np.arange(idx.size), s]
        done = 2.0 * fw_gap <= gap_tol[idx]
        a = np.argmax(np.where(gw > 0.0, q, -np.inf), axis=1)
        away_gap = q[np.arange(idx.size), a] - f
        use_fw = fw_gap >= away_gap
        direction = np.where(use_fw[:, None], -gw, gw)
        rows = np.arange(idx.size)
        direction[rows, np.where(use_fw, s, a)] += np.where(use_fw, 1.0, -1.0)
        wa = gw[rows, a]
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma_max = np.where(use_fw, 1.0, np.where(wa < 1.0, wa / (1.0 - wa), np.inf))
        slope = np.einsum("ni,ni->n", direction, q)
        curv = np.einsum("ni,ni->n", direction, np.einsum("nij,nj->ni", gg, direction))
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.where(curv > 0.0, np.clip(-slope / np.maximum(curv, 1e-300), 0.0, None), gamma_max)
        gamma = np.minimum(gamma, gamma_max)
        stopped = done | ~np.isfinite(gamma) | (gamma <= 0.0)
        new_w = gw + gamma[:, None] * direction
        new_w = np.maximum(new_w, 0.0)
        new_w /= new_w.sum(axis=1, keepdims=True)
        w[idx[~stopped]] = new_w[~stopped]
        live[idx[stopped]] = False
    return _support_polish_batch(gram, w)


def _support_polish_batch(gram: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched twin of mgd._support_polish, grouped by support pattern."""
    n, m = w.shape
    support = w > 0.0
    counts = support.sum(axis=1)
    codes = support @ (1 << np.arange(m))
    out = w.copy()
    for code in np.unique(codes[counts >= 2]):
        rows = np.nonzero(codes == code)[0]
        idx = np.nonzero((code >> np.arange(m)) & 1)[0]
        sub = gram[np.ix_(rows, idx, idx)]
        try:
            u = np.linalg.solve(sub, np.ones((rows.size, idx.size, 1)))[..., 0]
        except np.linalg.LinAlgError:
            u = np.full((rows.size, idx.size), np.nan)
            for r in range(rows.size):
                try:
                    u[r] = np.linalg.solve(sub[r], np.ones(idx.size))
                except np.linalg.LinAlgError:
                    pass
        total = u.sum(axis=1)
        ok = np.isfinite(total) & (total > 0.0) & np.all(u >= 0.0, axis=1) & np.all(np.isfinite(u), axis=1)
        if not ok.any():
            continue
        cand = np.zeros((rows.size, m))
        cand[:, idx] = u / np.where(ok, total, 1.0)[:, None]
        f_old = np.einsum("ni,nij,nj->n", w[rows], gram[rows], w[rows])
        f_new = np.einsum("ni,nij,nj->n", cand, gram[rows], cand)
        take = ok & (f_new <= f_old)
        out[rows[take]] = cand[take]
    return out


def _dual_batch(eps, grads, phi):
    """Exact batched active-set dual for m <= 3, mirroring guidance._dual_enumerate.

    Returns (lam (n, m), found (n,) bool).
    """
    n, m, _ = grads.shape
    gram = np.einsum("nid,njd->nij", grads, grads)
    b = np.einsum("nid,nd->ni", grads, eps)
    feas_tol = 1e-9 * (1.0 + np.abs(phi) + np.abs(b).max(axis=1, initial=0.0))
    best = np.zeros((n, m))
    best_obj = np.full(n, -np.inf)
    found = np.zeros(n, dtype=bool)

    def consider(lam, valid):
        nonlocal best, best_obj, found
        slack = np.einsum("nij,nj->ni", gram, lam) + b
        ok = valid & np.all(slack >= phi[:, None] - feas_tol[:, None], axis=1)
        obj = (
            -0.5 * np.einsum("ni,nij,nj->n", lam, gram, lam)
            - np.einsum("ni,ni->n", lam, b)
            + phi * lam.sum(axis=1)
        )
        upd = ok & (obj > best_obj)
        best[upd] = lam[upd]
        best_obj[upd] = obj[upd]
        found |= ok

    from itertools import combinations

    for size in range(m + 1):
        for active in combinations(range(m), size):
            lam = np.zeros((n, m))
            if not active:
                consider(lam, np.ones(n, dtype=bool))
                continue
            idx = list(active)
            sub = gram[:, idx][:, :, idx]
            rhs = phi[:, None] - b[:, idx]
            sol, solvable = _solve_small_batch(sub, rhs)
            valid = solvable & np.all(sol >= -1e-12, axis=1)
            lam[:, idx] = np.where(valid[:, None], np.maximum(sol, 0.0), 0.0)
            consider(lam, valid)
    return best, found


def _solve_small_batch(a, rhs):
    """Vectorized Cramer solve for batched 1x1..3x3 systems."""
    k = rhs.shape[1]
    scale = np.abs(a).reshape(a.shape[0], -1).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == 1:
            det = a[:, 0, 0]
            ok = np.abs(det) > 1e-300
            sol = rhs / np.where(ok, det, 1.0)[:, None]
            return np.where(ok[:, None], sol, 0.0), ok
        if k == 2:
            det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
            ok = np.abs(det) > 1e-14 * scale * scale
            safe = np.where(ok, det, 1.0)
            x0 = (rhs[:, 0] * a[:, 1, 1] - a[:, 0, 1] * rhs[:, 1]) / safe
            x1 = (a[:, 0, 0] * rhs[:, 1] - rhs[:, 0] * a[:, 1, 0]) / safe
            sol = np.stack([x0, x1], axis=1)
            return np.where(ok[:, None], sol, 0.0), ok
        c00 = a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1]
        c01 = a[:, 1, 2] * a[:, 2, 0] - a[:, 1, 0] * a[:, 2, 2]
        c02 = a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0]
        det = a[:, 0, 0] * c00 + a[:, 0, 1] * c01 + a[:, 0, 2] * c02
        ok = np.abs(det) > 1e-14 * scale**3
        safe = np.where(ok, det, 1.0)
        x0 = (
            rhs[:, 0] * c00
            + a[:, 0, 1] * (a[:, 1, 2] * rhs[:, 2] - rhs[:, 1] * a[:, 2, 2])
            + a[:, 0, 2] * (rhs[:, 1] * a[:, 2, 1] - a[:, 1, 1] * rhs[:, 2])
        ) / safe
        x1 = (
            a[:, 0, 0] * (rhs[:, 1] * a[:, 2, 2] - a[:, 1, 2] * rhs[:, 2])
            + rhs[:, 0] * c01
            + a[:, 0, 2] * (a[:, 1, 0] * rhs[:, 2] - rhs[:, 1] * a[:, 2, 0])
        ) / safe
        x2 = (
            a[:, 0, 0] * (a[:, 1, 1] * rhs[:, 2] - rhs[:, 1] * a[:, 2, 1])
            + a[:, 0, 1] * (rhs[:, 1] * a[:, 2, 0] - a[:, 1, 0] * rhs[:, 2])
            + rhs[:, 0] * c02
        ) / safe
        sol = np.stack([x0, x1, x2], axis=1)
        return np.where(ok[:, None], sol, 0.0), ok


def diversity_batch(f_values: np.ndarray, grads: np.ndarray, cap: float) -> np.ndarray:
    """Pairwise inverse-square repulsion gradient, capped per particle.

    Raw interaction: sum_j (-4 / ||dF_ij||^4) J_i^T dF_ij, with pairs closer
    than 1e-8 in objective space contributing zero. The per-particle norm cap
    keeps the near-singular interaction from destabilizing crowded
    populations; it is the only departure from the raw formula.
    """
    n, m = f_values.shape
    out = np.empty_like(grads[:, 0, :])
    chunk = max(1, int(2**22 // max(n * m, 1)))
    for start in range(0, n, chunk):
        blk = f_values[start : start + chunk]  # (b, m)
        diff = blk[:, None, :] - f_values[None, :, :]  # (b, n, m)
        n2 = (diff * diff).sum(axis=2)
        with np.errstate(divide="ignore"):
            wts = np.where(n2 >= _PAIR_GUARD**2, -4.0 / (n2 * n2), 0.0)
        force = np.einsum("bj,bjm->bm", wts, diff)
        out[start : start + chunk] = np.einsum("bm,bmd->bd", force, grads[start : start + chunk])
    norms = np.linalg.norm(out, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scales = np.where(norms > cap, cap / norms, 1.0)
    return out * scales[:, None]


def directions_numpy(
    eps: np.ndarray | None,
    f_values: np.ndarray,
    grads: np.ndarray,
    cfg: GuidanceConfig,
) -> DirectionsResult:
    """Per-particle update directions for one reverse step (NumPy backend)."""
    n, m, d = grads.shape
    v, _, norms = min_norm_batch(grads)
    phis = np.full(n, np.nan)
    lams = np.zeros((n, m))
    fallbacks = np.zeros(n, dtype=bool)

    if cfg.method == METHOD_PROUD:
        phis = np.where(norms > cfg.e_threshold, cfg.alpha * norms, -np.inf)
        directions = eps.copy()
        act = np.isfinite(phis)
        if act.any():
            if m <= 3:
                lam_a, found = _dual_batch(eps[act], grads[act], phis[act])
            else:
                lam_a, found = _dual_loop(eps[act], grads[act], phis[act])
            lams[act] = lam_a
            blend = eps[act] + np.einsum("nm,nmd->nd", lam_a, grads[act])
            blend[~found] = v[act][~found]
            directions[act] = blend
            fallbacks[np.nonzero(act)[0][~found]] = True
    elif cfg.method == METHOD_DM_MMGD:
        directions = eps + cfg.fixed_lambda * v
    elif cfg.method == METHOD_DM_SINGLE:
        w = cfg.weights_for(m)
        directions = eps + cfg.fixed_lambda * np.einsum("m,nmd->nd", w, grads)
    elif cfg.method == METHOD_MPLUS1_MGD:
        stacked = np.concatenate([grads, eps[:, None, :]], axis=1)
        directions, _, _ = min_norm_batch(stacked)
    elif cfg.method == METHOD_M_MGD:
        directions = v.copy()
    else:  # pragma: no cover - config validation rejects unknown methods
        raise ValueError(f"unknown method {cfg.method!r}")

    if cfg.method in DIVERSITY_METHODS and cfg.gamma > 0.0 and n >= 2:
        directions = directions + cfg.gamma * diversity_batch(f_values, grads, cfg.diversity_cap)
    return DirectionsResult(directions, norms, phis, lams, fallbacks)


def _dual_loop(eps, grads, phi):
    """Per-particle dual solves for m > 3 (projected gradient ascent)."""
    from .guidance import DualUnboundedError, solve_dual

    n, m, _ = grads.shape
    lam = np.zeros((n, m))
    found = np.ones(n, dtype=bool)
    for i in range(n):
        try:
            lam[i] = solve_dual(eps[i], grads[i], float(phi[i]))
        except DualUnboundedError:
            found[i] = False
    return lam, found
