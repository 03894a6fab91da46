# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-step kernel: fused score, gradients, min-norm, dual and diversity.

Mirrors ``engine.directions_numpy`` (same formulas, tolerances and
tie-breaking) for the fast path: Gaussian-mixture manifold, anchor objectives,
at most three objectives. The NumPy backend remains the reference; parity is
pinned by tests to ~1e-12, the residue of differing libm/SIMD transcendentals.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, exp, fabs, isfinite, log, sqrt

from .engine import DirectionsResult

cnp.import_array()

cdef double PAIR_GUARD2 = 1e-16  # squared objective-distance guard
cdef double TWO_PI = 6.283185307179586476925286766559


cdef int _gauss_solve(double* a, double* rhs, int n) noexcept:
    """In-place pivoted Gaussian elimination for n <= 4; 0 on singular."""
    cdef int i, j, k, piv
    cdef double best, factor, tmp
    for k in range(n):
        piv = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > best:
                best = fabs(a[i * n + k])
                piv = i
        if best < 1e-300:
            return 0
        if piv != k:
            for j in range(n):
                tmp = a[k * n + j]
                a[k * n + j] = a[piv * n + j]
                a[piv * n + j] = tmp
            tmp = rhs[k]
            rhs[k] = rhs[piv]
            rhs[piv] = tmp
        for i in range(k + 1, n):
            factor = a[i * n + k] / a[k * n + k]
            for j in range(k, n):
                a[i * n + j] -= factor * a[k * n + j]
            rhs[i] -= factor * rhs[k]
    for k in range(n - 1, -1, -1):
        tmp = rhs[k]
        for j in range(k + 1, n):
            tmp -= a[k * n + j] * rhs[j]
        rhs[k] = tmp / a[k * n + k]
    return 1


cdef void _support_polish(double* gram, int q, double* w) noexcept:
    """Exact solve on the current support, kept when feasible and improving."""
    cdef int idx[4]
    cdef double sub[16]
    cdef double rhs[4]
    cdef double cand[4]
    cdef int k = 0, i, j
    cdef double total, f_old, f_new
    for i in range(q):
        if w[i] > 0.0:
            idx[k] = i
            k += 1
    if k < 2:
        return
    for i in range(k):
        rhs[i] = 1.0
        for j in range(k):
            sub[i * k + j] = gram[idx[i] * q + idx[j]]
    if not _gauss_solve(sub, rhs, k):
        return
    total = 0.0
    for i in range(k):
        if rhs[i] < 0.0 or not isfinite(rhs[i]):
            return
        total += rhs[i]
    if not isfinite(total) or total <= 0.0:
        return
    for i in range(q):
        cand[i] = 0.0
    for i in range(k):
        cand[idx[i]] = rhs[i] / total
    f_old = 0.0
    f_new = 0.0
    for i in range(q):
        for j in range(q):
            f_old += w[i] * gram[i * q + j] * w[j]
            f_new += cand[i] * gram[i * q + j] * cand[j]
    if f_new <= f_old:
        for i in range(q):
            w[i] = cand[i]


cdef int _fw_simplex(double* gram, int q, int max_iter, double* w) noexcept:
    """Away-step Frank-Wolfe on the simplex for min w^T gram w."""
    cdef int i, j, it, s, a, best
    cdef double trace, gap_tol, f, qs, qa, best_val, wa, gamma_max, slope, curv, gamma, total
    cdef double qv[4]
    cdef double direction[4]
    best = 0
    for i in range(1, q):
        if gram[i * q + i] < gram[best * q + best]:
            best = i
    for i in range(q):
        w[i] = 0.0
    w[best] = 1.0
    trace = 0.0
    for i in range(q):
        trace += gram[i * q + i]
    gap_tol = 1e-10 * (trace if trace > 1e-300 else 1e-300)
    for it in range(max_iter):
        f = 0.0
        for i in range(q):
            qv[i] = 0.0
            for j in range(q):
                qv[i] += gram[i * q + j] * w[j]
        for i in range(q):
            f += w[i] * qv[i]
        s = 0
        for i in range(1, q):
            if qv[i] < qv[s]:
                s = i
        if 2.0 * (f - qv[s]) <= gap_tol:
            break
        a = -1
        for i in range(q):
            if w[i] > 0.0 and (a < 0 or qv[i] > qv[a]):
                a = i
        if f - qv[s] >= qv[a] - f:
            for i in range(q):
                direction[i] = -w[i]
            direction[s] += 1.0
            gamma_max = 1.0
        else:
            for i in range(q):
                direction[i] = w[i]
            direction[a] -= 1.0
            wa = w[a]
            gamma_max = wa / (1.0 - wa) if wa < 1.0 else INFINITY
        slope = 0.0
        for i in range(q):
            slope += direction[i] * qv[i]
        curv = 0.0
        for i in range(q):
            for j in range(q):
                curv += direction[i] * gram[i * q + j] * direction[j]
        if curv > 0.0:
            gamma = -slope / curv
            if gamma < 0.0:
                gamma = 0.0
            if gamma > gamma_max:
                gamma = gamma_max
        else:
            gamma = gamma_max
        if not isfinite(gamma) or gamma <= 0.0:
            break
        total = 0.0
        for i in range(q):
            w[i] += gamma * direction[i]
            if w[i] < 0.0:
                w[i] = 0.0
            total += w[i]
        for i in range(q):
            w[i] /= total
    _support_polish(gram, q, w)
    return 0


cdef int _solve_subset(double* gram, double* rhs_all, int m, int bits, double* lam) noexcept:
    """Cramer solve of the active subset encoded in ``bits``; 0 on singular."""
    cdef int idx[3]
    cdef int k = 0, i, j
    cdef double a[9]
    cdef double rhs[3]
    cdef double det, scale, c00, c01, c02
    for i in range(m):
        lam[i] = 0.0
        if bits & (1 << i):
            idx[k] = i
            k += 1
    if k == 0:
        return 1
    for i in range(k):
        rhs[i] = rhs_all[idx[i]]
        for j in range(k):
            a[i * k + j] = gram[idx[i] * m + idx[j]]
    scale = 0.0
    for i in range(k * k):
        if fabs(a[i]) > scale:
            scale = fabs(a[i])
    if k == 1:
        det = a[0]
        if fabs(det) < 1e-300:
            return 0
        lam[idx[0]] = rhs[0] / det
        return 1
    if k == 2:
        det = a[0] * a[3] - a[1] * a[2]
        if fabs(det) <= 1e-14 * scale * scale:
            return 0
        lam[idx[0]] = (rhs[0] * a[3] - a[1] * rhs[1]) / det
        lam[idx[1]] = (a[0] * rhs[1] - rhs[0] * a[2]) / det
        return 1
    c00 = a[4] * a[8] - a[5] * a[7]
    c01 = a[5] * a[6] - a[3] * a[8]
    c02 = a[3] * a[7] - a[4] * a[6]
    det = a[0] * c00 + a[1] * c01 + a[2] * c02
    if fabs(det) <= 1e-14 * scale * scale * scale:
        return 0
    lam[idx[0]] = (rhs[0] * c00
                   + a[1] * (a[5] * rhs[2] - rhs[1] * a[8])
                   + a[2] * (rhs[1] * a[7] - a[4] * rhs[2])) / det
    lam[idx[1]] = (a[0] * (rhs[1] * a[8] - a[5] * rhs[2])
                   + rhs[0] * c01
                   + a[2] * (a[3] * rhs[2] - rhs[1] * a[6])) / det
    lam[idx[2]] = (a[0] * (a[4] * rhs[2] - rhs[1] * a[7])
                   + a[1] * (rhs[1] * a[6] - a[3] * rhs[2])
                   + rhs[0] * c02) / det
    return 1


cdef int _dual_enumerate(double* gram, double* b, double phi, int m, double* lam_out) noexcept:
    """Active-set enumeration mirroring guidance._dual_enumerate; 0 when unbounded."""
    cdef int order1[2]
    cdef int order2[4]
    cdef int order3[8]
    cdef int* order
    cdef int n_sub, si, i, j, found
    cdef double feas_tol, bmax, best_obj, obj, slack
    cdef double lam[3]
    cdef double rhs[3]
    order1[0] = 0; order1[1] = 1
    order2[0] = 0; order2[1] = 1; order2[2] = 2; order2[3] = 3
    order3[0] = 0; order3[1] = 1; order3[2] = 2; order3[3] = 4
    order3[4] = 3; order3[5] = 5; order3[6] = 6; order3[7] = 7
    if m == 1:
        order = order1; n_sub = 2
    elif m == 2:
        order = order2; n_sub = 4
    else:
        order = order3; n_sub = 8
    bmax = 0.0
    for i in range(m):
        if fabs(b[i]) > bmax:
            bmax = fabs(b[i])
        rhs[i] = phi - b[i]
    feas_tol = 1e-9 * (1.0 + fabs(phi) + bmax)
    best_obj = -INFINITY
    found = 0
    for si in range(n_sub):
        if not _solve_subset(gram, rhs, m, order[si], lam):
            continue
        ok = 1
        for i in range(m):
            if lam[i] < -1e-12:
                ok = 0
                break
        if not ok:
            continue
        for i in range(m):
            if lam[i] < 0.0:
                lam[i] = 0.0
        obj = 0.0
        for i in range(m):
            slack = b[i]
            for j in range(m):
                slack += gram[i * m + j] * lam[j]
            if slack < phi - feas_tol:
                ok = 0
                break
            obj += -0.5 * lam[i] * (slack - b[i]) - lam[i] * b[i] + phi * lam[i]
        if not ok:
            continue
        found = 1
        if obj > best_obj:
            best_obj = obj
            for i in range(m):
                lam_out[i] = lam[i]
    return found


def step_directions(
    double[:, ::1] positions,
    double[::1] mix_w,
    double[:, ::1] mix_mu,
    double[::1] mix_sd,
    double alpha_bar,
    double[:, ::1] anchors,
    double[:, ::1] masks,
    str method,
    double alpha,
    double e_threshold,
    double gamma,
    double fixed_lambda,
    double[::1] wsum,
    double div_cap,
):
    cdef int n = positions.shape[0]
    cdef int d = positions.shape[1]
    cdef int m = anchors.shape[0]
    cdef int K = mix_w.shape[0]
    cdef int mcode
    if method == "proud":
        mcode = 0
    elif method == "dm_mmgd":
        mcode = 1
    elif method == "dm_single":
        mcode = 2
    elif method == "mplus1_mgd":
        mcode = 3
    elif method == "m_mgd":
        mcode = 4
    else:
        raise ValueError(f"unknown method {method!r}")
    if m > 3:
        raise ValueError("compiled kernel supports at most three objectives")

    f_np = np.empty((n, m))
    grads_np = np.empty((n, m, d))
    eps_np = np.zeros((n, d))
    dir_np = np.empty((n, d))
    norm_np = np.empty(n)
    phi_np = np.full(n, NAN)
    lam_np = np.zeros((n, m))
    fb_np = np.zeros(n, dtype=np.uint8)

    cdef double[:, ::1] F = f_np
    cdef double[:, :, ::1] G = grads_np
    cdef double[:, ::1] eps = eps_np
    cdef double[:, ::1] dirs = dir_np
    cdef double[::1] norms = norm_np
    cdef double[::1] phis = phi_np
    cdef double[:, ::1] lams = lam_np
    cdef unsigned char[::1] fbs = fb_np

    # per-objective mask sizes
    omega_np = np.empty(m)
    cdef double[::1] omega = omega_np
    cdef int i, j, k, dd
    cdef double acc, dv
    for k in range(m):
        acc = 0.0
        for dd in range(d):
            acc += masks[k, dd]
        omega[k] = acc

    # noised mixture parameters
    centers_np = np.empty((K, d))
    logn_np = np.empty(K)
    var_np = np.empty(K)
    cdef double[:, ::1] centers = centers_np
    cdef double[::1] lognorm = logn_np
    cdef double[::1] variances = var_np
    cdef double sq_ab = sqrt(alpha_bar)
    cdef double eps_scale = -sqrt(1.0 - alpha_bar)
    for k in range(K):
        variances[k] = (1.0 - alpha_bar) + alpha_bar * mix_sd[k] * mix_sd[k]
        lognorm[k] = log(mix_w[k]) - 0.5 * d * log(TWO_PI * variances[k])
        for dd in range(d):
            centers[k, dd] = sq_ab * mix_mu[k, dd]

    resp_np = np.empty(K)
    cdef double[::1] resp = resp_np
    cdef double peak, total, dist2, diff, score
    cdef bint need_eps = mcode != 4

    # objective values, gradients and the noise prediction
    for i in range(n):
        for k in range(m):
            acc = 0.0
            for dd in range(d):
                if masks[k, dd] != 0.0:
                    diff = positions[i, dd] - anchors[k, dd]
                    acc += diff * diff
                    G[i, k, dd] = (2.0 / omega[k]) * diff
                else:
                    G[i, k, dd] = 0.0
            F[i, k] = acc / omega[k]
        if need_eps:
            peak = -INFINITY
            for k in range(K):
                dist2 = 0.0
                for dd in range(d):
                    diff = positions[i, dd] - centers[k, dd]
                    dist2 += diff * diff
                resp[k] = lognorm[k] - dist2 / (2.0 * variances[k])
                if resp[k] > peak:
                    peak = resp[k]
            total = 0.0
            for k in range(K):
                resp[k] = exp(resp[k] - peak)
                total += resp[k]
            for dd in range(d):
                score = 0.0
                for k in range(K):
                    score += resp[k] * (centers[k, dd] - positions[i, dd]) / variances[k]
                eps[i, dd] = eps_scale * score / total

    # min-norm combination per particle
    v_np = np.empty((n, d))
    cdef double[:, ::1] V = v_np
    cdef double w1, den, num
    cdef double gram[16]
    cdef double wfw[4]
    cdef double bvec[3]
    cdef double lam_loc[3]
    cdef double phi_i, nrm
    cdef int fw_cap = 10 * m * d
    for i in range(n):
        if m == 1:
            nrm = 0.0
            for dd in range(d):
                V[i, dd] = G[i, 0, dd]
                nrm += V[i, dd] * V[i, dd]
            norms[i] = sqrt(nrm)
        elif m == 2:
            den = 0.0
            num = 0.0
            for dd in range(d):
                diff = G[i, 0, dd] - G[i, 1, dd]
                den += diff * diff
                num += G[i, 1, dd] * (G[i, 1, dd] - G[i, 0, dd])
            if den > 0.0:
                w1 = num / den
                if w1 < 0.0:
                    w1 = 0.0
                if w1 > 1.0:
                    w1 = 1.0
            else:
                w1 = 0.5
            nrm = 0.0
            for dd in range(d):
                V[i, dd] = w1 * G[i, 0, dd] + (1.0 - w1) * G[i, 1, dd]
                nrm += V[i, dd] * V[i, dd]
            norms[i] = sqrt(nrm)
        else:
            for j in range(m):
                for k in range(m):
                    acc = 0.0
                    for dd in range(d):
                        acc += G[i, j, dd] * G[i, k, dd]
                    gram[j * m + k] = acc
            _fw_simplex(gram, m, fw_cap, wfw)
            nrm = 0.0
            for dd in range(d):
                acc = 0.0
                for j in range(m):
                    acc += wfw[j] * G[i, j, dd]
                V[i, dd] = acc
                nrm += acc * acc
            norms[i] = sqrt(nrm)

    # directions per method
    cdef int qq, found
    for i in range(n):
        if mcode == 0:  # proud
            if norms[i] > e_threshold:
                phi_i = alpha * norms[i]
                phis[i] = phi_i
                for j in range(m):
                    for k in range(m):
                        acc = 0.0
                        for dd in range(d):
                            acc += G[i, j, dd] * G[i, k, dd]
                        gram[j * m + k] = acc
                for j in range(m):
                    acc = 0.0
                    for dd in range(d):
                        acc += G[i, j, dd] * eps[i, dd]
                    bvec[j] = acc
                found = _dual_enumerate(gram, bvec, phi_i, m, lam_loc)
                if found:
                    for j in range(m):
                        lams[i, j] = lam_loc[j]
                    for dd in range(d):
                        acc = eps[i, dd]
                        for j in range(m):
                            acc += lam_loc[j] * G[i, j, dd]
                        dirs[i, dd] = acc
                else:
                    fbs[i] = 1
                    for dd in range(d):
                        dirs[i, dd] = V[i, dd]
            else:
                phis[i] = -INFINITY
                for dd in range(d):
                    dirs[i, dd] = eps[i, dd]
        elif mcode == 1:  # dm_mmgd
            for dd in range(d):
                dirs[i, dd] = eps[i, dd] + fixed_lambda * V[i, dd]
        elif mcode == 2:  # dm_single
            for dd in range(d):
                acc = 0.0
                for j in range(m):
                    acc += wsum[j] * G[i, j, dd]
                dirs[i, dd] = eps[i, dd] + fixed_lambda * acc
        elif mcode == 3:  # mplus1_mgd: min-norm over gradients plus eps
            qq = m + 1
            for j in range(qq):
                for k in range(qq):
                    acc = 0.0
                    for dd in range(d):
                        dv = G[i, j, dd] if j < m else eps[i, dd]
                        diff = G[i, k, dd] if k < m else eps[i, dd]
                        acc += dv * diff
                    gram[j * qq + k] = acc
            _fw_simplex(gram, qq, 10 * qq * d, wfw)
            for dd in range(d):
                acc = 0.0
                for j in range(m):
                    acc += wfw[j] * G[i, j, dd]
                acc += wfw[m] * eps[i, dd]
                dirs[i, dd] = acc
        else:  # m_mgd
            for dd in range(d):
                dirs[i, dd] = V[i, dd]

    # diversity repulsion for the MGD-equipped methods
    cdef double sforce[3]
    cdef double n2, wpair, cap_scale
    cdef double[:, ::1] divv
    if (mcode == 0 or mcode == 1 or mcode == 4) and gamma > 0.0 and n >= 2:
        divv = np.empty((n, d))
        for i in range(n):
            for k in range(m):
                sforce[k] = 0.0
            for j in range(n):
                if j == i:
                    continue
                n2 = 0.0
                for k in range(m):
                    diff = F[i, k] - F[j, k]
                    n2 += diff * diff
                if n2 < PAIR_GUARD2:
                    continue
                wpair = -4.0 / (n2 * n2)
                for k in range(m):
                    sforce[k] += wpair * (F[i, k] - F[j, k])
            nrm = 0.0
            for dd in range(d):
                acc = 0.0
                for k in range(m):
                    acc += sforce[k] * G[i, k, dd]
                divv[i, dd] = acc
                nrm += acc * acc
            nrm = sqrt(nrm)
            cap_scale = div_cap / nrm if nrm > div_cap else 1.0
            for dd in range(d):
                dirs[i, dd] += gamma * divv[i, dd] * cap_scale
    return DirectionsResult(dir_np, norm_np, phi_np, lam_np, fb_np.view(np.bool_))
