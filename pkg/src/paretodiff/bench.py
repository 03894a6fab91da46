"""Benchmark the compiled step kernel against the NumPy backend.

Runs the standard two-anchor guided sampling workload end to end on each
available backend and reports wall time, steps per second, speedup and the
largest per-step direction deviation between the two on identical inputs.
"""

from __future__ import annotations

import time

import numpy as np

from . import engine, sampler
from .diffusion import GaussianMixtureManifold, eps_star_batch, make_linear_schedule
from .guidance import GuidanceConfig
from .objectives import two_anchor_benchmark


def _benchmark_setup(n_particles: int):
    dim = 2
    kappa = np.linspace(0.0, 1.0, 5)
    lo = np.full(dim, 0.5)
    hi = np.full(dim, 1.0)
    means = lo + kappa[:, None] * (hi - lo)
    model = GaussianMixtureManifold(np.full(5, 0.2), means, np.full(5, 2e-4))
    objset = two_anchor_benchmark(dim)
    cfg = GuidanceConfig(method="proud", alpha=0.5, e_threshold=0.03, gamma=0.2)
    return model, objset, cfg


def _time_run(model, objset, cfg, sched, n_particles, backend, repeats):
    times = []
    for rep in range(repeats):
        rng = np.random.default_rng(rep)
        init = rng.standard_normal((n_particles, model.dim))
        t0 = time.perf_counter()
        sampler.run(init, model, sched, objset, cfg, rng, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times)


def _step_deviation(model, objset, cfg, sched, n_particles):
    """Max |direction| gap between backends on identical per-step inputs."""
    rng = np.random.default_rng(123)
    positions = rng.standard_normal((n_particles, model.dim)) * 0.6 + 0.75
    worst = 0.0
    for t in (sched.t_steps, max(sched.t_steps // 2, 1), 1):
        ab = sched.alpha_bar(t)
        res_c = sampler._compute_directions(positions, model, ab, objset, cfg, "cython")
        res_n = sampler._compute_directions(positions, model, ab, objset, cfg, "numpy")
        worst = max(worst, float(np.abs(res_c.directions - res_n.directions).max()))
    return worst


def run_benchmark(n_particles: int = 512, t_steps: int = 300, repeats: int = 3) -> str:
    model, objset, cfg = _benchmark_setup(n_particles)
    sched = make_linear_schedule(t_steps, 1e-9, 1e-7, 30.0)
    lines = [
        f"workload: proud guidance, n_particles={n_particles}, t_steps={t_steps}, "
        f"m=2, 5-component manifold, best of {repeats}",
        "backend   wall_s    steps/s",
    ]
    t_numpy = _time_run(model, objset, cfg, sched, n_particles, "numpy", repeats)
    lines.append(f"numpy    {t_numpy:8.3f} {t_steps / t_numpy:10.1f}")
    if sampler.HAVE_SPEEDUPS:
        t_cy = _time_run(model, objset, cfg, sched, n_particles, "cython", repeats)
        lines.append(f"cython   {t_cy:8.3f} {t_steps / t_cy:10.1f}")
        lines.append(f"speedup: {t_numpy / t_cy:.2f}x")
        lines.append(f"max per-step direction deviation: {_step_deviation(model, objset, cfg, sched, n_particles):.3e}")
    else:
        lines.append("cython   (extension not built; pure-Python install)")
    return "\n".join(lines) + "\n"
