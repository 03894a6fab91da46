"""Population Langevin loop over the reverse schedule.

Each step draws one fresh standard-normal matrix (particle-major, then
coordinate), computes every particle's update direction from a start-of-step
snapshot of the objective values, then applies

    x_{t-1} = x_t - eta_t * g(x_t) + sqrt(2 eta_t) * z.

Per-particle work inside a step is order-independent; steps run strictly in
sequence. With a fixed seed the whole run is bit-reproducible on a given
backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .diffusion import GaussianMixtureManifold, NoiseSchedule, eps_star_batch
from .guidance import METHOD_M_MGD, METHOD_PROUD, GuidanceConfig
from .objectives import AnchorObjective, ObjectiveSet

try:
    from . import _speedups

    HAVE_SPEEDUPS = True
except ImportError:  # pure-Python install
    _speedups = None
    HAVE_SPEEDUPS = False

__all__ = [
    "HAVE_SPEEDUPS",
    "Population",
    "RunTrace",
    "resolve_backend",
    "diversity_gradient",
    "step",
    "run",
]


def resolve_backend(name: str = "auto") -> str:
    """Resolve a backend request to a concrete backend name."""
    if name == "auto":
        return "cython" if HAVE_SPEEDUPS else "numpy"
    if name == "cython":
        if not HAVE_SPEEDUPS:
            raise RuntimeError("compiled backend requested but paretodiff._speedups is not built")
        return "cython"
    if name == "numpy":
        return "numpy"
    raise ValueError(f"unknown backend {name!r}; expected auto, cython or numpy")


@dataclass
class StepRecord:
    """Diagnostics for one reverse step (arrays over particles)."""

    step: int
    mgd_norms: np.ndarray
    phis: np.ndarray
    multipliers: np.ndarray
    dual_fallbacks: np.ndarray


@dataclass
class RunTrace:
    records: list[StepRecord] = field(default_factory=list)

    def dual_fallback_count(self) -> int:
        return int(sum(r.dual_fallbacks.sum() for r in self.records))

    def switch_off_counts(self) -> np.ndarray:
        """Particles on the -inf branch, per recorded step (run order)."""
        return np.array([int(np.sum(np.isneginf(r.phis))) for r in self.records])

    def iter_flat(self):
        """Yield one dict per (step, particle) for serialization."""
        for rec in self.records:
            n = rec.mgd_norms.size
            for i in range(n):
                phi = rec.phis[i]
                yield {
                    "step": rec.step,
                    "particle": i,
                    "mgd_norm": float(rec.mgd_norms[i]),
                    "phi": None if not np.isfinite(phi) else float(phi),
                    "phi_branch": "off" if np.isneginf(phi) else ("on" if np.isfinite(phi) else "n/a"),
                    "lambda": [float(v) for v in rec.multipliers[i]],
                    "dual_fallback": bool(rec.dual_fallbacks[i]),
                }


@dataclass
class Population:
    """Particle states at the current reverse step."""

    positions: np.ndarray
    step: int
    cached_F: np.ndarray | None = None
    trace: RunTrace | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[0] < 1:
            raise ValueError("positions must be a non-empty (n, d) array")
        if self.step < 0:
            raise ValueError("step must be nonnegative")

    @property
    def n_particles(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dim(self) -> int:
        return int(self.positions.shape[1])


def diversity_gradient(pop: Population, objset: ObjectiveSet, i: int) -> np.ndarray:
    """Gradient of the pairwise inverse-square objective-distance penalty.

    Raw chain-rule form: sum over j != i of (-4 / ||dF_ij||^4) J_i^T dF_ij,
    with dF_ij the objective-value difference and J_i the objective Jacobian
    at particle i. Pairs closer than 1e-8 in objective space contribute zero.
    """
    if pop.n_particles < 2:
        raise ValueError("diversity needs at least two particles")
    f_values = pop.cached_F
    if f_values is None:
        f_values = objset.eval_batch(pop.positions)
    diff = f_values[i][None, :] - f_values  # (n, m)
    n2 = (diff * diff).sum(axis=1)
    with np.errstate(divide="ignore"):
        wts = np.where(n2 >= 1e-16, -4.0 / (n2 * n2), 0.0)
    wts[i] = 0.0
    force = wts @ diff  # (m,)
    jac = objset.grad(pop.positions[i])  # (m, d)
    return force @ jac


def _fast_path_arrays(objset: ObjectiveSet):
    """Dense anchor/mask arrays when every objective is anchor-based, else None."""
    if not all(isinstance(o, AnchorObjective) for o in objset.objectives):
        return None
    m, d = objset.n_objectives, objset.dim
    if m > 3:
        return None
    anchors = np.zeros((m, d))
    masks = np.zeros((m, d))
    for k, obj in enumerate(objset.objectives):
        idx = obj.indices(d)
        anchors[k, idx] = obj.anchor
        masks[k, idx] = 1.0
    return anchors, masks


def _compute_directions(positions, model, alpha_bar, objset, cfg, backend):
    if backend == "cython":
        fast = None if objset is None else _fast_path_arrays(objset)
        if objset is None:
            pass  # pure diffusion handled below
        elif fast is not None:
            anchors, masks = fast
            return _speedups.step_directions(
                np.ascontiguousarray(positions),
                np.ascontiguousarray(model.weights),
                np.ascontiguousarray(model.means),
                np.ascontiguousarray(model.stdevs),
                float(alpha_bar),
                anchors,
                masks,
                cfg.method,
                float(cfg.alpha),
                float(cfg.e_threshold),
                float(cfg.gamma),
                float(cfg.fixed_lambda),
                np.ascontiguousarray(cfg.weights_for(objset.n_objectives)),
                float(cfg.diversity_cap),
            )
        # unsupported shape for the compiled kernel: fall through to numpy
    if objset is None:
        eps = eps_star_batch(model, positions, alpha_bar)
        n = positions.shape[0]
        return engine.DirectionsResult(
            eps,
            np.zeros(n),
            np.full(n, -np.inf if cfg.method == METHOD_PROUD else np.nan),
            np.zeros((n, 0)),
            np.zeros(n, dtype=bool),
        )
    f_values = objset.eval_batch(positions)
    grads = objset.grad_batch(positions)
    eps = None
    if cfg.method != METHOD_M_MGD:
        eps = eps_star_batch(model, positions, alpha_bar)
    return engine.directions_numpy(eps, f_values, grads, cfg)


def step(
    pop: Population,
    model: GaussianMixtureManifold,
    sched: NoiseSchedule,
    objset: ObjectiveSet | None,
    cfg: GuidanceConfig,
    rng,
    backend: str = "numpy",
) -> Population:
    """Advance the population by one reverse step (mutates and returns pop)."""
    if pop.step < 1:
        raise ValueError("population has already reached step 0")
    t = pop.step
    z = rng.standard_normal(pop.positions.shape)
    res = _compute_directions(pop.positions, model, sched.alpha_bar(t), objset, cfg, backend)
    eta = sched.eta(t)
    pop.positions = pop.positions - eta * res.directions + np.sqrt(2.0 * eta) * z
    pop.step = t - 1
    pop.cached_F = None
    if pop.trace is not None:
        pop.trace.records.append(
            StepRecord(t, res.mgd_norms, res.phis, res.multipliers, res.dual_fallbacks)
        )
    return pop


def run(
    init: np.ndarray,
    model: GaussianMixtureManifold,
    sched: NoiseSchedule,
    objset: ObjectiveSet | None,
    cfg: GuidanceConfig,
    rng,
    t_steps: int | None = None,
    trace: bool = False,
    backend: str = "auto",
) -> Population:
    """Run the reverse process from ``init`` (drawn from a standard normal).

    Executes ``t_steps`` updates from t = t_steps down to 1, producing the
    step-0 population with fresh objective values cached.
    """
    backend = resolve_backend(backend)
    if t_steps is None:
        t_steps = sched.t_steps
    if not 0 <= t_steps <= sched.t_steps:
        raise ValueError(f"t_steps must lie in 0..{sched.t_steps}")
    init = np.asarray(init, dtype=float)
    if objset is not None and init.shape[1] != objset.dim:
        raise ValueError("init dimension does not match objectives")
    if init.shape[1] != model.dim:
        raise ValueError("init dimension does not match manifold")
    pop = Population(init.copy(), t_steps, trace=RunTrace() if trace else None)
    while pop.step >= 1:
        step(pop, model, sched, objset, cfg, rng, backend=backend)
    if objset is not None:
        pop.cached_F = objset.eval_batch(pop.positions)
    return pop
