"""Pareto-guided Langevin sampling on tractable Gaussian-mixture manifolds.

The package pairs a guided reverse-diffusion sampler (switched constrained
blending of a closed-form noise prediction with multi-objective descent
directions, plus baselines) with exact evaluation machinery: analytic Pareto
fronts, exact hypervolume, assignment-based set distance and ground-truth
likelihood quality scores.
"""

from .diffusion import (
    GaussianMixtureManifold,
    NoiseSchedule,
    eps_star,
    log_density,
    make_linear_schedule,
    noised_score,
)
from .guidance import (
    METHODS,
    DualUnboundedError,
    GuidanceConfig,
    GuidanceOutcome,
    baseline_direction,
    phi_switch,
    proud_direction,
    solve_dual,
)
from .metrics import MetricReport, emd, hypervolume, hypervolume_mc, quality_scores, report
from .mgd import MinNormSolution, dominates, is_stationary, min_norm_weights, pareto_filter
from .objectives import (
    AnchorObjective,
    ObjectiveSet,
    SegmentFront,
    TriangleFront,
    three_anchor_benchmark,
    two_anchor_benchmark,
)
from .sampler import HAVE_SPEEDUPS, Population, RunTrace, diversity_gradient, resolve_backend, run, step

__version__ = "0.1.0"

__all__ = [
    "AnchorObjective",
    "DualUnboundedError",
    "GaussianMixtureManifold",
    "GuidanceConfig",
    "GuidanceOutcome",
    "HAVE_SPEEDUPS",
    "METHODS",
    "MetricReport",
    "MinNormSolution",
    "NoiseSchedule",
    "ObjectiveSet",
    "Population",
    "RunTrace",
    "SegmentFront",
    "TriangleFront",
    "baseline_direction",
    "diversity_gradient",
    "dominates",
    "emd",
    "eps_star",
    "hypervolume",
    "hypervolume_mc",
    "is_stationary",
    "log_density",
    "make_linear_schedule",
    "min_norm_weights",
    "noised_score",
    "pareto_filter",
    "phi_switch",
    "proud_direction",
    "quality_scores",
    "report",
    "resolve_backend",
    "run",
    "solve_dual",
    "step",
    "three_anchor_benchmark",
    "two_anchor_benchmark",
    "__version__",
]
