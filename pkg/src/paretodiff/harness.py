"""Config-driven experiment orchestration with reproducible on-disk artifacts.

A run is described by a TOML file (see README for the schema). Every output
directory receives the effective config that produced it (seed and backend
resolved), a flat CSV of final samples, a one-record CSV with the metric
report, and optionally a JSONL trace. Numeric fields use shortest round-trip
decimals, files are written atomically, and re-running an echoed config with
the same backend reproduces the samples and metrics byte for byte.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10
    import tomli as tomllib

from . import metrics as metrics_mod
from .diffusion import GaussianMixtureManifold, make_linear_schedule
from .guidance import METHODS, GuidanceConfig
from .objectives import AnchorObjective, ObjectiveSet, SegmentFront, TriangleFront
from .sampler import resolve_backend, run as run_sampler

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "dump_config",
    "run_experiment",
    "sweep",
    "compare",
]


class ConfigError(ValueError):
    """Invalid run configuration; carries the offending key path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass(frozen=True)
class AnchorSpec:
    values: tuple[float, ...]
    mask: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    n_particles: int
    dims: int
    t_steps: int
    trace: bool
    backend: str
    beta_min: float
    beta_max: float
    step_scale: float
    mix_weights: tuple[float, ...]
    mix_means: tuple[tuple[float, ...], ...]
    mix_stdevs: tuple[float, ...]
    anchors: tuple[AnchorSpec, ...]
    front: str  # auto | segment | triangle | none
    guidance: GuidanceConfig
    reference_point: tuple[float, ...]
    emd_enabled: bool
    front_points: int
    stationarity_tol: float

    def build_manifold(self) -> GaussianMixtureManifold:
        return GaussianMixtureManifold(
            np.array(self.mix_weights), np.array(self.mix_means), np.array(self.mix_stdevs)
        )

    def build_schedule(self):
        return make_linear_schedule(self.t_steps, self.beta_min, self.beta_max, self.step_scale)

    def build_objectives(self) -> ObjectiveSet:
        objs = [
            AnchorObjective(np.array(a.values), None if a.mask is None else np.array(a.mask))
            for a in self.anchors
        ]
        front = None
        kind = self.front
        if kind == "auto":
            same_mask = len({a.mask for a in self.anchors}) == 1
            if same_mask and len(objs) == 2:
                kind = "segment"
            elif same_mask and len(objs) == 3:
                kind = "triangle"
            else:
                kind = "none"
        if kind == "segment":
            a, b = (np.array(s.values) for s in self.anchors[:2])
            front = SegmentFront(float(((a - b) ** 2).mean()))
        elif kind == "triangle":
            front = TriangleFront(np.stack([np.array(s.values) for s in self.anchors[:3]]))
        return ObjectiveSet(objs, self.dims, front=front)


def _need(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
    return table[key]


def _as_int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return value


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_float_list(value, path: str) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a non-empty array of numbers")
    return tuple(_as_float(v, path) for v in value)


def parse_config(data: dict) -> RunConfig:
    """Validate a parsed TOML document into a RunConfig."""
    seed = _as_int(_need(data, "seed", ""), "seed")

    run_t = _need(data, "run", "")
    n_particles = _as_int(_need(run_t, "n_particles", "run"), "run.n_particles", 1)
    dims = _as_int(_need(run_t, "dims", "run"), "run.dims", 1)
    t_steps = _as_int(_need(run_t, "t_steps", "run"), "run.t_steps", 0)
    trace = bool(run_t.get("trace", False))
    backend = run_t.get("backend", "auto")
    if backend not in ("auto", "cython", "numpy"):
        raise ConfigError("run.backend", f"expected auto, cython or numpy, got {backend!r}")

    sched_t = _need(data, "schedule", "")
    beta_min = _as_float(sched_t.get("beta_min", 1e-4), "schedule.beta_min")
    beta_max = _as_float(sched_t.get("beta_max", 0.02), "schedule.beta_max")
    step_scale = _as_float(sched_t.get("step_scale", 0.05), "schedule.step_scale")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigError("schedule.beta_min", "need 0 < beta_min <= beta_max < 1")
    if step_scale <= 0.0:
        raise ConfigError("schedule.step_scale", "must be positive")

    man_t = _need(data, "manifold", "")
    weights = _as_float_list(_need(man_t, "weights", "manifold"), "manifold.weights")
    means_raw = _need(man_t, "means", "manifold")
    if not isinstance(means_raw, list) or not means_raw:
        raise ConfigError("manifold.means", "expected an array of vectors")
    means = tuple(_as_float_list(v, "manifold.means") for v in means_raw)
    stdevs = _as_float_list(_need(man_t, "stdevs", "manifold"), "manifold.stdevs")
    if len({len(v) for v in means}) != 1 or len(means[0]) != dims:
        raise ConfigError("manifold.means", f"every mean must have dimension {dims}")
    if not (len(weights) == len(means) == len(stdevs)):
        raise ConfigError("manifold.weights", "weights, means and stdevs must have equal length")

    obj_t = _need(data, "objectives", "")
    front = obj_t.get("front", "auto")
    if front not in ("auto", "segment", "triangle", "none"):
        raise ConfigError("objectives.front", f"unknown front kind {front!r}")
    anchors_raw = _need(obj_t, "anchor", "objectives")
    if not isinstance(anchors_raw, list) or not anchors_raw:
        raise ConfigError("objectives.anchor", "expected at least one [[objectives.anchor]] table")
    anchors = []
    for i, tab in enumerate(anchors_raw):
        path = f"objectives.anchor[{i}]"
        values = _as_float_list(_need(tab, "values", path), f"{path}.values")
        mask = tab.get("mask")
        if mask is not None:
            mask = tuple(_as_int(v, f"{path}.mask", 0) for v in mask)
            if len(mask) != len(values):
                raise ConfigError(f"{path}.mask", "mask must list one index per anchor entry")
            if any(ix >= dims for ix in mask):
                raise ConfigError(f"{path}.mask", f"index out of range for dims={dims}")
        elif len(values) != dims:
            raise ConfigError(f"{path}.values", f"anchor without mask must have dimension {dims}")
        anchors.append(AnchorSpec(values, mask))

    gd_t = _need(data, "guidance", "")
    method = _need(gd_t, "method", "guidance")
    if method not in METHODS:
        raise ConfigError("guidance.method", f"expected one of {METHODS}, got {method!r}")
    sw = gd_t.get("single_weights")
    try:
        guidance = GuidanceConfig(
            method=method,
            alpha=_as_float(gd_t.get("alpha", 0.5), "guidance.alpha"),
            e_threshold=_as_float(gd_t.get("e_threshold", 0.03), "guidance.e_threshold"),
            gamma=_as_float(gd_t.get("gamma", 0.2), "guidance.gamma"),
            fixed_lambda=_as_float(gd_t.get("fixed_lambda", 1.0), "guidance.fixed_lambda"),
            single_weights=None if sw is None else tuple(_as_float(v, "guidance.single_weights") for v in sw),
            diversity_cap=_as_float(gd_t.get("diversity_cap", 1.0), "guidance.diversity_cap"),
        )
    except ValueError as exc:
        raise ConfigError("guidance", str(exc)) from exc

    met_t = data.get("metrics", {})
    reference_point = _as_float_list(
        met_t.get("reference_point", [0.25] * len(anchors)), "metrics.reference_point"
    )
    if len(reference_point) != len(anchors):
        raise ConfigError("metrics.reference_point", "length must equal the number of objectives")
    emd_enabled = bool(met_t.get("emd", True))
    front_points = _as_int(met_t.get("front_points", 2000), "metrics.front_points", 2)
    stationarity_tol = _as_float(met_t.get("stationarity_tol", 0.06), "metrics.stationarity_tol")
    if stationarity_tol <= 0.0:
        raise ConfigError("metrics.stationarity_tol", "must be positive")

    return RunConfig(
        seed=seed,
        n_particles=n_particles,
        dims=dims,
        t_steps=t_steps,
        trace=trace,
        backend=backend,
        beta_min=beta_min,
        beta_max=beta_max,
        step_scale=step_scale,
        mix_weights=weights,
        mix_means=means,
        mix_stdevs=stdevs,
        anchors=tuple(anchors),
        front=front,
        guidance=guidance,
        reference_point=reference_point,
        emd_enabled=emd_enabled,
        front_points=front_points,
        stationarity_tol=stationarity_tol,
    )


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<file>", f"not valid TOML: {exc}") from exc
    return parse_config(data)


def _fmt(value) -> str:
    """Shortest round-trip TOML literal."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        if np.isnan(v):
            return "nan"
        text = repr(v)
        return text if any(c in text for c in ".einf") else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")


def dump_config(cfg: RunConfig) -> str:
    """Effective config as TOML, in fixed key order."""
    g = cfg.guidance
    lines = [f"seed = {_fmt(cfg.seed)}", ""]
    lines += [
        "[run]",
        f"n_particles = {_fmt(cfg.n_particles)}",
        f"dims = {_fmt(cfg.dims)}",
        f"t_steps = {_fmt(cfg.t_steps)}",
        f"trace = {_fmt(cfg.trace)}",
        f"backend = {_fmt(cfg.backend)}",
        "",
        "[schedule]",
        f"beta_min = {_fmt(cfg.beta_min)}",
        f"beta_max = {_fmt(cfg.beta_max)}",
        f"step_scale = {_fmt(cfg.step_scale)}",
        "",
        "[manifold]",
        f"weights = {_fmt(cfg.mix_weights)}",
        f"means = {_fmt(cfg.mix_means)}",
        f"stdevs = {_fmt(cfg.mix_stdevs)}",
        "",
        "[objectives]",
        f"front = {_fmt(cfg.front)}",
    ]
    for spec in cfg.anchors:
        lines += ["", "[[objectives.anchor]]", f"values = {_fmt(spec.values)}"]
        if spec.mask is not None:
            lines.append(f"mask = {_fmt(spec.mask)}")
    lines += [
        "",
        "[guidance]",
        f"method = {_fmt(g.method)}",
        f"alpha = {_fmt(g.alpha)}",
        f"e_threshold = {_fmt(g.e_threshold)}",
        f"gamma = {_fmt(g.gamma)}",
        f"fixed_lambda = {_fmt(g.fixed_lambda)}",
    ]
    if g.single_weights is not None:
        lines.append(f"single_weights = {_fmt(g.single_weights)}")
    lines += [
        f"diversity_cap = {_fmt(g.diversity_cap)}",
        "",
        "[metrics]",
        f"reference_point = {_fmt(cfg.reference_point)}",
        f"emd = {_fmt(cfg.emd_enabled)}",
        f"front_points = {_fmt(cfg.front_points)}",
        f"stationarity_tol = {_fmt(cfg.stationarity_tol)}",
        "",
    ]
    return "\n".join(lines)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def run_experiment(cfg: RunConfig, output_dir) -> metrics_mod.MetricReport:
    """Execute one seeded run and persist samples, metrics and optional trace."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    backend = resolve_backend(cfg.backend)
    cfg = replace(cfg, backend=backend)

    model = cfg.build_manifold()
    sched = cfg.build_schedule()
    objset = cfg.build_objectives()
    if model.dim != cfg.dims:
        raise ConfigError("manifold.means", "manifold dimension does not match run.dims")

    rng = np.random.default_rng(cfg.seed)
    init = rng.standard_normal((cfg.n_particles, cfg.dims))
    pop = run_sampler(
        init, model, sched, objset, cfg.guidance, rng,
        t_steps=cfg.t_steps, trace=cfg.trace, backend=backend,
    )
    rep = metrics_mod.report(
        pop,
        objset,
        model,
        reference_point=cfg.reference_point,
        emd_enabled=cfg.emd_enabled,
        front_points=cfg.front_points,
        stationarity_tol=cfg.stationarity_tol,
    )

    _write_atomic(out / "config.toml", dump_config(cfg))

    f_values = pop.cached_F
    _, ll = metrics_mod.quality_scores(pop.positions, model)
    header = (
        ["particle"]
        + [f"x{j}" for j in range(cfg.dims)]
        + [f"f{k}" for k in range(objset.n_objectives)]
        + ["log_likelihood"]
    )
    rows = [",".join(header)]
    for i in range(cfg.n_particles):
        cells = [str(i)]
        cells += [_csv_cell(v) for v in pop.positions[i]]
        cells += [_csv_cell(v) for v in f_values[i]]
        cells.append(_csv_cell(ll[i]))
        rows.append(",".join(cells))
    _write_atomic(out / "samples.csv", "\n".join(rows) + "\n")

    mheader = [
        "hv", "emd", "mean_front_distance", "mean_log_likelihood",
        "pct_stationary", "n_points", "spread",
    ] + [f"hv_ref_{k}" for k in range(len(rep.hv_reference))]
    mrow = [
        _csv_cell(rep.hv), _csv_cell(rep.emd), _csv_cell(rep.mean_front_distance),
        _csv_cell(rep.mean_log_likelihood), _csv_cell(rep.pct_stationary),
        str(rep.n_points), _csv_cell(rep.spread),
    ] + [_csv_cell(v) for v in rep.hv_reference]
    _write_atomic(out / "metrics.csv", ",".join(mheader) + "\n" + ",".join(mrow) + "\n")

    if cfg.trace and pop.trace is not None:
        tmp = out / "trace.jsonl.tmp"
        with open(tmp, "w") as fh:
            for record in pop.trace.iter_flat():
                fh.write(json.dumps(record) + "\n")
        os.replace(tmp, out / "trace.jsonl")
    return rep


def child_seed(seed: int, index: int) -> int:
    """Documented sweep seed mixing: seed * 1_000_003 + grid index."""
    return seed * 1_000_003 + index


def _set_key(data: dict, dotted: str, value):
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(dotted, "sweep key does not name a config table entry")
        node = node[part]
    node[parts[-1]] = value


def _sweep_child(args):
    data, out_dir = args
    cfg = parse_config(data)
    run_experiment(cfg, out_dir)
    return str(out_dir)


def sweep(config_path, params: dict[str, list], output_root, jobs: int = 1) -> list[Path]:
    """Cartesian parameter sweep; children get derived seeds and numbered dirs."""
    with open(config_path, "rb") as fh:
        base = tomllib.load(fh)
    parse_config(base)  # validate before spawning work
    keys = list(params)
    grids: list[list] = [params[k] for k in keys]
    combos = [[]]
    for axis in grids:
        combos = [c + [v] for c in combos for v in axis]
    root = Path(output_root)
    root.mkdir(parents=True, exist_ok=True)
    tasks = []
    for index, combo in enumerate(combos):
        data = json.loads(json.dumps(base))  # deep copy of plain TOML data
        for key, value in zip(keys, combo):
            _set_key(data, key, value)
        data["seed"] = child_seed(int(base["seed"]), index)
        tasks.append((data, root / f"sweep_{index:03d}"))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_sweep_child, tasks))
    else:
        for task in tasks:
            _sweep_child(task)
    return [t[1] for t in tasks]


def _read_metrics_row(run_dir: Path) -> dict:
    path = run_dir / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing metrics file: {path}")
    header, row = path.read_text().strip().split("\n")
    values = dict(zip(header.split(","), row.split(",")))
    with open(run_dir / "config.toml", "rb") as fh:
        conf = tomllib.load(fh)
    m = sum(1 for k in values if k.startswith("hv_ref_"))
    return {
        "run": run_dir.name,
        "method": conf["guidance"]["method"],
        "seed": conf["seed"],
        "m": m,
        "hv": float(values["hv"]),
        "emd": float(values["emd"]) if values["emd"] else None,
        "mean_log_likelihood": float(values["mean_log_likelihood"]),
        "pct_stationary": float(values["pct_stationary"]),
    }


def compare(run_dirs) -> str:
    """Flat comparison table with mean +/- std aggregation rows per method."""
    rows = [_read_metrics_row(Path(d)) for d in run_dirs]
    if not rows:
        raise ValueError("need at least one run directory")
    if len({r["m"] for r in rows}) != 1:
        raise ValueError("runs mix objective counts; metrics are not comparable")
    header = "run,method,seed,hv,emd,mean_log_likelihood,pct_stationary"
    out = [header]
    for r in rows:
        out.append(
            f"{r['run']},{r['method']},{r['seed']},{_csv_cell(r['hv'])},"
            f"{_csv_cell(r['emd'])},{_csv_cell(r['mean_log_likelihood'])},{_csv_cell(r['pct_stationary'])}"
        )
    by_method: dict[str, list[dict]] = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append(r)
    for method, group in by_method.items():
        if len(group) < 2:
            continue
        agg = []
        for key in ("hv", "mean_log_likelihood", "pct_stationary"):
            vals = np.array([g[key] for g in group])
            agg.append(f"{vals.mean():.6g}+/-{vals.std(ddof=1):.2g}")
        emds = [g["emd"] for g in group if g["emd"] is not None]
        emd_s = f"{np.mean(emds):.6g}+/-{np.std(emds, ddof=1):.2g}" if len(emds) > 1 else ""
        out.append(f"aggregate,{method},n={len(group)},{agg[0]},{emd_s},{agg[1]},{agg[2]}")
    return "\n".join(out) + "\n"
