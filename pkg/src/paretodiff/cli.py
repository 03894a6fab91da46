"""Command-line entry points: run, sweep, compare, oracle, bench."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import ConfigError, compare, load_config, run_experiment, sweep
from .oracles import oracle_suite


def _parse_sweep_param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=V1;V2;... for --param")
    key, _, values = text.partition("=")
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    parsed = []
    for chunk in values.split(";"):
        doc = tomllib.loads(f"v = {chunk.strip()}")
        parsed.append(doc["v"])
    if not parsed:
        raise argparse.ArgumentTypeError(f"no values given for sweep key {key}")
    return key.strip(), parsed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="paretodiff",
        description="Pareto-guided diffusion sampling experiments on tractable manifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single configured run")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--output-dir", required=True, type=Path)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--trace", action=argparse.BooleanOptionalAction, default=None,
                       help="override the config trace toggle")
    p_run.add_argument("--backend", choices=["auto", "cython", "numpy"], default=None)

    p_sweep = sub.add_parser("sweep", help="run a cartesian parameter grid")
    p_sweep.add_argument("--config", required=True, type=Path)
    p_sweep.add_argument("--output-dir", required=True, type=Path)
    p_sweep.add_argument("--param", action="append", default=[], type=_parse_sweep_param,
                         metavar="KEY=V1;V2;...",
                         help="dotted config key with semicolon-separated TOML values")
    p_sweep.add_argument("--jobs", type=int, default=1)

    p_cmp = sub.add_parser("compare", help="tabulate metrics across finished runs")
    p_cmp.add_argument("run_dirs", nargs="+", type=Path)

    p_oracle = sub.add_parser("oracle", help="run the brute-force oracle suite")
    p_oracle.add_argument("--seed", type=int, default=0)

    p_bench = sub.add_parser("bench", help="benchmark the compiled kernel vs the NumPy backend")
    p_bench.add_argument("--n-particles", type=int, default=512)
    p_bench.add_argument("--t-steps", type=int, default=300)
    p_bench.add_argument("--repeats", type=int, default=3)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            if args.trace is not None:
                cfg = replace(cfg, trace=args.trace)
            if args.backend is not None:
                cfg = replace(cfg, backend=args.backend)
            rep = run_experiment(cfg, args.output_dir)
            print(f"run complete: hv={rep.hv:.6g} mean_log_likelihood={rep.mean_log_likelihood:.6g} "
                  f"pct_stationary={rep.pct_stationary:.3f} -> {args.output_dir}")
            return 0
        if args.command == "sweep":
            if not args.param:
                parser.error("sweep needs at least one --param")
            dirs = sweep(args.config, dict(args.param), args.output_dir, jobs=args.jobs)
            print(f"sweep complete: {len(dirs)} runs under {args.output_dir}")
            return 0
        if args.command == "compare":
            sys.stdout.write(compare(args.run_dirs))
            return 0
        if args.command == "oracle":
            checks = oracle_suite(seed=args.seed)
            failed = 0
            for check in checks:
                status = "PASS" if check.passed else "FAIL"
                print(f"{status} {check.name}: {check.detail}")
                failed += 0 if check.passed else 1
            return 1 if failed else 0
        if args.command == "bench":
            from .bench import run_benchmark

            sys.stdout.write(run_benchmark(args.n_particles, args.t_steps, args.repeats))
            return 0
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
