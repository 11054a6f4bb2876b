"""Command-line front end for the return-map discovery pipeline.

Subcommands mirror the pipeline stages so `run` output equals chaining
`simulate` -> `section` -> `discover` -> `analyze` on the intermediate files.
Exit codes: 0 success, 2 config validation failure, 3 numerical divergence,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import mapmodel
from .config import ConfigError, load_config
from .dynamics import DivergenceError, builtin_system, read_trajectory_csv
from .experiment import (ExperimentResult, discover_map, run_experiment,
                         section_var_names, stage_analyze, stage_simulate,
                         write_iterates_csv, write_report)
from .features import evaluate_library
from .mapmodel import load_model, save_model, sparsity_sweep, write_sweep_csv
from .section import (build_pairs, crossing_sample, read_matrix_csv,
                      read_samples_csv, strobe_sample, write_matrix_csv,
                      write_samples_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    if not os.path.isdir(path):
        raise OSError(f"cannot create output directory {path}")
    return path


def _load(config_path: str, seed):
    cfg = load_config(config_path)
    if seed is not None:
        object.__setattr__(cfg, "seed", int(seed))
        if cfg.integration is not None:
            object.__setattr__(cfg.integration, "seed", int(seed))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    outdir = _ensure_outdir(args.output_dir)
    result = run_experiment(cfg, outdir)
    print(f"artifacts written to {result.output_dir}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args.config, args.seed)
    if cfg.is_pde:
        raise ConfigError("system.name", "simulate applies to ODE configs; use `pde`")
    outdir = _ensure_outdir(args.output_dir)
    trajs = stage_simulate(cfg, outdir)
    print(f"wrote {len(trajs)} trajectory files to {outdir}")
    return EXIT_OK


def cmd_section(args) -> int:
    cfg = _load(args.config, args.seed)
    if cfg.is_pde:
        raise ConfigError("system.name", "section applies to ODE configs")
    outdir = _ensure_outdir(args.output_dir)
    system = builtin_system(cfg.system_name, cfg.overrides)
    names = section_var_names(cfg, system)
    seqs = []
    for i, path in enumerate(args.trajectory):
        traj = read_trajectory_csv(path)
        if cfg.section.kind == "strobe":
            seq = strobe_sample(traj, cfg.section, system=system, source_id=str(i))
        else:
            seq = crossing_sample(system, traj, cfg.section, source_id=str(i))
        write_samples_csv(seq, os.path.join(outdir, f"section_{i:02d}.csv"), names)
        seqs.append(seq)
    x1, x2 = build_pairs(seqs, cfg.skip)
    write_matrix_csv(x1, os.path.join(outdir, "pairs_x1.csv"), names)
    write_matrix_csv(x2, os.path.join(outdir, "pairs_x2.csv"), names)
    print(f"wrote {len(seqs)} section files and {x1.shape[0]} pairs to {outdir}")
    return EXIT_OK


def cmd_discover(args) -> int:
    outdir = _ensure_outdir(args.output_dir)
    x1 = read_matrix_csv(args.x1)
    x2 = read_matrix_csv(args.x2)
    if x1.shape != x2.shape:
        raise ConfigError("x1/x2", "pair matrices must share one shape")
    model = discover_map(x1, x2, args.degree, args.threshold,
                         args.max_iterations, args.ridge)
    path = os.path.join(outdir, "model.json")
    save_model(model, path)
    print(f"model with {len(model.active_terms())} active terms written to {path}")
    return EXIT_OK


def cmd_iterate(args) -> int:
    outdir = _ensure_outdir(args.output_dir)
    model = load_model(args.model)
    x0 = np.array([float(v) for v in args.x0.split(",")])
    run = mapmodel.iterate(model, x0, args.steps)
    path = os.path.join(outdir, "iterates.csv")
    write_iterates_csv(run.states, path, model.var_names, run.diverged)
    print(f"{len(run.states) - 1} iterates written to {path}"
          + (" (diverged)" if run.diverged else ""))
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load(args.config, args.seed)
    outdir = _ensure_outdir(args.output_dir)
    model = load_model(args.model)
    seqs = [read_samples_csv(p, source_id=str(i))
            for i, p in enumerate(args.section)]
    x1, x2 = build_pairs(seqs, cfg.skip)
    theta = evaluate_library(model.library, x1)
    report = stage_analyze(cfg, outdir, model, seqs, theta, x2)
    write_report(report, os.path.join(outdir, "report.txt"))
    for key, value in report.items():
        print(f"{key}: {value}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args.config, args.seed)
    outdir = _ensure_outdir(args.output_dir)
    x1 = read_matrix_csv(args.x1)
    x2 = read_matrix_csv(args.x2)
    seq = read_samples_csv(args.section)
    from .features import build_library
    from .section import SampleSequence
    lib = build_library(x1.shape[1], cfg.library_degree)
    theta = evaluate_library(lib, x1)
    lambdas = args.lambdas or list(cfg.analysis.sweep)
    if not lambdas:
        raise ConfigError("analysis.sweep", "no sweep thresholds given")
    ref = SampleSequence(seq.samples[cfg.skip:], seq.crossing_times[cfg.skip:],
                         seq.source_id)
    rows = sparsity_sweep(lib, theta, x2, lambdas, ref,
                          cfg.stlsq_max_iterations, cfg.stlsq_ridge)
    path = os.path.join(outdir, "sweep.csv")
    write_sweep_csv(rows, path)
    print(f"{len(rows)} sweep rows written to {path}")
    return EXIT_OK


def cmd_pde(args) -> int:
    cfg = _load(args.config, args.seed)
    if not cfg.is_pde:
        raise ConfigError("system.name", "pde subcommand needs a lambda_omega config")
    outdir = _ensure_outdir(args.output_dir)
    result = run_experiment(cfg, outdir)
    print(f"artifacts written to {result.output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="returnmap",
        description="Discover and analyze sparse polynomial return maps "
                    "from differential-equation trajectories.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default="out",
                       help="artifact directory (default: out)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p = sub.add_parser("run", help="full experiment from a config file")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="integrate trajectories only")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("section", help="sample sections from trajectory CSVs")
    p.add_argument("config")
    p.add_argument("--trajectory", action="append", required=True,
                   help="trajectory CSV (repeatable)")
    common(p)
    p.set_defaults(func=cmd_section)

    p = sub.add_parser("discover", help="fit a sparse map from pair CSVs")
    p.add_argument("--x1", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--degree", type=int, default=5)
    p.add_argument("--lambda", dest="threshold", type=float, required=True)
    p.add_argument("--max-iterations", type=int, default=25)
    p.add_argument("--ridge", type=float, default=0.0)
    common(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("iterate", help="iterate a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--steps", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("analyze", help="fixed points / cycles / bands of a model")
    p.add_argument("config")
    p.add_argument("--model", required=True)
    p.add_argument("--section", action="append", required=True,
                   help="section CSV (repeatable)")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="threshold sweep over pair CSVs")
    p.add_argument("config")
    p.add_argument("--x1", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--section", required=True)
    p.add_argument("--lambdas", type=float, nargs="*", default=None)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pde", help="reaction-diffusion mode-map pipeline")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_pde)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: numerical divergence: {exc} (last finite time {exc.time:g})",
              file=sys.stderr)
        try:
            outdir = _ensure_outdir(args.output_dir)
            with open(os.path.join(outdir, "divergence.txt"), "w",
                      encoding="utf-8", newline="\n") as fh:
                fh.write(f"diverged: true\nmessage: {exc}\nlast_finite_time: {exc.time:g}\n")
        except OSError:
            pass
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
