"""End-to-end experiment runs: simulate -> section -> discover -> analyze.

Artifacts land in one deterministic directory with fixed file names and no
timestamps, so identical config + seed reproduces the directory byte for
byte and golden-file tests stay stable.  `run_experiment` composes the same
stage functions the CLI subcommands expose individually.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import mapmodel
from .config import ConfigError, ExperimentConfig
from .dynamics import (DivergenceError, OdeSystem, Trajectory, builtin_system,
                       integrate_batch, write_trajectory_csv)
from .features import (build_library, default_var_names, evaluate_library,
                       library_fingerprint)
from .mapmodel import MapModel, save_model, sparsity_sweep, training_error, write_sweep_csv
from .pde import (SnapshotMatrix, energy_fraction, lambda_omega_simulate,
                  mode_timeseries, reconstruct_field, snapshot_svd, spiral_field,
                  write_snapshots_csv)
from .regression import StlsqConfig, residual_rms, stlsq
from .rng import SplitMix64
from .section import (SampleSequence, build_pairs, crossing_sample, strobe_sample,
                      write_matrix_csv, write_samples_csv)


@dataclass(frozen=True)
class ExperimentResult:
    output_dir: str
    report_path: str
    model_path: str | None
    report: dict


def _fmt(v: float) -> str:
    return "%.17g" % v


def draw_initial_conditions(cfg: ExperimentConfig) -> np.ndarray:
    """Seeded uniform draws from the init box, trajectory-major order."""
    lows, highs = cfg.integration.init_box
    rng = SplitMix64(cfg.seed)
    ics = [rng.uniform_vector(lows, highs)
           for _ in range(cfg.integration.n_trajectories)]
    return np.array(ics)


def section_var_names(cfg: ExperimentConfig, system: OdeSystem) -> tuple[str, ...]:
    full = default_var_names(system.dimension)
    if cfg.section.kind == "strobe":
        return full
    record = (cfg.section.record_indices
              if cfg.section.record_indices is not None
              else tuple(range(system.dimension)))
    return tuple(full[i] for i in record)


def stage_simulate(cfg: ExperimentConfig, outdir: str) -> list[Trajectory]:
    system = builtin_system(cfg.system_name, cfg.overrides)
    ics = draw_initial_conditions(cfg)
    trajs = integrate_batch(system, ics, cfg.integration.t0, cfg.integration.t1,
                            cfg.integration.dt)
    names = default_var_names(system.dimension)
    for i, traj in enumerate(trajs):
        write_trajectory_csv(traj, os.path.join(outdir, f"trajectory_{i:02d}.csv"),
                             names)
    return trajs


def stage_section(cfg: ExperimentConfig, outdir: str,
                  trajs: list[Trajectory]) -> tuple[list[SampleSequence], np.ndarray, np.ndarray]:
    system = builtin_system(cfg.system_name, cfg.overrides)
    names = section_var_names(cfg, system)
    seqs = []
    for i, traj in enumerate(trajs):
        if cfg.section.kind == "strobe":
            seq = strobe_sample(traj, cfg.section, system=system, source_id=str(i))
        else:
            seq = crossing_sample(system, traj, cfg.section, source_id=str(i))
        write_samples_csv(seq, os.path.join(outdir, f"section_{i:02d}.csv"), names)
        seqs.append(seq)
    x1, x2 = build_pairs(seqs, cfg.skip)
    write_matrix_csv(x1, os.path.join(outdir, "pairs_x1.csv"), names)
    write_matrix_csv(x2, os.path.join(outdir, "pairs_x2.csv"), names)
    return seqs, x1, x2


def discover_map(x1: np.ndarray, x2: np.ndarray, degree: int, threshold: float,
                 max_iterations: int = 25, ridge: float = 0.0,
                 var_names=None) -> MapModel:
    lib = build_library(x1.shape[1], degree)
    theta = evaluate_library(lib, x1)
    coeffs = stlsq(theta, x2, StlsqConfig(threshold, max_iterations, ridge),
                   library_fingerprint(lib))
    names = tuple(var_names) if var_names else default_var_names(lib.dimension)
    return MapModel(lib, coeffs, names)


def stage_discover(cfg: ExperimentConfig, outdir: str, x1: np.ndarray,
                   x2: np.ndarray, var_names) -> MapModel:
    if x1.shape[0] < 2:
        raise DivergenceError("too few section pairs to fit a map", time=float("nan"))
    model = discover_map(x1, x2, cfg.library_degree, cfg.stlsq_threshold,
                         cfg.stlsq_max_iterations, cfg.stlsq_ridge, var_names)
    save_model(model, os.path.join(outdir, "model.json"))
    return model


def write_error_csv(err: mapmodel.TrainingErrorResult, path, var_names) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n," + ",".join(f"err_{n}" for n in var_names) + "\n")
        for i, row in enumerate(err.errors):
            fh.write("%d," % i + ",".join(_fmt(v) for v in row) + "\n")


def write_iterates_csv(states: np.ndarray, path, var_names,
                       diverged: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n," + ",".join(var_names) + "\n")
        for i, row in enumerate(states):
            fh.write("%d," % i + ",".join(_fmt(v) for v in row) + "\n")
        if diverged:
            fh.write("# diverged\n")


def _multiplier_text(mults) -> str:
    parts = []
    for m in mults:
        if abs(m.imag) < 1e-14:
            parts.append(_fmt(m.real))
        else:
            parts.append("%s%+sj" % (_fmt(m.real), _fmt(m.imag)))
    return "(" + ", ".join(parts) + ")"


def stage_analyze(cfg: ExperimentConfig, outdir: str, model: MapModel,
                  seqs: list[SampleSequence], theta: np.ndarray,
                  x2: np.ndarray) -> dict:
    """Error series, optional fixed points / cycle / bands / sweep / forecast."""
    analysis = cfg.analysis
    names = model.var_names
    report: dict = {}
    report["system"] = cfg.system_name
    report["lambda"] = cfg.stlsq_threshold
    report["section_dimension"] = model.dimension
    report["pairs"] = theta.shape[0]
    report["active_terms"] = ", ".join(model.active_terms()) or "(none)"
    for j, name in enumerate(names):
        report[f"model[{name}]"] = model.formulas()[j]
    rms = residual_rms(theta, model.coefficients, x2)
    for j, name in enumerate(names):
        report[f"residual_rms[{name}]"] = _fmt(float(rms[j]))

    ref = None
    for seq in seqs:
        if len(seq) > cfg.skip + 1:
            ref = SampleSequence(seq.samples[cfg.skip:],
                                 seq.crossing_times[cfg.skip:], seq.source_id)
            break
    if ref is not None:
        err = training_error(model, ref)
        write_error_csv(err, os.path.join(outdir, "error.csv"), names)
        report["training_error_l2"] = _fmt(err.l2)
        report["training_error_diverged"] = str(err.diverged).lower()

    if analysis.fixed_points:
        box = analysis.fixed_point_box or [-2.0, 2.0]
        try:
            points = mapmodel.find_fixed_points(model, np.asarray(box, dtype=float),
                                                analysis.seeds_per_axis)
            report["fixed_points"] = len(points)
            for i, fp in enumerate(points):
                stable = "marginal" if fp.stable is None else str(fp.stable).lower()
                report[f"fixed_point[{i}]"] = (
                    "location=(%s), multipliers=%s, stable=%s, residual=%.3g"
                    % (", ".join(_fmt(v) for v in fp.location),
                       _multiplier_text(fp.multipliers), stable, fp.residual))
        except mapmodel.DegenerateMapError:
            report["fixed_points"] = "identity-like"

    x0 = ref.samples[0] if ref is not None else None
    if analysis.cycle and x0 is not None:
        try:
            found = mapmodel.detect_cycle(model, x0, analysis.cycle_transient,
                                          analysis.cycle_max_period, analysis.cycle_tol)
        except DivergenceError:
            found = None
            report["cycle_diverged"] = "true"
        if found is None:
            report["cycle_period"] = "none"
        else:
            period, points = found
            report["cycle_period"] = period
            for i, row in enumerate(points):
                report[f"cycle_point[{i}]"] = "(" + ", ".join(_fmt(v) for v in row) + ")"

    if analysis.bands and x0 is not None:
        total = analysis.band_transient + analysis.band_iterates
        run = mapmodel.iterate(model, x0, total)
        if run.diverged or len(run.states) <= analysis.band_transient:
            report["bands"] = "diverged"
        else:
            tail = run.states[analysis.band_transient:]
            report["bands"] = mapmodel.band_histogram(tail[:, 0] if model.dimension == 1
                                                      else tail.ravel(),
                                                      analysis.band_bins)

    if analysis.sweep and ref is not None:
        rows = sparsity_sweep(model.library, theta, x2, analysis.sweep, ref,
                              cfg.stlsq_max_iterations, cfg.stlsq_ridge, names)
        write_sweep_csv(rows, os.path.join(outdir, "sweep.csv"))
        report["sweep_rows"] = len(rows)

    if analysis.forecast > 0 and ref is not None:
        run = mapmodel.iterate(model, ref.samples[-1], analysis.forecast)
        write_iterates_csv(run.states, os.path.join(outdir, "forecast.csv"),
                           names, run.diverged)
        report["forecast_steps"] = len(run.states) - 1
        report["forecast_diverged"] = str(run.diverged).lower()
    return report


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in report.items():
            fh.write(f"{key}: {value}\n")


def run_ode_experiment(cfg: ExperimentConfig, outdir: str) -> ExperimentResult:
    trajs = stage_simulate(cfg, outdir)
    seqs, x1, x2 = stage_section(cfg, outdir, trajs)
    system = builtin_system(cfg.system_name, cfg.overrides)
    names = section_var_names(cfg, system)
    model = stage_discover(cfg, outdir, x1, x2, names)
    theta = evaluate_library(model.library, x1)
    report = stage_analyze(cfg, outdir, model, seqs, theta, x2)
    report_path = os.path.join(outdir, "report.txt")
    write_report(report, report_path)
    return ExperimentResult(outdir, report_path,
                            os.path.join(outdir, "model.json"), report)


def run_pde_experiment(cfg: ExperimentConfig, outdir: str) -> ExperimentResult:
    pde = cfg.pde
    init = spiral_field(pde.nx, pde.ny, pde.lx, pde.ly)
    snaps_u, snaps_v = lambda_omega_simulate(
        {"D": pde.diffusion, "beta": pde.beta}, init, pde.t_end, pde.dt,
        pde.snap_stride, pde.literal_printed_form)
    svd_u = snapshot_svd(snaps_u, pde.rank)
    svd_v = snapshot_svd(snaps_v, pde.rank)
    for tag, svd in (("u", svd_u), ("v", svd_v)):
        with open(os.path.join(outdir, f"singular_values_{tag}.csv"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write("k,sigma\n")
            for k, s in enumerate(svd.singular_values):
                fh.write("%d,%s\n" % (k, _fmt(s)))
    if pde.export_snapshots:
        write_snapshots_csv(snaps_u, os.path.join(outdir, "snapshots_u.csv"),
                            os.path.join(outdir, "snapshots_meta.txt"), init)

    seq = mode_timeseries(svd_u, (0, 1), pde.mode_stride, times=snaps_u.times)
    names = ("m1", "m2")
    write_samples_csv(seq, os.path.join(outdir, "modes.csv"), names)
    x1, x2 = build_pairs([seq], pde.skip)
    model = stage_discover(cfg, outdir, x1, x2, names)
    theta = evaluate_library(model.library, x1)

    report: dict = {}
    report["system"] = "lambda_omega"
    report["lambda"] = cfg.stlsq_threshold
    report["snapshots"] = snaps_u.columns.shape[1]
    report["mode_samples"] = len(seq)
    report["top2_energy_u"] = _fmt(energy_fraction(svd_u, snaps_u, 2))
    report["top2_energy_v"] = _fmt(energy_fraction(svd_v, snaps_v, 2))
    report["active_terms"] = ", ".join(model.active_terms()) or "(none)"
    for j, name in enumerate(names):
        report[f"model[{name}]"] = model.formulas()[j]

    ref = SampleSequence(seq.samples[pde.skip:], seq.crossing_times[pde.skip:],
                         seq.source_id)
    err = training_error(model, ref)
    write_error_csv(err, os.path.join(outdir, "error.csv"), names)
    report["training_error_l2"] = _fmt(err.l2)

    if cfg.analysis.sweep:
        rows = sparsity_sweep(model.library, theta, x2, cfg.analysis.sweep, ref,
                              cfg.stlsq_max_iterations, cfg.stlsq_ridge, names)
        write_sweep_csv(rows, os.path.join(outdir, "sweep.csv"))
        report["sweep_rows"] = len(rows)

    run = mapmodel.iterate(model, ref.samples[-1], pde.forecast)
    write_iterates_csv(run.states, os.path.join(outdir, "forecast_modes.csv"),
                       names, run.diverged)
    recon = np.stack([reconstruct_field(svd_u, mv) for mv in run.states[1:]], axis=1) \
        if len(run.states) > 1 else np.empty((snaps_u.columns.shape[0], 0))
    step_gap = pde.mode_stride * pde.snap_stride * pde.dt
    recon_times = ref.crossing_times[-1] + step_gap * np.arange(1, recon.shape[1] + 1)
    write_snapshots_csv(SnapshotMatrix(recon, recon_times),
                        os.path.join(outdir, "reconstruction.csv"))
    report["forecast_steps"] = recon.shape[1]
    report["forecast_diverged"] = str(run.diverged).lower()

    lows = seq.samples.min(axis=0)
    highs = seq.samples.max(axis=0)
    rng = SplitMix64(cfg.seed)
    ics = np.array([rng.uniform_vector(lows, highs) for _ in range(pde.batch_size)])
    _, diverged = mapmodel.iterate_batch(model, ics, pde.batch_steps)
    with open(os.path.join(outdir, "batch_labels.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("trajectory,label\n")
        for i, dv in enumerate(diverged):
            fh.write("%d,%s\n" % (i, "diverged" if dv else "bounded"))
    report["batch_size"] = pde.batch_size
    report["batch_bounded"] = int(np.sum(~diverged))
    report["batch_diverged"] = int(np.sum(diverged))

    report_path = os.path.join(outdir, "report.txt")
    write_report(report, report_path)
    return ExperimentResult(outdir, report_path,
                            os.path.join(outdir, "model.json"), report)


def run_experiment(cfg: ExperimentConfig, output_dir: str,
                   seed: int | None = None) -> ExperimentResult:
    """Full pipeline for one config; writes the artifact directory."""
    if seed is not None:
        object.__setattr__(cfg, "seed", int(seed))
        if cfg.integration is not None:
            object.__setattr__(cfg.integration, "seed", int(seed))
    os.makedirs(output_dir, exist_ok=True)
    if not os.path.isdir(output_dir):
        raise OSError(f"cannot create output directory {output_dir}")
    if cfg.is_pde:
        return run_pde_experiment(cfg, output_dir)
    return run_ode_experiment(cfg, output_dir)
