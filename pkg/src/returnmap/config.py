"""Experiment configuration: flat dotted key = value text files.

The format is deliberately zero-dependency and diff-friendly: one
`section.key = value` assignment per line, `#` comments, values parsed as
JSON scalars/arrays with bare words falling back to strings.  Validation is
fail-fast and every violation names the offending field path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .dynamics import builtin_system
from .section import SectionSpec, hyperplane_spec, strobe_spec


class ConfigError(ValueError):
    """Configuration violation carrying the dotted field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"config error at {path}: {message}")
        self.path = path


def parse_config_text(text: str) -> dict:
    """Parse `dotted.key = value` lines into a nested dict."""
    tree: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value  # bare identifiers stay strings
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "key path collides with a scalar value")
        if parts[-1] in node and isinstance(node[parts[-1]], dict):
            raise ConfigError(key, "key path collides with a section")
        node[parts[-1]] = parsed
    return tree


@dataclass(frozen=True)
class IntegrationConfig:
    t0: float
    t1: float
    dt: float
    n_trajectories: int
    seed: int
    init_box: tuple[tuple[float, ...], tuple[float, ...]]


@dataclass(frozen=True)
class AnalysisConfig:
    fixed_points: bool = False
    fixed_point_box: tuple = ()
    seeds_per_axis: int = 12
    cycle: bool = False
    cycle_transient: int = 100
    cycle_max_period: int = 64
    cycle_tol: float = 1.0e-6
    bands: bool = False
    band_bins: int = 100
    band_iterates: int = 5000
    band_transient: int = 500
    sweep: tuple[float, ...] = ()
    forecast: int = 0


@dataclass(frozen=True)
class PdeConfig:
    diffusion: float = 0.1
    beta: float = 1.0
    nx: int = 64
    ny: int = 64
    lx: float = 10.0
    ly: float = 10.0
    t_end: float = 20.0
    dt: float = 0.05
    snap_stride: int = 1
    mode_stride: int = 5
    rank: int = 2
    skip: int = 0
    literal_printed_form: bool = False
    forecast: int = 40
    batch_size: int = 1860
    batch_steps: int = 50
    export_snapshots: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    system_name: str
    overrides: dict
    integration: IntegrationConfig | None
    section: SectionSpec | None
    skip: int
    library_degree: int
    stlsq_threshold: float
    stlsq_max_iterations: int
    stlsq_ridge: float
    analysis: AnalysisConfig
    seed: int = 0
    pde: PdeConfig | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_pde(self) -> bool:
        return self.pde is not None


def _get(tree: dict, path: str, kind, default=None, required: bool = False):
    node = tree
    parts = path.split(".")
    for part in parts[:-1]:
        node = node.get(part, {}) if isinstance(node, dict) else {}
    value = node.get(parts[-1]) if isinstance(node, dict) else None
    if value is None:
        if required:
            raise ConfigError(path, "missing required field")
        return default
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return value
    raise AssertionError(kind)


def _positive(value, path):
    if not value > 0:
        raise ConfigError(path, "must be positive")
    return value


def _validate_section(tree: dict, dimension: int) -> tuple[SectionSpec, int]:
    kind = _get(tree, "section.kind", str, required=True)
    skip = _get(tree, "section.skip", int, default=0)
    if skip < 0:
        raise ConfigError("section.skip", "must be nonnegative")
    if kind == "strobe":
        period = _positive(_get(tree, "section.period", float, required=True),
                           "section.period")
        phase = _get(tree, "section.phase", float, default=0.0)
        return strobe_spec(period, phase), skip
    if kind == "hyperplane":
        normal = _get(tree, "section.normal", list, required=True)
        if len(normal) != dimension:
            raise ConfigError("section.normal",
                              f"length {len(normal)} does not match system dimension {dimension}")
        if not any(v != 0 for v in normal):
            raise ConfigError("section.normal", "must be nonzero")
        offset = _get(tree, "section.offset", float, default=0.0)
        direction = _get(tree, "section.direction", int, default=1)
        if direction not in (-1, 0, 1):
            raise ConfigError("section.direction", "must be -1, 0 or 1")
        record = _get(tree, "section.record", list, default=None)
        if record is not None:
            if not record:
                raise ConfigError("section.record", "must be nonempty")
            if any(not isinstance(i, int) or i < 0 or i >= dimension for i in record):
                raise ConfigError("section.record", "indices out of bounds")
            if any(b <= a for a, b in zip(record, record[1:])):
                raise ConfigError("section.record", "indices must strictly increase")
        guard = _get(tree, "section.guard_index", int, default=None)
        if guard is not None and not 0 <= guard < dimension:
            raise ConfigError("section.guard_index", "index out of bounds")
        try:
            spec = hyperplane_spec(normal, offset, direction,
                                   record_indices=record, guard_index=guard)
        except ValueError as exc:
            raise ConfigError("section", str(exc)) from exc
        return spec, skip
    raise ConfigError("section.kind", f"unknown kind {kind!r}")


def validate_config(tree: dict, name: str = "experiment") -> ExperimentConfig:
    """Build a validated ExperimentConfig from a parsed tree."""
    system_name = _get(tree, "system.name", str, required=True)
    degree = _positive(_get(tree, "library.degree", int, default=5), "library.degree")
    lam = _positive(_get(tree, "stlsq.lambda", float, required=True), "stlsq.lambda")
    max_iter = _positive(_get(tree, "stlsq.max_iterations", int, default=25),
                         "stlsq.max_iterations")
    ridge = _get(tree, "stlsq.ridge", float, default=0.0)
    if ridge < 0:
        raise ConfigError("stlsq.ridge", "must be nonnegative")

    analysis = AnalysisConfig(
        fixed_points=_get(tree, "analysis.fixed_points", bool, default=False),
        fixed_point_box=tuple(_get(tree, "analysis.fixed_point_box", list, default=[])),
        seeds_per_axis=_positive(_get(tree, "analysis.seeds_per_axis", int, default=12),
                                 "analysis.seeds_per_axis"),
        cycle=_get(tree, "analysis.cycle", bool, default=False),
        cycle_transient=_get(tree, "analysis.cycle_transient", int, default=100),
        cycle_max_period=_positive(_get(tree, "analysis.cycle_max_period", int, default=64),
                                   "analysis.cycle_max_period"),
        cycle_tol=_positive(_get(tree, "analysis.cycle_tol", float, default=1.0e-6),
                            "analysis.cycle_tol"),
        bands=_get(tree, "analysis.bands", bool, default=False),
        band_bins=_positive(_get(tree, "analysis.band_bins", int, default=100),
                            "analysis.band_bins"),
        band_iterates=_positive(_get(tree, "analysis.band_iterates", int, default=5000),
                                "analysis.band_iterates"),
        band_transient=_get(tree, "analysis.band_transient", int, default=500),
        sweep=tuple(_get(tree, "analysis.sweep", list, default=[])),
        forecast=_get(tree, "analysis.forecast", int, default=0),
    )
    for lam_s in analysis.sweep:
        if isinstance(lam_s, bool) or not isinstance(lam_s, (int, float)) or lam_s <= 0:
            raise ConfigError("analysis.sweep", "thresholds must be positive numbers")
    if analysis.forecast < 0:
        raise ConfigError("analysis.forecast", "must be nonnegative")

    if system_name == "lambda_omega":
        pde = PdeConfig(
            diffusion=_get(tree, "pde.D", float, default=0.1),
            beta=_get(tree, "pde.beta", float, default=1.0),
            nx=_positive(_get(tree, "pde.nx", int, default=64), "pde.nx"),
            ny=_positive(_get(tree, "pde.ny", int, default=64), "pde.ny"),
            lx=_positive(_get(tree, "pde.lx", float, default=10.0), "pde.lx"),
            ly=_positive(_get(tree, "pde.ly", float, default=10.0), "pde.ly"),
            t_end=_positive(_get(tree, "pde.t_end", float, default=20.0), "pde.t_end"),
            dt=_positive(_get(tree, "pde.dt", float, default=0.05), "pde.dt"),
            snap_stride=_positive(_get(tree, "pde.snap_stride", int, default=1),
                                  "pde.snap_stride"),
            mode_stride=_positive(_get(tree, "pde.mode_stride", int, default=5),
                                  "pde.mode_stride"),
            rank=_positive(_get(tree, "pde.rank", int, default=2), "pde.rank"),
            skip=_get(tree, "pde.skip", int, default=0),
            literal_printed_form=_get(tree, "pde.literal_printed_form", bool,
                                         default=False),
            forecast=_get(tree, "pde.forecast", int, default=40),
            batch_size=_get(tree, "pde.batch_size", int, default=1860),
            batch_steps=_positive(_get(tree, "pde.batch_steps", int, default=50),
                                  "pde.batch_steps"),
            export_snapshots=_get(tree, "pde.export_snapshots", bool, default=False),
        )
        if pde.diffusion < 0:
            raise ConfigError("pde.D", "must be nonnegative")
        if pde.skip < 0:
            raise ConfigError("pde.skip", "must be nonnegative")
        h = 2.0 * pde.lx / pde.nx
        if pde.diffusion > 0 and not pde.dt < h * h / (4.0 * pde.diffusion):
            raise ConfigError("pde.dt",
                              f"violates the diffusion stability bound {h * h / (4.0 * pde.diffusion):g}")
        seed = _get(tree, "integration.seed", int, default=0)
        return ExperimentConfig(name, system_name, {}, None, None, pde.skip,
                                degree, lam, max_iter, ridge, analysis,
                                seed=seed, pde=pde, raw=tree)

    overrides = {k: v for k, v in tree.get("system", {}).items() if k != "name"}
    try:
        system = builtin_system(system_name, overrides)
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from exc

    t0 = _get(tree, "integration.t0", float, default=0.0)
    t1 = _get(tree, "integration.t1", float, required=True)
    dt = _get(tree, "integration.dt", float, required=True)
    if not dt > 0:
        raise ConfigError("integration.dt", "must be positive")
    if not t1 > t0:
        raise ConfigError("integration.t1", "must exceed integration.t0")
    n_traj = _get(tree, "integration.n_trajectories", int, default=1)
    if n_traj < 1:
        raise ConfigError("integration.n_trajectories", "must be >= 1")
    seed = _get(tree, "integration.seed", int, default=0)
    box = _get(tree, "integration.init_box", list, required=True)
    if (len(box) != 2 or not all(isinstance(side, list) for side in box)
            or len(box[0]) != len(box[1])):
        raise ConfigError("integration.init_box", "expected [[lows...], [highs...]]")
    if len(box[0]) != system.dimension:
        raise ConfigError("integration.init_box",
                          f"box dimension {len(box[0])} does not match system dimension "
                          f"{system.dimension}")
    lows = tuple(float(v) for v in box[0])
    highs = tuple(float(v) for v in box[1])
    if any(h < l for l, h in zip(lows, highs)):
        raise ConfigError("integration.init_box", "lows must not exceed highs")
    integration = IntegrationConfig(t0, t1, dt, n_traj, seed, (lows, highs))
    section, skip = _validate_section(tree, system.dimension)
    return ExperimentConfig(name, system_name, overrides, integration, section,
                            skip, degree, lam, max_iter, ridge, analysis,
                            seed=seed, raw=tree)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        tree = parse_config_text(fh.read())
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return validate_config(tree, name)
