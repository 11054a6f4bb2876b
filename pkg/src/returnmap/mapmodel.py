"""Discovered polynomial maps: evaluation, iteration and dynamical analysis.

A MapModel pairs a monomial library with a sparse coefficient matrix.  The
analysis here treats map divergence as data, not failure: iteration stops at
a bound with a marker, because even simple quadratic maps send almost every
initial condition to infinity.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DivergenceError
from .features import (FeatureLibrary, build_library, default_var_names,
                       evaluate_library, library_fingerprint, term_name)
from .regression import CoefficientMatrix, StlsqConfig, stlsq

MARGINAL_BAND = 1.0e-8
FIXED_POINT_RES = 1.0e-9


class DegenerateMapError(RuntimeError):
    """Fixed points are not isolated (identity-like map)."""


@dataclass(frozen=True)
class MapModel:
    """A polynomial map x -> Theta(x) @ Xi over a feature library."""

    library: FeatureLibrary
    coefficients: CoefficientMatrix
    var_names: tuple[str, ...]

    def __post_init__(self):
        p, d = self.coefficients.values.shape
        if p != len(self.library.terms):
            raise ValueError("coefficient rows do not match library size")
        if d != self.library.dimension:
            raise ValueError("coefficient columns do not match dimension")
        if len(self.var_names) != d:
            raise ValueError("var_names length does not match dimension")
        fp = library_fingerprint(self.library)
        if self.coefficients.library_fingerprint not in ("", fp):
            raise ValueError("coefficient matrix is bound to a different library")

    @property
    def dimension(self) -> int:
        return self.library.dimension

    def active_terms(self) -> list[str]:
        mask = self.coefficients.support.any(axis=1)
        return [term_name(t, self.var_names)
                for t, keep in zip(self.library.terms, mask) if keep]

    def formulas(self) -> list[str]:
        """One human-readable polynomial per output coordinate."""
        out = []
        for j in range(self.dimension):
            parts = []
            for i, t in enumerate(self.library.terms):
                v = self.coefficients.values[i, j]
                if v == 0.0:
                    continue
                name = term_name(t, self.var_names)
                mono = "%.6g" % v if name == "1" else "%.6g*%s" % (v, name)
                parts.append(mono)
            out.append(" + ".join(parts) if parts else "0")
        return out


@dataclass(frozen=True)
class FixedPointReport:
    """Fixed point with its linearization eigenvalues (Floquet multipliers).

    stable is True/False on a strict margin and None when some multiplier
    modulus falls inside [1 - 1e-8, 1 + 1e-8] (indeterminate).
    """

    location: np.ndarray
    multipliers: tuple[complex, ...]
    stable: bool | None
    residual: float


@dataclass(frozen=True)
class IterationResult:
    """Map iterates (states[0] is the initial point) plus a divergence marker."""

    states: np.ndarray
    diverged: bool

    def __len__(self) -> int:
        return len(self.states)


def make_model(library: FeatureLibrary, values: np.ndarray,
               threshold: float = 0.0, var_names=None) -> MapModel:
    """Wrap a dense (p, d) coefficient array as a MapModel."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    support = values != 0.0
    coeffs = CoefficientMatrix(values, support, library_fingerprint(library),
                               threshold if threshold > 0 else 1e-300)
    names = tuple(var_names) if var_names else default_var_names(library.dimension)
    return MapModel(library, coeffs, names)


def apply(model: MapModel, x) -> np.ndarray:
    """One map step; raises DivergenceError on a non-finite result."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = evaluate_library(model.library, x[None, :])
    out = (theta @ model.coefficients.values)[0]
    if not np.isfinite(out).all():
        raise DivergenceError("map produced a non-finite state", time=math.nan)
    return out


def apply_many(model: MapModel, xs: np.ndarray) -> np.ndarray:
    """Vectorized map step on (m, d) states (no divergence check)."""
    theta = evaluate_library(model.library, xs)
    return theta @ model.coefficients.values


def iterate(model: MapModel, x0, n: int, bound: float = 1.0e6) -> IterationResult:
    """n map iterates from x0; stops early with a marker past the bound."""
    if n < 1:
        raise ValueError("iteration count must be >= 1")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    states = np.empty((n + 1, len(x)))
    states[0] = x
    values = model.coefficients.values
    lib = model.library
    for i in range(n):
        theta = evaluate_library(lib, x[None, :])
        x = (theta @ values)[0]
        if not np.all(np.abs(x) <= bound):  # catches NaN
            return IterationResult(states[: i + 1].copy(), True)
        states[i + 1] = x
    return IterationResult(states, False)


def iterate_batch(model: MapModel, x0s: np.ndarray, n: int,
                  bound: float = 1.0e6) -> tuple[np.ndarray, np.ndarray]:
    """Iterate many initial conditions at once.

    Returns (states, diverged): states has shape (n + 1, m, d) with NaN rows
    after a trajectory diverges, diverged is an (m,) bool mask.
    """
    x = np.atleast_2d(np.asarray(x0s, dtype=float)).copy()
    m, d = x.shape
    states = np.full((n + 1, m, d), np.nan)
    states[0] = x
    alive = np.ones(m, dtype=bool)
    values = model.coefficients.values
    for i in range(n):
        if not alive.any():
            break
        theta = evaluate_library(model.library, x[alive])
        nxt = theta @ values
        ok = np.all(np.abs(nxt) <= bound, axis=1) & np.isfinite(nxt).all(axis=1)
        idx = np.nonzero(alive)[0]
        alive[idx[~ok]] = False
        x[idx[ok]] = nxt[ok]
        states[i + 1, idx[ok]] = nxt[ok]
    return states, ~alive


def jacobian(model: MapModel, x) -> np.ndarray:
    """Exact Jacobian from monomial exponent rules, shape (d, d)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = model.dimension
    exps = np.array(model.library.terms)  # (p, d)
    p = exps.shape[0]
    dtheta = np.zeros((p, d))
    for k in range(d):
        ek = exps[:, k]
        active = ek > 0
        if not active.any():
            continue
        red = exps[active].copy()
        red[:, k] -= 1
        vals = ek[active].astype(float)
        for l in range(d):
            e = red[:, l]
            vals = vals * np.where(e > 0, x[l] ** e, 1.0)
        dtheta[active, k] = vals
    return model.coefficients.values.T @ dtheta


def _eigenvalues(j: np.ndarray) -> tuple[complex, ...]:
    """Eigenvalues of a d x d real matrix, closed form, d <= 3."""
    d = j.shape[0]
    if d == 1:
        return (complex(j[0, 0]),)
    if d == 2:
        tr = j[0, 0] + j[1, 1]
        det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
        disc = cmath.sqrt(complex(tr * tr / 4.0 - det))
        return (tr / 2.0 + disc, tr / 2.0 - disc)
    if d == 3:
        # characteristic polynomial L^3 + a L^2 + b L + c, solved by Cardano
        a = -(j[0, 0] + j[1, 1] + j[2, 2])
        b = (j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
             + j[0, 0] * j[2, 2] - j[0, 2] * j[2, 0]
             + j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
        c = -float(np.linalg.det(j))
        p = b - a * a / 3.0
        q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
        shift = -a / 3.0
        disc = cmath.sqrt(complex(q * q / 4.0 + p ** 3 / 27.0))
        u3 = -q / 2.0 + disc
        if abs(u3) < abs(-q / 2.0 - disc):
            u3 = -q / 2.0 - disc
        if u3 == 0:
            roots = [(-complex(q)) ** (1.0 / 3.0) * w
                     for w in (1, cmath.exp(2j * cmath.pi / 3), cmath.exp(-2j * cmath.pi / 3))]
            return tuple(r + shift for r in roots)
        u = u3 ** (1.0 / 3.0)
        omega = cmath.exp(2j * cmath.pi / 3.0)
        roots = []
        for w in (1.0, omega, omega ** 2):
            uk = u * w
            roots.append(uk - p / (3.0 * uk) + shift)
        return tuple(roots)
    raise ValueError("eigenvalue step supports dimension <= 3 only")


def multipliers(model: MapModel, x) -> tuple[complex, ...]:
    """Floquet multipliers of the map at x: eigenvalues of the Jacobian."""
    return _eigenvalues(jacobian(model, x))


def _stability(mults) -> bool | None:
    mags = [abs(m) for m in mults]
    if any(1.0 - MARGINAL_BAND <= m <= 1.0 + MARGINAL_BAND for m in mags):
        return None
    return all(m < 1.0 for m in mags)


def _report(model: MapModel, x: np.ndarray) -> FixedPointReport:
    res = float(np.linalg.norm(apply(model, x) - x))
    mults = multipliers(model, x)
    return FixedPointReport(np.array(x, dtype=float), mults, _stability(mults), res)


def _newton_polish(model: MapModel, x: np.ndarray, max_iter: int = 60):
    """Damped Newton on F(x) = map(x) - x; returns the root or None."""
    x = np.array(x, dtype=float)
    d = len(x)
    eye = np.eye(d)
    f = apply_many(model, x[None, :])[0] - x
    fn = np.linalg.norm(f)
    for _ in range(max_iter):
        if fn < 1.0e-12:
            return x
        j = jacobian(model, x) - eye
        try:
            delta = np.linalg.solve(j, -f)
        except np.linalg.LinAlgError:
            return None
        step = 1.0
        for _ in range(40):
            xn = x + step * delta
            f_new = apply_many(model, xn[None, :])[0] - xn
            fn_new = np.linalg.norm(f_new)
            if np.isfinite(fn_new) and fn_new < fn:
                x, f, fn = xn, f_new, fn_new
                break
            step *= 0.5
        else:
            return None
    return x if fn < 1.0e-12 else None


def find_fixed_points(model: MapModel, box, seeds_per_axis: int = 12,
                      grid_points: int = 10_000) -> list[FixedPointReport]:
    """Fixed points of the map inside an interval box.

    d = 1 scans the sign of map(x) - x on a dense grid and bisects each
    bracket before a Newton polish; d >= 2 runs damped Newton from a uniform
    seed grid.  Survivors are deduplicated at distance 1e-6 and must satisfy
    |map(x*) - x*| < 1e-9.  A grid on which a large fraction of points is
    already fixed trips the degenerate (identity-like) guard.
    """
    d = model.dimension
    if d > 3:
        raise ValueError("fixed-point analysis supports dimension <= 3")
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :] if d == 1 else np.tile(box, (d, 1))
    if box.shape != (d, 2):
        raise ValueError("search box must provide (lo, hi) per coordinate")
    roots: list[np.ndarray] = []
    if d == 1:
        lo, hi = box[0]
        grid = np.linspace(lo, hi, grid_points + 1)
        fvals = apply_many(model, grid[:, None])[:, 0] - grid
        if np.mean(np.abs(fvals) < FIXED_POINT_RES) > 0.2:
            raise DegenerateMapError(
                "map is identity-like on the search box; fixed points are not isolated")
        sign = fvals < 0
        for i in np.nonzero(sign[:-1] != sign[1:])[0]:
            a, b = grid[i], grid[i + 1]
            fa = fvals[i]
            for _ in range(60):
                mid = 0.5 * (a + b)
                fm = apply_many(model, np.array([[mid]]))[0, 0] - mid
                if (fm < 0) == (fa < 0):
                    a, fa = mid, fm
                else:
                    b = mid
            x = _newton_polish(model, np.array([0.5 * (a + b)]))
            if x is not None:
                roots.append(x)
    else:
        axes = [np.linspace(lo, hi, seeds_per_axis) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        seeds = np.stack([m.ravel() for m in mesh], axis=1)
        for seed in seeds:
            x = _newton_polish(model, seed)
            if x is not None:
                roots.append(x)
    kept: list[np.ndarray] = []
    for x in roots:
        if np.any(x < box[:, 0] - 1e-9) or np.any(x > box[:, 1] + 1e-9):
            continue
        if any(np.linalg.norm(x - y) < 1.0e-6 for y in kept):
            continue
        kept.append(x)
    kept.sort(key=lambda v: tuple(v))
    reports = [_report(model, x) for x in kept]
    return [r for r in reports if r.residual < FIXED_POINT_RES]


def detect_cycle(model: MapModel, x0, transient: int = 100,
                 max_period: int = 64, tol: float = 1.0e-6):
    """Least period k <= max_period sustained over 3k consecutive checks.

    Returns (period, cycle_points) or None for aperiodic/diverging orbits.
    Divergence during the transient raises; divergence later means no cycle
    was confirmed and returns None.
    """
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    need = transient + 4 * max_period
    result = iterate(model, x0, need)
    if result.diverged:
        if len(result.states) <= transient:
            raise DivergenceError("orbit diverged during the transient",
                                  time=float(len(result.states)))
        return None
    x = result.states
    s = transient
    for k in range(1, max_period + 1):
        diffs = x[s + k: s + 4 * k] - x[s: s + 3 * k]
        if np.all(np.linalg.norm(diffs, axis=1) < tol):
            return k, x[s: s + k].copy()
    return None


def band_histogram(iterates, bins: int = 100) -> int:
    """Number of occupied-bin runs separated by >= 2 empty bins.

    Consumes the set of values (order irrelevant); a single empty bin does
    not split a band.
    """
    v = np.asarray(iterates, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("band_histogram needs a nonempty iterate set")
    if not np.isfinite(v).all():
        raise ValueError("band_histogram needs finite iterates")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return 1
    counts, _ = np.histogram(v, bins=bins, range=(lo, hi))
    bands = 0
    gap = bins  # treat the leading edge as a wide gap
    for c in counts:
        if c > 0:
            if gap >= 2:
                bands += 1
            gap = 0
        else:
            gap += 1
    return bands


@dataclass(frozen=True)
class TrainingErrorResult:
    """Free-running model iterates compared against a recorded sequence."""

    errors: np.ndarray  # (n_compared, d) componentwise data - model
    l2: float           # cumulative l2 norm across all steps
    diverged: bool


def training_error(model: MapModel, seq) -> TrainingErrorResult:
    """Iterate freely from the sequence's first sample and track the error."""
    data = np.asarray(seq.samples, dtype=float)
    if len(data) == 0:
        raise ValueError("training_error needs a nonempty sequence")
    sim = iterate(model, data[0], len(data) - 1) if len(data) > 1 else \
        IterationResult(data[:1].copy(), False)
    n = len(sim.states)
    errors = data[:n] - sim.states
    l2 = float(np.sqrt(np.sum(errors * errors)))
    return TrainingErrorResult(errors, l2, sim.diverged)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    n_active: int
    active_terms: tuple[str, ...]
    error_l2: float
    diverged: bool


def sparsity_sweep(library: FeatureLibrary, theta: np.ndarray, x2: np.ndarray,
                   lambdas, seq, max_iterations: int = 25, ridge: float = 0.0,
                   var_names=None) -> list[SweepRow]:
    """Refit at each threshold and report sparsity plus free-running error."""
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas):
        raise ValueError("sweep thresholds must be positive")
    names = tuple(var_names) if var_names else default_var_names(library.dimension)
    fingerprint = library_fingerprint(library)
    rows = []
    for lam in lambdas:
        cfg = StlsqConfig(threshold=lam, max_iterations=max_iterations, ridge=ridge)
        coeffs = stlsq(theta, x2, cfg, fingerprint)
        model = MapModel(library, coeffs, names)
        err = training_error(model, seq)
        active = tuple(model.active_terms())
        rows.append(SweepRow(lam, len(active), active, err.l2, err.diverged))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lambda,n_active,error_l2,diverged,active_terms\n")
        for r in rows:
            fh.write("%.17g,%d,%.17g,%d,%s\n"
                     % (r.threshold, r.n_active, r.error_l2,
                        int(r.diverged), ";".join(r.active_terms)))


# ---------------------------------------------------------------------------
# model persistence


def _format_float(v: float) -> str:
    return "%.17g" % v


def save_model(model: MapModel, path) -> None:
    """Write the model file: grlex term list plus row-aligned coefficients."""
    lib = model.library
    lines = ["{"]
    lines.append('  "dimension": %d,' % lib.dimension)
    lines.append('  "degree": %d,' % lib.max_degree)
    lines.append('  "ordering": "grlex",')
    lines.append('  "var_names": [%s],' % ", ".join('"%s"' % n for n in model.var_names))
    lines.append('  "lambda": %s,' % _format_float(model.coefficients.threshold))
    lines.append('  "library_fingerprint": "%s",' % library_fingerprint(lib))
    terms = ", ".join("[%s]" % ", ".join(str(e) for e in t) for t in lib.terms)
    lines.append('  "terms": [%s],' % terms)
    rows = []
    for row in model.coefficients.values:
        rows.append("    [%s]" % ", ".join(_format_float(v) for v in row))
    lines.append('  "coefficients": [')
    lines.append(",\n".join(rows))
    lines.append("  ]")
    lines.append("}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> MapModel:
    """Read a model file back; lossless against save_model."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed model file {path}: {exc}") from exc
    for field_name in ("dimension", "degree", "ordering", "var_names",
                       "lambda", "library_fingerprint", "terms", "coefficients"):
        if field_name not in doc:
            raise ValueError(f"model file missing field '{field_name}'")
    if doc["ordering"] != "grlex":
        raise ValueError(f"unsupported term ordering '{doc['ordering']}'")
    lib = build_library(int(doc["dimension"]), int(doc["degree"]))
    stored_terms = tuple(tuple(int(e) for e in t) for t in doc["terms"])
    if stored_terms != lib.terms:
        raise ValueError("model file term list does not match grlex ordering")
    fp = library_fingerprint(lib)
    if doc["library_fingerprint"] != fp:
        raise ValueError("fingerprint mismatch between library and coefficients")
    values = np.asarray(doc["coefficients"], dtype=float)
    if values.shape != (len(lib.terms), lib.dimension):
        raise ValueError("coefficient array shape does not match the library")
    lam = float(doc["lambda"])
    support = values != 0.0
    coeffs = CoefficientMatrix(values, support, fp, lam if lam > 0 else 1e-300)
    return MapModel(lib, coeffs, tuple(str(n) for n in doc["var_names"]))
