"""Poincare-section sampling of trajectories and regression-pair assembly.

Two section kinds: `strobe` records the state at t = phase + k T (the natural
section of a T-periodically forced system), `hyperplane` records transverse
crossings of n . x = c, refined to |n . x - c| < 1e-10 by bisection on the
dense interpolant.  Crossing error must sit far below the regression
thresholds, which live in [1e-3, 1e-1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import OdeSystem, Trajectory, dense_eval

CROSSING_TOL = 1.0e-10
GRAZING_TOL = 1.0e-8
MAX_BISECTIONS = 80


@dataclass(frozen=True)
class SectionSpec:
    """Strobe (period, phase) or hyperplane (normal, offset, direction) section.

    direction: +1 keeps rising crossings (d/dt of n.x positive), -1 falling,
    0 both.  record_indices selects which state coordinates are recorded
    (hyperplane sections usually drop the coordinate pinned by the section).
    guard_index optionally restricts to crossings with that coordinate
    positive, e.g. the positive-x-axis section of a planar oscillator.
    """

    kind: str
    period: float | None = None
    phase: float = 0.0
    normal: tuple[float, ...] | None = None
    offset: float = 0.0
    direction: int = 1
    record_indices: tuple[int, ...] | None = None
    guard_index: int | None = None

    def __post_init__(self):
        if self.kind not in ("strobe", "hyperplane"):
            raise ValueError(f"unknown section kind '{self.kind}'")
        if self.kind == "strobe":
            if self.period is None or not self.period > 0:
                raise ValueError("strobe section needs a positive period")
        else:
            if self.normal is None or not any(v != 0 for v in self.normal):
                raise ValueError("hyperplane section needs a nonzero normal")
            if self.direction not in (-1, 0, 1):
                raise ValueError("direction must be -1, 0 or +1")
            if self.record_indices is not None:
                idx = self.record_indices
                if len(idx) == 0:
                    raise ValueError("record_indices must be nonempty")
                if any(b <= a for a, b in zip(idx, idx[1:])):
                    raise ValueError("record_indices must be strictly increasing")
                if min(idx) < 0 or max(idx) >= len(self.normal):
                    raise ValueError("record_indices out of bounds")


def strobe_spec(period: float, phase: float = 0.0) -> SectionSpec:
    return SectionSpec(kind="strobe", period=period, phase=phase)


def hyperplane_spec(normal, offset: float = 0.0, direction: int = 1,
                    record_indices=None, guard_index: int | None = None) -> SectionSpec:
    return SectionSpec(kind="hyperplane", normal=tuple(float(v) for v in normal),
                       offset=float(offset), direction=int(direction),
                       record_indices=None if record_indices is None
                       else tuple(int(i) for i in record_indices),
                       guard_index=guard_index)


@dataclass(frozen=True)
class SampleSequence:
    """Ordered section samples from one trajectory."""

    samples: np.ndarray        # (n, d_recorded)
    crossing_times: np.ndarray  # (n,)
    source_id: str = ""

    def __post_init__(self):
        if len(self.samples) != len(self.crossing_times):
            raise ValueError("samples and crossing_times lengths differ")
        if len(self.crossing_times) > 1 and np.any(np.diff(self.crossing_times) <= 0):
            raise ValueError("crossing_times must strictly increase")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]


def strobe_sample(traj: Trajectory, spec: SectionSpec,
                  system: OdeSystem | None = None,
                  source_id: str = "") -> SampleSequence:
    """Record the state at every strobe instant phase + k T inside the span.

    When dt divides T (to 1e-9) samples are taken straight off the step grid;
    otherwise the dense interpolant is queried, which requires `system`.
    """
    if spec.kind != "strobe":
        raise ValueError("strobe_sample needs a strobe SectionSpec")
    times = traj.times
    t_start, t_end = float(times[0]), float(times[-1])
    period = float(spec.period)
    k0 = int(np.ceil((t_start - spec.phase) / period - 1e-9))
    k1 = int(np.floor((t_end - spec.phase) / period + 1e-9))
    if k1 < k0:
        raise ValueError("no strobe instants fall inside the trajectory span")
    instants = spec.phase + period * np.arange(k0, k1 + 1)
    idx = np.rint((instants - t_start) / traj.step).astype(int)
    idx = np.clip(idx, 0, len(times) - 1)
    aligned = np.max(np.abs(times[idx] - instants)) <= 1e-9 * max(1.0, abs(t_end))
    if aligned:
        samples = traj.states[idx].copy()
        stamps = times[idx].copy()
    else:
        if system is None:
            raise ValueError("dt does not divide the strobe period; "
                             "pass the system so dense output can be used")
        samples = np.array([dense_eval(traj, system, t) for t in instants])
        stamps = instants
    return SampleSequence(samples, stamps, source_id)


def crossing_sample(system: OdeSystem, traj: Trajectory, spec: SectionSpec,
                    source_id: str = "") -> SampleSequence:
    """Detect and refine transverse hyperplane crossings of the trajectory.

    Sign changes of g(x) = n.x - c between stored steps are refined by
    bisection on the dense interpolant until |g| < 1e-10 or 80 halvings.
    Grazing crossings (|dg/dt| < 1e-8) are rejected, as are crossings of the
    wrong direction, guard violations, and repeats within 10 dt of the
    previously kept crossing.  Short trajectories yield short sequences, not
    errors.
    """
    if spec.kind != "hyperplane":
        raise ValueError("crossing_sample needs a hyperplane SectionSpec")
    normal = np.asarray(spec.normal, dtype=float)
    if len(normal) != traj.dimension:
        raise ValueError("normal length does not match trajectory dimension")
    offset = spec.offset
    g = traj.states @ normal - offset
    neg = g < 0.0
    hits = np.nonzero(neg[:-1] != neg[1:])[0]
    if spec.direction != 0:
        rising = g[hits + 1] > g[hits]
        hits = hits[rising if spec.direction > 0 else ~rising]
    times = traj.times
    record = (spec.record_indices if spec.record_indices is not None
              else tuple(range(traj.dimension)))
    kept_samples = []
    kept_times = []
    last_t = None
    dedup_window = 10.0 * traj.step
    for i in hits:
        a, b = times[i], times[i + 1]
        ga = g[i]
        tau = a
        state = traj.states[i]
        gm = ga
        if ga == 0.0:
            pass
        else:
            for _ in range(MAX_BISECTIONS):
                tau = 0.5 * (a + b)
                state = dense_eval(traj, system, tau)
                gm = float(state @ normal - offset)
                if abs(gm) < CROSSING_TOL:
                    break
                if (gm < 0.0) == (ga < 0.0):
                    a, ga = tau, gm
                else:
                    b = tau
        gdot = float(system.field_eval(tau, state) @ normal)
        if abs(gdot) < GRAZING_TOL:
            continue
        if spec.direction != 0 and (1 if gdot > 0 else -1) != spec.direction:
            continue
        if spec.guard_index is not None and state[spec.guard_index] <= 0.0:
            continue
        if last_t is not None and tau - last_t < dedup_window:
            continue
        kept_samples.append(state[list(record)])
        kept_times.append(tau)
        last_t = tau
    samples = (np.array(kept_samples) if kept_samples
               else np.empty((0, len(record))))
    return SampleSequence(samples, np.array(kept_times), source_id)


def build_pairs(seqs, skip: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stack (x_n, x_{n+1}) rows from each sequence after dropping `skip` samples.

    Pairs never straddle two sequences; the matrices have shape (m, d) with
    m = sum over sequences of max(len - skip - 1, 0).
    """
    if skip < 0:
        raise ValueError("skip must be nonnegative")
    seqs = list(seqs)
    if not seqs:
        raise ValueError("no sample sequences given")
    dims = {seq.dimension for seq in seqs}
    if len(dims) != 1:
        raise ValueError(f"sample sequences have mixed dimensions: {sorted(dims)}")
    x1_parts = []
    x2_parts = []
    for seq in seqs:
        s = seq.samples[skip:]
        if len(s) >= 2:
            x1_parts.append(s[:-1])
            x2_parts.append(s[1:])
    d = dims.pop()
    if not x1_parts:
        return np.empty((0, d)), np.empty((0, d))
    return np.vstack(x1_parts), np.vstack(x2_parts)


def write_samples_csv(seq: SampleSequence, path, var_names=None) -> None:
    """CSV export with header n,t,x1,...,xd at 17 significant digits."""
    d = seq.dimension
    names = list(var_names) if var_names else [f"x{i + 1}" for i in range(d)]
    if len(names) != d:
        raise ValueError("var_names length does not match sample dimension")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n,t," + ",".join(names) + "\n")
        for i, (t, row) in enumerate(zip(seq.crossing_times, seq.samples)):
            fh.write("%d,%.17g," % (i, t) + ",".join("%.17g" % v for v in row) + "\n")


def read_samples_csv(path, source_id: str = "") -> SampleSequence:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.size == 0:
        return SampleSequence(np.empty((0, 1)), np.empty(0), source_id)
    if data.ndim == 1:
        data = data[None, :]
    return SampleSequence(data[:, 2:], data[:, 1], source_id)


def write_matrix_csv(matrix: np.ndarray, path, var_names=None) -> None:
    """Plain data-matrix CSV (header x1,...,xd), used for regression pairs."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = matrix.shape[1]
    names = list(var_names) if var_names else [f"x{i + 1}" for i in range(d)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in matrix:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        ncols = len(fh.readline().strip().split(","))
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    return data.reshape(-1, ncols)
