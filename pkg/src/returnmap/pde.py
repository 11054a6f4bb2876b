"""Reaction-diffusion front end: spiral-wave simulation and snapshot SVD.

The two-species system couples diffusion with reaction terms driven by the
squared amplitude A = u^2 + v^2 through gain(A) = 1 - A^2 and
rotation(A) = -beta A^2:

    u_t = D lap(u) + gain(A) u - rot(A) v
    v_t = D lap(v) + rot(A) u + gain(A) v

This is the classical lambda-omega form: the A = 1 circle attracts and the
pair rotates rigidly at rate rot(1) = -beta, which is what sustains spiral
waves and the two dominant quadrature modes downstream.  The
`literal_printed_form` switch swaps in the variant with lap(u) in the second
equation and -gain(A) v, which leaves the amplitude neutrally stable.

Snapshot reduction uses the method of snapshots: the small snapshot Gram
matrix is diagonalized by a cyclic Jacobi sweep, written here against numpy
row/column updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .section import SampleSequence


@dataclass(frozen=True)
class Field2D:
    """Periodic square-grid field pair on [-lx, lx] x [-ly, ly]."""

    nx: int
    ny: int
    lx: float
    ly: float
    u: np.ndarray  # (ny, nx)
    v: np.ndarray  # (ny, nx)

    def __post_init__(self):
        if self.u.shape != (self.ny, self.nx) or self.v.shape != (self.ny, self.nx):
            raise ValueError("field arrays must have shape (ny, nx)")
        hx = 2.0 * self.lx / self.nx
        hy = 2.0 * self.ly / self.ny
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ValueError("grid spacing must be equal on both axes")

    @property
    def spacing(self) -> float:
        return 2.0 * self.lx / self.nx


@dataclass(frozen=True)
class SnapshotMatrix:
    """Time-ordered state snapshots, one column per instant."""

    columns: np.ndarray  # (n_space, n_snapshots)
    times: np.ndarray    # (n_snapshots,)

    def __post_init__(self):
        if self.columns.shape[1] != len(self.times):
            raise ValueError("snapshot count does not match times")
        if len(self.times) > 2:
            gaps = np.diff(self.times)
            if np.max(np.abs(gaps - gaps[0])) > 1e-9 * max(1.0, abs(self.times[-1])):
                raise ValueError("snapshots must be uniformly spaced")


@dataclass(frozen=True)
class SvdResult:
    """Truncated snapshot SVD: M ~= sum_k spatial_modes[:, k] * temporal_modes[k]."""

    spatial_modes: np.ndarray    # (n_space, rank), orthonormal columns
    singular_values: np.ndarray  # (rank,), nonincreasing
    temporal_modes: np.ndarray   # (rank, n_snapshots), sigma_k * v_k rows
    rank: int


def grid_coordinates(nx: int, ny: int, lx: float, ly: float):
    """Cell-centered periodic grid coordinates, x fastest along axis 1."""
    hx = 2.0 * lx / nx
    hy = 2.0 * ly / ny
    x = -lx + hx * np.arange(nx)
    y = -ly + hy * np.arange(ny)
    return np.meshgrid(x, y)


def spiral_field(nx: int, ny: int, lx: float, ly: float) -> Field2D:
    """One-armed spiral seed u = tanh(r) cos(th - r), v = tanh(r) sin(th - r)."""
    xg, yg = grid_coordinates(nx, ny, lx, ly)
    r = np.hypot(xg, yg)
    th = np.arctan2(yg, xg)
    amp = np.tanh(r)
    return Field2D(nx, ny, lx, ly, amp * np.cos(th - r), amp * np.sin(th - r))


def uniform_field(nx: int, ny: int, lx: float, ly: float,
                  u0: float, v0: float) -> Field2D:
    return Field2D(nx, ny, lx, ly,
                   np.full((ny, nx), float(u0)), np.full((ny, nx), float(v0)))


def laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """Five-point periodic Laplacian."""
    return (np.roll(f, 1, axis=0) + np.roll(f, -1, axis=0)
            + np.roll(f, 1, axis=1) + np.roll(f, -1, axis=1) - 4.0 * f) / (h * h)


def lambda_omega_simulate(params, init: Field2D, t_end: float, dt: float,
                          snap_stride: int = 1,
                          literal_printed_form: bool = False):
    """RK4 time-stepping of the reaction-diffusion pair with snapshot capture.

    Returns (u_snapshots, v_snapshots) as SnapshotMatrix.  Snapshots are the
    flattened fields every `snap_stride` steps, starting at t = 0.  The
    explicit-diffusion stability bound dt < h^2 / (4 D) is enforced up front.
    """
    diff = float(params["D"])
    beta = float(params["beta"])
    if snap_stride < 1:
        raise ValueError("snap_stride must be >= 1")
    h = init.spacing
    if diff > 0 and not dt < h * h / (4.0 * diff):
        raise ValueError(
            f"dt={dt:g} violates the diffusion stability bound {h * h / (4.0 * diff):g}")
    if not (np.isfinite(init.u).all() and np.isfinite(init.v).all()):
        raise ValueError("initial fields must be finite")
    nsteps = int(np.ceil(t_end / dt - 1e-9))
    gain_sign = -1.0 if literal_printed_form else 1.0

    def rhs(u, v):
        amp = u * u + v * v
        gain = 1.0 - amp * amp
        rot = -beta * amp * amp
        du = diff * laplacian(u, h) + gain * u - rot * v
        dv = diff * laplacian(u if literal_printed_form else v, h) \
            + rot * u + gain_sign * gain * v
        return du, dv

    u = init.u.astype(float).copy()
    v = init.v.astype(float).copy()
    n_space = init.nx * init.ny
    snaps_u = [u.ravel().copy()]
    snaps_v = [v.ravel().copy()]
    snap_times = [0.0]
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(nsteps):
        k1u, k1v = rhs(u, v)
        k2u, k2v = rhs(u + half * k1u, v + half * k1v)
        k3u, k3v = rhs(u + half * k2u, v + half * k2v)
        k4u, k4v = rhs(u + dt * k3u, v + dt * k3v)
        u = u + sixth * (k1u + 2.0 * (k2u + k3u) + k4u)
        v = v + sixth * (k1v + 2.0 * (k2v + k3v) + k4v)
        if not np.isfinite(u).all() or not np.isfinite(v).all():
            raise ValueError(f"field became non-finite at t={(i + 1) * dt:g}")
        if (i + 1) % snap_stride == 0:
            snaps_u.append(u.ravel().copy())
            snaps_v.append(v.ravel().copy())
            snap_times.append((i + 1) * dt)
    times = np.array(snap_times)
    mu = SnapshotMatrix(np.array(snaps_u).T.reshape(n_space, -1), times)
    mv = SnapshotMatrix(np.array(snaps_v).T.reshape(n_space, -1), times)
    return mu, mv


def jacobi_eigh(s: np.ndarray, tol: float = 1.0e-13, max_sweeps: int = 40):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvector columns), unsorted.  Sweeps stop once
    the off-diagonal Frobenius norm falls below tol * ||S||_F.
    """
    a = np.array(s, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("jacobi_eigh needs a square matrix")
    if n == 1:
        return a[0].copy(), np.eye(1)
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq * apq <= (eps * eps) * abs(a[p, p] * a[q, q]) + 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) \
                    if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    return np.diag(a).copy(), v


def snapshot_svd(m: SnapshotMatrix, rank: int) -> SvdResult:
    """Truncated SVD via the snapshot Gram matrix.

    sigma_k = sqrt of the k-th Gram eigenvalue, spatial modes M q_k / sigma_k,
    temporal modes sigma_k q_k.  Singular values at numerical-noise level
    (below sqrt(n eps) relative) are truncated; an all-zero matrix yields a
    rank-0 result.
    """
    cols = m.columns
    n_snap = cols.shape[1]
    if rank < 0 or rank > n_snap:
        raise ValueError("rank must lie in [0, number of snapshots]")
    gram = cols.T @ cols
    w, q = jacobi_eigh(gram)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    q = q[:, order]
    sigma = np.sqrt(w)
    floor = max(1.0e-14, np.sqrt(n_snap * np.finfo(float).eps) * (sigma[0] if len(sigma) else 0.0))
    usable = int(np.sum(sigma > floor))
    r = min(rank, usable)
    if r == 0:
        n_space = cols.shape[0]
        return SvdResult(np.empty((n_space, 0)), np.empty(0),
                         np.empty((0, n_snap)), 0)
    modes = cols @ q[:, :r] / sigma[:r]
    temporal = (q[:, :r] * sigma[:r]).T
    return SvdResult(modes, sigma[:r].copy(), temporal, r)


def energy_fraction(svd: SvdResult, m: SnapshotMatrix, k: int) -> float:
    """Share of total squared Frobenius energy carried by the top k modes."""
    total = float(np.sum(m.columns * m.columns))
    if total == 0.0:
        return 1.0
    return float(np.sum(svd.singular_values[:k] ** 2)) / total


def mode_timeseries(svd: SvdResult, modes=(0, 1), stride: int = 1,
                    times: np.ndarray | None = None,
                    source_id: str = "modes") -> SampleSequence:
    """Sample the selected temporal modes every `stride` snapshots."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_snap = svd.temporal_modes.shape[1]
    if stride > n_snap:
        raise ValueError("stride exceeds the snapshot count")
    modes = tuple(int(i) for i in modes)
    if any(i >= svd.rank or i < 0 for i in modes):
        raise ValueError("mode index out of range")
    sel = svd.temporal_modes[list(modes)][:, ::stride].T.copy()
    if times is not None:
        stamps = np.asarray(times, dtype=float)[::stride].copy()
    else:
        stamps = np.arange(n_snap, dtype=float)[::stride]
    return SampleSequence(sel, stamps, source_id)


def reconstruct_field(svd: SvdResult, mode_values) -> np.ndarray:
    """Linear combination of the spatial modes weighted by mode_values."""
    mode_values = np.asarray(mode_values, dtype=float)
    if not np.isfinite(mode_values).all():
        raise ValueError("mode values must be finite")
    k = len(mode_values)
    if k > svd.rank:
        raise ValueError("more mode values than available modes")
    if k == 0:
        return np.zeros(svd.spatial_modes.shape[0])
    return svd.spatial_modes[:, :k] @ mode_values


def write_snapshots_csv(m: SnapshotMatrix, path, meta_path=None,
                        grid: Field2D | None = None) -> None:
    """One column per snapshot; optional compact metadata header file."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join("t%d" % i for i in range(m.columns.shape[1])) + "\n")
        for row in m.columns:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
            if grid is not None:
                fh.write("nx: %d\nny: %d\nlx: %.17g\nly: %.17g\n"
                         % (grid.nx, grid.ny, grid.lx, grid.ly))
            fh.write("times: " + ",".join("%.17g" % t for t in m.times) + "\n")
