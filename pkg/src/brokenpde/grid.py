"""Uniform tensor grids, nodal fields and the quadratures used for frequencies.

Field values are stored with axis 0 along ``x`` and axis 1 along ``y``
(``values[i, j] = f(x_i, y_j)``).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EvalError, OutOfBounds
from .exprlang import Expr, parse

SUPERSAMPLE = 16


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on an interval (``dim=1``) or a rectangle (``dim=2``)."""

    bounds: tuple[tuple[float, float], ...] = ((-1.0, 1.0), (-1.0, 1.0))
    n: int = 65

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(bounds) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if self.n < 9:
            raise ValueError(f"need at least 9 points per axis, got {self.n}")
        for lo, hi in bounds:
            if not hi > lo:
                raise ValueError(f"empty axis ({lo}, {hi})")
        spacings = [(hi - lo) / (self.n - 1) for lo, hi in bounds]
        if not np.allclose(spacings, spacings[0], rtol=1e-12):
            raise ValueError("axes must share one spacing (square cells)")
        if self.n % 2 == 0 and all(math.isclose(lo, -hi) for lo, hi in bounds):
            warnings.warn("even n on a symmetric domain: the origin is not a grid node", stacklevel=3)

    @classmethod
    def square(cls, n: int, half_width: float = 1.0) -> GridSpec:
        return cls(((-half_width, half_width), (-half_width, half_width)), n)

    @classmethod
    def interval(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> GridSpec:
        return cls(((lo, hi),), n)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def h(self) -> float:
        lo, hi = self.bounds[0]
        return (hi - lo) / (self.n - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    def axis(self, k: int) -> np.ndarray:
        lo, hi = self.bounds[k]
        return np.linspace(lo, hi, self.n)

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Node coordinate arrays, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*(self.axis(k) for k in range(self.dim)), indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if self.dim == 1:
            mask[[0, -1]] = True
        else:
            mask[[0, -1], :] = True
            mask[:, [0, -1]] = True
        return mask

    def ball_mask(self, center, radius: float) -> np.ndarray:
        """Nodes with ``|x - center| <= radius``."""
        c = _as_point(center, self.dim)
        d2 = sum((X - c[k]) ** 2 for k, X in enumerate(self.mesh()))
        return d2 <= radius**2 * (1 + 1e-12)

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = _as_point(p, self.dim)
        return all(lo - tol * (hi - lo) <= p[k] <= hi + tol * (hi - lo) for k, (lo, hi) in enumerate(self.bounds))

    def ball_inside(self, center, radius: float, tol: float = 1e-12) -> bool:
        c = _as_point(center, self.dim)
        return all(
            lo - tol * (hi - lo) <= c[k] - radius and c[k] + radius <= hi + tol * (hi - lo)
            for k, (lo, hi) in enumerate(self.bounds)
        )


def _as_point(p, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if arr.shape[-1] != dim:
        if dim == 1 and arr.ndim == 1:
            return arr
        raise ValueError(f"expected a {dim}-dimensional point, got {p!r}")
    return arr


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values have shape {vals.shape}, grid needs {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> ScalarField:
        return ScalarField(self.grid, values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __call__(self, p):
        return interpolate(self, p)

    def __neg__(self):
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    values: np.ndarray  # shape grid.shape + (dim,)

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.shape != self.grid.shape + (self.grid.dim,):
            raise ValueError(f"vector values have shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("vector field components must be finite")
        object.__setattr__(self, "values", vals)

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., k])

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=-1)))

    def dot(self, other: VectorField) -> ScalarField:
        return ScalarField(self.grid, np.sum(self.values * other.values, axis=-1))


def sample(e: Expr | str, grid: GridSpec) -> ScalarField:
    """Evaluate an expression at every node.

    Raises :class:`EvalError` naming the offending node.
    """
    e = parse(e)
    coords = grid.mesh()
    x = coords[0]
    y = coords[1] if grid.dim == 2 else np.zeros_like(x)
    try:
        vals = e(x, y)
    except EvalError as err:
        loc = err.location if grid.dim == 2 or err.location is None else err.location[:1]
        raise EvalError(f"cannot sample {e}: {err.args[0].split(' at ')[0]}", loc) from err
    return ScalarField(grid, np.broadcast_to(vals, grid.shape))


def sample_vector(components, grid: GridSpec) -> VectorField:
    vals = np.stack([sample(c, grid).values for c in components], axis=-1)
    return VectorField(grid, vals)


def _locate(grid: GridSpec, pts: np.ndarray):
    """Cell indices and local coordinates in [0, 1] for points of shape (m, dim)."""
    idx = []
    frac = []
    h = grid.h
    for k, (lo, hi) in enumerate(grid.bounds):
        t = (pts[:, k] - lo) / h
        span = grid.n - 1
        tol = 1e-9
        if np.any(t < -tol) or np.any(t > span + tol):
            bad = pts[(t < -tol) | (t > span + tol)][0]
            raise OutOfBounds(f"point {tuple(bad)} lies outside the grid {grid.bounds}")
        t = np.clip(t, 0.0, span)
        i = np.minimum(np.floor(t).astype(int), span - 1)
        idx.append(i)
        frac.append(t - i)
    return idx, frac


def interpolate_values(values: np.ndarray, grid: GridSpec, pts) -> np.ndarray:
    """Linear/bilinear interpolation of nodal ``values`` at points of shape (m, dim)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, grid.dim)
    (i, *rest), (s, *frest) = _locate(grid, pts)
    if grid.dim == 1:
        return (1 - s) * values[i] + s * values[i + 1]
    j, t = rest[0], frest[0]
    return (
        (1 - s) * (1 - t) * values[i, j]
        + s * (1 - t) * values[i + 1, j]
        + (1 - s) * t * values[i, j + 1]
        + s * t * values[i + 1, j + 1]
    )


def interpolate(f: ScalarField, p):
    """Bilinear (linear in 1D) interpolation of ``f``.

    ``p`` is a single point or an array of points with trailing dimension
    ``dim``; a single point returns a float.  Raises :class:`OutOfBounds`.
    """
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and arr.shape[0] == f.grid.dim)
    out = interpolate_values(f.values, f.grid, arr.reshape(-1, f.grid.dim))
    if single:
        return float(out[0])
    return out.reshape(arr.shape[:-1] if f.grid.dim > 1 or arr.ndim > 1 else arr.shape)


def gradient(f: ScalarField) -> VectorField:
    """Centered differences inside, second-order one-sided differences on the boundary."""
    h = f.grid.h
    if f.grid.dim == 1:
        comps = [np.gradient(f.values, h, edge_order=2)]
    else:
        comps = np.gradient(f.values, h, h, edge_order=2)
    return VectorField(f.grid, np.stack(comps, axis=-1))


def laplacian_stencil(values: np.ndarray) -> np.ndarray:
    """Unscaled 5-point (3-point in 1D) stencil sum at interior nodes (``h^2 * Laplacian``)."""
    if values.ndim == 1:
        return values[:-2] - 2 * values[1:-1] + values[2:]
    return values[:-2, 1:-1] + values[2:, 1:-1] + values[1:-1, :-2] + values[1:-1, 2:] - 4 * values[1:-1, 1:-1]


def _check_ball(grid: GridSpec, z, r: float):
    if r < 2 * grid.h * (1 - 1e-12):
        raise ValueError(f"radius {r} is below the 2h floor ({2 * grid.h})")
    if not grid.ball_inside(z, r):
        raise OutOfBounds(f"ball of radius {r} around {tuple(np.atleast_1d(z))} leaves the grid")


def circle_points(z, r: float, h: float) -> np.ndarray:
    m = max(64, math.ceil(8 * math.pi * r / h))
    theta = 2 * math.pi * np.arange(m) / m
    z = np.asarray(z, dtype=float)
    return np.column_stack([z[0] + r * np.cos(theta), z[1] + r * np.sin(theta)])


def circle_integral(f: ScalarField, z, r: float) -> float:
    """Integral of ``f`` over the sphere ``|x - z| = r`` (two points in 1D)."""
    grid = f.grid
    _check_ball(grid, z, r)
    if grid.dim == 1:
        z0 = float(np.atleast_1d(z)[0])
        return float(interpolate(f, z0 - r) + interpolate(f, z0 + r))
    pts = circle_points(z, r, grid.h)
    vals = interpolate_values(f.values, grid, pts)
    # periodic trapezoid rule
    return float(np.mean(vals) * 2 * math.pi * r)


def _disk_integral_1d(values, grid, z0, r):
    h = grid.h
    lo = grid.bounds[0][0]
    i0 = max(int(math.floor((z0 - r - lo) / h)), 0)
    i1 = min(int(math.ceil((z0 + r - lo) / h)), grid.n - 1)
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    x = lo + (np.arange(i0, i1)[:, None] + sub[None, :]) * h
    x = x.ravel()
    x = x[np.abs(x - z0) <= r]
    return float(np.sum(interpolate_values(values, grid, x[:, None])) * h / SUPERSAMPLE)


def ball_cells(grid: GridSpec, z, r: float):
    """Cells of a 2D grid meeting ``B_r(z)``.

    Returns lower-left node indices ``I, J`` over the bounding box together with
    masks of cells lying entirely inside the ball and cells cut by its boundary.
    """
    z = np.asarray(z, dtype=float)
    h = grid.h
    (xlo, _), (ylo, _) = grid.bounds
    i0 = max(int(math.floor((z[0] - r - xlo) / h)), 0)
    i1 = min(int(math.ceil((z[0] + r - xlo) / h)), grid.n - 1)
    j0 = max(int(math.floor((z[1] - r - ylo) / h)), 0)
    j1 = min(int(math.ceil((z[1] + r - ylo) / h)), grid.n - 1)
    I, J = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    cx0 = xlo + I * h
    cy0 = ylo + J * h
    far = np.maximum(np.abs(cx0 - z[0]), np.abs(cx0 + h - z[0])) ** 2 + np.maximum(
        np.abs(cy0 - z[1]), np.abs(cy0 + h - z[1])
    ) ** 2
    near = (np.clip(z[0], cx0, cx0 + h) - z[0]) ** 2 + (np.clip(z[1], cy0, cy0 + h) - z[1]) ** 2
    inside = far <= r * r
    cut = ~inside & (near < r * r)
    return I, J, inside, cut


def supersample_cells(values: np.ndarray, grid: GridSpec, I: np.ndarray, J: np.ndarray):
    """Bilinear values at 16x16 sub-cell midpoints of the given cells.

    Returns ``(px, py, v)``, each of shape ``(len(I), 256)``.
    """
    h = grid.h
    (xlo, _), (ylo, _) = grid.bounds
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    S, T = np.meshgrid(sub, sub, indexing="ij")
    S = S.ravel()[None, :]
    T = T.ravel()[None, :]
    ci = I[:, None]
    cj = J[:, None]
    px = xlo + (ci + S) * h
    py = ylo + (cj + T) * h
    v = (
        (1 - S) * (1 - T) * values[ci, cj]
        + S * (1 - T) * values[ci + 1, cj]
        + (1 - S) * T * values[ci, cj + 1]
        + S * T * values[ci + 1, cj + 1]
    )
    return px, py, v


def disk_integral_values(values: np.ndarray, grid: GridSpec, z, r: float) -> float:
    """Cell-midpoint quadrature of nodal ``values`` over the ball ``B_r(z)``.

    Cells entirely inside use their centre value; cells cut by the circle are
    supersampled 16x16 so that only the part inside the ball contributes.
    """
    _check_ball(grid, z, r)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if grid.dim == 1:
        return _disk_integral_1d(values, grid, float(z[0]), r)
    h = grid.h
    (xlo, _), (ylo, _) = grid.bounds
    I, J, inside, cut = ball_cells(grid, z, r)
    centre = 0.25 * (values[I, J] + values[I + 1, J] + values[I, J + 1] + values[I + 1, J + 1])
    total = float(np.sum(centre[inside])) * h * h
    if np.any(cut):
        px, py, v = supersample_cells(values, grid, I[cut], J[cut])
        keep = (px - z[0]) ** 2 + (py - z[1]) ** 2 <= r * r
        total += float(np.sum(v[keep])) * (h / SUPERSAMPLE) ** 2
    return total


def disk_integral(f: ScalarField, z, r: float) -> float:
    """Integral of ``f`` over the ball ``B_r(z)`` (an interval in 1D)."""
    return disk_integral_values(f.values, f.grid, z, r)


# --------------------------------------------------------------------------
# CSV exchange

def fmt17(v: float) -> str:
    return f"{v:.17g}"


def write_table(path, header, rows) -> None:
    """Comma-separated table with a header row, LF endings and 17 significant digits."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt17(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_csv(f: ScalarField, path) -> None:
    """Row-major ``x,y,value`` (``x,value`` in 1D) with 17 significant digits."""
    path = Path(path)
    coords = [c.ravel() for c in f.grid.mesh()]
    vals = f.values.ravel()
    header = ["x", "value"] if f.grid.dim == 1 else ["x", "y", "value"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*coords, vals):
            w.writerow([fmt17(v) for v in row])


def write_vector_csv(f: VectorField, path) -> None:
    path = Path(path)
    coords = [c.ravel() for c in f.grid.mesh()]
    comps = [f.values[..., k].ravel() for k in range(f.grid.dim)]
    header = ["x", "y"][: f.grid.dim] + ["vx", "vy"][: f.grid.dim]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*coords, *comps):
            w.writerow([fmt17(v) for v in row])


def read_csv(path) -> ScalarField:
    """Inverse of :func:`write_csv`; the grid is reconstructed from the coordinates."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    dim = len(header) - 1
    if dim not in (1, 2) or header[-1] != "value":
        raise ValueError(f"{path}: unrecognised header {header}")
    axes = [np.unique(data[:, k]) for k in range(dim)]
    n = len(axes[0])
    grid = GridSpec(tuple((float(a[0]), float(a[-1])) for a in axes), n)
    if data.shape[0] != n**dim:
        raise ValueError(f"{path}: {data.shape[0]} rows do not form a {n}^{dim} grid")
    return ScalarField(grid, data[:, -1].reshape(grid.shape))


def read_vector_csv(path) -> VectorField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = data.shape[1] // 2
    axes = [np.unique(data[:, k]) for k in range(dim)]
    n = len(axes[0])
    grid = GridSpec(tuple((float(a[0]), float(a[-1])) for a in axes), n)
    return VectorField(grid, data[:, dim:].reshape(grid.shape + (dim,)))
