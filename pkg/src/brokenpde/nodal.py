"""Nodal set extraction, measurement and normals.

Signs are classified with the Heaviside convention used by the solver:
a node is on the positive side iff its value is ``> 0``; exact zeros belong to
the non-positive side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientModel
from .errors import DegenerateGradient
from .grid import SUPERSAMPLE, GridSpec, ScalarField, ball_cells, gradient, supersample_cells
from .transforms import phi_broken, phi_s


@dataclass
class NodalSet:
    """Polyline pieces of ``{u = 0}`` and their deduplicated endpoints.

    ``segments`` has shape ``(k, 2, 2)``; in 1D it is empty and
    ``sample_points`` holds the sign-change points (shape ``(m, 1)``).
    ``classification`` is filled by :func:`brokenpde.analysis.classify_points`.
    """

    grid: GridSpec
    segments: np.ndarray
    sample_points: np.ndarray
    classification: list | None = field(default=None)

    def __len__(self) -> int:
        return len(self.sample_points)

    @property
    def empty(self) -> bool:
        return len(self.sample_points) == 0


@dataclass(frozen=True)
class NormalSample:
    z: np.ndarray
    nu: np.ndarray
    delta: float


# corner order: 0 (i, j), 1 (i+1, j), 2 (i+1, j+1), 3 (i, j+1); edge k joins corners k and k+1
_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))


def _edge_root(pa, pb, va, vb):
    t = va / (va - vb)
    return pa + t * (pb - pa)


def _extract_1d(u: ScalarField) -> NodalSet:
    x = u.grid.axis(0)
    v = u.values
    pos = v > 0
    idx = np.nonzero(pos[:-1] != pos[1:])[0]
    pts = x[idx] + v[idx] / (v[idx] - v[idx + 1]) * (x[idx + 1] - x[idx])
    pts = np.unique(pts)
    return NodalSet(u.grid, np.zeros((0, 2, 1)), pts[:, None])


def extract_nodal(u: ScalarField) -> NodalSet:
    """Marching squares on the sign classes of ``u``.

    Saddle cells (alternating corner classes) are resolved by the sign of the
    bilinear centre value, i.e. the mean of the four corners.
    """
    if u.grid.dim == 1:
        return _extract_1d(u)
    grid = u.grid
    v = u.values
    pos = v > 0
    case = (
        pos[:-1, :-1].astype(np.uint8)
        | pos[1:, :-1].astype(np.uint8) << 1
        | pos[1:, 1:].astype(np.uint8) << 2
        | pos[:-1, 1:].astype(np.uint8) << 3
    )
    cells = np.argwhere((case != 0) & (case != 15))
    xs, ys = grid.axis(0), grid.axis(1)
    segments = []
    for i, j in cells:
        corners = np.array([[xs[i], ys[j]], [xs[i + 1], ys[j]], [xs[i + 1], ys[j + 1]], [xs[i], ys[j + 1]]])
        vals = (v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])
        signs = [val > 0 for val in vals]
        crossing = {}
        for k, (a, b) in enumerate(_EDGES):
            if signs[a] != signs[b]:
                crossing[k] = _edge_root(corners[a], corners[b], vals[a], vals[b])
        c = case[i, j]
        if len(crossing) == 2:
            pairs = [tuple(crossing)]
        else:
            centre_pos = sum(vals) / 4 > 0
            # case 5: corners 0 and 2 positive; case 10: corners 1 and 3 positive
            if (c == 5) == centre_pos:
                pairs = [(0, 1), (2, 3)]
            else:
                pairs = [(3, 0), (1, 2)]
        for a, b in pairs:
            p, q = crossing[a], crossing[b]
            if np.any(p != q):
                segments.append((p, q))
    seg = np.array(segments, dtype=float).reshape(-1, 2, 2)
    if len(seg):
        pts = seg.reshape(-1, 2)
        keys = np.round(pts, 12)
        _, first = np.unique(keys, axis=0, return_index=True)
        pts = pts[np.sort(first)]
    else:
        pts = np.zeros((0, 2))
    return NodalSet(grid, seg, pts)


def clipped_lengths(segments: np.ndarray, center, radius: float) -> np.ndarray:
    """Length of each segment inside the closed ball ``B_radius(center)``."""
    if len(segments) == 0:
        return np.zeros(0)
    c = np.asarray(center, dtype=float)
    p = segments[:, 0, :] - c
    d = segments[:, 1, :] - segments[:, 0, :]
    a = np.sum(d * d, axis=1)
    b = 2 * np.sum(p * d, axis=1)
    cc = np.sum(p * p, axis=1) - radius**2
    disc = b * b - 4 * a * cc
    out = np.zeros(len(segments))
    ok = (disc > 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = np.clip((-b - sq) / np.where(ok, 2 * a, 1.0), 0.0, 1.0)
    t1 = np.clip((-b + sq) / np.where(ok, 2 * a, 1.0), 0.0, 1.0)
    out[ok] = (np.sqrt(a) * (t1 - t0))[ok]
    return out


def nodal_length(ns: NodalSet, center=(0.0, 0.0), radius: float = 0.5) -> float:
    """Total length of the nodal polylines inside the ball (point count in 1D)."""
    if ns.grid.dim == 1:
        c = float(np.atleast_1d(center)[0])
        return float(np.sum(np.abs(ns.sample_points[:, 0] - c) <= radius))
    return float(np.sum(clipped_lengths(ns.segments, center, radius)))


def sign_measures(u: ScalarField, center=(0.0, 0.0), radius: float = 1.0) -> tuple[float, float]:
    """Areas of ``{u > 0}`` and ``{u <= 0}`` inside the ball.

    Cells strictly inside the ball whose corners share one sign class count
    whole; every other cell meeting the ball is resolved on a 16x16 sub-grid of
    bilinear values.
    """
    grid = u.grid
    v = u.values
    h = grid.h
    if grid.dim == 1:
        c = float(np.atleast_1d(center)[0])
        x = grid.axis(0)
        sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
        px = (x[:-1, None] + sub[None, :] * h).ravel()
        pv = (v[:-1, None] * (1 - sub) + v[1:, None] * sub).ravel()
        keep = np.abs(px - c) <= radius
        w = h / SUPERSAMPLE
        return float(np.sum(pv[keep] > 0) * w), float(np.sum(pv[keep] <= 0) * w)
    I, J, inside, cut = ball_cells(grid, center, radius)
    pos = v > 0
    corner_pos = pos[I, J].astype(int) + pos[I + 1, J] + pos[I, J + 1] + pos[I + 1, J + 1]
    uniform = inside & ((corner_pos == 0) | (corner_pos == 4))
    area = h * h
    pos_area = float(np.sum(uniform & (corner_pos == 4))) * area
    neg_area = float(np.sum(uniform & (corner_pos == 0))) * area
    mixed = (inside & ~uniform) | cut
    if np.any(mixed):
        c = np.asarray(center, dtype=float)
        px, py, pv = supersample_cells(v, grid, I[mixed], J[mixed])
        keep = (px - c[0]) ** 2 + (py - c[1]) ** 2 <= radius**2
        sub_area = (h / SUPERSAMPLE) ** 2
        pos_area += float(np.sum(keep & (pv > 0))) * sub_area
        neg_area += float(np.sum(keep & (pv <= 0))) * sub_area
    return pos_area, neg_area


def interface_gradient_max(u: ScalarField, center=(0.0, 0.0), radius: float = 0.5) -> float:
    """Largest ``|grad u|`` at corners of sign-change cells centred in the ball.

    Returns 0 when no cell in the ball changes sign.
    """
    grid = u.grid
    if grid.dim != 2:
        raise ValueError("interface_gradient_max is defined for 2D fields")
    pos = u.values > 0
    cut = (pos[:-1, :-1] != pos[1:, :-1]) | (pos[:-1, :-1] != pos[:-1, 1:]) | (pos[:-1, :-1] != pos[1:, 1:])
    X, Y = grid.mesh()
    c = np.asarray(center, dtype=float)
    cx = X[:-1, :-1] + grid.h / 2 - c[0]
    cy = Y[:-1, :-1] + grid.h / 2 - c[1]
    I, J = np.nonzero(cut & (cx**2 + cy**2 <= radius**2))
    if len(I) == 0:
        return 0.0
    g = gradient(u).norm().values
    return float(max(g[I, J].max(), g[I + 1, J].max(), g[I, J + 1].max(), g[I + 1, J + 1].max()))


def _affine_fit(d: np.ndarray, vals: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted least-squares gradient of an affine model with zero intercept."""
    gram = (d * weights[:, None]).T @ d
    rhs = (d * weights[:, None]).T @ vals
    return np.linalg.solve(gram, rhs)


def normal_at(v: ScalarField, z, r_fit: float, v_sup: float | None = None) -> NormalSample:
    """Unit normal from a pinned affine fit of ``v`` around a nodal point ``z``.

    The fit ``P(x) = g . (x - z)`` minimises the squared misfit over nodes in
    ``B_{r_fit}(z)`` with weights ``1 - |x - z| / r_fit``.  Returns ``g / |g|``
    (pointing into ``{v > 0}``) and ``|g|``.  Raises :class:`DegenerateGradient`
    when ``|g| <= 1e-8 |v|_inf / r_fit``.
    """
    grid = v.grid
    z = np.atleast_1d(np.asarray(z, dtype=float))
    v_sup = v.sup() if v_sup is None else v_sup
    d, vals, wts = _local_patch(grid, v.values, z, r_fit)
    g = _affine_fit(d, vals, wts)
    norm = float(np.linalg.norm(g))
    if norm <= 1e-8 * v_sup / r_fit:
        raise DegenerateGradient(f"fitted gradient {norm:.3e} vanishes at {tuple(z)}")
    return NormalSample(z, g / norm, norm)


def _local_patch(grid: GridSpec, values: np.ndarray, z: np.ndarray, r: float):
    """Offsets, values and tent weights of the nodes strictly inside ``B_r(z)``."""
    h = grid.h
    lo = [max(int(math.floor((z[k] - r - grid.bounds[k][0]) / h)), 0) for k in range(grid.dim)]
    hi = [min(int(math.ceil((z[k] + r - grid.bounds[k][0]) / h)) + 1, grid.n) for k in range(grid.dim)]
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    axes = [grid.axis(k)[sl[k]] - z[k] for k in range(grid.dim)]
    D = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.dim)
    vals = values[sl].reshape(-1)
    dist = np.linalg.norm(D, axis=1)
    keep = dist < r
    return D[keep], vals[keep], 1.0 - dist[keep] / r


def frozen_values(m: CoefficientModel, z, u_values):
    """Sign-preserving transform of ``u`` with coefficients frozen at ``z``.

    ``a_+(z) u^+ - a_-(z) u^-`` for s = 0, ``a(z) u + b(z) (u^+)^{s+1}/(s+1)`` for s > 0.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    y = z[1] if z.size > 1 else 0.0
    p, q = (float(e(z[0], y)) for e in m.phases)
    if m.s == 0:
        return phi_broken(u_values, p, q)
    return phi_s(u_values, p, q, m.s)


def normals_along(u: ScalarField, m: CoefficientModel, points, r_fit: float) -> list[NormalSample | None]:
    """Normals at many nodal points, freezing the coefficients at each point.

    Degenerate points yield ``None`` in the returned list.
    """
    grid = u.grid
    umax = float(np.max(u.values, initial=0.0))
    umin = float(np.min(u.values, initial=0.0))
    out = []
    for z in np.asarray(points, dtype=float):
        d, uvals, wts = _local_patch(grid, u.values, z, r_fit)
        vals = frozen_values(m, z, uvals)
        v_sup = max(abs(float(frozen_values(m, z, umax))), abs(float(frozen_values(m, z, umin))))
        g = _affine_fit(d, vals, wts)
        norm = float(np.linalg.norm(g))
        if norm <= 1e-8 * v_sup / r_fit:
            out.append(None)
        else:
            out.append(NormalSample(z, g / norm, norm))
    return out


def holder_modulus(samples, alpha: float, h: float = 0.0) -> float:
    """``max |nu(x) - nu(y)| / |x - y|^alpha`` over pairs at least ``2h`` apart."""
    samples = [s for s in samples if s is not None]
    if len(samples) < 2:
        raise ValueError("need at least two normal samples")
    Z = np.array([s.z for s in samples])
    N = np.array([s.nu for s in samples])
    dz = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    dn = np.linalg.norm(N[:, None, :] - N[None, :, :], axis=-1)
    keep = np.triu(dz >= 2 * h, k=1) & (dz > 0)
    if not np.any(keep):
        return 0.0
    return float(np.max(dn[keep] / dz[keep] ** alpha))
