"""Vanishing orders, harmonic polynomial fits and Almgren-type frequencies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateH, OutOfBounds, RadiiTooSmall, ZeroPolynomial
from .grid import (
    GridSpec,
    ScalarField,
    circle_integral,
    disk_integral_values,
    gradient,
    interpolate_values,
)
from .nodal import NodalSet
from .transforms import TransformFields

SUPERSAMPLE_SUP = 4


# --------------------------------------------------------------------------
# vanishing order


@dataclass
class OrderEstimate:
    z: np.ndarray
    radii: np.ndarray
    sups: np.ndarray
    d_hat: float
    amplitude: float
    nearest_integer_gap: float

    @property
    def classification(self) -> str:
        return classify_order(self)[0]


def ball_samples(grid: GridSpec, z, r: float) -> np.ndarray:
    """Points of ``B_r(z)``: a lattice of spacing ``h/4`` plus the bounding circle."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    step = grid.h / SUPERSAMPLE_SUP
    k = int(math.floor(r / step))
    offs = np.arange(-k, k + 1) * step
    if grid.dim == 1:
        pts = np.concatenate([z[0] + offs, [z[0] - r, z[0] + r]])
        return pts[:, None]
    X, Y = np.meshgrid(offs, offs, indexing="ij")
    inside = X**2 + Y**2 <= r * r
    m = max(64, math.ceil(2 * math.pi * r / step))
    theta = 2 * math.pi * np.arange(m) / m
    lattice = np.column_stack([X[inside], Y[inside]])
    ring = r * np.column_stack([np.cos(theta), np.sin(theta)])
    return np.vstack([lattice, ring]) + z


def ball_sup(f: ScalarField, z, r: float) -> float:
    """``sup |f|`` over ``B_r(z)`` from a 4x supersampled bilinear interpolant."""
    if not f.grid.ball_inside(z, r):
        raise OutOfBounds(f"ball of radius {r} around {tuple(np.atleast_1d(z))} leaves the grid")
    pts = ball_samples(f.grid, z, r)
    return float(np.max(np.abs(interpolate_values(f.values, f.grid, pts))))


def loglog_slope(r, y) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log y`` against ``log r``."""
    lr = np.log(np.asarray(r, dtype=float))
    ly = np.log(np.maximum(np.asarray(y, dtype=float), np.finfo(float).tiny))
    slope, intercept = np.polyfit(lr, ly, 1)
    return float(slope), float(intercept)


def vanishing_order(u: ScalarField, z, r_max: float = 0.25, levels: int = 5) -> OrderEstimate:
    """Empirical vanishing order at ``z`` from ``sup_{B_r(z)} |u|`` over ``r = r_max 2^-j``.

    Raises :class:`RadiiTooSmall` if the smallest radius falls below ``2h``.
    """
    if levels < 4:
        raise ValueError("need at least 4 radii")
    radii = r_max * 2.0 ** -np.arange(levels)
    floor = 2 * u.grid.h
    if radii[-1] < floor * (1 - 1e-12):
        raise RadiiTooSmall(f"smallest radius {radii[-1]:.4g} is below 2h = {floor:.4g}")
    sups = np.array([ball_sup(u, z, r) for r in radii])
    d_hat, intercept = loglog_slope(radii, sups)
    return OrderEstimate(
        z=np.atleast_1d(np.asarray(z, dtype=float)),
        radii=radii,
        sups=sups,
        d_hat=d_hat,
        amplitude=math.exp(intercept),
        nearest_integer_gap=abs(d_hat - round(d_hat)),
    )


def classify_order(est: OrderEstimate, threshold: float = 1.5, max_gap: float = 0.25) -> tuple[str, int | None]:
    """``("nondegenerate", 1)``, ``("degenerate", d)`` or ``("unresolved", None)``."""
    if est.d_hat < threshold:
        return "nondegenerate", 1
    if est.nearest_integer_gap <= max_gap:
        return "degenerate", int(round(est.d_hat))
    return "unresolved", None


def classify_points(u: ScalarField, ns: NodalSet, r_max: float | None = None, levels: int = 4, stride: int = 1):
    """Fill ``ns.classification`` with ``(label, order, d_hat)`` per sample point.

    Points whose ball would leave the grid are labelled ``"boundary"``;
    ``stride > 1`` classifies every ``stride``-th point and leaves the rest ``None``.
    """
    h = u.grid.h
    if r_max is None:
        r_max = 2 * h * 2 ** (levels - 1)
    out: list = [None] * len(ns.sample_points)
    for k in range(0, len(ns.sample_points), stride):
        z = ns.sample_points[k]
        if not u.grid.ball_inside(z, r_max):
            out[k] = ("boundary", None, float("nan"))
            continue
        est = vanishing_order(u, z, r_max, levels)
        label, order = classify_order(est)
        out[k] = (label, order, est.d_hat)
    ns.classification = out
    return out


# --------------------------------------------------------------------------
# harmonic polynomial fits


def harmonic_basis(dx, dy, degree: int, with_constant: bool = True) -> np.ndarray:
    """Columns ``1, Re w, Im w, ..., Re w^d, Im w^d`` with ``w = dx + i dy``."""
    w = np.asarray(dx, dtype=float) + 1j * np.asarray(dy, dtype=float)
    cols = [np.ones_like(w.real)] if with_constant else []
    wk = np.ones_like(w)
    for _ in range(degree):
        wk = wk * w
        cols += [wk.real, wk.imag]
    return np.column_stack(cols)


def basis_labels(degree: int, with_constant: bool = True) -> list[str]:
    labels = ["1"] if with_constant else []
    for k in range(1, degree + 1):
        labels += [f"Re{k}", f"Im{k}"]
    return labels


@dataclass
class PolyFit:
    """Harmonic polynomial ``P_z`` fitted around ``z``.

    ``coefficients`` maps basis labels (``"1"``, ``"Re1"``, ``"Im1"``, ``"Re2"``,
    ...) to coefficients in unscaled offsets ``x - z``.
    """

    z: np.ndarray
    degree: int
    coefficients: dict[str, float]
    radii: np.ndarray
    residuals: np.ndarray
    decay_exponent: float
    pinned: bool
    condition: float
    ill_conditioned: bool = False

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.z
        cols = harmonic_basis(pts[:, 0], pts[:, 1], self.degree, with_constant=True)
        coef = np.array([self.coefficients.get(k, 0.0) for k in basis_labels(self.degree)])
        return cols @ coef

    def leading(self) -> tuple[float, float]:
        d = self.degree
        return self.coefficients[f"Re{d}"], self.coefficients[f"Im{d}"]


def _nodes_in_ball(v: ScalarField, z: np.ndarray, r: float):
    grid = v.grid
    X, Y = grid.mesh()
    dx, dy = X - z[0], Y - z[1]
    keep = dx**2 + dy**2 <= r * r * (1 + 1e-12)
    return dx[keep], dy[keep], v.values[keep]


def _on_nodal_set(v: ScalarField, z: np.ndarray) -> bool:
    """Whether ``z`` lies in a cell whose corners straddle the sign classes."""
    grid = v.grid
    h = grid.h
    idx = []
    for k in range(2):
        t = (z[k] - grid.bounds[k][0]) / h
        i = min(max(int(math.floor(t)), 0), grid.n - 2)
        idx.append(i)
    i, j = idx
    corners = v.values[i : i + 2, j : j + 2]
    pos = corners > 0
    return bool(pos.any() and not pos.all())


def _fit(dx, dy, vals, degree, r, pinned):
    basis = harmonic_basis(dx / r, dy / r, degree, with_constant=not pinned)
    coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    sv = np.linalg.svd(basis, compute_uv=False)
    cond = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else math.inf
    resid = float(np.max(np.abs(basis @ coef - vals)))
    return coef, resid, cond


def harmonic_fit(
    v: ScalarField, z, degree: int, r_fit: float, levels: int = 4, pin: bool | None = None
) -> PolyFit:
    """Least-squares fit of ``v`` by a harmonic polynomial of degree ``<= degree``.

    The fit over ``B_{r_fit}(z)`` supplies the coefficients; the residual profile
    refits on ``r_fit 2^-j`` (radii below ``2h`` are skipped) and records
    ``sup |v - P|`` over the nodes of each ball.  The decay exponent is the
    log-log slope of that profile.  The constant term is pinned to zero when
    ``pin`` is true, or, by default, when ``z`` lies in a cell cut by ``{v = 0}``.
    Conditioning of the normal equations above ``1e12`` sets ``ill_conditioned``.
    """
    if v.grid.dim != 2:
        raise ValueError("harmonic fits are two-dimensional")
    if not 1 <= degree <= 4:
        raise ValueError("degree must be between 1 and 4")
    z = np.asarray(z, dtype=float)
    if not v.grid.ball_inside(z, r_fit):
        raise OutOfBounds(f"fit ball of radius {r_fit} leaves the grid")
    pinned = _on_nodal_set(v, z) if pin is None else bool(pin)
    radii = r_fit * 2.0 ** -np.arange(levels)
    radii = radii[radii >= 2 * v.grid.h * (1 - 1e-12)]
    if len(radii) == 0:
        raise RadiiTooSmall(f"r_fit = {r_fit} is below 2h")
    residuals = []
    worst = 0.0
    coef0 = None
    for r in radii:
        dx, dy, vals = _nodes_in_ball(v, z, r)
        coef, resid, cond = _fit(dx, dy, vals, degree, r, pinned)
        worst = max(worst, cond)
        residuals.append(resid)
        if coef0 is None:
            coef0 = coef
    labels = basis_labels(degree, with_constant=not pinned)
    # undo the 1/r scaling: Re/Im of degree k carry a factor r^-k
    scale = [1.0] if not pinned else []
    for k in range(1, degree + 1):
        scale += [r_fit**-k, r_fit**-k]
    coefficients = {lab: float(c * s) for lab, c, s in zip(labels, coef0, scale)}
    if pinned:
        coefficients = {"1": 0.0, **coefficients}
    residuals = np.array(residuals)
    decay = loglog_slope(radii, residuals)[0] if len(radii) >= 2 else float("nan")
    return PolyFit(
        z=z,
        degree=degree,
        coefficients=coefficients,
        radii=radii,
        residuals=residuals,
        decay_exponent=decay,
        pinned=pinned,
        condition=worst,
        ill_conditioned=worst > 1e12,
    )


def tangent_dim(p: PolyFit, tol: float = 1e-10) -> int:
    """Dimension of the invariance subspace ``{e : d_e P_d = 0}`` of the leading part.

    For a nontrivial homogeneous harmonic ``P_d`` in the plane this is 1 when
    ``d = 1`` (the line ``P = 0``) and 0 otherwise.
    """
    d = p.degree
    re, im = p.leading()
    scale = max(abs(re), abs(im))
    if scale == 0:
        raise ZeroPolynomial("leading homogeneous part vanishes")
    # grad of Re/Im (x+iy)^d is d (x+iy)^(d-1) times (1, i) / (i, -1)
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(8, 2))
    w = pts[:, 0] + 1j * pts[:, 1]
    dz = d * w ** (d - 1) * (re - 1j * im)
    dx = dz.real
    dy = -dz.imag
    M = np.column_stack([dx, dy]) / scale
    rank = np.linalg.matrix_rank(M, tol=tol * max(1.0, float(np.max(np.abs(M)))))
    return 2 - int(rank)


# --------------------------------------------------------------------------
# frequency


def _lower_order_values(w: ScalarField, u: ScalarField | None, tf: TransformFields | None, grad_w) -> np.ndarray:
    if tf is None or tf.b_vec is None or tf.c is None:
        return np.zeros(w.grid.shape)
    if tf.form == "u":
        if u is None:
            raise ValueError("lower-order fields act on u, which was not supplied")
        target = u.values
        grad_t = gradient(u).values
    else:
        target = w.values
        grad_t = grad_w
    bdot = np.sum(tf.b_vec.values * grad_t, axis=-1)
    return w.values * bdot + tf.c.values * w.values * target


def frequency(
    w: ScalarField,
    u: ScalarField | None = None,
    tf: TransformFields | None = None,
    z=(0.0, 0.0),
    r: float = 0.25,
    _cache: dict | None = None,
) -> tuple[float, float, float]:
    """``(H(r), I(r), N(r))`` about ``z``.

    ``H`` integrates ``w^2`` over the circle, ``I`` integrates
    ``|grad w|^2 + w b.grad(X) + c w X`` over the disk (``X`` is ``u`` or ``w``
    according to ``tf.form``) and ``N = r I / H``.  Raises :class:`DegenerateH`
    when ``H <= 1e-14``.
    """
    if _cache is None:
        _cache = _frequency_integrands(w, u, tf)
    H = circle_integral(_cache["w2"], z, r)
    if H <= 1e-14:
        raise DegenerateH(f"H({r}) = {H:.3e}: w vanishes on the circle")
    I = disk_integral_values(_cache["integrand"], w.grid, z, r)
    return H, I, r * I / H


def _frequency_integrands(w, u, tf) -> dict:
    grad_w = gradient(w).values
    integrand = np.sum(grad_w**2, axis=-1) + _lower_order_values(w, u, tf, grad_w)
    return {"w2": w.with_values(w.values**2), "integrand": integrand}


@dataclass
class FrequencyProfile:
    center: np.ndarray
    radii: np.ndarray
    H: np.ndarray
    I: np.ndarray
    N: np.ndarray
    doubling: np.ndarray  # H(2r)/H(r), nan where 2r is out of range
    flags: dict[float, str] = field(default_factory=dict)

    def rows(self):
        for k, r in enumerate(self.radii):
            yield float(r), float(self.H[k]), float(self.I[k]), float(self.N[k]), float(self.doubling[k])

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.N)

    def affine_excess(self, c1: float, c2: float) -> float:
        """``max_r N(r) - (c1 + c2 N(r_max))``; nonpositive when the bound holds."""
        ok = self.ok
        if not ok.any():
            return math.nan
        n_top = self.N[ok][-1]
        return float(np.max(self.N[ok]) - (c1 + c2 * n_top))


def frequency_profile(
    w: ScalarField,
    u: ScalarField | None = None,
    tf: TransformFields | None = None,
    z=(0.0, 0.0),
    radii=None,
    workers: int = 1,
) -> FrequencyProfile:
    """Frequency triples over increasing ``radii`` plus doubling ratios.

    Failures at individual radii are recorded in ``flags`` and leave NaNs;
    the profile is never aborted.  The doubling ratio at ``r`` is reported when
    ``2r`` does not exceed the largest radius.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    cache = _frequency_integrands(w, u, tf)
    flags: dict[float, str] = {}

    def one(r):
        try:
            return frequency(w, u, tf, z, r, _cache=cache)
        except (DegenerateH, OutOfBounds, ValueError) as err:
            flags[float(r)] = f"{type(err).__name__}: {err}"
            return (math.nan, math.nan, math.nan)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            triples = list(pool.map(one, radii))
    else:
        triples = [one(r) for r in radii]
    H, I, N = (np.array(col) for col in zip(*triples))
    doubling = np.full(len(radii), math.nan)
    r_top = radii[-1]
    for k, r in enumerate(radii):
        if 2 * r <= r_top * (1 + 1e-12) and np.isfinite(H[k]) and H[k] > 0:
            try:
                doubling[k] = circle_integral(cache["w2"], z, 2 * r) / H[k]
            except (OutOfBounds, ValueError) as err:
                flags.setdefault(float(r), f"doubling: {err}")
    return FrequencyProfile(np.asarray(z, dtype=float), radii, H, I, N, doubling, flags)


def dirichlet_ratio(u: ScalarField, z=(0.0, 0.0), r: float = 1.0) -> float:
    """``r * int_{B_r} |grad u|^2 / int_{dB_r} u^2`` (the plain frequency of ``u``)."""
    H, I, N = frequency(u, None, None, z, r)
    return N
