"""Reference solutions for the broken problem with constant phase coefficients.

Both oracles avoid the Picard/CG path entirely: the 1D transmission problem is
solved in closed form, and the 2D oracle solves a plain Laplace problem for
``phi(u)`` with a sparse direct factorisation and then inverts ``phi`` node-wise.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .coefficients import CoefficientModel
from .errors import NoSignChange
from .exprlang import Expr, is_constant, parse
from .grid import GridSpec, ScalarField, interpolate_values, laplacian_stencil, sample
from .transforms import phi_broken, phi_broken_inverse, phi_s, phi_s_inverse


@dataclass
class OracleSolution:
    generator: Callable[[np.ndarray], np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __call__(self, points):
        return self.generator(np.asarray(points, dtype=float))

    def on(self, grid: GridSpec) -> ScalarField:
        pts = np.stack([c.ravel() for c in grid.mesh()], axis=-1)
        return ScalarField(grid, np.asarray(self(pts)).reshape(grid.shape))


def transmission_1d(
    a_plus: float, a_minus: float, g_left: float, g_right: float, lo: float = -1.0, hi: float = 1.0
) -> OracleSolution:
    """Exact piecewise-linear solution of ``(A u')' = 0`` on ``[lo, hi]``.

    The flux ``c = A u'`` is constant; with ``a_L, a_R`` the phase coefficients
    on each side, ``(hi - lo) c = g_right a_R - g_left a_L`` and the interface
    sits where the left branch reaches zero.
    """
    if g_left * g_right >= 0:
        raise NoSignChange(f"boundary data {g_left}, {g_right} do not straddle zero")
    a_l = a_plus if g_left > 0 else a_minus
    a_r = a_plus if g_right > 0 else a_minus
    flux = (g_right * a_r - g_left * a_l) / (hi - lo)
    slope_l, slope_r = flux / a_l, flux / a_r
    x0 = lo - g_left / slope_l

    def gen(x):
        x = np.asarray(x, dtype=float)
        x = x[..., 0] if x.ndim > 1 else x
        return np.where(x <= x0, g_left + slope_l * (x - lo), g_right - slope_r * (hi - x))

    meta = {
        "kind": "transmission_1d",
        "interface": x0,
        "flux": flux,
        "slope_left": slope_l,
        "slope_right": slope_r,
    }
    return OracleSolution(gen, meta)


def discrete_harmonic_extension(boundary_values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Solve the 5-point (3-point in 1D) Laplace problem with the given boundary values."""
    interior = ~grid.boundary_mask()
    m = int(interior.sum())
    index = -np.ones(grid.shape, dtype=np.int64)
    index[interior] = np.arange(m)
    rows, cols, vals = [], [], []
    rhs = np.zeros(m)
    for axis in range(grid.dim):
        for shift in (-1, 1):
            nb_index = np.roll(index, -shift, axis=axis)
            nb_value = np.roll(boundary_values, -shift, axis=axis)
            # interior nodes never wrap around, so np.roll is safe here
            inner = index[interior]
            nbi = nb_index[interior]
            link = nbi >= 0
            rows.append(inner[link])
            cols.append(nbi[link])
            vals.append(-np.ones(int(link.sum())))
            rhs += np.where(link, 0.0, nb_value[interior])
    rows.append(np.arange(m))
    cols.append(np.arange(m))
    vals.append(np.full(m, 2.0 * grid.dim))
    K = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    full = boundary_values.astype(float).copy()
    full[interior] = spsolve(K, rhs)
    return full


def _constant_phase_values(m: CoefficientModel) -> tuple[float, float]:
    consts = m.constant_phases()
    if consts is None:
        raise ValueError("harmonic inversion needs constant phase coefficients")
    if m.has_forcing or any(float(np.asarray(e(0.0, 0.0))) != 0.0 for e in (m.f_x, m.f_y)):
        raise ValueError("harmonic inversion needs f = 0")
    return consts


def pointwise_phi(m: CoefficientModel):
    """``(phi, phi_inverse)`` for a model with constant phase coefficients."""
    p, q = _constant_phase_values(m)
    if m.s == 0:
        return (lambda u: phi_broken(u, p, q)), (lambda v: phi_broken_inverse(v, p, q))
    s = m.s
    return (lambda u: phi_s(u, p, q, s)), (lambda v: phi_s_inverse(v, p, q, s))


def harmonic_inversion_exact(m: CoefficientModel, g: Expr | str, grid: GridSpec) -> OracleSolution:
    """``u = phi^{-1}(h)`` where ``h`` is the discrete harmonic extension of ``phi(g)``.

    With constant coefficients and no forcing, ``phi(u)`` is harmonic, so this is
    exact up to the pure-Laplacian discretisation error.
    """
    phi, phi_inv = pointwise_phi(m)
    g = parse(g)
    gvals = sample(g, grid).values
    boundary = np.where(grid.boundary_mask(), phi(gvals), 0.0)
    h_vals = discrete_harmonic_extension(boundary, grid)
    u_vals = np.asarray(phi_inv(h_vals)).reshape(grid.shape)
    harmonic = ScalarField(grid, h_vals)

    def gen(points):
        pts = np.asarray(points, dtype=float)
        return interpolate_values(u_vals, grid, pts.reshape(-1, grid.dim)).reshape(pts.shape[:-1])

    meta = {
        "kind": "harmonic_inversion",
        "harmonic": harmonic,
        "nodal": ScalarField(grid, u_vals),
        "constant_boundary": is_constant(g),
    }
    return OracleSolution(gen, meta)


def harmonicity_defect(v: ScalarField) -> float:
    """Interior sup of the unscaled 5-point stencil sum (``h^2`` times the discrete Laplacian)."""
    return float(np.max(np.abs(laplacian_stencil(v.values)), initial=0.0))
