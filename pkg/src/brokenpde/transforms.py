"""Changes of variable that turn a broken equation into a perturbed Laplacian.

* ``phi_freeze``: coefficients frozen at a point ``z``,
  ``a_plus(z) u^+ - a_minus(z) u^-``;
* ``w_transform``: the variable-coefficient version together with the
  lower-order fields of the equation ``w`` satisfies;
* ``phi_s`` / ``phi_s_inverse``: the pointwise map ``a u + b (u^+)^{s+1}/(s+1)``
  for ``s > 0``.

Every transform preserves the sign of ``u``, hence its nodal set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientModel
from .errors import WrongRegime
from .exprlang import differentiate, laplacian
from .grid import GridSpec, ScalarField, VectorField, sample


@dataclass(frozen=True, eq=False)
class TransformFields:
    """A transformed field plus the lower-order data of its equation.

    ``form`` says what the lower-order terms act on: ``"w"`` means
    ``Laplace(w) = b_vec . grad(w) + c w`` (the s = 0 fields), ``"u"`` means
    ``Laplace(w) = b_vec . grad(u) + c u`` (the s > 0 fields).
    """

    v: ScalarField
    sigma_z: ScalarField | None = None
    b_vec: VectorField | None = None
    c: ScalarField | None = None
    form: str = "w"


def _point_values(m: CoefficientModel, z) -> tuple[float, float]:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    y = z[1] if z.size > 1 else 0.0
    return float(m.a_plus(z[0], y)), float(m.a_minus(z[0], y))


def _require_s0(m: CoefficientModel):
    if m.s != 0:
        raise WrongRegime(f"frozen transform needs s = 0, model has s = {m.s}")


def phi_broken(u, a_plus: float, a_minus: float):
    """``a_plus u^+ - a_minus u^-`` for arrays or scalars."""
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0, a_plus * u, a_minus * u)
    return float(out) if out.ndim == 0 else out


def phi_broken_inverse(v, a_plus: float, a_minus: float):
    v = np.asarray(v, dtype=float)
    out = np.where(v > 0, v / a_plus, v / a_minus)
    return float(out) if out.ndim == 0 else out


def phi_freeze(u: ScalarField, z, m: CoefficientModel) -> ScalarField:
    """Frozen-coefficient transform ``a_plus(z) u^+ - a_minus(z) u^-``."""
    _require_s0(m)
    ap, am = _point_values(m, z)
    return u.with_values(phi_broken(u.values, ap, am))


def sigma_freeze(u: ScalarField, z, m: CoefficientModel) -> ScalarField:
    """Coefficient oscillation ``(a_+(z) - a_+(x)) H(u) + (a_-(z) - a_-(x)) (1 - H(u))``."""
    _require_s0(m)
    ap, am = _point_values(m, z)
    ap_x = sample(m.a_plus, u.grid).values
    am_x = sample(m.a_minus, u.grid).values
    return u.with_values(np.where(u.values > 0, ap - ap_x, am - am_x))


def _grad_values(e, grid: GridSpec) -> np.ndarray:
    comps = [sample(differentiate(e, var), grid).values for var in ("x", "y")[: grid.dim]]
    return np.stack(comps, axis=-1)


def _laplacian_values(e, grid: GridSpec) -> np.ndarray:
    if grid.dim == 1:
        return sample(differentiate(differentiate(e, "x"), "x"), grid).values
    return sample(laplacian(e), grid).values


def w_transform(u: ScalarField, m: CoefficientModel) -> TransformFields:
    """Variable-coefficient transform of ``u`` with analytic lower-order fields.

    For ``s = 0``: ``w = a_+ u^+ - a_- u^-`` and, phase by phase,
    ``b_vec = grad(a)/a``, ``c = div(grad(a)/a)``, so ``Laplace(w) = b_vec.grad(w) + c w``.

    For ``s > 0``: ``w = a u + b (u^+)^{s+1}/(s+1)`` with ``b_vec = grad(a) + (u^+)^s grad(b)``
    and ``c = Laplace(a) + (u^+)^s Laplace(b)/(s+1)``, acting on ``u``.

    Raises :class:`NonDifferentiable` when a coefficient uses abs/min/max.
    """
    grid = u.grid
    uv = u.values
    if m.s == 0:
        pos = uv > 0
        ap = sample(m.a_plus, grid).values
        am = sample(m.a_minus, grid).values
        w = np.where(pos, ap * uv, am * uv)
        b_fields, c_fields = [], []
        for e, vals in ((m.a_plus, ap), (m.a_minus, am)):
            g = _grad_values(e, grid)
            b_fields.append(g / vals[..., None])
            # div(grad a / a) = Laplace(a)/a - |grad a|^2/a^2
            c_fields.append(_laplacian_values(e, grid) / vals - np.sum(g * g, axis=-1) / vals**2)
        b_vec = np.where(pos[..., None], b_fields[0], b_fields[1])
        c = np.where(pos, c_fields[0], c_fields[1])
        form = "w"
    else:
        s = m.s
        a = sample(m.a, grid).values
        b = sample(m.b, grid).values
        up = np.maximum(uv, 0.0)
        w = a * uv + b * up ** (s + 1) / (s + 1)
        b_vec = _grad_values(m.a, grid) + (up**s)[..., None] * _grad_values(m.b, grid)
        c = _laplacian_values(m.a, grid) + up**s / (s + 1) * _laplacian_values(m.b, grid)
        form = "u"
    return TransformFields(
        v=ScalarField(grid, w), b_vec=VectorField(grid, b_vec), c=ScalarField(grid, c), form=form
    )


def phi_s(u, a: float, b: float, s: float):
    """``a u + b (u^+)^{s+1}/(s+1)``; strictly increasing with slope at least ``a``."""
    u = np.asarray(u, dtype=float)
    out = a * u + b * np.maximum(u, 0.0) ** (s + 1) / (s + 1)
    return float(out) if out.ndim == 0 else out


def phi_s_inverse(v, a: float, b: float, s: float, tol: float = 1e-13, maxiter: int = 200):
    """Inverse of :func:`phi_s` by bisection-safeguarded Newton.

    Negative values invert linearly (``v / a``).  Positive values are bracketed
    in ``[0, v/a]`` and refined until ``|phi_s(u) - v| <= tol * max(1, |v|)``.
    """
    v = np.asarray(v, dtype=float)
    scalar = v.ndim == 0
    v = np.atleast_1d(v)
    out = v / a
    pos = v > 0
    if np.any(pos) and b != 0:
        vp = v[pos]
        lo = np.zeros_like(vp)
        hi = vp / a
        u = hi.copy()
        target = tol * np.maximum(1.0, np.abs(vp))
        for _ in range(maxiter):
            f = a * u + b * u ** (s + 1) / (s + 1) - vp
            done = np.abs(f) <= target
            if np.all(done):
                break
            hi = np.where(f > 0, u, hi)
            lo = np.where(f < 0, u, lo)
            step = u - f / (a + b * u**s)
            bad = (step <= lo) | (step >= hi)
            nxt = np.where(bad, 0.5 * (lo + hi), step)
            u = np.where(done, u, nxt)
        out[pos] = u
    return float(out[0]) if scalar else out
