"""The broken conductivity ``A_s(x, u)`` and an audit of its structure conditions.

Two regimes are supported:

* ``s == 0``: ``A(x, u) = a_plus(x) H(u) + a_minus(x) (1 - H(u))`` with the
  Heaviside convention ``H(0) = 0``, so nodal points take the minus phase;
* ``s > 0``: ``A_s(x, u) = a(x) + b(x) max(u, 0)^s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exprlang import Expr, constant_value, is_constant, parse
from .grid import GridSpec, sample


@dataclass(frozen=True)
class CoefficientModel:
    """Broken coefficient, forcing vector field and declared structure constants.

    Expression fields accept strings and are parsed on construction.  For
    ``s == 0`` only ``a_plus``/``a_minus`` are used, for ``s > 0`` only ``a``/``b``.
    """

    s: float = 0.0
    a_plus: Expr | str | None = None
    a_minus: Expr | str | None = None
    a: Expr | str | None = None
    b: Expr | str | None = None
    f_x: Expr | str = "0"
    f_y: Expr | str = "0"
    lam: float = 0.4
    alpha: float = 0.5
    omega0: float = 1.0

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("negative break order s is not supported")
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        need = ("a_plus", "a_minus") if self.s == 0 else ("a", "b")
        for name in ("a_plus", "a_minus", "a", "b", "f_x", "f_y"):
            val = getattr(self, name)
            if val is None:
                if name in need:
                    raise ValueError(f"{name} is required when s = {self.s}")
                continue
            object.__setattr__(self, name, parse(val))

    @property
    def phases(self) -> tuple[Expr, Expr]:
        """``(a_plus, a_minus)`` for ``s == 0``, ``(a, b)`` otherwise."""
        return (self.a_plus, self.a_minus) if self.s == 0 else (self.a, self.b)

    @property
    def has_forcing(self) -> bool:
        return not (is_constant(self.f_x) and is_constant(self.f_y))

    def constant_phases(self) -> tuple[float, float] | None:
        """Phase constants when both phase expressions are constant, else ``None``."""
        p, q = self.phases
        if is_constant(p) and is_constant(q):
            return constant_value(p), constant_value(q)
        return None

    def swapped(self) -> CoefficientModel:
        """The s = 0 model with the two phases exchanged (used for sign equivariance)."""
        if self.s != 0:
            raise ValueError("phase swap is only meaningful for s = 0")
        return CoefficientModel(
            s=0.0, a_plus=self.a_minus, a_minus=self.a_plus, f_x=self.f_x, f_y=self.f_y,
            lam=self.lam, alpha=self.alpha, omega0=self.omega0,
        )


def conductivity(s: float, p_vals, q_vals, u):
    """Vectorised ``A`` given sampled phase values ``p_vals, q_vals`` and ``u``."""
    u = np.asarray(u, dtype=float)
    if s == 0:
        return np.where(u > 0, p_vals, q_vals)
    return p_vals + q_vals * np.maximum(u, 0.0) ** s


def evaluate_A(m: CoefficientModel, x, u: float) -> float:
    """``A(x, u)`` at a single point."""
    p, q = m.phases
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    y = pt[1] if pt.size > 1 else 0.0
    return float(conductivity(m.s, p(pt[0], y), q(pt[0], y), u))


def sample_phases(m: CoefficientModel, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    p, q = m.phases
    return sample(p, grid).values, sample(q, grid).values


@dataclass
class StructureReport:
    ranges: dict[str, tuple[float, float]]
    max_f: float
    holder_quotient: dict[str, float]
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        return {
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "max_f": self.max_f,
            "holder_quotient": self.holder_quotient,
            "flags": list(self.flags),
            "passed": self.passed,
        }


def check_structure(m: CoefficientModel, grid: GridSpec, pairs: int = 500, seed: int = 42) -> StructureReport:
    """Audit ellipticity bounds and the declared Holder data on the grid nodes.

    The Holder quotient is the maximum of ``|c(x) - c(y)| / |x - y|^alpha`` over
    ``pairs`` random node pairs for every phase coefficient and for ``f``.
    Violations (ellipticity, or the declared ``omega0`` exceeded by more than 5%)
    are recorded as flags rather than raised.
    """
    names = ("a_plus", "a_minus") if m.s == 0 else ("a", "b")
    vals = dict(zip(names, sample_phases(m, grid)))
    fx = sample(m.f_x, grid).values
    fy = sample(m.f_y, grid).values if grid.dim == 2 else np.zeros_like(fx)
    fnorm = np.sqrt(fx**2 + fy**2)

    flags = []
    ranges = {}
    for name, v in vals.items():
        lo, hi = float(v.min()), float(v.max())
        ranges[name] = (lo, hi)
        if lo < m.lam:
            flags.append(f"{name} drops to {lo:.6g} below lambda = {m.lam}")
        if hi > 1 / m.lam:
            flags.append(f"{name} reaches {hi:.6g} above 1/lambda = {1 / m.lam:.6g}")
    max_f = float(fnorm.max())
    if max_f > 1 / m.lam:
        flags.append(f"|f| reaches {max_f:.6g} above 1/lambda = {1 / m.lam:.6g}")

    rng = np.random.default_rng(seed)
    coords = np.stack([c.ravel() for c in grid.mesh()], axis=-1)
    i = rng.integers(0, coords.shape[0], size=pairs)
    j = rng.integers(0, coords.shape[0], size=pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    dist = np.linalg.norm(coords[i] - coords[j], axis=-1) ** m.alpha
    quotients = {}
    for name, v in vals.items():
        flat = v.ravel()
        quotients[name] = float(np.max(np.abs(flat[i] - flat[j]) / dist)) if i.size else 0.0
    f_inc = np.sqrt((fx.ravel()[i] - fx.ravel()[j]) ** 2 + (fy.ravel()[i] - fy.ravel()[j]) ** 2)
    quotients["f"] = float(np.max(f_inc / dist)) if i.size else 0.0
    for name, qv in quotients.items():
        if qv > 1.05 * m.omega0:
            flags.append(f"Holder quotient of {name} is {qv:.6g}, above omega0 = {m.omega0}")
    return StructureReport(ranges, max_f, quotients, flags)
