"""Acceptance experiments shared by ``brokenpde verify`` and the test suite.

Each criterion is a function ``(ctx) -> CriterionResult``.  Solves are cached
in the :class:`Context` so that criteria reusing a run (sign measures, transform
bounds, nodal lengths) do not pay for it twice.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .analysis import dirichlet_ratio, frequency_profile, harmonic_fit, vanishing_order
from .coefficients import CoefficientModel
from .grid import GridSpec, ScalarField, sample
from .nodal import (
    extract_nodal,
    frozen_values,
    holder_modulus,
    interface_gradient_max,
    nodal_length,
    normals_along,
    sign_measures,
)
from .oracles import harmonic_inversion_exact, transmission_1d
from .solver import BrokenProblem, SolveReport, picard_solve
from .transforms import phi_freeze, phi_s, phi_s_inverse, w_transform

log = logging.getLogger(__name__)

CONST_S0 = dict(s=0, a_plus="2", a_minus="1")
CONST_S1 = dict(s=1, a="1", b="1")
HOLDER = dict(s=0, a_plus="1.5+0.25*((x+1.2)^2)^0.25", a_minus="1")
SMOOTH = dict(s=0, a_plus="2+0.2*x^2", a_minus="1+0.1*y^2")
# phi^{-1}(x^2 - y^2) for a_+ = 2, a_- = 1: makes phi(u) = x^2 - y^2 exactly
SADDLE_DATA = "0.5*max(x^2-y^2,0) + min(x^2-y^2,0)"

SWEEP = (
    (SMOOTH, "x"),
    (SMOOTH, "0.5*max(x^2-y^2,0)+min(x^2-y^2,0)"),
    (SMOOTH, "sin(2*x)+0.3*y"),
    (CONST_S1, "x"),
    (dict(s=1, a="1+0.1*x^2", b="1"), "x^3-3*x*y^2-0.2"),
)


@dataclass
class CriterionResult:
    id: str
    passed: bool
    values: dict = field(default_factory=dict)
    detail: str = ""
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.id} {status} ({self.runtime:.2f}s) {self.detail}"

    def to_dict(self) -> dict:
        return {"id": self.id, "passed": bool(self.passed), "values": _jsonable(self.values),
                "detail": self.detail, "runtime": self.runtime}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int, bool, np.bool_)):
        return obj.item() if hasattr(obj, "item") else obj
    return obj


class Context:
    """Run cache plus shared settings for one suite invocation."""

    def __init__(self, seed: int = 42, workers: int = 1):
        self.seed = seed
        self.workers = workers
        self._runs: dict = {}

    def solve(self, coeffs: dict, g: str, n: int, dim: int = 2) -> SolveReport:
        key = (tuple(sorted(coeffs.items())), g, n, dim)
        if key not in self._runs:
            grid = GridSpec.square(n) if dim == 2 else GridSpec.interval(n)
            t = time.perf_counter()
            rep = picard_solve(BrokenProblem(grid, CoefficientModel(**coeffs), g))
            log.info("solve %s g=%s n=%d: %d iterations, %.2fs", coeffs, g, n, rep.picard_iterations,
                     time.perf_counter() - t)
            self._runs[key] = rep
        return self._runs[key]


def _timed(limit: float | None = None):
    """Record the wall time of a criterion and fail it when ``limit`` seconds are exceeded."""

    def deco(fn: Callable[[Context], CriterionResult]):
        def wrapper(ctx: Context) -> CriterionResult:
            t = time.perf_counter()
            res = fn(ctx)
            res.runtime = time.perf_counter() - t
            if limit is not None:
                res.values["runtime_limit"] = limit
                if res.runtime >= limit:
                    res.passed = False
                    res.detail += f" runtime {res.runtime:.1f}s over {limit:.0f}s"
            return res

        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper

    return deco


@_timed()
def ac1(ctx: Context) -> CriterionResult:
    """1D transmission problem against its closed form."""
    t = time.perf_counter()
    rep = ctx.solve(CONST_S0, "x", 129, dim=1)
    elapsed = time.perf_counter() - t
    u = rep.u
    grid = u.grid
    h = grid.h
    oracle = transmission_1d(2.0, 1.0, -1.0, 1.0)
    x = grid.axis(0)
    sup_err = float(np.max(np.abs(u.values - oracle(x))))
    roots = extract_nodal(u).sample_points[:, 0]
    x0 = oracle.metadata["interface"]
    offset = float(np.min(np.abs(roots - x0))) if len(roots) else math.inf
    # slopes from difference quotients on cells away from the interface cell
    d = np.diff(u.values) / h
    mid = 0.5 * (x[:-1] + x[1:])
    left = mid < x0 - h
    right = mid > x0 + h
    slope_l = float(np.mean(d[left]))
    slope_r = float(np.mean(d[right]))
    err_l = abs(slope_l / oracle.metadata["slope_left"] - 1)
    err_r = abs(slope_r / oracle.metadata["slope_right"] - 1)
    ok = rep.converged and offset <= 2 * h and max(err_l, err_r) <= 0.05 and sup_err <= 3 * h and elapsed < 1.0
    vals = dict(offset=offset, slope_err_left=err_l, slope_err_right=err_r, sup_error=sup_err, h=h,
                solve_time=elapsed, converged=rep.converged)
    return CriterionResult("AC-1", ok, vals, f"offset={offset:.2e} slope_err={max(err_l, err_r):.2e} "
                           f"sup_err={sup_err:.2e} (3h={3 * h:.2e})")


def _ac2_case(ctx: Context, coeffs: dict) -> dict:
    out = {}
    errs = []
    t = time.perf_counter()
    for n in (65, 129):
        rep = ctx.solve(coeffs, "x", n)
        grid = rep.u.grid
        ref = harmonic_inversion_exact(CoefficientModel(**coeffs), "x", grid).metadata["nodal"]
        err = float(np.max(np.abs(rep.u.values - ref.values)))
        errs.append(err)
        out[f"error_n{n}"] = err
        out[f"within_3h_n{n}"] = bool(err <= 3 * grid.h)
        out[f"converged_n{n}"] = rep.converged
    out["ratio"] = errs[0] / errs[1] if errs[1] > 0 else math.inf
    out["time"] = time.perf_counter() - t
    out["passed"] = bool(
        all(out[f"within_3h_n{n}"] and out[f"converged_n{n}"] for n in (65, 129))
        and out["ratio"] >= 1.7
        and out["time"] < 30.0
    )
    return out


@_timed()
def ac2(ctx: Context) -> CriterionResult:
    """2D picard_solve against the harmonic-inversion oracle, s = 0 and s = 1."""
    cases = {"s0": _ac2_case(ctx, CONST_S0), "s1": _ac2_case(ctx, CONST_S1)}
    ok = all(c["passed"] for c in cases.values())
    detail = " ".join(f"{k}: err={c['error_n129']:.2e} ratio={c['ratio']:.2f}" for k, c in cases.items())
    return CriterionResult("AC-2", ok, cases, detail)


@_timed(10.0)
def ac3(ctx: Context) -> CriterionResult:
    """Frequency and doubling of homogeneous harmonic polynomials."""
    grid = GridSpec.square(257)
    radii = np.linspace(0.1, 0.4, 7)
    vals = {}
    ok = True
    for expr, d in (("x", 1), ("x^2-y^2", 2)):
        prof = frequency_profile(sample(expr, grid), z=(0.0, 0.0), radii=radii, workers=ctx.workers)
        dbl = prof.doubling[np.isfinite(prof.doubling)]
        target = 2.0 ** (1 + 2 * d)  # 2^{n-1+2d} with n = 2
        n_err = float(np.max(np.abs(prof.N - d)))
        d_err = float(np.max(np.abs(dbl / target - 1))) if len(dbl) else math.inf
        vals[expr] = dict(N=prof.N, doubling=dbl, N_error=n_err, doubling_rel_error=d_err)
        ok &= n_err <= 0.03 and d_err <= 0.03 and len(dbl) > 0
    detail = " ".join(f"{k}: |N-d|={v['N_error']:.1e} dbl={v['doubling_rel_error']:.1e}" for k, v in vals.items())
    return CriterionResult("AC-3", bool(ok), vals, detail)


@_timed(120.0)
def ac4(ctx: Context) -> CriterionResult:
    """Interface gradient growth and Hoelder stability of normals, Hoelder coefficients."""
    model = CoefficientModel(**HOLDER)
    grads, mods, conv = [], [], []
    for n in (65, 129, 257):
        rep = ctx.solve(HOLDER, "x", n)
        u = rep.u
        conv.append(rep.converged)
        grads.append(interface_gradient_max(u, (0.0, 0.0), 0.5))
        pts = extract_nodal(u).sample_points
        pts = pts[np.linalg.norm(pts, axis=1) <= 0.5]
        mods.append(holder_modulus(normals_along(u, model, pts, 8 * u.grid.h), 0.5, u.grid.h))
    growth = [grads[k + 1] / grads[k] - 1 for k in range(2)]
    drift = abs(mods[2] / mods[1] - 1)
    ok = all(conv) and max(growth) <= 0.10 and all(map(math.isfinite, mods)) and drift <= 0.20
    vals = dict(grad_max=grads, growth=growth, holder=mods, holder_drift=drift, converged=conv)
    return CriterionResult("AC-4", bool(ok), vals, f"growth={max(growth):.3f} holder={mods[-1]:.4f} drift={drift:.3f}")


@_timed(60.0)
def ac5(ctx: Context) -> CriterionResult:
    """Integer vanishing order at a saddle of the broken solution."""
    rep = ctx.solve(CONST_S0, SADDLE_DATA, 257)
    u = rep.u
    est = vanishing_order(u, (0.0, 0.0), r_max=0.5, levels=5)
    v = phi_freeze(u, (0.0, 0.0), CoefficientModel(**CONST_S0))
    fit = harmonic_fit(v, (0.0, 0.0), 2, 0.25, levels=5)
    ok_a = abs(est.d_hat - 2) <= 0.1
    ok_b = fit.decay_exponent >= 2.3
    vals = dict(d_hat=est.d_hat, decay_exponent=fit.decay_exponent, fit_residuals=fit.residuals,
                part_a=bool(ok_a), part_b=bool(ok_b), converged=rep.converged)
    return CriterionResult("AC-5", bool(ok_a and ok_b and rep.converged), vals,
                           f"(a) d_hat={est.d_hat:.3f} {'ok' if ok_a else 'fail'}; "
                           f"(b) decay={fit.decay_exponent:.3f} {'ok' if ok_b else 'fail'}")


@_timed()
def ac6(ctx: Context) -> CriterionResult:
    """Both sign sets occupy a fixed fraction of the unit ball, stably."""
    pairs = {
        "AC-2 s0": (CONST_S0, "x", 65, 129),
        "AC-2 s1": (CONST_S1, "x", 65, 129),
        "AC-4": (HOLDER, "x", 129, 257),
        "AC-5": (CONST_S0, SADDLE_DATA, 129, 257),
    }
    floor = 0.05 * math.pi
    vals = {}
    ok = True
    for name, (coeffs, g, nc, nf) in pairs.items():
        mins = []
        for n in (nc, nf):
            rep = ctx.solve(coeffs, g, n)
            if not rep.converged:
                continue
            mins.append(min(sign_measures(rep.u, (0.0, 0.0), 1.0)))
        if len(mins) < 2:
            vals[name] = dict(skipped="not converged")
            continue
        drift = abs(mins[1] / mins[0] - 1)
        vals[name] = dict(min_measure=mins, drift=drift)
        ok &= min(mins) >= floor and drift <= 0.10
    worst = min(v["min_measure"][1] for v in vals.values() if "min_measure" in v)
    return CriterionResult("AC-6", bool(ok), vals, f"smallest min(pos,neg)={worst:.4f} (floor {floor:.4f})")


def axis_root(u: ScalarField) -> np.ndarray:
    """Nodal point of ``u`` on the row ``y = 0`` closest to the origin."""
    grid = u.grid
    j = int(np.argmin(np.abs(grid.axis(1))))
    row = u.values[:, j]
    x = grid.axis(0)
    pos = row > 0
    idx = np.nonzero(pos[:-1] != pos[1:])[0]
    if len(idx) == 0:
        raise ValueError("no sign change on the x-axis")
    roots = x[idx] + row[idx] / (row[idx] - row[idx + 1]) * grid.h
    return np.array([roots[np.argmin(np.abs(roots))], grid.axis(1)[j]])


def smooth_profile(ctx: Context, n: int = 257):
    rep = ctx.solve(SMOOTH, "x", n)
    u = rep.u
    tf = w_transform(u, CoefficientModel(**SMOOTH))
    z = axis_root(u)
    radii = np.geomspace(0.08, 0.4, 12)
    return rep, z, frequency_profile(tf.v, u, tf, z, radii, workers=ctx.workers)


@_timed(60.0)
def ac7(ctx: Context) -> CriterionResult:
    """Frequency stays under an affine bound in its value at the largest radius."""
    rep, z, prof = smooth_profile(ctx)
    excess = prof.affine_excess(1.0, 1.5)
    ok = rep.converged and not prof.flags and bool(np.all(prof.ok)) and excess <= 0
    vals = dict(center=z, radii=prof.radii, N=prof.N, bound=1.0 + 1.5 * prof.N[-1], excess=excess, flags=prof.flags)
    return CriterionResult("AC-7", bool(ok), vals,
                           f"max N={np.nanmax(prof.N):.4f} bound={1.0 + 1.5 * prof.N[-1]:.4f} flags={len(prof.flags)}")


@_timed()
def ac8(ctx: Context) -> CriterionResult:
    """phi_s round trip and lambda-bounds of the frozen transform on AC-2 runs."""
    rng = np.random.default_rng(ctx.seed)
    v = rng.uniform(-3, 3, 1000)
    a = rng.uniform(0.5, 2, 1000)
    b = rng.uniform(0.5, 2, 1000)
    s = rng.choice([0.5, 1.0, 2.0], 1000)
    rt = max(abs(phi_s(phi_s_inverse(v[k], a[k], b[k], s[k]), a[k], b[k], s[k]) - v[k]) for k in range(1000))
    vals = {"roundtrip_max_error": rt}
    ok = rt <= 1e-12
    for name, coeffs in (("s0", CONST_S0), ("s1", CONST_S1)):
        lam = CoefficientModel(**coeffs).lam
        for n in (65, 129):
            u = ctx.solve(coeffs, "x", n).u.values
            w = np.abs(frozen_values(CoefficientModel(**coeffs), (0.0, 0.0), u))
            au = np.abs(u)
            lower = float(np.min(w - lam * au))
            upper = float(np.min(au / lam - w))
            vals[f"{name}_n{n}"] = dict(lower_slack=lower, upper_slack=upper)
            ok &= lower >= -1e-15 and upper >= -1e-15
    return CriterionResult("AC-8", bool(ok), vals, f"roundtrip={rt:.1e}")


@_timed()
def ac9(ctx: Context) -> CriterionResult:
    """Nodal length in B_1/2: stability under refinement and length/N across a sweep."""
    stab = {}
    ok = True
    for name, coeffs, ns in (("AC-7", SMOOTH, (129, 257)), ("AC-2 s1", CONST_S1, (65, 129))):
        lengths = [nodal_length(extract_nodal(ctx.solve(coeffs, "x", n).u), (0.0, 0.0), 0.5) for n in ns]
        drift = abs(lengths[1] / lengths[0] - 1)
        stab[name] = dict(lengths=lengths, drift=drift)
        ok &= all(map(math.isfinite, lengths)) and drift <= 0.05
    sweep = []
    for coeffs, g in SWEEP:
        rep = ctx.solve(coeffs, g, 129)
        length = nodal_length(extract_nodal(rep.u), (0.0, 0.0), 0.5)
        N = dirichlet_ratio(rep.u)
        sweep.append(dict(coefficients=coeffs, boundary=g, length=length, N=N, ratio=length / N,
                          converged=rep.converged))
    ratios = np.array([r["ratio"] for r in sweep])
    spread = float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf
    ok &= spread <= 3.0 and all(r["converged"] for r in sweep)
    return CriterionResult("AC-9", bool(ok), dict(stability=stab, sweep=sweep, spread=spread),
                           f"drift={max(v['drift'] for v in stab.values()):.4f} spread={spread:.3f}")


CRITERIA: dict[str, Callable[[Context], CriterionResult]] = {
    "AC-1": ac1, "AC-2": ac2, "AC-3": ac3, "AC-4": ac4, "AC-5": ac5,
    "AC-6": ac6, "AC-7": ac7, "AC-8": ac8, "AC-9": ac9,
}

SUITES = {
    "constant-coeff": ("AC-1", "AC-2", "AC-3"),
    "regularity": ("AC-4", "AC-5", "AC-6"),
    "frequency": ("AC-3", "AC-7", "AC-9"),
    "transforms": ("AC-8",),
    "all": tuple(CRITERIA),
}


def run_suite(suite: str = "all", seed: int = 42, workers: int = 1, ctx: Context | None = None) -> list[CriterionResult]:
    if suite not in SUITES:
        raise KeyError(f"unknown suite '{suite}'; choose from {sorted(SUITES)}")
    ctx = ctx or Context(seed, workers)
    results = []
    for cid in SUITES[suite]:
        res = CRITERIA[cid](ctx)
        log.info(res.line())
        results.append(res)
    return results
