"""Finite-difference Picard solver for ``div(A(x, u) grad u) = div f``.

Each Picard step freezes the conductivity at the current iterate, assembles
the conservative 5-point (3-point in 1D) operator with harmonic-mean edge
conductivities, and solves the resulting SPD system by conjugate gradients.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .coefficients import CoefficientModel, conductivity, sample_phases
from .errors import NoConvergence
from .exprlang import Expr, parse
from .grid import GridSpec, ScalarField, sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BrokenProblem:
    grid: GridSpec
    model: CoefficientModel
    boundary: Expr | str = "0"
    tol_picard: float = 1e-10
    max_picard: int = 200
    theta: float = 1.0
    tol_cg: float = 1e-12
    max_cg: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "boundary", parse(self.boundary))
        if self.tol_picard <= 0 or self.tol_cg <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError(f"damping theta must lie in (0, 1], got {self.theta}")
        if self.max_picard < 1:
            raise ValueError("max_picard must be at least 1")

    @property
    def cg_limit(self) -> int:
        return self.max_cg if self.max_cg is not None else 20 * self.grid.n**2


@dataclass
class LinearSystem:
    """Interior-node system ``matrix @ u_int = rhs``.

    ``matrix`` and ``rhs`` are stored multiplied by ``h^2`` so that the stencil
    entries are the bare edge conductivities; :attr:`operator` gives the
    ``1/h^2``-scaled discretisation of ``-div(A grad .)``.
    """

    grid: GridSpec
    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray  # bool mask over grid nodes
    boundary_values: np.ndarray  # full-grid array, only boundary entries meaningful
    edge_conductivities: tuple[np.ndarray, ...]

    @property
    def operator(self) -> sp.csr_matrix:
        return self.matrix / self.grid.h**2

    def embed(self, interior_values: np.ndarray) -> np.ndarray:
        full = self.boundary_values.copy()
        full[self.interior] = interior_values
        return full

    def residual(self, u: ScalarField) -> np.ndarray:
        return self.matrix @ u.values[self.interior] - self.rhs


def harmonic_mean(p, q):
    return 2.0 * p * q / (p + q)


def _centered_divergence(grid: GridSpec, fx: np.ndarray, fy: np.ndarray | None) -> np.ndarray:
    """Centered divergence at interior nodes."""
    h = grid.h
    if grid.dim == 1:
        return (fx[2:] - fx[:-2]) / (2 * h)
    return (fx[2:, 1:-1] - fx[:-2, 1:-1]) / (2 * h) + (fy[1:-1, 2:] - fy[1:-1, :-2]) / (2 * h)


class _Assembler:
    """Caches the pieces of the operator that do not depend on the frozen iterate."""

    def __init__(self, problem: BrokenProblem):
        grid = problem.grid
        self.problem = problem
        self.grid = grid
        self.phases = sample_phases(problem.model, grid)
        self.g = sample(problem.boundary, grid).values
        interior = ~grid.boundary_mask()
        self.interior = interior
        index = -np.ones(grid.shape, dtype=np.int64)
        index[interior] = np.arange(int(interior.sum()))
        self.index = index
        bvals = np.where(interior, 0.0, self.g)
        self.boundary_values = bvals
        fx = sample(problem.model.f_x, grid).values
        fy = sample(problem.model.f_y, grid).values if grid.dim == 2 else None
        inner = (slice(1, -1),) * grid.dim
        source = np.zeros(grid.shape)
        source[inner] = -_centered_divergence(grid, fx, fy) * grid.h**2
        self.source = source[interior]

    def __call__(self, u_frozen: np.ndarray) -> LinearSystem:
        grid = self.grid
        k = conductivity(self.problem.model.s, *self.phases, u_frozen)
        m = int(self.interior.sum())
        rows, cols, vals = [], [], []
        diag = np.zeros(grid.shape)
        rhs_full = np.zeros(grid.shape)
        edges = []
        for axis in range(grid.dim):
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            ke = harmonic_mean(k[lo], k[hi])
            # edges along the boundary itself never touch an interior node
            edges.append(ke)
            ia, ib = self.index[lo], self.index[hi]
            ga, gb = self.boundary_values[lo], self.boundary_values[hi]
            both = (ia >= 0) & (ib >= 0)
            rows += [ia[both], ib[both]]
            cols += [ib[both], ia[both]]
            vals += [-ke[both], -ke[both]]
            # diagonal contributions and boundary lifts
            np.add.at(diag, lo, np.where(ia >= 0, ke, 0.0))
            np.add.at(diag, hi, np.where(ib >= 0, ke, 0.0))
            rhs_full[lo] += np.where((ia >= 0) & (ib < 0), ke * gb, 0.0)
            rhs_full[hi] += np.where((ib >= 0) & (ia < 0), ke * ga, 0.0)
        idx = np.arange(m)
        rows.append(idx)
        cols.append(idx)
        vals.append(diag[self.interior])
        matrix = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
        )
        rhs = rhs_full[self.interior] + self.source
        return LinearSystem(grid, matrix, rhs, self.interior, self.boundary_values, tuple(edges))


def assemble(problem: BrokenProblem, u_frozen: ScalarField) -> LinearSystem:
    """Assemble the linear system with the conductivity frozen at ``u_frozen``.

    Edge conductivities are harmonic means of ``A`` at the two end nodes; the
    right side is ``-h^2 div_h f`` plus the Dirichlet lifts of the boundary data.
    """
    if u_frozen.grid != problem.grid:
        raise ValueError("frozen iterate lives on a different grid")
    return _Assembler(problem)(u_frozen.values)


def _cg(system: LinearSystem, tol: float, maxiter: int, x0=None) -> tuple[np.ndarray, int]:
    A = system.matrix
    b = system.rhs
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    M = sp.diags(1.0 / A.diagonal())
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
    res = float(np.linalg.norm(A @ x - b)) / bnorm
    if info == 0 and res > tol:
        # the recursive residual can undershoot the true one; restart once from x
        x, info = cg(A, b, x0=x, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
        res = float(np.linalg.norm(A @ x - b)) / bnorm
    if info != 0 or res > tol:
        raise NoConvergence("conjugate gradients did not converge", count[0], res)
    log.debug("cg: %d iterations, relative residual %.3e", count[0], res)
    return x, count[0]


def solve_linear(
    system: LinearSystem, tol: float = 1e-12, maxiter: int | None = None, x0: np.ndarray | None = None
) -> ScalarField:
    """Jacobi-preconditioned conjugate gradients to relative residual ``tol``.

    Raises :class:`NoConvergence` with the iteration count and residual.
    """
    if maxiter is None:
        maxiter = 20 * system.grid.n**2
    x, _ = _cg(system, tol, maxiter, x0)
    return ScalarField(system.grid, system.embed(x))


@dataclass
class SolveReport:
    u: ScalarField
    picard_iterations: int
    update_history: list[float]
    final_nonlinear_residual: float
    converged: bool
    cg_iterations: list[int] = field(default_factory=list)
    theta_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "picard_iterations": self.picard_iterations,
            "update_history": list(map(float, self.update_history)),
            "final_nonlinear_residual": float(self.final_nonlinear_residual),
            "converged": bool(self.converged),
            "theta_history": list(map(float, self.theta_history)),
            "wall_time": float(self.wall_time),
        }


def nonlinear_residual(problem: BrokenProblem, u: ScalarField) -> float:
    """``max |K(u) u - rhs(u)|`` in the ``h^2``-scaled form used by :class:`LinearSystem`."""
    system = _Assembler(problem)(u.values)
    return float(np.max(np.abs(system.residual(u)), initial=0.0))


def picard_solve(problem: BrokenProblem, initial: ScalarField | None = None) -> SolveReport:
    """Damped Picard iteration ``u <- (1 - theta) u + theta L(u)^{-1} rhs``.

    Stops when the sup-norm update falls below ``tol_picard * max(1, |u|_inf)``.
    After three consecutive non-decreasing updates the damping is halved, down
    to 1/16.  The returned report is ``converged`` only if the final nonlinear
    residual is at most ``10 * tol_picard * |u|_inf``; running out of iterations
    is reported, not raised.
    """
    start = time.perf_counter()
    grid = problem.grid
    build = _Assembler(problem)
    if initial is None:
        u = build.boundary_values.copy()
    else:
        u = np.where(build.interior, initial.values, build.boundary_values)
    theta = problem.theta
    history: list[float] = []
    thetas: list[float] = []
    cg_counts: list[int] = []
    stalled = 0
    stopped = False
    iterations = 0
    for iterations in range(1, problem.max_picard + 1):
        system = build(u)
        x0 = u[build.interior]
        x, its = _cg(system, problem.tol_cg, problem.cg_limit, x0=x0)
        cg_counts.append(its)
        solved = system.embed(x)
        u_next = (1.0 - theta) * u + theta * solved
        update = float(np.max(np.abs(u_next - u)))
        scale = max(1.0, float(np.max(np.abs(u))))
        thetas.append(theta)
        if history and update >= history[-1]:
            stalled += 1
        else:
            stalled = 0
        history.append(update)
        u = u_next
        log.debug("picard %d: update %.3e theta %.4g", iterations, update, theta)
        if update <= problem.tol_picard * scale:
            stopped = True
            break
        if stalled >= 3:
            theta = max(theta / 2, 1.0 / 16)
            stalled = 0
    field_u = ScalarField(grid, u)
    residual = nonlinear_residual(problem, field_u)
    converged = stopped and residual <= 10 * problem.tol_picard * float(np.max(np.abs(u)))
    if not converged:
        log.info("picard did not converge: %d iterations, residual %.3e", iterations, residual)
    return SolveReport(
        u=field_u,
        picard_iterations=iterations,
        update_history=history,
        final_nonlinear_residual=residual,
        converged=converged,
        cg_iterations=cg_counts,
        theta_history=thetas,
        wall_time=time.perf_counter() - start,
    )
