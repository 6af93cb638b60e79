"""Implicit linear sub-problems: Helmholtz/heat solves, pressure projection and
the backward-Euler Stokes step.

All systems are symmetric (semi-)definite and solved matrix-free by conjugate
gradients with a relative-residual stop.  Singular operators have their
nullspace removed from the right-hand side and from every iterate, so runs
are deterministic and return the minimum-norm (zero-mean) solution.

The projection uses ``L = div o grad`` (wide centred stencil) rather than the
compact Laplacian; with odd ghosts for the velocity and even ghosts for the
pressure, ``div`` is exactly ``-grad^T``, so the projected velocity is
discretely divergence-free to solver tolerance and the projection is
orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import operators as ops
from .errors import NotCompatible, NotConverged
from .grid import Grid


@dataclass(frozen=True)
class LinearSolveConfig:
    tol: float = 1e-10
    max_iter: int | None = None  # None -> 10 * number of unknowns per component

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def cap(self, grid: Grid) -> int:
        return self.max_iter if self.max_iter is not None else 10 * grid.ncells


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    final_residual: float
    converged: bool

    def combine(self, other: "LinearSolveReport") -> "LinearSolveReport":
        return LinearSolveReport(
            self.iterations + other.iterations,
            max(self.final_residual, other.final_residual),
            self.converged and other.converged,
        )


EMPTY_REPORT = LinearSolveReport(0, 0.0, True)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b))


def conjugate_gradient(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, tol: float,
                       max_iter: int, x0: np.ndarray | None = None,
                       project: Callable[[np.ndarray], np.ndarray] | None = None,
                       ref: float | None = None,
                       ) -> tuple[np.ndarray, LinearSolveReport]:
    """Unpreconditioned CG on arrays of any shape.

    ``project`` (when given) is applied to the right-hand side, the initial
    guess and every residual; it must be the orthogonal projector onto the
    range of a singular symmetric operator.

    Residuals are measured relative to ``max(||b||, ref)``; a ``ref`` larger
    than ``||b||`` turns the stop into an absolute one for small corrections.
    """
    if project is not None:
        b = project(b)
    bnorm = np.sqrt(_dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), LinearSolveReport(0, 0.0, True)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = x0.copy() if project is None else project(x0)
        r = b - apply(x)
        if project is not None:
            r = project(r)
    if ref is not None:
        bnorm = max(bnorm, ref)
    rr = _dot(r, r)
    target = (tol * bnorm) ** 2
    if rr <= target:
        return x, LinearSolveReport(0, np.sqrt(rr) / bnorm, True)
    p = r.copy()
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        alpha = rr / _dot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        rr_new = _dot(r, r)
        if rr_new <= target:
            return x, LinearSolveReport(it, np.sqrt(rr_new) / bnorm, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    report = LinearSolveReport(max_iter, np.sqrt(rr) / bnorm, False)
    raise NotConverged(f"CG stalled at relative residual {report.final_residual:.3e}", report)


# --------------------------------------------------------------------------- #
# pressure / projection


def _null_basis(grid: Grid) -> list[np.ndarray]:
    """Orthonormal basis of ker(div o grad) for scalar fields.

    Dirichlet (even pressure ghosts): constants only.  Periodic: the wide
    stencil decouples even and odd cells along every axis with an even cell
    count, giving one constant mode per sub-lattice.
    """
    if not grid.periodic:
        return [np.full(grid.n, 1.0 / np.sqrt(grid.ncells))]
    masks = [np.ones(grid.n, dtype=bool)]
    for k, nk in enumerate(grid.n):
        if nk % 2:
            continue
        shape = [1] * grid.dim
        shape[k] = nk
        par = (np.arange(nk) % 2).reshape(shape).astype(bool)
        masks = [m & sel for m in masks for sel in (par, ~par)]
    return [m / np.sqrt(m.sum()) for m in masks]


class _NullProjector:
    def __init__(self, grid: Grid):
        self.basis = _null_basis(grid)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        out = f.copy()
        for e in self.basis:
            out -= _dot(e, f) * e
        return out

    def component(self, f: np.ndarray) -> float:
        return float(np.sqrt(sum(_dot(e, f) ** 2 for e in self.basis)))


def projection_operator(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """``-div(grad phi)`` with the pressure/velocity ghost pairing (SPD on the range)."""
    return -ops.div_vector(ops.grad_scalar(phi, grid, parity=1), grid, parity=-1)


def poisson_solve(rhs: np.ndarray, grid: Grid, cfg: LinearSolveConfig = LinearSolveConfig(),
                  check: bool = True, ref: float | None = None,
                  ) -> tuple[np.ndarray, LinearSolveReport]:
    """Zero-mean solution of ``-div(grad P) = rhs``.

    Raises :class:`NotCompatible` if ``rhs`` has a nullspace component above
    ``cfg.tol`` relative to its norm (in Dirichlet mode that is the
    compatibility condition ``sum(rhs) = 0`` of the Neumann pressure problem).
    ``check=False`` skips the test for right-hand sides that are compatible by
    construction (divergences), whose nullspace component is pure round-off.
    """
    proj = _NullProjector(grid)
    norm = np.sqrt(_dot(rhs, rhs))
    slack = max(cfg.tol, 64 * np.finfo(float).eps * np.sqrt(grid.ncells))
    if check and norm > 0 and proj.component(rhs) > slack * norm:
        raise NotCompatible("right-hand side is not orthogonal to the pressure nullspace")
    x, rep = conjugate_gradient(lambda v: projection_operator(v, grid), rhs, cfg.tol,
                                cfg.cap(grid), project=proj, ref=ref)
    return proj(x), rep


def leray_project(u: np.ndarray, grid: Grid, cfg: LinearSolveConfig = LinearSolveConfig(),
                  dt: float = 1.0, ref: float | None = None,
                  ) -> tuple[np.ndarray, np.ndarray, LinearSolveReport]:
    """Remove the discrete gradient part of ``u``.

    Returns ``(u - grad phi, phi / dt, report)`` where ``div(grad phi) = div u``.
    On exit ``||div(result)||_2`` is at most ``cfg.tol * max(||div u||_2, ref)``.
    """
    div_u = ops.div_vector(u, grid)
    if not np.any(div_u):
        return u.copy(), np.zeros(grid.n), EMPTY_REPORT
    phi, rep = poisson_solve(-div_u, grid, cfg, check=False, ref=ref)
    return u - ops.grad_scalar(phi, grid), phi / dt, rep


def divergence_bound(u: np.ndarray, grid: Grid, cfg: LinearSolveConfig) -> float:
    """Bound on ``max|div|`` guaranteed after projecting ``u``."""
    return cfg.tol * float(np.linalg.norm(ops.div_vector(u, grid)))


# --------------------------------------------------------------------------- #
# Helmholtz / heat / Stokes


def helmholtz_apply(x: np.ndarray, a: float, grid: Grid) -> np.ndarray:
    return x - a * ops.laplacian(x, grid)


def helmholtz_solve(rhs: np.ndarray, a: float, grid: Grid,
                    cfg: LinearSolveConfig = LinearSolveConfig(), x0: np.ndarray | None = None,
                    ) -> tuple[np.ndarray, LinearSolveReport]:
    """Solve ``(I - a*Lap) x = rhs`` with the boundary rule of the field kind."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    grid.kind(rhs)
    if a == 0:
        return rhs.copy(), EMPTY_REPORT
    return conjugate_gradient(lambda v: helmholtz_apply(v, a, grid), rhs, cfg.tol,
                              cfg.cap(grid), x0=x0)


def heat_step(F_old: np.ndarray, g: np.ndarray, dt: float, gamma: float, grid: Grid,
              cfg: LinearSolveConfig = LinearSolveConfig(), x0: np.ndarray | None = None,
              ) -> tuple[np.ndarray, LinearSolveReport]:
    """Backward Euler: ``(I - gamma dt Lap) F_new = F_old + dt g``."""
    if dt <= 0 or gamma <= 0:
        raise ValueError("dt and gamma must be positive")
    return helmholtz_solve(F_old + dt * g, gamma * dt, grid, cfg, x0=x0)


def stokes_step(u_old: np.ndarray, f: np.ndarray, dt: float, mu: float, grid: Grid,
                cfg: LinearSolveConfig = LinearSolveConfig(), p_old: np.ndarray | None = None,
                x0: np.ndarray | None = None, ref: float | None = None,
                ) -> tuple[np.ndarray, np.ndarray, LinearSolveReport]:
    """One backward-Euler Stokes step by incremental pressure correction.

    Tentative velocity from ``(I - mu dt Lap) u* = u_old + dt (f - grad p_old)``,
    then projection ``u = u* - grad phi`` and the rotational pressure update
    ``P = p_old + (phi - mu dt Lap phi) / dt``.  If ``P == p_old`` (a fixed
    point of repeated calls, as inside the Picard loop) then ``phi`` is
    constant and ``u`` solves the coupled system
    ``(I - mu dt Lap) u + dt grad P = u_old + dt f, div u = 0`` exactly.
    """
    if dt <= 0 or mu <= 0:
        raise ValueError("dt and mu must be positive")
    rhs = u_old + dt * f
    if p_old is not None:
        rhs = rhs - dt * ops.grad_scalar(p_old, grid)
    u_star, rep1 = helmholtz_solve(rhs, mu * dt, grid, cfg, x0=x0)
    u_new, phi_dt, rep2 = leray_project(u_star, grid, cfg, dt=dt, ref=ref)
    incr = phi_dt - mu * dt * ops.laplacian(phi_dt, grid, parity=1)
    P = incr if p_old is None else p_old + incr
    P = P - P.mean()
    return u_new, P, rep1.combine(rep2)


def stokes_residual(u: np.ndarray, P: np.ndarray, u_old: np.ndarray, f: np.ndarray, dt: float,
                    mu: float, grid: Grid) -> float:
    """Relative momentum residual of the coupled backward-Euler Stokes system
    ``(I - mu dt Lap) u + dt grad P = u_old + dt f``."""
    b = u_old + dt * f
    r = helmholtz_apply(u, mu * dt, grid) + dt * ops.grad_scalar(P, grid) - b
    bn = float(np.linalg.norm(b))
    return float(np.linalg.norm(r)) / bn if bn > 0 else float(np.linalg.norm(r))


def stokes_solve(u_old: np.ndarray, f: np.ndarray, dt: float, mu: float, grid: Grid,
                 cfg: LinearSolveConfig = LinearSolveConfig(), p0: np.ndarray | None = None,
                 x0: np.ndarray | None = None, max_sweeps: int = 200,
                 ) -> tuple[np.ndarray, np.ndarray, LinearSolveReport]:
    """Coupled backward-Euler Stokes solve.

    Repeats :func:`stokes_step` with the previous pressure until the momentum
    residual of the coupled system drops below ``cfg.tol`` (sub-solves run at
    ``cfg.tol / 10``).  In periodic mode the first sweep is already exact; with
    walls the rotational update contracts by roughly 1/4 per sweep.  The
    result is divergence-free and has zero-mean pressure like a single step.
    """
    b = u_old + dt * f
    bn = float(np.linalg.norm(b))
    if bn == 0.0 and (p0 is None or not np.any(p0)):
        return np.zeros_like(u_old), np.zeros(grid.n), EMPTY_REPORT
    sub = LinearSolveConfig(cfg.tol / 10, cfg.max_iter)
    # divergences of fields of size ||b|| are at most this large
    ref = bn * np.sqrt(grid.dim) / float(min(grid.h))
    P = np.zeros(grid.n) if p0 is None else p0
    u = x0
    report = EMPTY_REPORT
    res = float("inf")
    for _ in range(max_sweeps):
        u, P, rep = stokes_step(u_old, f, dt, mu, grid, sub, p_old=P, x0=u, ref=ref)
        report = report.combine(rep)
        res = stokes_residual(u, P, u_old, f, dt, mu, grid)
        if res <= cfg.tol:
            return u, P, LinearSolveReport(report.iterations, res, True)
    raise NotConverged(f"Stokes sweeps stalled at residual {res:.3e}",
                       LinearSolveReport(report.iterations, res, False))
