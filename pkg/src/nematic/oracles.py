"""Brute-force reference implementations.

Everything here is built from dense matrices assembled cell by cell with
explicit index arithmetic, sharing no stencil code with
:mod:`nematic.operators`.  Used by the verification suites and the tests;
only practical on small grids.
"""

from __future__ import annotations

import functools
import itertools

import numpy as np

from .grid import Grid, State


@functools.lru_cache(maxsize=64)
def _matrices(grid: Grid, axis: int, parity: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense (first, second) difference matrices along ``axis`` on the
    flattened interior (C order)."""
    N = grid.ncells
    n = grid.n
    h = grid.h[axis]
    D1 = np.zeros((N, N))
    D2 = np.zeros((N, N))
    for idx in itertools.product(*(range(m) for m in n)):
        row = int(np.ravel_multi_index(idx, n))
        D2[row, row] -= 2.0 / h ** 2
        for off, c1 in ((1, 0.5 / h), (-1, -0.5 / h)):
            nb = list(idx)
            nb[axis] += off
            coef = 1.0
            if grid.periodic:
                nb[axis] %= n[axis]
            elif not 0 <= nb[axis] < n[axis]:
                # ghost value = parity * adjacent interior value
                nb[axis] = idx[axis]
                coef = float(parity)
            col = int(np.ravel_multi_index(tuple(nb), n))
            D1[row, col] += coef * c1
            D2[row, col] += coef / h ** 2
    return D1, D2


def D(grid: Grid, axis: int, parity: int) -> np.ndarray:
    return _matrices(grid, axis, parity)[0]


def D2(grid: Grid, axis: int, parity: int) -> np.ndarray:
    return _matrices(grid, axis, parity)[1]


def _apply(M: np.ndarray, f: np.ndarray, grid: Grid) -> np.ndarray:
    return (M @ f.reshape(-1)).reshape(grid.n)


def _components(f: np.ndarray, grid: Grid):
    lead = f.shape[: f.ndim - grid.dim]
    return lead, list(itertools.product(*(range(m) for m in lead)))


def gradient(f: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    lead, comps = _components(f, grid)
    out = np.zeros(lead + (grid.dim,) + tuple(grid.n))
    for c in comps:
        for k in range(grid.dim):
            out[c + (k,)] = _apply(D(grid, k, parity), f[c], grid)
    return out


def laplacian(f: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    _, comps = _components(f, grid)
    out = np.zeros_like(f)
    for c in comps:
        for k in range(grid.dim):
            out[c] += _apply(D2(grid, k, parity), f[c], grid)
    return out


def div_vector(u: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    return sum(_apply(D(grid, k, parity), u[k], grid) for k in range(grid.dim))


def div_matrix(M: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    out = np.zeros((grid.dim,) + tuple(grid.n))
    for i in range(grid.dim):
        for k in range(grid.dim):
            out[i] += _apply(D(grid, k, parity), M[i, k], grid)
    return out


def advect(v: np.ndarray, f: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    _, comps = _components(f, grid)
    out = np.zeros_like(f)
    for c in comps:
        for k in range(grid.dim):
            out[c] += v[k] * _apply(D(grid, k, parity), f[c], grid)
    return out


def stretch(F: np.ndarray, u: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros_like(F)
    for i in range(grid.dim):
        for k in range(grid.dim):
            for j in range(grid.dim):
                out[i, k] += F[i, j] * _apply(D(grid, k, -1), u[j], grid)
    return out


def gram(F: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros_like(F)
    for i in range(dim):
        for j in range(dim):
            for k in range(dim):
                out[i, j] += F[k, i] * F[k, j]
    return out


def elastic_stress(F: np.ndarray, grid: Grid) -> np.ndarray:
    return div_matrix(gram(F, grid.dim), grid, 1)


def second_derivatives(f: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    lead, comps = _components(f, grid)
    out = np.zeros(lead + (grid.dim, grid.dim) + tuple(grid.n))
    for c in comps:
        for k in range(grid.dim):
            for l in range(grid.dim):
                if k == l:
                    M = D2(grid, k, parity)
                else:
                    M = D(grid, l, parity) @ D(grid, k, parity)
                out[c + (k, l)] = _apply(M, f[c], grid)
    return out


def curl_field(F: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.n)
    for i in range(grid.dim):
        for k in range(grid.dim):
            for l in range(k + 1, grid.dim):
                a = _apply(D(grid, l, -1), F[i, k], grid) - _apply(D(grid, k, -1), F[i, l], grid)
                out = np.maximum(out, np.abs(a))
    return out


# --------------------------------------------------------------------------- #
# monolithic backward-Euler step solved by Newton's method


def _residual(x: np.ndarray, old: State, dt: float, mu: float, lam: float, gamma: float,
              forcing=None) -> np.ndarray:
    g = old.grid
    d, N = g.dim, g.ncells
    u = x[: d * N].reshape((d,) + tuple(g.n))
    F = x[d * N: (d + d * d) * N].reshape((d, d) + tuple(g.n))
    P = x[(d + d * d) * N:].reshape(g.n)
    gradP = gradient(P, g, 1)
    Ru = ((u - old.u) / dt + advect(u, u, g, -1) + lam * elastic_stress(F, g)
          - mu * laplacian(u, g, -1) + gradP)
    RF = ((F - old.F) / dt + advect(u, F, g, -1) + stretch(F, u, g)
          - gamma * laplacian(F, g, -1))
    if forcing is not None:
        fu, fF = forcing(old.t + dt)
        Ru, RF = Ru - fu, RF - fF
    Rd = div_vector(u, g, -1)
    return np.concatenate([Ru.ravel(), RF.ravel(), Rd.ravel(), [P.sum() / N]])


def newton_step(old: State, dt: float, mu: float = 1.0, lam: float = 1.0, gamma: float = 1.0,
                tol: float = 1e-13, max_iter: int = 20, forcing=None) -> State:
    """Solve the fully implicit step

    ``(u - u_old)/dt + u.grad u + lam div(F^T F) - mu Lap u + grad P = f``,
    ``(F - F_old)/dt + u.grad F + F grad u - gamma Lap F = g``, ``div u = 0``,
    ``mean P = 0``

    with a central-difference Jacobian (exact for this quadratic residual up
    to round-off) and least-squares Newton updates.
    """
    g = old.grid
    x = np.concatenate([old.u.ravel(), old.F.ravel(), old.P.ravel()])
    scale = max(1.0, float(np.abs(x).max()))
    for _ in range(max_iter):
        r = _residual(x, old, dt, mu, lam, gamma, forcing)
        J = np.empty((r.size, x.size))
        eps = 1e-4 * scale
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = eps
            J[:, j] = (_residual(x + e, old, dt, mu, lam, gamma, forcing)
                       - _residual(x - e, old, dt, mu, lam, gamma, forcing)) / (2 * eps)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = x + dx
        if np.abs(dx).max() <= tol * scale:
            break
    d, N = g.dim, g.ncells
    u = x[: d * N].reshape((d,) + tuple(g.n))
    F = x[d * N: (d + d * d) * N].reshape((d, d) + tuple(g.n))
    P = x[(d + d * d) * N:].reshape(g.n)
    return State(old.t + dt, u, F, P - P.mean(), g)
