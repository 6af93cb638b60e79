"""Centred second-order finite-difference operators on cell-centred grids.

Conventions used throughout the package:

* ``(grad u)[j, k] = d u_j / d x_k``
* ``(div M)[j] = sum_k d M[j, k] / d x_k`` (row-wise)
* :func:`elastic_stress` returns ``+div(F^T F)``; the momentum equation
  subtracts it.

Each operator pads its input with one ghost layer (see :mod:`nematic.grid`)
and evaluates the stencil on the interior.  ``parity`` picks the Dirichlet
ghost rule: -1 for fields with zero trace (u, F, d), +1 for pressure-like or
stress-like fields.  Defaults follow the role each operator plays in the
momentum/orientation system; in periodic mode parity is irrelevant.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .grid import Grid, pad

_STENCIL_FAULT = False


@contextlib.contextmanager
def inject_stencil_fault():
    """Corrupt the first-derivative stencil while active (verification self-test)."""
    global _STENCIL_FAULT
    old, _STENCIL_FAULT = _STENCIL_FAULT, True
    try:
        yield
    finally:
        _STENCIL_FAULT = old


def _shift(fp: np.ndarray, grid: Grid, axis: int, offset: int) -> np.ndarray:
    """Interior-shaped view of a padded array shifted by ``offset`` along ``axis``."""
    lead = fp.ndim - grid.dim
    idx = [slice(None)] * lead
    for k in range(grid.dim):
        if k == axis:
            idx.append(slice(1 + offset, fp.shape[lead + k] - 1 + offset or None))
        else:
            idx.append(slice(1, -1))
    return fp[tuple(idx)]


def _central(fp: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    denom = grid.h[axis] if _STENCIL_FAULT else 2.0 * grid.h[axis]
    return (_shift(fp, grid, axis, 1) - _shift(fp, grid, axis, -1)) / denom


def _default_parity(f: np.ndarray, grid: Grid) -> int:
    return 1 if f.ndim == grid.dim else -1


def gradient(f: np.ndarray, grid: Grid, parity: int | None = None) -> np.ndarray:
    """Append a derivative axis: ``out[..., k, cells] = d f[...] / d x_k``."""
    if parity is None:
        parity = _default_parity(f, grid)
    fp = pad(f, grid, parity)
    lead = f.ndim - grid.dim
    return np.stack([_central(fp, grid, k) for k in range(grid.dim)], axis=lead)


def grad_scalar(s: np.ndarray, grid: Grid, parity: int = 1) -> np.ndarray:
    return gradient(s, grid, parity)


def grad_vector(u: np.ndarray, grid: Grid, parity: int = -1) -> np.ndarray:
    return gradient(u, grid, parity)


def div_vector(u: np.ndarray, grid: Grid, parity: int = -1) -> np.ndarray:
    up = pad(u, grid, parity)
    out = _central(up[0], grid, 0)
    for k in range(1, grid.dim):
        out = out + _central(up[k], grid, k)
    return out


def div_matrix(M: np.ndarray, grid: Grid, parity: int = 1) -> np.ndarray:
    """Row-wise divergence; +1 parity suits the quadratic stresses built from F."""
    Mp = pad(M, grid, parity)
    out = _central(Mp[:, 0], grid, 0)
    for k in range(1, grid.dim):
        out = out + _central(Mp[:, k], grid, k)
    return out


def laplacian(f: np.ndarray, grid: Grid, parity: int | None = None) -> np.ndarray:
    """Compact ``2*dim + 1`` point Laplacian of a field of any kind."""
    if parity is None:
        parity = _default_parity(f, grid)
    fp = pad(f, grid, parity)
    centre = _shift(fp, grid, 0, 0)
    out = np.zeros_like(centre)
    for k in range(grid.dim):
        out += (_shift(fp, grid, k, 1) - 2.0 * centre + _shift(fp, grid, k, -1)) / grid.h[k] ** 2
    return out


def advect(v: np.ndarray, f: np.ndarray, grid: Grid, parity: int | None = None) -> np.ndarray:
    """``(v . grad) f`` with centred differences, for f of any kind."""
    if parity is None:
        parity = _default_parity(f, grid)
    fp = pad(f, grid, parity)
    out = v[0] * _central(fp, grid, 0)
    for k in range(1, grid.dim):
        out = out + v[k] * _central(fp, grid, k)
    return out


def stretch(F: np.ndarray, u: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise product ``F grad(u)``, i.e. ``sum_j F[i, j] du_j/dx_k``."""
    if F.shape[2:] != u.shape[1:]:
        raise ValueError("F and u live on different grids")
    return np.einsum("ij...,jk...->ik...", F, grad_vector(u, grid))


def gram(F: np.ndarray) -> np.ndarray:
    """Pointwise ``F^T F``; entry (i, j) is ``<d_i d, d_j d>`` when ``F = grad d``."""
    return np.einsum("ki...,kj...->ij...", F, F)


def elastic_stress(F: np.ndarray, grid: Grid) -> np.ndarray:
    """``+div(F^T F)``.

    With F zero on the boundary its Gram matrix has even ghost values, hence
    parity +1; this makes ``<div(F^T F), u> = -<F^T F, grad u>`` hold exactly
    for Dirichlet velocity ghosts.
    """
    return div_matrix(gram(F), grid, parity=1)


def d_to_F(d: np.ndarray, grid: Grid, parity: int = -1) -> np.ndarray:
    return grad_vector(d, grid, parity)


def curl_field(F: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise max over rows i and pairs k<l of ``|dF_ik/dx_l - dF_il/dx_k|``."""
    G = gradient(F, grid, -1)  # G[i, k, l] = d F_ik / d x_l
    out = np.zeros(grid.n)
    for k in range(grid.dim):
        for l in range(k + 1, grid.dim):
            out = np.maximum(out, np.abs(G[:, k, l] - G[:, l, k]).max(axis=0))
    return out


def curl_residual(F: np.ndarray, grid: Grid) -> float:
    """Max of :func:`curl_field`; Dirichlet grids skip the outermost cell layer,
    where the odd ghost extrapolation is not a smooth continuation of F."""
    c = curl_field(F, grid)
    if not grid.periodic:
        c = c[(slice(1, -1),) * grid.dim]
    return float(c.max()) if c.size else 0.0


def second_derivatives(f: np.ndarray, grid: Grid, parity: int | None = None) -> np.ndarray:
    """Hessian stack ``out[..., k, l]``: compact 3-point on the diagonal,
    centred-of-centred off the diagonal."""
    if parity is None:
        parity = _default_parity(f, grid)
    fp = pad(f, grid, parity)
    lead = f.ndim - grid.dim
    centre = _shift(fp, grid, 0, 0)
    g = gradient(f, grid, parity)
    rows = []
    for k in range(grid.dim):
        row = []
        for l in range(grid.dim):
            if k == l:
                row.append((_shift(fp, grid, k, 1) - 2.0 * centre + _shift(fp, grid, k, -1)) / grid.h[k] ** 2)
            else:
                gk = np.take(g, k, axis=lead)
                row.append(_central(pad(gk, grid, parity), grid, l))
        rows.append(np.stack(row, axis=lead))
    return np.stack(rows, axis=lead)


def face_differences(f: np.ndarray, grid: Grid, parity: int | None = None):
    """Yield ``(weights, diffs)`` per axis: one-sided differences across every
    cell face, with boundary faces weighted 1/2.

    ``sum_axes sum(weights * diffs**2) * cell_volume`` equals
    ``-<laplacian(f), f>`` exactly, which is what makes the discrete energy
    balance close.
    """
    if parity is None:
        parity = _default_parity(f, grid)
    fp = pad(f, grid, parity)
    lead = f.ndim - grid.dim
    for k in range(grid.dim):
        ax = lead + k
        # restrict the other axes to interior cells, keep both ghosts on axis k
        idx = [slice(None)] * lead + [slice(1, -1)] * grid.dim
        idx[ax] = slice(None)
        line = fp[tuple(idx)]
        diffs = np.diff(line, axis=ax) / grid.h[k]
        nf = diffs.shape[ax]
        w = np.ones(nf)
        if grid.periodic:
            w[0] = 0.0  # faces 0 and n coincide
        else:
            w[0] = w[-1] = 0.5
        shape = [1] * diffs.ndim
        shape[ax] = nf
        yield w.reshape(shape), diffs
