"""Cell-centred box grids and the field containers evolved by the solvers.

Fields are plain numpy arrays whose trailing ``dim`` axes are the spatial
cell indices (x slowest).  The leading axes carry the components:

* scalar field:  ``(*n)``
* vector field:  ``(dim, *n)``
* matrix field:  ``(dim, dim, *n)``  with ``F[i, k] = d d_i / d x_k``

Boundary handling is done through a single ghost layer.  In Dirichlet mode a
ghost value is ``parity * interior``: ``parity = -1`` puts a zero trace on the
cell face (velocity, F, director), ``parity = +1`` gives a zero normal
derivative (pressure and other stress-like quantities).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import GridError

MIN_CELLS = 4


class Boundary(str, enum.Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "Boundary | str") -> "Boundary":
        if isinstance(value, Boundary):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise GridError(f"unknown boundary mode {value!r}") from None


@dataclass(frozen=True)
class Grid:
    dim: int
    n: tuple[int, ...]
    L: tuple[float, ...]
    boundary: Boundary

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(Li / ni for Li, ni in zip(self.L, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.L))

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def ncells(self) -> int:
        return int(np.prod(self.n))

    def centers(self) -> list[np.ndarray]:
        """Cell-centre coordinate arrays, one per axis, broadcast to ``n``."""
        axes = [(np.arange(ni) + 0.5) * hi for ni, hi in zip(self.n, self.h)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def kind(self, f: np.ndarray) -> str:
        """Classify an array as ``scalar``, ``vector`` or ``matrix`` on this grid."""
        ncomp = f.ndim - self.dim
        if tuple(f.shape[ncomp:]) != self.n:
            raise GridError(f"array of shape {f.shape} does not live on grid {self.n}")
        if ncomp == 0:
            return "scalar"
        if ncomp == 1 and f.shape[0] == self.dim:
            return "vector"
        if ncomp == 2 and f.shape[:2] == (self.dim, self.dim):
            return "matrix"
        raise GridError(f"array of shape {f.shape} is not a scalar/vector/matrix field")


def make_grid(dim: int, n: Sequence[int] | int, L: Sequence[float] | float = 1.0,
              boundary: Boundary | str = Boundary.DIRICHLET) -> Grid:
    """Build a validated :class:`Grid`; scalars for ``n``/``L`` apply to all axes."""
    if dim not in (2, 3):
        raise GridError(f"dim must be 2 or 3, got {dim}")
    n_t = tuple(int(v) for v in (n if np.iterable(n) else [n] * dim))
    L_t = tuple(float(v) for v in (L if np.iterable(L) else [L] * dim))
    if len(n_t) != dim or len(L_t) != dim:
        raise GridError("n and L must have one entry per axis")
    if any(v < MIN_CELLS for v in n_t):
        raise GridError(f"every axis needs at least {MIN_CELLS} cells, got {n_t}")
    if any(not np.isfinite(v) or v <= 0 for v in L_t):
        raise GridError(f"box lengths must be positive, got {L_t}")
    return Grid(dim, n_t, L_t, Boundary.parse(boundary))


@dataclass(frozen=True)
class State:
    """Velocity, orientation-gradient matrix and pressure at one instant."""

    t: float
    u: np.ndarray
    F: np.ndarray
    P: np.ndarray
    grid: Grid = field(compare=False)

    def replace(self, **kw) -> "State":
        return replace(self, **kw)

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.F.copy(), self.P.copy(), self.grid)


def zero_state(grid: Grid, t: float = 0.0) -> State:
    d, n = grid.dim, grid.n
    return State(t, np.zeros((d, *n)), np.zeros((d, d, *n)), np.zeros(n), grid)


def _axis_slices(ndim: int, axis: int, sl: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _fill_ghosts(out: np.ndarray, grid: Grid, parity: int) -> None:
    lead = out.ndim - grid.dim
    for k in range(grid.dim):
        ax = lead + k
        lo_g, lo_i = _axis_slices(out.ndim, ax, slice(0, 1)), _axis_slices(out.ndim, ax, slice(1, 2))
        hi_g, hi_i = _axis_slices(out.ndim, ax, slice(-1, None)), _axis_slices(out.ndim, ax, slice(-2, -1))
        if grid.periodic:
            out[lo_g] = out[hi_i]
            out[hi_g] = out[lo_i]
        else:
            out[lo_g] = parity * out[lo_i]
            out[hi_g] = parity * out[hi_i]


def enforce_boundary(fp: np.ndarray, grid: Grid, parity: int = -1) -> np.ndarray:
    """Return a copy of the ghost-padded array ``fp`` with its ghost layer refilled.

    Ghosts are filled axis by axis so that corner cells receive the product of
    the per-axis rules.  The operation is idempotent.
    """
    out = np.array(fp, dtype=float, copy=True)
    _fill_ghosts(out, grid, parity)
    return out


def pad(f: np.ndarray, grid: Grid, parity: int = -1) -> np.ndarray:
    """Embed an interior field in a one-cell ghost layer and apply boundary rules."""
    lead = f.ndim - grid.dim
    fp = np.empty(f.shape[:lead] + tuple(m + 2 for m in f.shape[lead:]))
    fp[(slice(None),) * lead + (slice(1, -1),) * grid.dim] = f
    _fill_ghosts(fp, grid, parity)
    return fp


def interior(fp: np.ndarray, grid: Grid) -> np.ndarray:
    lead = fp.ndim - grid.dim
    return fp[(slice(None),) * lead + (slice(1, -1),) * grid.dim]
