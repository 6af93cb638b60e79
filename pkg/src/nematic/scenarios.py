"""Named initial-data constructors."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable

import numpy as np

from .errors import InvalidOverride, UnknownScenario
from .grid import Boundary, Grid, State, make_grid, zero_state
from .linear import LinearSolveConfig, leray_project


@dataclass(frozen=True)
class Scenario:
    name: str
    dim: int = 2
    n: int = 32
    L: float = 1.0
    boundary: str = "dirichlet"
    amplitude: float = 1e-3
    epsilon: float = 0.0
    wavenumber: int = 1
    mu: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    t_end: float = 0.5
    dt: float = 1e-3
    snapshot_every: int = 0

    def grid(self) -> Grid:
        return make_grid(self.dim, self.n, self.L, self.boundary)

    def initial_state(self, lincfg: LinearSolveConfig = LinearSolveConfig()) -> State:
        return _CONSTRUCTORS[self.name][0](self, lincfg)

    def initial_director(self) -> np.ndarray:
        """Director field whose gradient is the initial F (small_vortex only)."""
        if self.name != "small_vortex":
            raise ValueError(f"scenario {self.name!r} has no director representation")
        d, _ = _bump_director(self, self.grid())
        return d


# 1-D factors: (value, derivative) as functions of x and box length


def _s2(k: int):
    """sin^2(k pi x / L): vanishes with its derivative at both ends."""
    def f(x, L):
        a = k * math.pi / L
        return np.sin(a * x) ** 2, a * np.sin(2 * a * x)
    return f


def _cos(k: int):
    def f(x, L):
        a = k * math.pi / L
        return np.cos(a * x), -a * np.sin(a * x)
    return f


def _sin(k: int):
    def f(x, L):
        a = k * math.pi / L
        return np.sin(a * x), a * np.cos(a * x)
    return f


def _one(x, L):
    return np.ones_like(x), np.zeros_like(x)


def _product(factors, X, Ls):
    """Value and gradient of prod_k factors[k](x_k)."""
    vals = [f(x, L) for f, x, L in zip(factors, X, Ls)]
    value = np.prod([v for v, _ in vals], axis=0)
    grad = []
    for m in range(len(vals)):
        g = vals[m][1]
        for k, (v, _) in enumerate(vals):
            if k != m:
                g = g * v
        grad.append(g)
    return value, np.stack(grad)


def _stream_velocity(psi_factors, grid: Grid, amp: float) -> np.ndarray:
    """``u = (d psi/dy, -d psi/dx, 0)`` for a product-form stream function."""
    X = grid.centers()
    _, gpsi = _product(psi_factors, X, grid.L)
    u = np.zeros((grid.dim, *grid.n))
    u[0] = amp * gpsi[1]
    u[1] = -amp * gpsi[0]
    return u


def _s2cos(x, L):
    s, ds = _s2(1)(x, L)
    c, dc = _cos(2)(x, L)
    return s * c, ds * c + s * dc


def _bump_director(sc: Scenario, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Director bump with zero value and gradient on the box faces, and its
    exact gradient.

    ``d_1 = b``, ``d_i = b cos(2 pi x_{i-1} / L) / 2`` for i > 1, where
    ``b = prod_k sin^2(pi x_k / L)``.  Smooth across the seam of a periodic
    box as well.
    """
    X = grid.centers()
    d = np.zeros((grid.dim, *grid.n))
    F = np.zeros((grid.dim, grid.dim, *grid.n))
    for i in range(grid.dim):
        factors = [_s2(1)] * grid.dim
        coef = 1.0
        if i >= 1:
            coef = 0.5
            factors[i - 1] = _s2cos
        v, g = _product(factors, X, grid.L)
        d[i] = sc.amplitude * coef * v
        F[i] = sc.amplitude * coef * g
    return d, F


def _project(u: np.ndarray, grid: Grid, lincfg: LinearSolveConfig) -> np.ndarray:
    return leray_project(u, grid, lincfg)[0]


def _zero(sc: Scenario, lincfg: LinearSolveConfig) -> State:
    return zero_state(sc.grid())


def _small_vortex(sc: Scenario, lincfg: LinearSolveConfig) -> State:
    grid = sc.grid()
    psi = [_s2(1)] * grid.dim
    # scaled so that max|u_1| of the analytic field equals `amplitude`
    u = _stream_velocity(psi, grid, sc.amplitude * grid.L[1] / math.pi)
    u = _project(u, grid, lincfg)
    _, F = _bump_director(sc, grid)
    return State(0.0, u, F, np.zeros(grid.n), grid)


def _near_identity(sc: Scenario, lincfg: LinearSolveConfig) -> State:
    grid = sc.grid()
    if not grid.periodic:
        raise InvalidOverride("near_identity requires boundary = periodic")
    k = sc.wavenumber
    X = grid.centers()
    L = grid.L
    psi = [_sin(2 * k), _sin(2 * k)] + [_one] * (grid.dim - 2)
    u = _stream_velocity(psi, grid, sc.amplitude * L[0] / (2 * k * math.pi))
    u = _project(u, grid, lincfg)
    F = np.zeros((grid.dim, grid.dim, *grid.n))
    for i in range(grid.dim):
        F[i, i] = 1.0
        factors = [_one] * grid.dim
        factors[i] = _sin(2 * k)
        factors[(i + 1) % grid.dim] = _cos(2 * k)
        _, g = _product(factors, X, L)
        F[i] += sc.epsilon * L[0] / (2 * k * math.pi) * g
    return State(0.0, u, F, np.zeros(grid.n), grid)


def _mms(sc: Scenario, lincfg: LinearSolveConfig) -> State:
    from .mms import ManufacturedSolution
    return ManufacturedSolution(sc).initial_state(lincfg)


_CONSTRUCTORS: dict[str, tuple[Callable[[Scenario, LinearSolveConfig], State], dict[str, Any]]] = {
    "zero": (_zero, dict(amplitude=0.0, t_end=0.1, dt=1e-2, n=8)),
    "small_vortex": (_small_vortex, dict(L=2.0)),
    "near_identity": (_near_identity, dict(boundary="periodic", epsilon=0.1, t_end=0.1)),
    "mms": (_mms, dict(amplitude=1.0, n=16, t_end=0.05, dt=1.0 / 1024)),
}

DESCRIPTIONS = {
    "zero": "all fields zero; exact fixed point of every integrator",
    "small_vortex": "stream-function vortex plus director bump, both flat at the walls",
    "near_identity": "periodic flow with F = I + epsilon * grad(periodic perturbation)",
    "mms": "manufactured solution with exact forcing (Dirichlet box)",
}

_FIELD_TYPES = {f.name: f.type for f in fields(Scenario)}


def scenario_names() -> list[str]:
    return list(_CONSTRUCTORS)


def _coerce(key: str, value: Any) -> Any:
    typ = _FIELD_TYPES[key]
    try:
        if typ in (int, "int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if typ in (float, "float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise InvalidOverride(f"{key}: cannot interpret {value!r}") from None


def build_scenario(name: str, overrides: dict[str, Any] | None = None) -> Scenario:
    if name not in _CONSTRUCTORS:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(_CONSTRUCTORS)}")
    params = dict(_CONSTRUCTORS[name][1])
    for key, value in (overrides or {}).items():
        if key == "name" or key not in _FIELD_TYPES:
            raise InvalidOverride(f"scenario has no parameter {key!r}")
        params[key] = _coerce(key, value)
    sc = Scenario(name=name, **params)
    _validate(sc)
    return sc


def _validate(sc: Scenario) -> None:
    checks = [
        (sc.amplitude >= 0 and math.isfinite(sc.amplitude), "amplitude must be nonnegative"),
        (sc.epsilon >= 0, "epsilon must be nonnegative"),
        (sc.wavenumber >= 1, "wavenumber must be >= 1"),
        (min(sc.mu, sc.gamma) > 0 and sc.lam >= 0, "mu, gamma must be positive, lam nonnegative"),
        (sc.dt > 0 and sc.t_end > 0, "dt and t_end must be positive"),
        (sc.snapshot_every >= 0, "snapshot_every must be nonnegative"),
        (sc.L > 0, "L must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise InvalidOverride(msg)
    try:
        Boundary.parse(sc.boundary)
        sc.grid()
    except Exception as exc:  # GridError
        raise InvalidOverride(str(exc)) from None
    if sc.name == "mms" and Boundary.parse(sc.boundary) is not Boundary.DIRICHLET:
        raise InvalidOverride("mms requires boundary = dirichlet")
    if sc.name == "near_identity" and Boundary.parse(sc.boundary) is not Boundary.PERIODIC:
        raise InvalidOverride("near_identity requires boundary = periodic")


def scenario_dict(sc: Scenario) -> dict[str, Any]:
    return asdict(sc)
