"""Manufactured solution on the Dirichlet unit square and the convergence
ladder built on it.

Exact fields (``a`` = scenario amplitude, ``s = sin(pi x) sin(pi y)``)::

    u = a e^{-t} (sin^2(pi x) sin(2 pi y), -sin(2 pi x) sin^2(pi y))
    F = a e^{-t} s [[1, 1/2], [-1/2, 1]]
    P = a e^{-t} cos(pi x) cos(pi y)

u is divergence-free and vanishes with its normal derivative on the walls, F
vanishes on the walls and P has zero normal derivative and zero mean, so all
three are compatible with the discrete boundary rules.  The forcing that makes
them exact is derived symbolically.
"""

from __future__ import annotations

import functools
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import sympy as sp

from .grid import State
from .linear import LinearSolveConfig, leray_project
from .picard import PicardConfig, advance
from .scenarios import Scenario, build_scenario

_x, _y, _t = sp.symbols("x y t", real=True)


def _exact_symbols(amp: float):
    e = sp.exp(-_t) * amp
    pi = sp.pi
    u = [e * sp.sin(pi * _x) ** 2 * sp.sin(2 * pi * _y),
         -e * sp.sin(2 * pi * _x) * sp.sin(pi * _y) ** 2]
    s = e * sp.sin(pi * _x) * sp.sin(pi * _y)
    F = [[s, s / 2], [-s / 2, s]]
    P = e * sp.cos(pi * _x) * sp.cos(pi * _y)
    return u, F, P


@functools.lru_cache(maxsize=None)
def _symbolic_forcing(amp: float, mu: float, lam: float, gamma: float):
    """Sympy expressions for the momentum and orientation sources."""
    u, F, P = _exact_symbols(amp)
    X = (_x, _y)

    def lap(f):
        return sp.diff(f, _x, 2) + sp.diff(f, _y, 2)

    gram = [[sum(F[k][i] * F[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
    fu = []
    for i in range(2):
        adv = sum(u[k] * sp.diff(u[i], X[k]) for k in range(2))
        stress = sum(sp.diff(gram[i][k], X[k]) for k in range(2))
        fu.append(sp.simplify(sp.diff(u[i], _t) + adv - mu * lap(u[i])
                              + sp.diff(P, X[i]) + lam * stress))
    fF = []
    for i in range(2):
        row = []
        for k in range(2):
            adv = sum(u[m] * sp.diff(F[i][k], X[m]) for m in range(2))
            stretch = sum(F[i][j] * sp.diff(u[j], X[k]) for j in range(2))
            row.append(sp.simplify(sp.diff(F[i][k], _t) + adv + stretch - gamma * lap(F[i][k])))
        fF.append(row)
    return fu, fF


def _lambdify(expr):
    f = sp.lambdify((_x, _y, _t), expr, "numpy")

    def ev(x, y, t):
        return np.broadcast_to(np.asarray(f(x, y, t), dtype=float), np.shape(x)).copy()
    return ev


class ManufacturedSolution:
    def __init__(self, sc: Scenario):
        if sc.dim != 2 or sc.boundary != "dirichlet" or sc.L != 1.0:
            raise ValueError("the manufactured solution lives on the Dirichlet unit square")
        self.scenario = sc
        self.grid = sc.grid()
        u, F, P = _exact_symbols(sc.amplitude)
        fu, fF = _symbolic_forcing(sc.amplitude, sc.mu, sc.lam, sc.gamma)
        self._u = [_lambdify(e) for e in u]
        self._F = [[_lambdify(e) for e in row] for row in F]
        self._P = _lambdify(P)
        self._fu = [_lambdify(e) for e in fu]
        self._fF = [[_lambdify(e) for e in row] for row in fF]

    def _eval(self, fns, t):
        X, Y = self.grid.centers()
        if callable(fns):
            return fns(X, Y, t)
        return np.stack([self._eval(f, t) for f in fns])

    def exact(self, t: float) -> State:
        P = self._eval(self._P, t)
        return State(t, self._eval(self._u, t), self._eval(self._F, t), P - P.mean(), self.grid)

    def forcing(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self._eval(self._fu, t), self._eval(self._fF, t)

    def initial_state(self, lincfg: LinearSolveConfig = LinearSolveConfig()) -> State:
        """Exact data at t = 0 with the velocity made discretely divergence-free."""
        s = self.exact(0.0)
        return s.replace(u=leray_project(s.u, self.grid, lincfg)[0])

    def errors(self, state: State) -> dict[str, float]:
        ex = self.exact(state.t)
        vol = self.grid.cell_volume

        def l2(a):
            return float(np.sqrt(np.sum(a ** 2) * vol))
        return {"u": l2(state.u - ex.u), "F": l2(state.F - ex.F), "P": l2(state.P - ex.P)}


@dataclass
class ConvergenceLevel:
    n: int
    h: float
    dt: float
    err_u: float
    err_F: float
    err_P: float
    seconds: float


@dataclass
class ConvergenceStudy:
    levels: list[ConvergenceLevel]

    def orders(self, field: str = "u") -> list[float]:
        e = [getattr(lv, "err_" + field) for lv in self.levels]
        h = [lv.h for lv in self.levels]
        return [float(np.log(e[i] / e[i + 1]) / np.log(h[i] / h[i + 1]))
                for i in range(len(e) - 1)]

    def table(self) -> str:
        lines = [f"{'n':>5} {'dt':>11} {'err_u':>11} {'err_F':>11} {'err_P':>11} {'order_u':>8}"]
        ou = [float("nan")] + self.orders("u")
        for lv, o in zip(self.levels, ou):
            lines.append(f"{lv.n:>5} {lv.dt:>11.4e} {lv.err_u:>11.4e} {lv.err_F:>11.4e} "
                         f"{lv.err_P:>11.4e} {o:>8.3f}")
        return "\n".join(lines)


# short horizon keeps the finest level (64^2, dt = h^2/4) cheap
LADDER_T_END = 1.0 / 64


def run_mms(sc: Scenario, lincfg: LinearSolveConfig = LinearSolveConfig(),
            picard: PicardConfig | None = None) -> tuple[State, dict[str, float]]:
    ms = ManufacturedSolution(sc)
    cfg = picard or PicardConfig(dt=sc.dt, mu=sc.mu, lam=sc.lam, gamma=sc.gamma)
    final = advance(ms.initial_state(lincfg), sc.t_end, cfg, lincfg, forcing=ms.forcing)
    return final, ms.errors(final)


def convergence_ladder(levels: int = 3, n0: int = 16, t_end: float = LADDER_T_END,
                       dt_factor: float = 0.25, overrides: dict | None = None,
                       lincfg: LinearSolveConfig = LinearSolveConfig()) -> ConvergenceStudy:
    """Refine ``n = n0 * 2^k`` with ``dt = dt_factor * h^2`` (so the
    first-order time error tracks the second-order space error)."""
    if levels < 2:
        raise ValueError("need at least two levels")
    out = []
    for k in range(levels):
        n = n0 * 2 ** k
        h = 1.0 / n
        dt = dt_factor * h * h
        sc = build_scenario("mms", {**(overrides or {}), "n": n, "dt": dt, "t_end": t_end})
        t0 = time.perf_counter()
        _, err = run_mms(sc, lincfg)
        out.append(ConvergenceLevel(n, h, dt, err["u"], err["F"], err["P"],
                                    time.perf_counter() - t0))
    return ConvergenceStudy(out)


def orders_within(study: ConvergenceStudy, lo: float, hi: float, field: str = "u") -> bool:
    return all(lo <= o <= hi for o in study.orders(field))


__all__: Sequence[str] = ("ManufacturedSolution", "ConvergenceLevel", "ConvergenceStudy",
                          "convergence_ladder", "run_mms", "orders_within", "LADDER_T_END")
