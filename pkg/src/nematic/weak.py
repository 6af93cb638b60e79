"""Reference integrator for the weak-solution side of the comparison.

A deliberately different discretisation of the same system: the nonlinear
terms are explicit (evaluated at the old state), diffusion is implicit, and
the pressure is carried by a single incremental projection per step.  It
shares only the spatial operators and linear sub-solvers with the Picard
integrator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import operators as ops
from .diagnostics import DiagnosticsSink, energy_inequality_check  # noqa: F401  (re-export)
from .errors import CflViolated
from .grid import State
from .linear import LinearSolveConfig, heat_step, helmholtz_solve, leray_project, stokes_step
from .picard import _steps_between, momentum_source, orientation_source


@dataclass(frozen=True)
class WeakConfig:
    dt: float
    mu: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    cfl_safety: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if min(self.mu, self.lam, self.gamma) < 0:
            raise ValueError("coefficients must be nonnegative")


def cfl_ratio(u: np.ndarray, dt: float, grid) -> float:
    umax = float(np.sqrt((u ** 2).sum(axis=0)).max()) if u.size else 0.0
    return umax * dt / float(min(grid.h))


def weak_step(state: State, cfg: WeakConfig,
              lincfg: LinearSolveConfig = LinearSolveConfig()) -> State:
    """One explicit-nonlinear, implicit-diffusion step.

    Raises :class:`CflViolated` if ``max|u| dt / h`` exceeds ``cfg.cfl_safety``.
    With ``mu = 0`` (or ``gamma = 0``) the corresponding diffusion is skipped,
    leaving explicit transport.
    """
    g, dt = state.grid, cfg.dt
    ratio = cfl_ratio(state.u, dt, g)
    if ratio > cfg.cfl_safety:
        raise CflViolated(ratio, cfg.cfl_safety)
    f = momentum_source(state.u, state.F, g, cfg.lam)
    gF = orientation_source(state.u, state.F, g)
    if cfg.mu > 0:
        u, P, _ = stokes_step(state.u, f, dt, cfg.mu, g, lincfg, p_old=state.P, x0=state.u)
    else:
        u_star = state.u + dt * (f - ops.grad_scalar(state.P, g))
        u, phi, _ = leray_project(u_star, g, lincfg, dt=dt)
        P = state.P + phi
        P = P - P.mean()
    if cfg.gamma > 0:
        F, _ = heat_step(state.F, gF, dt, cfg.gamma, g, lincfg, x0=state.F)
    else:
        F, _ = helmholtz_solve(state.F + dt * gF, 0.0, g, lincfg)
    return State(state.t + dt, u, F, P, g)


def weak_advance(state: State, t_end: float, cfg: WeakConfig,
                 lincfg: LinearSolveConfig = LinearSolveConfig(),
                 sink: DiagnosticsSink | None = None,
                 on_step: Callable[[State], None] | None = None) -> State:
    """Repeat :func:`weak_step` until ``t_end``, emitting a record per step."""
    if not t_end > state.t:
        raise ValueError("t_end must exceed the current time")
    nsteps = _steps_between(state.t, t_end, cfg.dt)
    if sink is not None and not sink.records:
        sink.emit(state)
    t0 = state.t
    for k in range(1, nsteps + 1):
        state = weak_step(state, cfg, lincfg).replace(t=t0 + k * cfg.dt)
        if sink is not None:
            sink.emit(state)
        if on_step is not None:
            on_step(state)
    return state
