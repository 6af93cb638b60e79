"""Strong-solution integrator: Picard iteration of the linearised system over
time windows.

Iterate ``n`` is a whole trajectory on the window (one state per inner time
step).  Iterate ``n + 1`` solves the linear Stokes and heat problems with the
nonlinear terms frozen at iterate ``n``::

    Stokes:  rhs = -u^n . grad u^n - lam div(F^n^T F^n)
    heat:    rhs = -u^n . grad F^n - F^n grad u^n

The first iterate holds the window's initial fields constant in time.  A
converged iteration is the fully implicit backward-Euler solution of the
nonlinear system.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import operators as ops
from .diagnostics import DiagnosticsSink, norm_B_proxy, norm_Lq, norm_W2q_proxy
from .errors import PicardDiverged
from .grid import Grid, State
from .linear import LinearSolveConfig, heat_step, stokes_solve

log = logging.getLogger(__name__)

# forcing(t) -> (f_u, f_F) added to the Stokes and heat right-hand sides
Forcing = Callable[[float], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class PicardConfig:
    dt: float
    window: float | None = None
    tol_fixed_point: float = 1e-10
    max_picard: int = 50
    mu: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    p: float = 2.0
    q: float = 6.0
    diverge_after: int = 3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.window is not None and self.window < self.dt * (1 - 1e-12):
            raise ValueError("window must be at least dt")
        if not self.tol_fixed_point > 0:
            raise ValueError("tol_fixed_point must be positive")
        if self.max_picard < 1:
            raise ValueError("max_picard must be >= 1")

    @property
    def steps_per_window(self) -> int:
        if self.window is None:
            return 1
        k = self.window / self.dt
        kr = round(k)
        if abs(k - kr) > 1e-9 * max(1.0, k):
            raise ValueError("window must be an integer multiple of dt")
        return max(1, int(kr))


@dataclass
class PicardTrace:
    deltas: list[float] = field(default_factory=list)
    scales: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.deltas)

    @property
    def ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.deltas, self.deltas[1:]) if a > 0]

    def mean_ratio(self, floor: float = 0.0) -> float:
        """Geometric mean of the successive-delta ratios.

        Deltas at or below ``floor`` (relative to the iterate scale) are
        treated as round-off and excluded.
        """
        d = [x for x, s in zip(self.deltas, self.scales) if x > floor * s]
        r = [b / a for a, b in zip(d, d[1:]) if a > 0 and b > 0]
        if not r:
            return 0.0
        return float(np.exp(np.mean(np.log(r))))


def window_metric(du: Sequence[np.ndarray], dF: Sequence[np.ndarray], dt: float,
                  grid: Grid, p: float, q: float) -> float:
    """Discrete stand-in for the iterate-difference norm.

    ``max_j (B(du_j) + B(dF_j))`` plus the ``L^p``-in-time norms of
    ``W(du_j)``, ``W(dF_j)`` and of the time differences of ``du``, ``dF``.
    ``du[0]``/``dF[0]`` are the window-start values.
    """
    sup = 0.0
    acc_wu = acc_wF = acc_tu = acc_tF = 0.0
    for j in range(1, len(du)):
        sup = max(sup, norm_B_proxy(du[j], grid, q) + norm_B_proxy(dF[j], grid, q))
        acc_wu += dt * norm_W2q_proxy(du[j], grid, q) ** p
        acc_wF += dt * norm_W2q_proxy(dF[j], grid, q) ** p
        acc_tu += dt * norm_Lq((du[j] - du[j - 1]) / dt, grid, q) ** p
        acc_tF += dt * norm_Lq((dF[j] - dF[j - 1]) / dt, grid, q) ** p
    return sup + sum(a ** (1.0 / p) for a in (acc_wu, acc_wF, acc_tu, acc_tF))


def momentum_source(u: np.ndarray, F: np.ndarray, grid: Grid, lam: float) -> np.ndarray:
    return -ops.advect(u, u, grid) - lam * ops.elastic_stress(F, grid)


def orientation_source(u: np.ndarray, F: np.ndarray, grid: Grid) -> np.ndarray:
    return -ops.advect(u, F, grid) - ops.stretch(F, u, grid)


def _linear_sweep(initial: State, us, Fs, Ps, cfg: PicardConfig, lincfg: LinearSolveConfig,
                  forcing: Forcing | None):
    """Solve the frozen-coefficient linear problems over the whole window."""
    g = initial.grid
    dt = cfg.dt
    u_prev, F_prev = initial.u, initial.F
    new_u, new_F, new_P = [initial.u], [initial.F], [initial.P]
    for j in range(1, len(us)):
        f = momentum_source(us[j], Fs[j], g, cfg.lam)
        gF = orientation_source(us[j], Fs[j], g)
        if forcing is not None:
            fu, fF = forcing(initial.t + j * dt)
            f, gF = f + fu, gF + fF
        u, P, _ = stokes_solve(u_prev, f, dt, cfg.mu, g, lincfg, p0=Ps[j], x0=us[j])
        F, _ = heat_step(F_prev, gF, dt, cfg.gamma, g, lincfg, x0=Fs[j])
        new_u.append(u)
        new_F.append(F)
        new_P.append(P)
        u_prev, F_prev = u, F
    return new_u, new_F, new_P


def picard_iterate_window(initial: State, cfg: PicardConfig,
                          lincfg: LinearSolveConfig = LinearSolveConfig(),
                          forcing: Forcing | None = None) -> tuple[State, PicardTrace]:
    """Advance ``initial`` across one window by Picard iteration.

    Returns the window-end state and the trace of successive-iterate
    differences.  ``trace.converged`` is False if ``max_picard`` was reached.

    Raises
    ------
    PicardDiverged
        if the differences grow ``cfg.diverge_after`` times in a row or become
        non-finite.
    """
    g = initial.grid
    k = cfg.steps_per_window
    us = [initial.u] * (k + 1)
    Fs = [initial.F] * (k + 1)
    Ps = [initial.P] * (k + 1)
    zero_u, zero_F = np.zeros_like(initial.u), np.zeros_like(initial.F)
    trace = PicardTrace()
    increases = 0
    for _ in range(cfg.max_picard):
        nu, nF, nP = _linear_sweep(initial, us, Fs, Ps, cfg, lincfg, forcing)
        du = [zero_u] + [a - b for a, b in zip(nu[1:], us[1:])]
        dF = [zero_F] + [a - b for a, b in zip(nF[1:], Fs[1:])]
        delta = window_metric(du, dF, cfg.dt, g, cfg.p, cfg.q)
        scale = window_metric([initial.u] + nu[1:], [initial.F] + nF[1:], cfg.dt, g, cfg.p, cfg.q)
        us, Fs, Ps = nu, nF, nP
        trace.deltas.append(delta)
        trace.scales.append(scale)
        if not (math.isfinite(delta) and math.isfinite(scale)):
            raise PicardDiverged("non-finite Picard iterate", initial.t, trace)
        if delta <= cfg.tol_fixed_point * scale:
            trace.converged = True
            break
        if len(trace.deltas) > 1 and delta > trace.deltas[-2]:
            increases += 1
            if increases >= cfg.diverge_after:
                raise PicardDiverged(
                    f"Picard differences grew {increases} times in a row", initial.t, trace)
        else:
            increases = 0
    t_end = initial.t + k * cfg.dt
    return State(t_end, us[-1], Fs[-1], Ps[-1], g), trace


def _steps_between(t0: float, t1: float, dt: float) -> int:
    n = (t1 - t0) / dt
    nr = round(n)
    if abs(n - nr) > 1e-6:
        raise ValueError(f"t_end - t = {t1 - t0} is not a multiple of dt = {dt}")
    return int(nr)


def advance(state: State, t_end: float, cfg: PicardConfig,
            lincfg: LinearSolveConfig = LinearSolveConfig(), sink: DiagnosticsSink | None = None,
            forcing: Forcing | None = None, on_window: Callable[[State], None] | None = None,
            ) -> State:
    """Apply :func:`picard_iterate_window` until ``t_end``, emitting one
    diagnostics record per window (plus one for the initial state if the
    sink is empty)."""
    if not t_end > state.t:
        raise ValueError("t_end must exceed the current time")
    nsteps = _steps_between(state.t, t_end, cfg.dt)
    k = cfg.steps_per_window
    if sink is not None and not sink.records:
        sink.emit(state)
    t0, done = state.t, 0
    while done < nsteps:
        kk = min(k, nsteps - done)
        wcfg = cfg if kk == k else replace(cfg, window=kk * cfg.dt)
        new, trace = picard_iterate_window(state, wcfg, lincfg, forcing)
        if not trace.converged:
            raise PicardDiverged(f"no convergence within {cfg.max_picard} iterations",
                                 state.t, trace)
        done += kk
        # pin the clock to the step count so long runs do not drift
        state = new.replace(t=t0 + done * cfg.dt)
        if sink is not None:
            sink.emit(state, trace.iterations, trace.mean_ratio(noise_floor(lincfg)))
        if on_window is not None:
            on_window(state)
    return state


@dataclass
class ContractionStudy:
    windows: list[float]
    ratios: list[float]
    traces: list[PicardTrace]
    slope: float
    residual: float


def noise_floor(lincfg: LinearSolveConfig) -> float:
    """Relative Picard delta below which linear-solver error dominates."""
    return 1e3 * lincfg.tol


def contraction_study(initial: State, windows: Sequence[float], cfg: PicardConfig,
                      lincfg: LinearSolveConfig = LinearSolveConfig(),
                      floor: float | None = None) -> ContractionStudy:
    """One Picard window per requested length; reports the geometric-mean
    contraction ratio per window and the least-squares slope of
    ``log(ratio)`` against ``log(window)``.

    Deltas at or below ``floor`` times the iterate scale (default
    :func:`noise_floor`) are excluded from the mean as round-off dominated.
    """
    windows = list(windows)
    if any(b <= a for a, b in zip(windows, windows[1:])):
        raise ValueError("windows must be strictly increasing")
    ratios, traces = [], []
    for T in windows:
        _, trace = picard_iterate_window(initial, replace(cfg, window=T), lincfg)
        traces.append(trace)
        ratios.append(trace.mean_ratio(noise_floor(lincfg) if floor is None else floor))
    slope = residual = float("nan")
    ok = [(T, r) for T, r in zip(windows, ratios) if r > 0]
    if len(ok) >= 2:
        x = np.log([T for T, _ in ok])
        y = np.log([r for _, r in ok])
        A = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = float(coef[0])
        residual = float(np.sqrt(res[0] / len(ok))) if res.size else 0.0
    return ContractionStudy(windows, ratios, traces, slope, residual)


def trajectory(state: State, t_end: float, cfg: PicardConfig,
               lincfg: LinearSolveConfig = LinearSolveConfig()) -> list[State]:
    out = [state]
    advance(state, t_end, cfg, lincfg, on_window=out.append)
    return out


def l2_distance(a: State, b: State) -> float:
    g = a.grid
    return float(np.sqrt((np.sum((a.u - b.u) ** 2) + np.sum((a.F - b.F) ** 2)) * g.cell_volume))


def uniqueness_regression(s1: State, s2: State, cfg: PicardConfig,
                          lincfg: LinearSolveConfig, t_end: float) -> float:
    """Max over stored times of the L2 distance between the trajectories
    started from ``s1`` and ``s2``."""
    if s1.grid != s2.grid:
        raise ValueError("states live on different grids")
    traj1 = trajectory(s1, t_end, cfg, lincfg)
    traj2 = trajectory(s2, t_end, cfg, lincfg)
    return max(l2_distance(a, b) for a, b in zip(traj1, traj2))


# --------------------------------------------------------------------------- #
# director formulation


@dataclass(frozen=True)
class DirectorState:
    t: float
    u: np.ndarray
    d: np.ndarray
    P: np.ndarray
    grid: Grid


def director_step(state: DirectorState, cfg: PicardConfig,
                  lincfg: LinearSolveConfig = LinearSolveConfig()) -> tuple[DirectorState, PicardTrace]:
    """One fully implicit step of the original (u, d) system with f(d) = 0.

    Same Picard structure as :func:`picard_iterate_window` with window = dt,
    but the orientation unknown is the director: ``d_t + u . grad d =
    gamma Lap d`` and the stress is built from ``F = grad d``.
    """
    g = state.grid
    u_it, d_it, P_it = state.u, state.d, state.P
    trace = PicardTrace()
    zero = np.zeros_like(state.u)
    for _ in range(cfg.max_picard):
        F_it = ops.d_to_F(d_it, g)
        f = momentum_source(u_it, F_it, g, cfg.lam)
        u, P, _ = stokes_solve(state.u, f, cfg.dt, cfg.mu, g, lincfg, p0=P_it, x0=u_it)
        d, _ = heat_step(state.d, -ops.advect(u_it, d_it, g), cfg.dt, cfg.gamma, g, lincfg, x0=d_it)
        delta = window_metric([zero, u - u_it], [zero, d - d_it], cfg.dt, g, cfg.p, cfg.q)
        scale = window_metric([state.u, u], [state.d, d], cfg.dt, g, cfg.p, cfg.q)
        u_it, d_it, P_it = u, d, P
        trace.deltas.append(delta)
        trace.scales.append(scale)
        if not math.isfinite(delta):
            raise PicardDiverged("non-finite Picard iterate", state.t, trace)
        if delta <= cfg.tol_fixed_point * scale:
            trace.converged = True
            break
    if not trace.converged:
        raise PicardDiverged("director step did not converge", state.t, trace)
    return DirectorState(state.t + cfg.dt, u_it, d_it, P_it, g), trace


@dataclass
class FormulationGap:
    times: list[float]
    errors: list[float]
    curl: list[float]

    @property
    def max_error(self) -> float:
        return max(self.errors)

    @property
    def curl_growth(self) -> float:
        """Largest curl residual over the run relative to the initial one."""
        c0 = self.curl[0]
        return max(self.curl) / c0 if c0 > 0 else (0.0 if max(self.curl) == 0 else math.inf)


def formulation_gap(initial: State, d0: np.ndarray, t_end: float, cfg: PicardConfig,
                    lincfg: LinearSolveConfig = LinearSolveConfig()) -> FormulationGap:
    """Run the (u, F) and (u, d) formulations side by side from matching data
    and record the max-norm gap between ``d_to_F(d)`` and ``F``, together with
    the curl residual of the evolved F."""
    g = initial.grid
    nsteps = _steps_between(initial.t, t_end, cfg.dt)
    s = initial
    ds = DirectorState(initial.t, initial.u, d0, initial.P, g)
    one = replace(cfg, window=None)

    def gap():
        return float(np.abs(ops.d_to_F(ds.d, g) - s.F).max())

    out = FormulationGap([s.t], [gap()], [ops.curl_residual(s.F, g)])
    for k in range(1, nsteps + 1):
        s, _ = picard_iterate_window(s, one, lincfg)
        ds, _ = director_step(ds, one, lincfg)
        out.times.append(initial.t + k * cfg.dt)
        out.errors.append(gap())
        out.curl.append(ops.curl_residual(s.F, g))
    return out
