"""Property suites behind ``nematic verify``.

Each suite returns a list of :class:`Check` rows (name, measured value,
bound, pass/fail).  Expensive trajectories are shared between suites through
a :class:`Workbench`, so ``all`` computes each run once.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import operators as ops
from . import oracles
from .diagnostics import (DEFECT_CONSTANT, DiagnosticsSink, energy_identity_defect,
                          energy_inequality_check, gronwall_compare)
from .errors import PicardDiverged
from .grid import Grid, make_grid, zero_state
from .linear import LinearSolveConfig
from .picard import (PicardConfig, advance, contraction_study, formulation_gap,
                     picard_iterate_window)
from .scenarios import build_scenario
from .weak import WeakConfig, weak_advance


@dataclass
class Check:
    name: str
    value: float
    bound: float
    op: str  # "<=" or ">="
    passed: bool

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<48} {self.value:>12.4e} {self.op} {self.bound:<12.4e}"


def le(name: str, value: float, bound: float) -> Check:
    return Check(name, float(value), float(bound), "<=", bool(value <= bound))


def ge(name: str, value: float, bound: float) -> Check:
    return Check(name, float(value), float(bound), ">=", bool(value >= bound))


# --------------------------------------------------------------------------- #
# operators


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max() / max(1.0, float(np.abs(b).max())))


def operator_pairs(grid: Grid) -> dict[str, Callable[[np.random.Generator], float]]:
    """Implementation-versus-oracle comparisons on one random input each."""
    d, n = grid.dim, grid.n

    def rnd(rng, *lead):
        return rng.standard_normal((*lead, *n))

    return {
        "gradient(scalar)": lambda r: (lambda s: _rel_err(
            ops.grad_scalar(s, grid), oracles.gradient(s, grid, 1)))(rnd(r)),
        "gradient(vector)": lambda r: (lambda u: _rel_err(
            ops.grad_vector(u, grid), oracles.gradient(u, grid, -1)))(rnd(r, d)),
        "gradient(matrix)": lambda r: (lambda F: _rel_err(
            ops.gradient(F, grid), oracles.gradient(F, grid, -1)))(rnd(r, d, d)),
        "div(vector)": lambda r: (lambda u: _rel_err(
            ops.div_vector(u, grid), oracles.div_vector(u, grid, -1)))(rnd(r, d)),
        "div(matrix)": lambda r: (lambda M: _rel_err(
            ops.div_matrix(M, grid), oracles.div_matrix(M, grid, 1)))(rnd(r, d, d)),
        "laplacian(scalar)": lambda r: (lambda s: _rel_err(
            ops.laplacian(s, grid), oracles.laplacian(s, grid, 1)))(rnd(r)),
        "laplacian(vector)": lambda r: (lambda u: _rel_err(
            ops.laplacian(u, grid), oracles.laplacian(u, grid, -1)))(rnd(r, d)),
        "laplacian(matrix)": lambda r: (lambda F: _rel_err(
            ops.laplacian(F, grid), oracles.laplacian(F, grid, -1)))(rnd(r, d, d)),
        "advect(vector)": lambda r: (lambda v, u: _rel_err(
            ops.advect(v, u, grid), oracles.advect(v, u, grid, -1)))(rnd(r, d), rnd(r, d)),
        "advect(matrix)": lambda r: (lambda v, F: _rel_err(
            ops.advect(v, F, grid), oracles.advect(v, F, grid, -1)))(rnd(r, d), rnd(r, d, d)),
        "stretch": lambda r: (lambda F, u: _rel_err(
            ops.stretch(F, u, grid), oracles.stretch(F, u, grid)))(rnd(r, d, d), rnd(r, d)),
        "gram": lambda r: (lambda F: _rel_err(ops.gram(F), oracles.gram(F, d)))(rnd(r, d, d)),
        "elastic_stress": lambda r: (lambda F: _rel_err(
            ops.elastic_stress(F, grid), oracles.elastic_stress(F, grid)))(rnd(r, d, d)),
        "d_to_F": lambda r: (lambda v: _rel_err(
            ops.d_to_F(v, grid), oracles.gradient(v, grid, -1)))(rnd(r, d)),
        "second_derivatives": lambda r: (lambda s: _rel_err(
            ops.second_derivatives(s, grid), oracles.second_derivatives(s, grid, 1)))(rnd(r)),
        "curl_field": lambda r: (lambda F: _rel_err(
            ops.curl_field(F, grid), oracles.curl_field(F, grid)))(rnd(r, d, d)),
    }


def operator_oracle_errors(grid: Grid, samples: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst relative error (max-norm, scaled by ``max(1, |oracle|)``) per
    operator over ``samples`` random fields."""
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    pairs = operator_pairs(grid)
    for _ in range(samples):
        for name, fn in pairs.items():
            worst[name] = max(worst.get(name, 0.0), fn(rng))
    return worst


OPERATOR_TOL = 1e-12
OPERATOR_GRIDS = ((2, 16, "periodic"), (3, 8, "periodic"), (2, 16, "dirichlet"))


def suite_operators(bench: "Workbench | None" = None, samples: int = 100) -> list[Check]:
    checks = []
    for dim, n, bc in OPERATOR_GRIDS:
        g = make_grid(dim, n, 1.0, bc)
        errs = operator_oracle_errors(g, samples)
        worst = max(errs, key=errs.get)
        checks.append(le(f"operators vs oracle, {n}^{dim} {bc} [{worst}]", errs[worst],
                         OPERATOR_TOL))
    return checks


# --------------------------------------------------------------------------- #
# shared trajectories


class Workbench:
    """Lazily computed, cached runs on the bundled small_vortex scenario."""

    T_END = 0.5
    DT = 1e-3

    def __init__(self, lincfg: LinearSolveConfig = LinearSolveConfig()):
        self.lincfg = lincfg

    @functools.lru_cache(maxsize=None)
    def scenario(self, dt: float):
        return build_scenario("small_vortex", {"dt": dt, "t_end": self.T_END})

    @functools.lru_cache(maxsize=None)
    def strong(self, dt: float) -> DiagnosticsSink:
        sc = self.scenario(dt)
        sink = DiagnosticsSink(sc.mu, sc.lam, sc.gamma, keep_states=True)
        advance(sc.initial_state(self.lincfg), sc.t_end, PicardConfig(dt=dt), self.lincfg, sink)
        return sink

    @functools.lru_cache(maxsize=None)
    def weak(self, dt: float) -> DiagnosticsSink:
        sc = self.scenario(dt)
        sink = DiagnosticsSink(sc.mu, sc.lam, sc.gamma, keep_states=True)
        weak_advance(sc.initial_state(self.lincfg), sc.t_end, WeakConfig(dt=dt), self.lincfg, sink)
        return sink

    def energy_tol(self, dt: float) -> float:
        sc = self.scenario(dt)
        h = max(sc.grid().h)
        return 5.0 * (dt + h * h) * self.strong(dt).records[0].energy


# --------------------------------------------------------------------------- #
# energy


def suite_energy(bench: Workbench | None = None) -> list[Check]:
    bench = bench or Workbench()
    dt = bench.DT
    s1, s2 = bench.strong(dt), bench.strong(dt / 2)
    d1 = energy_identity_defect(s1.records)
    d2 = energy_identity_defect(s2.records)
    E = np.array([r.energy for r in s1.records])
    H = [r.H_value for r in s1.records]
    mid = next(i for i, r in enumerate(s1.records) if r.t >= bench.T_END / 2 - 1e-12)
    weak = energy_inequality_check(bench.weak(dt).records, bench.energy_tol(dt))
    return [
        le("energy identity defect (picard, dt)", d1.max(), bench.energy_tol(dt)),
        ge("identity defect shrink on dt/2", d1.max() / max(d2.max(), 1e-300), 1.8),
        le("energy increase between records (picard)", max(0.0, float(np.diff(E).max())), 0.0),
        le("H(t_end) / H(t_end / 2)", H[-1] / H[mid], 1.05),
        ge("weak energy margin (worst)", weak.worst, -weak.tol),
    ]


# --------------------------------------------------------------------------- #
# picard


def newton_agreement(amplitude: float, dt: float, steps: int,
                     lincfg: LinearSolveConfig = LinearSolveConfig()) -> float:
    """Max-norm gap between a converged Picard window and repeated Newton
    steps on the monolithic system (small_vortex on 8^2)."""
    sc = build_scenario("small_vortex", {"n": 8, "L": 1.0, "amplitude": amplitude})
    s0 = sc.initial_state(lincfg)
    st, trace = picard_iterate_window(s0, PicardConfig(dt=dt, window=steps * dt), lincfg)
    if not trace.converged:
        return math.inf
    ref = s0
    for _ in range(steps):
        ref = oracles.newton_step(ref, dt)
    return max(float(np.abs(st.u - ref.u).max()), float(np.abs(st.F - ref.F).max()))


def zero_fixed_point() -> bool:
    g = make_grid(2, 8)
    z = zero_state(g)
    st, trace = picard_iterate_window(z, PicardConfig(dt=1e-3))
    return (trace.iterations == 1 and trace.deltas == [0.0] and not np.any(st.u)
            and not np.any(st.F) and not np.any(st.P))


CONTRACTION_WINDOWS = (1e-3, 2e-3, 4e-3)


def contraction_checks(lincfg: LinearSolveConfig = LinearSolveConfig()) -> list[Check]:
    sc = build_scenario("small_vortex")
    study = contraction_study(sc.initial_state(lincfg), CONTRACTION_WINDOWS,
                              PicardConfig(dt=1e-3), lincfg)
    rs = study.ratios
    inc = min(b / a if a > 0 else 0.0 for a, b in zip(rs, rs[1:]))
    worst_growth = 0.0
    for tr in study.traces:
        d = tr.deltas[1:]
        worst_growth = max([worst_growth] + [b / a if a > 0 else (math.inf if b > 0 else 0.0)
                                             for a, b in zip(d, d[1:])])
    return [
        ge("contraction ratio growth across windows (min)", inc, 1.0 + 1e-9),
        le("Picard delta growth after iteration 1 (max)", worst_growth, 1.0),
    ]


def formulation_checks(lincfg: LinearSolveConfig = LinearSolveConfig(),
                       amplitude: float = 0.5, t_end: float = 0.0625) -> list[Check]:
    errs, curl = [], 0.0
    for n in (16, 32):
        h = 2.0 / n
        dt = h * h / 8
        sc = build_scenario("small_vortex", {"n": n, "boundary": "periodic",
                                              "amplitude": amplitude, "dt": dt})
        gap = formulation_gap(sc.initial_state(lincfg), sc.initial_director(), t_end,
                              PicardConfig(dt=dt), lincfg)
        errs.append(gap.max_error)
        curl = max(curl, gap.curl_growth)
    ratio = errs[0] / errs[1]
    return [
        ge("formulation gap ratio h -> h/2 (low)", ratio, 3.0),
        le("formulation gap ratio h -> h/2 (high)", ratio, 5.0),
        le("curl residual growth over run", curl, 10.0),
    ]


def large_amplitude_outcome(lincfg: LinearSolveConfig = LinearSolveConfig()) -> tuple[str, bool]:
    """Amplitude 10 on 8^2: either completes with finite fields or raises
    PicardDiverged carrying a finite time and a nonempty trace."""
    sc = build_scenario("small_vortex", {"n": 8, "amplitude": 10.0, "dt": 1e-2, "t_end": 0.1})
    s0 = sc.initial_state(lincfg)
    try:
        final = advance(s0, sc.t_end, PicardConfig(dt=sc.dt), lincfg)
    except PicardDiverged as exc:
        ok = (math.isfinite(exc.t) and exc.trace is not None and exc.trace.iterations > 0)
        return "diverged", ok
    ok = all(np.all(np.isfinite(a)) for a in (final.u, final.F, final.P))
    return "completed", ok


def suite_picard(bench: Workbench | None = None) -> list[Check]:
    lincfg = bench.lincfg if bench else LinearSolveConfig()
    outcome, ok = large_amplitude_outcome(lincfg)
    return [
        le("Picard vs Newton, amplitude 1e-3 (8^2)", newton_agreement(1e-3, 1e-3, 1, lincfg), 1e-8),
        le("Picard vs Newton, amplitude 1 (8^2, 2 steps)", newton_agreement(1.0, 1e-2, 2, lincfg), 1e-8),
        le("zero state bitwise fixed point (0 = yes)", 0.0 if zero_fixed_point() else 1.0, 0.0),
        *contraction_checks(lincfg),
        *formulation_checks(lincfg),
        le(f"amplitude 10 run {outcome} cleanly (0 = yes)", 0.0 if ok else 1.0, 0.0),
    ]


# --------------------------------------------------------------------------- #
# weak-strong


def suite_weakstrong(bench: Workbench | None = None) -> list[Check]:
    bench = bench or Workbench()
    dt = bench.DT
    reps = []
    for k in (dt, dt / 2):
        s, w = bench.strong(k), bench.weak(k)
        reps.append(gronwall_compare(s.records, w.records, s.states, w.states, 1.0, DEFECT_CONSTANT))
    s = bench.strong(dt)
    self_rep = gronwall_compare(s.records, s.records, s.states, s.states)
    worst = float(np.max(reps[0].X / reps[0].bound))
    return [
        le("X / envelope (worst over t <= 0.5)", worst, 1.0),
        ge("max X reduction on dt/2", reps[0].max_X / max(reps[1].max_X, 1e-300), 3.0),
        le("X for strong vs itself", float(np.abs(self_rep.X).max()), 0.0),
    ]


SUITES: dict[str, Callable[..., list[Check]]] = {
    "operators": suite_operators,
    "energy": suite_energy,
    "picard": suite_picard,
    "weakstrong": suite_weakstrong,
}
SUITE_ORDER = ("operators", "energy", "picard", "weakstrong")


def run_suite(name: str, bench: Workbench | None = None,
              echo: Callable[[str], None] | None = print) -> list[Check]:
    """Run ``name`` (or every suite, in :data:`SUITE_ORDER`, for ``all``)."""
    if name == "all":
        names = SUITE_ORDER
    elif name in SUITES:
        names = (name,)
    else:
        raise KeyError(f"unknown suite {name!r}; known: {', '.join(SUITE_ORDER)}, all")
    bench = bench or Workbench()
    out = []
    for n in names:
        for c in SUITES[n](bench):
            out.append(c)
            if echo is not None:
                echo(c.line())
    return out
