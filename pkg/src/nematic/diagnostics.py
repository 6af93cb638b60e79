"""Scalar functionals of states and of diagnostic time series.

Energy bookkeeping uses ``E = int |u|^2 + lam |F|^2`` and the matching
dissipation rate ``D = 2 int (mu |grad u|^2 + lam gamma |grad F|^2)``, so a
smooth solution satisfies ``E(t) + int_0^t D = E(0)``.  The gradients in ``D``
are one-sided face differences (see :func:`nematic.operators.face_differences`),
which makes the balance exact for the implicit diffusion operators.

Sobolev-type quantities are computable proxies:

* ``B(f)   = ||f||_q + ||grad f||_q``                 (trace-space stand-in)
* ``W(f)   = ||f||_q + ||grad f||_q + ||D^2 f||_q``   (``W^{2,q}`` stand-in)
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import operators as ops
from .errors import EmptySeries, MismatchedSeries
from .grid import Grid, State


# --------------------------------------------------------------------------- #
# pointwise magnitudes and norms


def pointwise_magnitude(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Euclidean/Frobenius magnitude over the component axes of ``f``."""
    lead = f.ndim - grid.dim
    if lead == 0:
        return np.abs(f)
    return np.sqrt(np.sum(f * f, axis=tuple(range(lead))))


def norm_Lq(f: np.ndarray, grid: Grid, q: float = 2.0) -> float:
    if q == math.inf or q == "inf":
        m = pointwise_magnitude(f, grid)
        return float(m.max()) if m.size else 0.0
    q = float(q)
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    m = pointwise_magnitude(f, grid)
    return float((np.sum(m ** q) * grid.cell_volume) ** (1.0 / q))


def _parity(f: np.ndarray, grid: Grid, parity: int | None) -> int:
    if parity is not None:
        return parity
    return 1 if f.ndim == grid.dim else -1


def norm_B_proxy(f: np.ndarray, grid: Grid, q: float = 2.0, parity: int | None = None) -> float:
    p = _parity(f, grid, parity)
    return norm_Lq(f, grid, q) + norm_Lq(ops.gradient(f, grid, p), grid, q)


def norm_W2q_proxy(f: np.ndarray, grid: Grid, q: float = 2.0, parity: int | None = None) -> float:
    p = _parity(f, grid, parity)
    return (norm_Lq(f, grid, q) + norm_Lq(ops.gradient(f, grid, p), grid, q)
            + norm_Lq(ops.second_derivatives(f, grid, p), grid, q))


def regularity_ratio(u: np.ndarray, grid: Grid, q: float = 2.0) -> float:
    """``W(u) / ||Lap_h u||_q`` for a wall-vanishing field: reported only,
    its supremum over fields is not asserted."""
    num = norm_W2q_proxy(u, grid, q, -1)
    den = norm_Lq(ops.laplacian(u, grid, -1), grid, q)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


# --------------------------------------------------------------------------- #
# energy and dissipation


def energy(state: State, lam: float = 1.0) -> float:
    g = state.grid
    return float((np.sum(state.u ** 2) + lam * np.sum(state.F ** 2)) * g.cell_volume)


def dirichlet_form(f: np.ndarray, grid: Grid, parity: int | None = None) -> float:
    """``int |grad f|^2`` with face differences; equals ``-<Lap f, f>``."""
    total = 0.0
    for w, d in ops.face_differences(f, grid, parity):
        total += float(np.sum(w * d * d))
    return total * grid.cell_volume


def dissipation(state: State, mu: float = 1.0, lam: float = 1.0, gamma: float = 1.0) -> float:
    g = state.grid
    return 2.0 * (mu * dirichlet_form(state.u, g) + lam * gamma * dirichlet_form(state.F, g))


# --------------------------------------------------------------------------- #
# records


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    dissipation: float
    div_residual: float
    pressure_mean: float
    picard_iters: int
    picard_ratio: float
    norm_u_Lq: float
    norm_F_Lq: float
    norm_u_W2q: float
    norm_F_W2q: float
    H_value: float
    curl_residual_F: float
    norm_u_B: float = 0.0
    norm_F_B: float = 0.0
    norm_P_W1q: float = 0.0
    norm_dudt_Lq: float = 0.0
    norm_dFdt_Lq: float = 0.0
    grad_u_inf: float = 0.0
    grad_F_inf: float = 0.0
    F_inf: float = 0.0

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def records_to_csv(records: Sequence[DiagnosticsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = DiagnosticsRecord.field_names()
    w.writerow(names)
    for r in records:
        d = asdict(r)
        w.writerow([_fmt(d[k]) for k in names])
    return buf.getvalue()


def records_from_csv(text: str) -> list[DiagnosticsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    types = {f.name: f.type for f in fields(DiagnosticsRecord)}
    out = []
    for row in body:
        kw = {k: (int(v) if types[k] in (int, "int") else float(v)) for k, v in zip(header, row)}
        out.append(DiagnosticsRecord(**kw))
    return out


class DiagnosticsSink:
    """Builds one :class:`DiagnosticsRecord` per emitted state.

    Time derivatives in the H functional come from differencing consecutive
    emitted snapshots, so H depends on the emission cadence.
    """

    def __init__(self, mu: float = 1.0, lam: float = 1.0, gamma: float = 1.0,
                 p: float = 2.0, q: float = 6.0, keep_states: bool = False):
        self.mu, self.lam, self.gamma, self.p, self.q = mu, lam, gamma, p, q
        self.keep_states = keep_states
        self.records: list[DiagnosticsRecord] = []
        self.states: list[State] = []
        self._prev: State | None = None

    def emit(self, state: State, picard_iters: int = 0, picard_ratio: float = 0.0) -> DiagnosticsRecord:
        g, q = state.grid, self.q
        prev = self._prev
        if prev is not None and not state.t > prev.t:
            raise ValueError("records must have strictly increasing time")
        if prev is None:
            dudt = dFdt = 0.0
        else:
            dt = state.t - prev.t
            dudt = norm_Lq((state.u - prev.u) / dt, g, q)
            dFdt = norm_Lq((state.F - prev.F) / dt, g, q)
        gu = ops.grad_vector(state.u, g)
        gF = ops.gradient(state.F, g, -1)
        rec = DiagnosticsRecord(
            t=state.t,
            energy=energy(state, self.lam),
            dissipation=dissipation(state, self.mu, self.lam, self.gamma),
            div_residual=float(np.abs(ops.div_vector(state.u, g)).max()),
            pressure_mean=float(state.P.mean()),
            picard_iters=int(picard_iters),
            picard_ratio=float(picard_ratio),
            norm_u_Lq=norm_Lq(state.u, g, q),
            norm_F_Lq=norm_Lq(state.F, g, q),
            norm_u_W2q=norm_W2q_proxy(state.u, g, q),
            norm_F_W2q=norm_W2q_proxy(state.F, g, q),
            H_value=0.0,
            curl_residual_F=ops.curl_residual(state.F, g),
            norm_u_B=norm_Lq(state.u, g, q) + norm_Lq(gu, g, q),
            norm_F_B=norm_Lq(state.F, g, q) + norm_Lq(gF, g, q),
            norm_P_W1q=norm_Lq(state.P, g, q) + norm_Lq(ops.grad_scalar(state.P, g), g, q),
            norm_dudt_Lq=dudt,
            norm_dFdt_Lq=dFdt,
            grad_u_inf=norm_Lq(gu, g, math.inf),
            grad_F_inf=norm_Lq(gF, g, math.inf),
            F_inf=norm_Lq(state.F, g, math.inf),
        )
        self.records.append(rec)
        rec.H_value = H_functional(self.records, self.p)
        self._prev = state
        if self.keep_states:
            self.states.append(state)
        return rec


# --------------------------------------------------------------------------- #
# functionals over series


def _require(series: Sequence) -> None:
    if len(series) == 0:
        raise EmptySeries("empty diagnostics series")


def _time_steps(series: Sequence[DiagnosticsRecord]) -> np.ndarray:
    t = np.array([r.t for r in series])
    return np.diff(t)


def _lp_time(values: np.ndarray, dts: np.ndarray, p: float) -> float:
    """Right-endpoint ``(sum dt |v|^p)^(1/p)`` over records 1..N."""
    if values.size == 0:
        return 0.0
    return float(np.sum(dts * np.abs(values) ** p) ** (1.0 / p))


def H_functional(series: Sequence[DiagnosticsRecord], p: float = 2.0) -> float:
    """Composite existence functional over the span of ``series``:
    ``L^p``-in-time of ``W(u), ||du/dt||_q, ||P||_{W^{1,q}}, W(F), ||dF/dt||_q``
    plus the suprema of ``B(u)`` and ``B(F)``."""
    _require(series)
    dts = _time_steps(series)
    tail = series[1:]

    def col(name):
        return np.array([getattr(r, name) for r in tail])

    return (_lp_time(col("norm_u_W2q"), dts, p)
            + _lp_time(col("norm_dudt_Lq"), dts, p)
            + max(r.norm_u_B for r in series)
            + _lp_time(col("norm_P_W1q"), dts, p)
            + max(r.norm_F_B for r in series)
            + _lp_time(col("norm_F_W2q"), dts, p)
            + _lp_time(col("norm_dFdt_Lq"), dts, p))


def G_series(series: Sequence[DiagnosticsRecord], C_env: float = 1.0) -> np.ndarray:
    """Growth rate ``||grad u||_inf + ||grad F||_inf + C ||F||_inf^2`` per record."""
    return np.array([r.grad_u_inf + r.grad_F_inf + C_env * r.F_inf ** 2 for r in series])


def integrability_check(series: Sequence[DiagnosticsRecord], C_env: float = 1.0) -> float:
    """Trapezoidal time integral of G over the series."""
    _require(series)
    G = G_series(series, C_env)
    if len(series) == 1:
        return 0.0
    return float(np.sum(0.5 * (G[1:] + G[:-1]) * _time_steps(series)))


@dataclass
class EnergyReport:
    times: np.ndarray
    margins: np.ndarray
    worst: float
    tol: float
    passed: bool


def energy_margins(series: Sequence[DiagnosticsRecord]) -> tuple[np.ndarray, np.ndarray]:
    """``m(t) = E(0) - E(t) - sum dt D`` with D evaluated at the step end
    (the backward-Euler pairing)."""
    _require(series)
    t = np.array([r.t for r in series])
    E = np.array([r.energy for r in series])
    D = np.array([r.dissipation for r in series])
    acc = np.concatenate([[0.0], np.cumsum(np.diff(t) * D[1:])])
    return t, E[0] - E - acc


def energy_inequality_check(series: Sequence[DiagnosticsRecord], tol_E: float) -> EnergyReport:
    t, m = energy_margins(series)
    worst = float(m.min())
    return EnergyReport(t, m, worst, tol_E, worst >= -tol_E)


def energy_identity_defect(series: Sequence[DiagnosticsRecord]) -> np.ndarray:
    """``|E(t) + sum dt D - E(0)|`` at every record."""
    return np.abs(energy_margins(series)[1])


# --------------------------------------------------------------------------- #
# weak-strong comparison


@dataclass
class GronwallEnvelope:
    times: np.ndarray
    G_values: np.ndarray
    envelope: np.ndarray


def gronwall_envelope(series: Sequence[DiagnosticsRecord], X0: float, C_env: float = 1.0) -> GronwallEnvelope:
    _require(series)
    t = np.array([r.t for r in series])
    G = G_series(series, C_env)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (G[1:] + G[:-1]) * np.diff(t))])
    return GronwallEnvelope(t, G, X0 * np.exp(integral))


# Calibrated once and frozen: the largest X / ((dt + h^2)^2 E0) seen over the
# bundled scenarios (small_vortex at 16^2 and 32^2, dt 1e-3 and 5e-4, amplitudes
# 1e-3 and 1e-1; near_identity) was 9.3e-4.  Roughly ten times that.
DEFECT_CONSTANT = 1e-2


@dataclass
class GronwallReport:
    times: np.ndarray
    X: np.ndarray
    diff_dissipation: np.ndarray
    bound: np.ndarray
    max_X: float
    first_violation: float | None
    passed: bool


def difference_energy(s: State, w: State) -> float:
    g = s.grid
    return 0.5 * float((np.sum((s.u - w.u) ** 2) + np.sum((s.F - w.F) ** 2)) * g.cell_volume)


def gronwall_compare(strong: Sequence[DiagnosticsRecord], weak: Sequence[DiagnosticsRecord],
                     states_s: Sequence[State], states_w: Sequence[State], C_env: float = 1.0,
                     A: float = DEFECT_CONSTANT, rtol_time: float = 1e-12) -> GronwallReport:
    """Compare two trajectories against the Grönwall envelope driven by the
    strong trajectory's growth rate.

    ``X(t) = 1/2 ||u_s - u_w||^2 + 1/2 ||F_s - F_w||^2``.  The bound is
    ``(X(0) + A (dt + h^2)^2 E(0)) exp(int_0^t G)``: the homogeneous envelope
    plus a consistency defect between the two discretisations.
    """
    _require(strong)
    _require(weak)
    if len(strong) != len(weak) or len(states_s) != len(strong) or len(states_w) != len(weak):
        raise MismatchedSeries("series and state lists must have equal length")
    ts = np.array([r.t for r in strong])
    tw = np.array([r.t for r in weak])
    if not np.allclose(ts, tw, rtol=rtol_time, atol=rtol_time):
        raise MismatchedSeries("time stamps differ between the two series")
    g = states_s[0].grid
    X = np.array([difference_energy(s, w) for s, w in zip(states_s, states_w)])
    dd = np.array([0.5 * (dirichlet_form(s.u - w.u, g) + dirichlet_form(s.F - w.F, g))
                   for s, w in zip(states_s, states_w)])
    acc = np.concatenate([[0.0], np.cumsum(np.diff(ts) * dd[1:])])
    env = gronwall_envelope(strong, 1.0, C_env).envelope
    dt = float(np.diff(ts).max()) if len(ts) > 1 else 0.0
    h2 = max(g.h) ** 2
    E0 = strong[0].energy
    bound = (X[0] + A * (dt + h2) ** 2 * E0) * env
    bad = np.nonzero(X > bound)[0]
    first = float(ts[bad[0]]) if bad.size else None
    return GronwallReport(ts, X, acc, bound, float(X.max()), first, bad.size == 0)


def summarize_series(series: Iterable[DiagnosticsRecord]) -> dict:
    series = list(series)
    _require(series)
    return {
        "final_time": series[-1].t,
        "max_div_residual": max(r.div_residual for r in series),
        "H_end": series[-1].H_value,
        "picard_iters_total": int(sum(r.picard_iters for r in series)),
        "picard_iters_max": int(max(r.picard_iters for r in series)),
    }
