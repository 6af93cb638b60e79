import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nematic import operators as ops
from nematic.diagnostics import (DiagnosticsRecord, DiagnosticsSink, H_functional, dirichlet_form,
                                 dissipation, energy, energy_identity_defect, energy_inequality_check,
                                 energy_margins,
                                 gronwall_compare, gronwall_envelope, integrability_check, norm_B_proxy,
                                 norm_Lq, norm_W2q_proxy, records_from_csv, records_to_csv,
                                 regularity_ratio, summarize_series)
from nematic.errors import EmptySeries, MismatchedSeries
from nematic.grid import State, make_grid, zero_state


def _rec(t, E=0.0, D=0.0, **kw):
    base = dict(t=t, energy=E, dissipation=D, div_residual=0.0, pressure_mean=0.0, picard_iters=0,
                picard_ratio=0.0, norm_u_Lq=0.0, norm_F_Lq=0.0, norm_u_W2q=0.0, norm_F_W2q=0.0,
                H_value=0.0, curl_residual_F=0.0)
    base.update(kw)
    return DiagnosticsRecord(**base)


def _sine_state(g, amp=1.0):
    X, Y = g.centers()
    u = amp * np.stack([np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y),
                        -np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y)])
    F = amp * np.stack([np.stack([np.cos(2 * np.pi * X), np.zeros_like(X)]),
                        np.stack([np.zeros_like(X), np.sin(2 * np.pi * Y)])])
    return State(0.0, u, F, np.zeros(g.n), g)


# --------------------------------------------------------------------------- norms


def test_norms_of_zero_and_constant():
    g = make_grid(2, 8, 2.0, "periodic")
    z = np.zeros((2, 8, 8))
    assert norm_Lq(z, g) == 0 and norm_B_proxy(z, g) == 0 and norm_W2q_proxy(z, g) == 0
    c = np.full((8, 8), 3.0)
    # |box| = 4, so ||3||_2 = 3 * 2 and ||3||_inf = 3
    assert norm_Lq(c, g) == pytest.approx(6.0)
    assert norm_Lq(c, g, math.inf) == 3.0
    assert norm_W2q_proxy(c, g) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        norm_Lq(c, g, 0.5)


def test_norm_spot_values():
    g = make_grid(2, 8, 1.0, "periodic")
    assert norm_Lq(np.full((8, 8), 2.0), g, 2) == pytest.approx(2.0)
    spike = np.zeros((8, 8))
    spike[3, 4] = -5.0
    assert norm_Lq(spike, g, math.inf) == 5.0


def test_W2q_sine_limit():
    target = (1 + 2 * np.pi + 4 * np.pi ** 2) / np.sqrt(2)
    errs = []
    for n in (32, 64):
        g = make_grid(2, n, 1.0, "periodic")
        X, _ = g.centers()
        errs.append(abs(norm_W2q_proxy(np.sin(2 * np.pi * X), g) - target))
    assert errs[1] < 1e-2 * target
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-50),
       st.sampled_from([1.0, 2.0, 6.0, math.inf]))
def test_norm_homogeneity_and_triangle(seed, c, q):
    g = make_grid(2, 6, 1.0, "periodic")
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((2, 6, 6)), r.standard_normal((2, 6, 6))
    assert norm_Lq(c * a, g, q) == pytest.approx(abs(c) * norm_Lq(a, g, q), rel=1e-12, abs=1e-300)
    assert norm_Lq(a + b, g, q) <= norm_Lq(a, g, q) + norm_Lq(b, g, q) + 1e-12
    assert norm_W2q_proxy(a + b, g, q) <= norm_W2q_proxy(a, g, q) + norm_W2q_proxy(b, g, q) + 1e-9


def test_regularity_ratio_is_reported(rng):
    g = make_grid(2, 16)
    assert regularity_ratio(np.zeros((2, 16, 16)), g) == 0.0
    u = rng.standard_normal((2, 16, 16))
    r = regularity_ratio(u, g)
    assert 0 < r < math.inf
    assert regularity_ratio(3.0 * u, g) == pytest.approx(r)


# --------------------------------------------------------------------------- energy / dissipation


def test_energy_of_constant_and_zero():
    g = make_grid(2, 8, 1.0, "periodic")
    s = zero_state(g)
    assert energy(s) == 0 and dissipation(s) == 0
    c = State(0.0, np.full((2, 8, 8), 0.5), np.ones((2, 2, 8, 8)), np.zeros(g.n), g)
    assert energy(c) == pytest.approx(2 * 0.25 + 4.0)
    assert energy(c, lam=0.0) == pytest.approx(0.5)
    assert dissipation(c) == 0.0


@pytest.mark.parametrize("bc", ["periodic", "dirichlet"])
def test_dirichlet_form_matches_laplacian_pairing(bc, rng):
    g = make_grid(2, (8, 10), (1.0, 1.3), bc)
    f = rng.standard_normal((2, 8, 10))
    lhs = dirichlet_form(f, g, -1)
    rhs = -float(np.sum(ops.laplacian(f, g, -1) * f)) * g.cell_volume
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert lhs >= 0


def test_dissipation_scales_with_coefficients():
    g = make_grid(2, 16, 1.0, "periodic")
    s = _sine_state(g)
    base = dissipation(s, 1.0, 1.0, 1.0)
    assert dissipation(s, 2.0, 1.0, 1.0) + dissipation(s, 0.0, 1.0, 1.0) == pytest.approx(
        base + dissipation(s, 1.0, 1.0, 1.0) - dissipation(s, 0.0, 1.0, 1.0) + dissipation(s, 0.0, 1.0, 1.0))
    assert dissipation(s, 0.0, 0.0, 1.0) == 0.0


# --------------------------------------------------------------------------- sink and H


def test_sink_emits_records_and_rejects_time_reversal():
    g = make_grid(2, 16, 1.0, "periodic")
    sink = DiagnosticsSink(keep_states=True)
    s = _sine_state(g)
    r0 = sink.emit(s)
    assert r0.norm_dudt_Lq == 0 and r0.energy == pytest.approx(energy(s))
    r1 = sink.emit(s.replace(t=0.1, u=0.5 * s.u))
    assert r1.norm_dudt_Lq > 0 and len(sink.states) == 2
    assert r1.curl_residual_F == pytest.approx(ops.curl_residual(s.F, g))
    with pytest.raises(ValueError):
        sink.emit(s.replace(t=0.1))


def test_H_nondecreasing_along_series():
    g = make_grid(2, 16, 1.0, "periodic")
    sink = DiagnosticsSink()
    s = _sine_state(g)
    for k in range(6):
        sink.emit(s.replace(t=0.1 * k, u=s.u * (1 + 0.1 * k), F=s.F * (1 - 0.05 * k)))
    H = [r.H_value for r in sink.records]
    assert all(b >= a for a, b in zip(H, H[1:]))
    assert H[-1] == pytest.approx(H_functional(sink.records))


def test_H_of_zero_trajectory_is_zero():
    g = make_grid(2, 8)
    sink = DiagnosticsSink()
    for k in range(3):
        sink.emit(zero_state(g).replace(t=0.1 * k))
    assert sink.records[-1].H_value == 0.0


def test_integrability_and_envelope():
    recs = [_rec(0.1 * k, grad_u_inf=1.0, grad_F_inf=0.0, F_inf=1.0) for k in range(11)]
    assert integrability_check(recs, C_env=1.0) == pytest.approx(2.0)
    env = gronwall_envelope(recs, 0.5, C_env=1.0)
    assert env.envelope[0] == 0.5
    assert env.envelope[-1] == pytest.approx(0.5 * math.exp(2.0))
    assert integrability_check(recs[:1]) == 0.0


def test_integrability_shrinks_with_amplitude():
    from nematic.picard import PicardConfig, advance
    from nematic.scenarios import build_scenario
    vals = []
    for amp in (0.1, 0.01):
        sc = build_scenario("small_vortex", {"n": 8, "amplitude": amp})
        sink = DiagnosticsSink()
        advance(sc.initial_state(), 5e-3, PicardConfig(dt=1e-3), sink=sink)
        vals.append(integrability_check(sink.records))
    assert 0 < vals[1] < vals[0]


# --------------------------------------------------------------------------- energy checks


def test_exact_balance_has_zero_margin():
    recs = [_rec(0.0, 1.0, 0.5)] + [_rec(0.1 * k, 1.0 - 0.05 * k, 0.5) for k in range(1, 5)]
    rep = energy_inequality_check(recs, 1e-12)
    assert rep.passed and np.allclose(rep.margins, 0, atol=1e-15)
    assert np.allclose(energy_identity_defect(recs), 0, atol=1e-15)


def test_energy_increase_is_flagged():
    recs = [_rec(0.0, 1.0, 0.0), _rec(0.1, 1.0, 0.0), _rec(0.2, 1.1, 0.0)]
    rep = energy_inequality_check(recs, 1e-3)
    assert not rep.passed and rep.worst == pytest.approx(-0.1)


def test_corrupted_weak_series_fails(bench):
    recs = bench.weak(1e-3).records
    E0 = recs[0].energy
    tol = 1e-6 * E0
    assert energy_inequality_check(recs, tol).passed
    k = len(recs) // 2
    slack = energy_margins(recs)[1][k]
    bad = list(recs)
    bad[k] = replace(recs[k], energy=recs[k].energy + slack + 10 * tol)
    assert not energy_inequality_check(bad, tol).passed


def test_empty_series_raises():
    with pytest.raises(EmptySeries):
        energy_inequality_check([], 1.0)
    with pytest.raises(EmptySeries):
        H_functional([])
    with pytest.raises(EmptySeries):
        summarize_series([])


# --------------------------------------------------------------------------- weak-strong comparison


def test_gronwall_self_comparison_is_zero(bench):
    s = bench.strong(1e-3)
    rep = gronwall_compare(s.records, s.records, s.states, s.states)
    assert not np.any(rep.X) and rep.passed and rep.first_violation is None


def test_gronwall_mismatched_series():
    g = make_grid(2, 8)
    z = zero_state(g)
    a = [_rec(0.0), _rec(0.1)]
    with pytest.raises(MismatchedSeries):
        gronwall_compare(a, a[:1], [z, z], [z])
    with pytest.raises(MismatchedSeries):
        gronwall_compare(a, [_rec(0.0), _rec(0.2)], [z, z], [z, z])


def test_gronwall_flags_mid_run_fault(bench):
    s, w = bench.strong(1e-3), bench.weak(1e-3)
    k = len(w.states) // 2
    bump = 1e-3 * np.abs(s.states[0].u).max()
    faulty = w.states[:k] + [st.replace(u=st.u + bump) for st in w.states[k:]]
    rep = gronwall_compare(s.records, w.records, s.states, faulty)
    assert not rep.passed
    assert rep.first_violation == pytest.approx(w.records[k].t)


def test_gronwall_flags_large_perturbation():
    g = make_grid(2, 16, 1.0, "periodic")
    s = _sine_state(g, 1e-3)
    states_s = [s, s.replace(t=0.1)]
    states_w = [s, s.replace(t=0.1, u=s.u + 1e-2)]
    recs = [_rec(0.0, energy(s)), _rec(0.1, energy(s))]
    rep = gronwall_compare(recs, recs, states_s, states_w)
    assert not rep.passed and rep.first_violation == pytest.approx(0.1)


# --------------------------------------------------------------------------- CSV


def test_csv_round_trip_is_exact():
    g = make_grid(2, 16, 1.0, "periodic")
    sink = DiagnosticsSink()
    s = _sine_state(g)
    sink.emit(s, picard_iters=3, picard_ratio=1.0 / 3.0)
    sink.emit(s.replace(t=1e-3, u=s.u * math.pi), picard_iters=4)
    text = records_to_csv(sink.records)
    assert text.splitlines()[0].split(",") == DiagnosticsRecord.field_names()
    back = records_from_csv(text)
    assert back == sink.records
    assert records_to_csv(back) == text
    assert isinstance(back[0].picard_iters, int)


def test_summary_fields():
    recs = [_rec(0.0, picard_iters=0), _rec(0.1, picard_iters=3, div_residual=1e-9, H_value=2.0)]
    s = summarize_series(recs)
    assert s == {"final_time": 0.1, "max_div_residual": 1e-9, "H_end": 2.0,
                 "picard_iters_total": 3, "picard_iters_max": 3}
