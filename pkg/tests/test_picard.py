from dataclasses import replace

import numpy as np
import pytest

from nematic import operators as ops
from nematic.diagnostics import DiagnosticsSink
from nematic.errors import PicardDiverged
from nematic.grid import make_grid, zero_state
from nematic.linear import LinearSolveConfig
from nematic.picard import (PicardConfig, PicardTrace, _linear_sweep, advance, contraction_study,
                            formulation_gap, l2_distance, noise_floor, picard_iterate_window,
                            trajectory, uniqueness_regression, window_metric)
from nematic.scenarios import build_scenario


@pytest.fixture(scope="module")
def vortex():
    return build_scenario("small_vortex", {"n": 8, "amplitude": 0.5}).initial_state()


def test_config_validation():
    for kw in (dict(dt=0.0), dict(dt=1e-3, window=5e-4), dict(dt=1e-3, tol_fixed_point=0.0),
               dict(dt=1e-3, max_picard=0)):
        with pytest.raises(ValueError):
            PicardConfig(**kw)
    assert PicardConfig(dt=1e-3, window=4e-3).steps_per_window == 4
    assert PicardConfig(dt=1e-3).steps_per_window == 1
    with pytest.raises(ValueError):
        PicardConfig(dt=1e-3, window=2.5e-3).steps_per_window


def test_trace_mean_ratio():
    tr = PicardTrace(deltas=[1.0, 0.1, 0.01, 1e-20], scales=[1.0] * 4)
    assert tr.ratios == pytest.approx([0.1, 0.1, 1e-18])
    assert tr.mean_ratio(floor=1e-12) == pytest.approx(0.1)
    assert PicardTrace().mean_ratio() == 0.0
    assert noise_floor(LinearSolveConfig(tol=1e-12)) == pytest.approx(1e-9)


@pytest.mark.parametrize("grid", [make_grid(2, 8), make_grid(3, 4, 1.0, "periodic")])
def test_zero_state_is_bitwise_fixed_point(grid):
    z = zero_state(grid)
    s, trace = picard_iterate_window(z, PicardConfig(dt=1e-3, window=2e-3))
    assert trace.converged and trace.iterations == 1
    assert s.u.tobytes() == z.u.tobytes() and s.F.tobytes() == z.F.tobytes()
    assert s.P.tobytes() == z.P.tobytes() and s.t == pytest.approx(2e-3)


def test_window_converges_with_decreasing_deltas(vortex):
    s, trace = picard_iterate_window(vortex, PicardConfig(dt=1e-3, window=4e-3))
    assert trace.converged
    assert trace.deltas[-1] <= 1e-10 * trace.scales[-1]
    assert all(b < a for a, b in zip(trace.deltas, trace.deltas[1:]))
    assert np.abs(ops.div_vector(s.u, s.grid)).max() < 1e-8
    assert abs(s.P.mean()) < 1e-12 * max(1.0, np.abs(s.P).max())


def test_converged_window_is_a_fixed_point(vortex):
    cfg = PicardConfig(dt=1e-3)
    lin = LinearSolveConfig()
    s, trace = picard_iterate_window(vortex, cfg, lin)
    assert trace.converged
    nu, nF, _ = _linear_sweep(vortex, [vortex.u, s.u], [vortex.F, s.F], [vortex.P, s.P], cfg, lin, None)
    g = vortex.grid
    zu, zF = np.zeros_like(s.u), np.zeros_like(s.F)
    delta = window_metric([zu, nu[1] - s.u], [zF, nF[1] - s.F], cfg.dt, g, cfg.p, cfg.q)
    scale = window_metric([vortex.u, s.u], [vortex.F, s.F], cfg.dt, g, cfg.p, cfg.q)
    assert delta <= 10 * cfg.tol_fixed_point * scale


def test_zero_state_advances_to_zero():
    z = zero_state(make_grid(2, 8))
    end = advance(z, 5e-3, PicardConfig(dt=1e-3))
    assert not np.any(end.u) and not np.any(end.F) and not np.any(end.P)


def test_window_length_does_not_change_the_fixed_point(vortex):
    cfg = PicardConfig(dt=1e-3)
    whole, _ = picard_iterate_window(vortex, replace(cfg, window=2e-3))
    step = vortex
    for _ in range(2):
        step, _ = picard_iterate_window(step, cfg)
    assert np.abs(whole.u - step.u).max() < 1e-9
    assert np.abs(whole.F - step.F).max() < 1e-9


def test_divergence_is_reported_with_trace():
    sc = build_scenario("small_vortex", {"n": 8, "amplitude": 50.0})
    with pytest.raises(PicardDiverged) as exc:
        picard_iterate_window(sc.initial_state(), PicardConfig(dt=5e-2))
    assert exc.value.t == 0.0
    assert exc.value.trace.iterations >= 3


def test_iteration_cap_is_divergence(vortex):
    with pytest.raises(PicardDiverged):
        advance(vortex, 2e-3, PicardConfig(dt=1e-3, max_picard=1))


def test_advance_emits_one_record_per_window(vortex):
    sink = DiagnosticsSink()
    cfg = PicardConfig(dt=1e-3, window=2e-3)
    end = advance(vortex, 5e-3, cfg, sink=sink)
    t = [r.t for r in sink.records]
    assert t == pytest.approx([0.0, 2e-3, 4e-3, 5e-3])
    assert end.t == pytest.approx(5e-3)
    assert all(r.picard_iters >= 1 for r in sink.records[1:])
    with pytest.raises(ValueError):
        advance(vortex, 0.0, cfg)
    with pytest.raises(ValueError):
        advance(vortex, 1.5e-3, cfg)


def test_uniqueness_regression(vortex):
    cfg = PicardConfig(dt=1e-3)
    lin = LinearSolveConfig()
    assert uniqueness_regression(vortex, vortex, cfg, lin, 3e-3) == 0.0
    eps = 1e-6
    bumpF = eps * np.cos(np.arange(vortex.F.size)).reshape(vortex.F.shape)
    bumpu = eps * vortex.u / np.abs(vortex.u).max()
    for pert in (vortex.replace(F=vortex.F + bumpF), vortex.replace(u=vortex.u + bumpu)):
        d0 = l2_distance(vortex, pert)
        dist = uniqueness_regression(vortex, pert, cfg, lin, 3e-3)
        # continuous dependence: K = dist / d0 stays order one on a short horizon
        assert d0 <= dist <= 2 * d0
    with pytest.raises(ValueError):
        uniqueness_regression(vortex, zero_state(make_grid(2, 4)), cfg, lin, 3e-3)


def test_trajectory_length(vortex):
    tr = trajectory(vortex, 3e-3, PicardConfig(dt=1e-3))
    assert len(tr) == 4 and tr[0] is vortex


def test_contraction_study_requires_increasing_windows(vortex):
    with pytest.raises(ValueError):
        contraction_study(vortex, [2e-3, 1e-3], PicardConfig(dt=1e-3))
    study = contraction_study(vortex, [1e-3, 2e-3], PicardConfig(dt=1e-3))
    assert len(study.ratios) == 2 and all(0 < r < 1 for r in study.ratios)
    assert np.isfinite(study.slope) and study.residual == pytest.approx(0.0, abs=1e-12)
    single = contraction_study(vortex, [1e-3], PicardConfig(dt=1e-3))
    assert len(single.ratios) == 1 and np.isnan(single.slope)


def test_forcing_enters_both_equations():
    g = make_grid(2, 8)
    z = zero_state(g)
    X, Y = g.centers()
    fu = np.stack([np.sin(np.pi * Y), np.zeros_like(X)])
    fF = np.ones((2, 2, 8, 8))
    s, trace = picard_iterate_window(z, PicardConfig(dt=1e-3), forcing=lambda t: (fu, fF))
    assert trace.converged
    assert np.abs(s.u).max() > 0 and np.abs(s.F).max() > 0


def test_formulation_gap_short_run():
    sc = build_scenario("small_vortex", {"n": 8, "boundary": "periodic", "amplitude": 0.5})
    h = 2.0 / 8
    dt = h * h / 8
    gap = formulation_gap(sc.initial_state(), sc.initial_director(), 4 * dt, PicardConfig(dt=dt))
    assert len(gap.times) == 5
    # the t = 0 entry is the sampling gap between F0 and grad d0; it must not grow
    assert gap.max_error == gap.errors[0]
    assert gap.curl_growth <= 10.0
