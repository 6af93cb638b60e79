import numpy as np
import pytest

from nematic.diagnostics import DiagnosticsSink, energy, energy_inequality_check
from nematic.errors import CflViolated
from nematic.grid import make_grid, zero_state
from nematic.picard import PicardConfig, advance
from nematic.scenarios import build_scenario
from nematic.weak import WeakConfig, cfl_ratio, weak_advance, weak_step


def test_config_validation():
    for kw in (dict(dt=0.0), dict(dt=1e-3, cfl_safety=0.0), dict(dt=1e-3, cfl_safety=1.5),
               dict(dt=1e-3, mu=-1.0)):
        with pytest.raises(ValueError):
            WeakConfig(**kw)


def test_zero_stays_zero():
    z = zero_state(make_grid(2, 8))
    s = weak_step(z, WeakConfig(dt=1e-2))
    assert not np.any(s.u) and not np.any(s.F) and not np.any(s.P)
    assert s.t == pytest.approx(1e-2)


def test_cfl_violation_raises():
    g = make_grid(2, 8)
    z = zero_state(g)
    fast = z.replace(u=np.full((2, 8, 8), 10.0))
    assert cfl_ratio(fast.u, 1e-2, g) == pytest.approx(np.sqrt(200) * 1e-2 * 8)
    with pytest.raises(CflViolated) as exc:
        weak_step(fast, WeakConfig(dt=1e-2))
    assert exc.value.ratio > exc.value.limit


def test_weak_energy_inequality_and_record_cadence():
    sc = build_scenario("small_vortex", {"n": 16, "amplitude": 0.5})
    sink = DiagnosticsSink()
    end = weak_advance(sc.initial_state(), 0.02, WeakConfig(dt=1e-3), sink=sink)
    assert len(sink.records) == 21 and end.t == pytest.approx(0.02)
    assert energy_inequality_check(sink.records, 0.0).passed


def test_first_order_agreement_with_picard():
    s0 = build_scenario("small_vortex", {"n": 16, "amplitude": 0.5}).initial_state()
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        a = advance(s0, 0.04, PicardConfig(dt=dt))
        b = weak_advance(s0, 0.04, WeakConfig(dt=dt))
        errs.append(max(np.abs(a.u - b.u).max(), np.abs(a.F - b.F).max()))
    for e1, e2 in zip(errs, errs[1:]):
        assert 1.7 <= e1 / e2 <= 2.3


def test_inviscid_transport_drift_is_first_order():
    # mu = lam = gamma = 0: explicit transport plus projection; the kinetic
    # energy drift beyond the spatial part shrinks linearly with dt
    s0 = build_scenario("small_vortex", {"n": 16, "amplitude": 2.0, "boundary": "periodic"}).initial_state()
    drift = []
    for dt in (4e-3, 2e-3, 1e-3):
        s = weak_advance(s0, 0.08, WeakConfig(dt=dt, mu=0.0, lam=0.0, gamma=0.0))
        drift.append(energy(s, 0.0) - energy(s0, 0.0))
    d1, d2 = drift[0] - drift[1], drift[1] - drift[2]
    assert 1.7 <= d1 / d2 <= 2.3


def test_inviscid_drift_per_step_is_dt_h2():
    per_step = []
    for n, dt in ((16, 2e-3), (32, 5e-4)):
        sc = build_scenario("small_vortex", {"n": n, "amplitude": 2.0, "boundary": "periodic"})
        s0 = sc.initial_state()
        s = weak_advance(s0, 0.02, WeakConfig(dt=dt, mu=0.0, lam=0.0, gamma=0.0))
        drift = abs(energy(s, 0.0) - energy(s0, 0.0)) / round(0.02 / dt)
        h = s0.grid.h[0]
        assert drift <= 0.2 * dt * h * h * energy(s0, 0.0)
        per_step.append(drift)
    assert 12 <= per_step[0] / per_step[1] <= 20


def test_steady_euler_flow_is_preserved():
    sc = build_scenario("near_identity", {"n": 16, "amplitude": 0.5})
    s0 = sc.initial_state()
    s = weak_advance(s0, 0.02, WeakConfig(dt=1e-3, mu=0.0, lam=0.0, gamma=0.0))
    assert np.abs(s.u - s0.u).max() < 1e-10
