import numpy as np
import pytest

from shearthin.constitutive import Constant, FluidParams
from shearthin.continuation import Trajectory, time_loop
from shearthin.diagnostics import (
    DiagnosticsRecord,
    apriori_monitor,
    energy_report,
    friction_complementarity,
    pressure_consistency,
    pressure_mean,
    step_problem,
    traction,
)
from shearthin.problem import couette_data, zero_data
from shearthin.stepper import RegularizationConfig, StepConfig

REG = RegularizationConfig(eps_schedule=(1e-2,))
CFG = StepConfig(dt=0.1)
P15 = FluidParams(1.5, Constant(1.0))


@pytest.fixture(scope="module")
def couette(film_space):
    data = couette_data(film_space.mesh.domain, U=0.5, k=0.3, T=0.3)
    return data, time_loop(film_space, None, data, P15, REG, CFG, 1e-2)


def test_record_columns():
    cols = DiagnosticsRecord.columns()
    assert cols[0] == "t" and "energy_defect" in cols and len(cols) == 12


def test_energy_report_on_couette(couette):
    data, traj = couette
    rep = energy_report(traj, data, P15, REG, CFG)
    assert rep.ok and len(rep.steps) == traj.n_steps
    assert rep.max_violation <= 1.0
    for s in rep.steps:
        assert abs(s.identity) <= s.tol
    for rec in rep.records:
        assert rec.div_residual < 1e-8 and abs(rec.pressure_mean) < 1e-12
        assert rec.dissipation > 0 and rec.eps_dissipation > 0 and rec.friction >= 0


def test_energy_report_zero(film_space):
    traj = time_loop(film_space, None, zero_data(T=0.2), P15, REG, CFG, 1e-2)
    rep = energy_report(traj, zero_data(T=0.2), P15, REG, CFG)
    assert all(s.lhs == 0.0 for s in rep.steps)
    assert all(v == 0 for rec in rep.records for v in rec.values()[1:])


def test_energy_report_detects_corruption(couette):
    data, traj = couette
    bad = Trajectory(traj.space, traj.dt, [s for s in traj.states], eps=traj.eps)
    import copy

    bad.states = [copy.copy(s) for s in traj.states]
    bad.states[2].vbar = traj.states[2].vbar * 1.5
    assert not energy_report(bad, data, P15, REG, CFG).ok


def test_friction_all_slipping_at_low_threshold(couette):
    data, traj = couette
    c = friction_complementarity(traj, data, REG.delta)
    assert c.max_ratio < 1 and c.n_stick == 0 and c.n_slip > 0
    assert c.alignment_defect <= 1e-2 and c.max_sign_product <= 0


def test_traction_opposes_slip(couette):
    data, traj = couette
    sigma, z, k = traction(traj.space, traj.states[-1].vbar, data, REG.delta, traj.T)
    assert np.all(sigma * z <= 0) and np.all(np.abs(sigma) < k)


def test_apriori_monitor_flags_growth(couette):
    data, traj = couette
    scaled = Trajectory(traj.space, traj.dt, [type(s)(2 * s.vbar, s.pressure, s.t) for s in traj.states], eps=1e-3)
    table = apriori_monitor([(1e-2, traj), (1e-3, scaled)], 1.5)
    assert ("w1p", 1) in table.flags and ("linf_l2", 1) in table.flags
    assert not apriori_monitor([(1e-2, traj), (1e-3, traj)], 1.5).flagged


def test_pressure_helpers(couette, film_space):
    data, traj = couette
    st = traj.states[1]
    assert abs(pressure_mean(film_space, st.pressure)) < 1e-12
    prob = step_problem(traj, 1, None, data, P15, REG)
    assert pressure_consistency(prob, st) < 1e-9
    # free fields have zero net flux, so constant pressures are invisible
    assert pressure_consistency(prob, type(st)(st.vbar, st.pressure + 1.0, st.t)) < 1e-8
