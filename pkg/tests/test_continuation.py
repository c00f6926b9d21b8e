import warnings

import numpy as np
import pytest

from shearthin.constitutive import BoundedIncreasing, Constant, FluidParams, ThermoCoupled
from shearthin.continuation import (
    EpsNotStabilized,
    PicardNotConverged,
    StepFailed,
    Trajectory,
    field_norm,
    num_steps,
    picard_lambda,
    solve_P_u,
    time_loop,
    traj_distance,
    traj_norm,
)
from shearthin.problem import XiLaw, couette_data, coupled_data, zero_data
from shearthin.stepper import DiscreteState, RegularizationConfig, StepConfig, implicit_euler_step

P15 = FluidParams(1.5, Constant(1.0))
REG = RegularizationConfig(eps_schedule=(1e-1, 1e-2))
CFG = StepConfig(dt=0.1)


def test_num_steps():
    assert num_steps(0.5, 0.1) == 5
    with pytest.raises(ValueError):
        num_steps(0.5, 0.3)


def test_zero_data_through_all_levels(film_space):
    traj, rep = picard_lambda(film_space, zero_data(T=0.3), P15, RegularizationConfig(), CFG)
    assert rep.converged and rep.iterations == 1
    for _, run in traj.eps_runs:
        assert np.max(np.abs(run.velocities())) == 0.0


def test_single_step_loop_equals_step(film_space):
    data = couette_data(film_space.mesh.domain, U=1.0, k=0.3, T=0.1)
    traj = time_loop(film_space, None, data, P15, REG, CFG, 1e-2)
    st = implicit_euler_step(film_space, DiscreteState.zero(film_space), None, data, P15, REG, CFG, 1e-2)
    assert traj.n_steps == 1 and np.array_equal(traj.states[1].vbar, st.vbar)
    assert traj.T == pytest.approx(0.1)


def test_time_step_self_convergence(film_space):
    # steps must resolve the viscous relaxation time h0^2 / (2 pi^2 mu) ~ 0.01
    data = couette_data(film_space.mesh.domain, U=1.0, k=0.0, xi=XiLaw("exp", 1.0), T=0.2)
    params = FluidParams(2.0, Constant(1.0))
    reg = RegularizationConfig(eps_schedule=(0.0,))
    finals = []
    for dt in (0.01, 0.005, 0.0025):
        tr = time_loop(film_space, None, data, params, reg, StepConfig(dt=dt), 0.0)
        finals.append(tr.states[-1].vbar)
    d1 = field_norm(film_space, finals[0] - finals[1], 2.0)
    d2 = field_norm(film_space, finals[1] - finals[2], 2.0)
    assert 1.7 <= d1 / d2 <= 2.3


def test_traj_distance_properties(film_space, rng):
    def rand_traj():
        tr = Trajectory.zero(film_space, 3, 0.1)
        for s in tr.states[1:]:
            s.vbar = rng.standard_normal(film_space.num_velocity)
        return tr

    a, b, c = rand_traj(), rand_traj(), rand_traj()
    for kind in ("Lp", "W1p"):
        assert traj_distance(a, a, 1.5, kind) == 0.0
        assert traj_distance(a, b, 1.5, kind) == pytest.approx(traj_distance(b, a, 1.5, kind))
        assert traj_distance(a, c, 1.5, kind) <= traj_distance(a, b, 1.5, kind) + traj_distance(b, c, 1.5, kind)
        z = Trajectory.zero(film_space, 3, 0.1)
        assert traj_distance(a, z, 1.5, kind) == pytest.approx(traj_norm(a, 1.5, kind))
    with pytest.raises(ValueError):
        traj_distance(a, Trajectory.zero(film_space, 4, 0.1), 1.5)
    with pytest.raises(ValueError):
        field_norm(film_space, a.states[1].vbar, 1.5, "H1")


def test_eps_schedule_distances_and_warning(film_space):
    data = couette_data(film_space.mesh.domain, U=1.0, k=0.3, T=0.2)
    reg = RegularizationConfig(eps_schedule=(1e-1, 1e-2, 1e-3))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj = solve_P_u(film_space, None, data, P15, reg, CFG)
    assert len(traj.eps_runs) == 3 and traj.eps == 1e-3
    assert len(traj.eps_distances) == 2
    assert traj.eps_distances[1] <= traj.eps_distances[0]
    assert any(issubclass(w.category, EpsNotStabilized) for w in caught)


def test_picard_constant_viscosity_one_iteration(film_space):
    data = couette_data(film_space.mesh.domain, U=1.0, k=0.3, T=0.2)
    traj, rep = picard_lambda(film_space, data, P15, REG, CFG)
    assert rep.iterations == 2
    assert rep.distances[1] <= 10 * CFG.newton_tol


def test_picard_thermo_decreasing(film_space):
    data = coupled_data(film_space.mesh.domain, U=1.0, k=0.3, theta0=1.0, T=0.2)
    params = FluidParams(1.5, ThermoCoupled(1.0, 2.0, 1.0, 0.5))
    seen = []
    traj, rep = picard_lambda(film_space, data, params, REG, CFG, on_iterate=lambda k, tr, d: seen.append(k))
    assert rep.converged and seen == list(range(1, rep.iterations + 1))
    assert all(b < a for a, b in zip(rep.distances, rep.distances[1:]))
    assert max(rep.norms) <= 2 * rep.norms[0]


def test_picard_not_converged(film_space):
    data = coupled_data(film_space.mesh.domain, U=1.0, k=0.3, theta0=1.0, T=0.2)
    params = FluidParams(1.5, ThermoCoupled(1.0, 2.0, 1.0, 0.5))
    reg = RegularizationConfig(eps_schedule=(1e-1,), picard_max=2, picard_tol=1e-14)
    with pytest.raises(PicardNotConverged) as info:
        picard_lambda(film_space, data, params, reg, CFG)
    assert len(info.value.distances) == 2


def test_step_failure_names_step(film_space):
    data = couette_data(film_space.mesh.domain, U=1.0, k=0.3, T=0.2)
    cfg = StepConfig(dt=0.1, newton_max=1, newton_tol=1e-15)
    with pytest.raises(StepFailed) as info:
        time_loop(film_space, None, data, FluidParams(1.5, BoundedIncreasing(1.0, 2.0)), REG, cfg, 1e-3)
    assert info.value.step == 1
