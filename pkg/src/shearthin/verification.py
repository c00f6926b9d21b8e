"""Property and oracle suites driven by the ``verify`` subcommand.

Every suite returns a list of :class:`Check` rows.  Helpers look up the
constitutive functions through the module at call time, so patching them
(fault injection) is seen by the suites.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import constitutive as cm
from .continuation import EpsNotStabilized, picard_lambda, time_loop
from .diagnostics import energy_report, friction_complementarity
from .discretization import build_space
from .geometry import ThinDomain, build_thin_mesh
from .oracle import dense_kkt, make_instance, oracle_step
from .problem import couette_data, mms_data, mms_velocity, zero_data
from .stepper import (
    DiscreteState,
    RegularizationConfig,
    StepConfig,
    implicit_euler_step,
    incremental_energy,
)

SUITES = ("constitutive", "oracle", "energy", "complementarity", "mms")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.suite:<15} {self.name:<44} value={self.value:.3e}  limit={self.limit:.3e}"


def _check(suite, name, value, limit, passed=None, t0=None):
    ok = bool(value <= limit) if passed is None else bool(passed)
    return Check(suite, name, ok, float(value), float(limit), 0.0 if t0 is None else time.perf_counter() - t0)


# ------------------------------------------------------------ constitutive


def random_sym(rng, n, scale=10.0):
    return rng.uniform(-scale, scale, size=(n, 3))


def constitutive_measures(p, n=100_000, seed=0, mu0=1.0, mu1=2.0):
    """Worst violations of (F1), monotonicity, strong monotonicity and split exactness."""
    rng = np.random.default_rng(seed)
    params = cm.FluidParams(p, cm.BoundedIncreasing(mu0, mu1))
    a, b = random_sym(rng, n), random_sym(rng, n)
    temp = rng.uniform(-1, 1, n)
    vel = rng.uniform(-1, 1, (n, 2))
    Fa = cm.eval_F(params, temp, vel, a)
    Fb = cm.eval_F(params, temp, vel, b)
    na = cm.sym_norm(a)
    bound = 2 * mu1 * na ** (p - 1)
    f1 = float(np.max((cm.sym_norm(Fa) - bound) / np.maximum(bound, 1e-300)))
    diff = a - b
    mag2 = cm.sym_inner(diff, diff)
    mono = float(np.min(cm.sym_inner(Fa - Fb, diff) / (1 + mag2)))
    strong = float(np.min(cm.strong_monotonicity_residual(p, mu0, a, b) / (1 + mag2)))
    g1, g2 = cm.split_F(params, temp, vel, a)
    split = float(np.max(cm.sym_norm(g1 + g2 - Fa) / np.maximum(cm.sym_norm(Fa), 1e-300)))
    return {"F1": f1, "monotone": mono, "inegp": strong, "split": split}


def suite_constitutive(n=100_000, seed=0):
    out = []
    for p in (1.2, 1.5, 1.8):
        t0 = time.perf_counter()
        m = constitutive_measures(p, n, seed)
        out.append(_check("constitutive", f"(F1) bound p={p}", m["F1"], 1e-12, t0=t0))
        out.append(_check("constitutive", f"monotonicity p={p}", -m["monotone"], 1e-10))
        out.append(_check("constitutive", f"strong monotonicity p={p}", -m["inegp"], 1e-10))
        out.append(_check("constitutive", f"split exactness p={p}", m["split"], 1e-14))
    # potential gradient by finite differences
    t0 = time.perf_counter()
    worst = 0.0
    for mu in (cm.Constant(1.0), cm.BoundedIncreasing(1.0, 2.0)):
        params = cm.FluidParams(1.5, mu)
        for t in (0.3, 0.7, 1.9):
            h = 1e-5
            fd = (cm.potential_phi(params, 0.0, [0.0, 0.0], t + h) - cm.potential_phi(params, 0.0, [0.0, 0.0], t - h)) / (2 * h)
            exact = 2 * cm.viscosity(params, 0.0, np.zeros(2), t) * t ** (params.p - 1)
            worst = max(worst, abs(fd - exact) / abs(exact))
    out.append(_check("constitutive", "potential derivative (finite difference)", worst, 1e-6, t0=t0))
    return out


# ------------------------------------------------------------------ oracle


def couette_step_pair(nx=2, nz=1, steps=2, dt=0.1, p=1.5, eps=1e-4, k=0.3, mu=None, reg=None):
    """Yield ``(mesh, space, data, params, reg, cfg, prev, state, eps)`` for oracle comparisons."""
    dom = ThinDomain.constant(L=1.0, h0=0.5)
    mesh = build_thin_mesh(dom, nx, nz)
    space = build_space(mesh)
    params = cm.FluidParams(p, mu or cm.BoundedIncreasing(1.0, 2.0))
    data = couette_data(dom, U=1.0, k=k, T=steps * dt)
    reg = reg or RegularizationConfig()
    cfg = StepConfig(dt=dt)
    prev = DiscreteState.zero(space)
    for _ in range(steps):
        st = implicit_euler_step(space, prev, None, data, params, reg, cfg, eps)
        yield mesh, space, data, params, reg, cfg, prev, st, eps
        prev = st


def oracle_comparison(**kw):
    """Per step: (relative energy gap, velocity gap / scale, oracle below stepper + 1e-6 scale)."""
    rows = []
    for mesh, space, data, params, reg, cfg, prev, st, eps in couette_step_pair(**kw):
        e_main = incremental_energy(space, st, prev, None, data, params, reg, cfg, eps, eta=st.eta)
        inst = make_instance(mesh, data, params, space.nodes, prev.vbar, st.t, cfg.dt, eps, st.eta, st.delta)
        res = oracle_step(inst)
        v = inst.export(space.nodes, res.velocity)
        scale = max(np.max(np.abs(st.vbar)), 1e-300)
        rows.append(
            {
                "energy_rel": abs(res.energy - e_main) / abs(e_main),
                "velocity_rel": float(np.max(np.abs(v - st.vbar)) / scale),
                "below": res.energy <= e_main + 1e-6 * abs(e_main),
                "instance_vs_main": abs(inst.energy(inst.gather(space.nodes, st.vbar)[inst.free]) - e_main) / abs(e_main),
                "certified": res.certified,
            }
        )
    return rows


def linear_sanity(nx=2, nz=1, dt=0.1, steps=2):
    """p = 2, constant viscosity, k = 0, eps = 0: iterations per step and gap to the dense KKT solve."""
    dom = ThinDomain.constant(L=2.0, h0=1.0)
    mesh = build_thin_mesh(dom, nx, nz)
    space = build_space(mesh)
    data = mms_data(dom, c=1.0, T=steps * dt)
    params = cm.FluidParams(2.0, cm.Constant(1.0))
    reg = RegularizationConfig(eps_schedule=(0.0,))
    cfg = StepConfig(dt=dt)
    prev = DiscreteState.zero(space)
    iters, gaps = [], []
    for _ in range(steps):
        st = implicit_euler_step(space, prev, None, data, params, reg, cfg, 0.0)
        inst = make_instance(mesh, data, params, space.nodes, prev.vbar, st.t, dt, 0.0, reg.eta, reg.delta)
        ref = inst.export(space.nodes, dense_kkt(inst))
        iters.append(st.iterations)
        gaps.append(float(np.max(np.abs(ref - st.vbar))))
        prev = st
    return iters, gaps


def zero_oracle():
    dom = ThinDomain.constant(L=1.0, h0=1.0)
    mesh = build_thin_mesh(dom, 1, 1)
    space = build_space(mesh)
    params = cm.FluidParams(1.5, cm.Constant(1.0))
    inst = make_instance(mesh, zero_data(), params, space.nodes, np.zeros(space.num_velocity), 0.1, 0.1, 1e-4, 1e-8, 1e-4)
    res = oracle_step(inst)
    return float(np.max(np.abs(res.velocity))), abs(res.energy)


def suite_oracle():
    out = []
    t0 = time.perf_counter()
    vmax, emax = zero_oracle()
    out.append(_check("oracle", "zero data -> zero velocity and energy", max(vmax, emax), 0.0, t0=t0))
    t0 = time.perf_counter()
    iters, gaps = linear_sanity()
    out.append(_check("oracle", "linear step: one Newton iteration", max(iters), 1, passed=set(iters) == {1}, t0=t0))
    out.append(_check("oracle", "linear step vs dense KKT", max(gaps), 1e-8))
    t0 = time.perf_counter()
    rows = oracle_comparison()
    out.append(_check("oracle", "p=1.5 couette: energy (relative)", max(r["energy_rel"] for r in rows), 1e-6, t0=t0))
    out.append(_check("oracle", "p=1.5 couette: velocity / scale", max(r["velocity_rel"] for r in rows), 1e-4))
    out.append(
        _check("oracle", "p=1.5 couette: oracle energy <= stepper", 0.0, 0.0, passed=all(r["below"] for r in rows))
    )
    out.append(_check("oracle", "independent energy at stepper solution", max(r["instance_vs_main"] for r in rows), 1e-10))
    return out


# ---------------------------------------------------- energy & friction runs


def couette_run(k=0.3, nx=4, nz=2, T=0.5, dt=0.1, p=1.5, mu=None, U=0.5, eps_schedule=None):
    dom = ThinDomain.constant(L=1.0, h0=0.5)
    space = build_space(build_thin_mesh(dom, nx, nz))
    params = cm.FluidParams(p, mu or cm.Constant(1.0))
    data = couette_data(dom, U=U, k=k, T=T)
    reg = RegularizationConfig() if eps_schedule is None else RegularizationConfig(eps_schedule=eps_schedule)
    cfg = StepConfig(dt=dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EpsNotStabilized)
        traj, report = picard_lambda(space, data, params, reg, cfg)
    return space, data, params, reg, cfg, traj, report


def suite_energy():
    t0 = time.perf_counter()
    _, data, params, reg, cfg, traj, _ = couette_run()
    worst_ineq = worst_id = 0.0
    for _, tr in traj.eps_runs:
        rep = energy_report(tr, data, params, reg, cfg)
        worst_ineq = max(worst_ineq, max(s.lhs / s.tol for s in rep.steps))
        worst_id = max(worst_id, max(abs(s.identity) / s.tol for s in rep.steps))
    return [
        _check("energy", "energy inequality (violation / tol)", worst_ineq, 1.0, t0=t0),
        _check("energy", "energy identity (defect / tol)", worst_id, 1.0),
    ]


def suite_complementarity(k=5.0):
    t0 = time.perf_counter()
    _, data, params, reg, _, traj, _ = couette_run(k=k)
    c = friction_complementarity(traj, data, reg.delta)
    return [
        _check("complementarity", "max traction ratio < 1", c.max_ratio, 1.0, passed=c.max_ratio < 1.0, t0=t0),
        _check("complementarity", "slip alignment defect", c.alignment_defect, 1e-2),
        _check("complementarity", "sigma * slip <= 0", c.max_sign_product, 0.0),
        _check("complementarity", "both branches present", min(c.n_slip, c.n_stick), 1, passed=c.n_slip > 0 and c.n_stick > 0),
    ]


# --------------------------------------------------------------------- mms


def mms_error(nx, nz, L=2.0, T=0.2, dt=0.1, c=1.0):
    dom = ThinDomain.constant(L=L, h0=1.0)
    space = build_space(build_thin_mesh(dom, nx, nz))
    data = mms_data(dom, c=c, T=T)
    params = cm.FluidParams(2.0, cm.Constant(c))
    reg = RegularizationConfig(eps_schedule=(0.0,))
    traj = time_loop(space, None, data, params, reg, StepConfig(dt=dt), 0.0)
    vh = space.cell_values(traj.states[-1].vbar)
    ex = mms_velocity(T, space.qpoints[..., 0], space.qpoints[..., 1], L)
    err = math.sqrt(float(np.sum(space.qweights * np.sum((vh - ex) ** 2, axis=-1))))
    return err, traj


def mms_study(meshes=((8, 4), (16, 8)), **kw):
    rows = []
    for nx, nz in meshes:
        err, _ = mms_error(nx, nz, **kw)
        rows.append((nx, nz, err))
    orders = [math.log(e0 / e1) / math.log(n1 / n0) for (n0, _, e0), (n1, _, e1) in zip(rows, rows[1:])]
    return rows, orders


def suite_mms():
    t0 = time.perf_counter()
    _, orders = mms_study()
    return [_check("mms", "L2 order between 8x4 and 16x8 (>= 2)", orders[0], 2.0, passed=orders[0] >= 2.0, t0=t0)]


_RUNNERS = {
    "constitutive": suite_constitutive,
    "oracle": suite_oracle,
    "energy": suite_energy,
    "complementarity": suite_complementarity,
    "mms": suite_mms,
}


def run_suites(selector="all"):
    names = SUITES if selector == "all" else tuple(s.strip() for s in selector.split(","))
    unknown = [n for n in names if n not in _RUNNERS]
    if unknown:
        raise ValueError(f"unknown suite(s) {', '.join(unknown)}; expected {', '.join(SUITES)} or all")
    checks = []
    for name in names:
        checks.extend(_RUNNERS[name]())
    return checks


__all__ = [
    "Check",
    "SUITES",
    "constitutive_measures",
    "couette_run",
    "couette_step_pair",
    "linear_sanity",
    "mms_error",
    "mms_study",
    "oracle_comparison",
    "run_suites",
]
