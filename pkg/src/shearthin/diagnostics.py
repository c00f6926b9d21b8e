"""Discrete checks of the friction law, the energy inequality and the a priori bounds."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from .constitutive import dpsi_delta, psi_delta
from .continuation import Trajectory, field_norm
from .discretization import (
    assemble_friction,
    assemble_viscous,
    friction_slip,
    lift_coefficients,
    viscous_amplitude,
)
from .stepper import StepProblem

_VOIGT = np.array([1.0, 1.0, 2.0])


@dataclass
class DiagnosticsRecord:
    t: float
    kinetic: float
    dissipation: float
    eps_dissipation: float
    friction: float
    work: float
    div_residual: float
    pressure_mean: float
    max_traction_ratio: float
    alignment_defect: float
    energy_defect: float
    newton_iterations: int

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def values(self):
        return list(asdict(self).values())


class Complementarity(NamedTuple):
    max_ratio: float
    alignment_defect: float
    max_sign_product: float  # max of sigma * (vbar_tau - s~); should be <= 0
    n_slip: int
    n_stick: int


def traction(space, vbar, data, delta, t):
    """Recovered tangential traction ``-k psi_delta'(vbar_tau - s~)`` and the slip."""
    x = space.bpoints[..., 0]
    k = data.k(t, x) * np.ones_like(x)
    z = friction_slip(space, vbar, data, t)
    return -k * dpsi_delta(z, delta), z, k


def _complementarity(pairs, delta) -> Complementarity:
    ratio, defect, sign = 0.0, 0.0, -np.inf
    n_slip = n_stick = 0
    for sigma, z, k in pairs:
        active = k > 0
        sign = max(sign, float(np.max(sigma * z, initial=-np.inf)))
        if not np.any(active):
            continue
        r = np.abs(sigma[active]) / k[active]
        ratio = max(ratio, float(r.max()))
        slip = np.abs(z[active]) > 10.0 * delta
        n_slip += int(slip.sum())
        n_stick += int((~slip).sum())
        if np.any(slip):
            defect = max(defect, float(np.max(np.abs(r[slip] - 1.0))))
    return Complementarity(ratio, defect, sign if np.isfinite(sign) else 0.0, n_slip, n_stick)


def friction_complementarity(traj: Trajectory, data, delta) -> Complementarity:
    """Smoothed Tresca diagnostics over every step and Gamma0 quadrature point.

    ``max_ratio = max |sigma|/k`` (0 where ``k = 0``) and the alignment defect
    ``max | |sigma| - k | / k`` over slipping points ``|vbar_tau - s~| > 10 delta``.
    """
    pairs = [traction(traj.space, s.vbar, data, delta, s.t) for s in traj.states[1:]]
    return _complementarity(pairs, delta)


def _dissipation_split(problem: StepProblem, vbar):
    sp_, params, data, t, eta = problem.space, problem.params, problem.data, problem.t, problem.eta
    lift = lift_coefficients(sp_, data) * data.xi(t)
    Dt = sp_.cell_strains(vbar + lift)
    Db = sp_.cell_strains(vbar)
    m2 = np.sum(Dt * Dt * _VOIGT, axis=-1) + eta * eta
    amp = viscous_amplitude(sp_, data, params, problem.frozen_u, t)
    mu = params.mu0 + amp * m2 / (1.0 + m2)
    a = 2.0 * mu * np.sqrt(m2) ** (params.p - 2)
    visc = float(np.sum(sp_.qweights * a * np.sum(Dt * Db * _VOIGT, axis=-1)))
    extra = 0.0
    if problem.eps > 0:
        mb2 = np.sum(Db * Db * _VOIGT, axis=-1)
        b = 2.0 * problem.eps * np.sqrt(mb2 + eta * eta) ** (params.p_conj - 2)
        extra = float(np.sum(sp_.qweights * b * mb2))
    return visc, extra


def step_problem(traj: Trajectory, n, frozen, data, params, reg):
    """The ``StepProblem`` that produced state ``n`` (1-based) of ``traj``."""
    st = traj.states[n]
    fu = None if frozen is None else frozen.states[n].vbar
    return StepProblem(
        space=traj.space, prev=traj.states[n - 1], frozen_u=fu, data=data, params=params,
        eps=traj.eps or 0.0, eta=st.eta if st.eta is not None else reg.eta,
        delta=st.delta if st.delta is not None else reg.delta, dt=traj.dt,
    )


@dataclass
class EnergyStep:
    lhs: float  # kinetic increment + dt (<R, v> - L(v)); must be <= tol
    identity: float  # lhs + 0.5 ||v^{n+1} - v^n||^2; must vanish within tol
    tol: float


@dataclass
class EnergyReport:
    steps: list
    records: list

    @property
    def ok(self) -> bool:
        return all(s.lhs <= s.tol and abs(s.identity) <= s.tol for s in self.steps)

    @property
    def max_violation(self) -> float:
        return max((max(s.lhs, 0.0) / s.tol for s in self.steps), default=0.0)


def energy_report(traj: Trajectory, data, params, reg, cfg, frozen=None) -> EnergyReport:
    """Per-step energy inequality obtained by testing the step with ``-vbar^{n+1}``.

    The tolerance is ``10 newton_tol dt (1 + ||L||)(1 + ||vbar|| + ||pi||)``:
    the residual and the constraint are only met to ``newton_tol (1 + ||L||)``.
    """
    sp_ = traj.space
    steps, records = [], []
    for n in range(1, len(traj.states)):
        prob = step_problem(traj, n, frozen, data, params, reg)
        st, prev = traj.states[n], traj.states[n - 1]
        v = st.vbar
        M = prob.ops["M"]
        rv, _ = assemble_viscous(sp_, v, prob.frozen_u, data, params, prob.eta, prob.eps, prob.t, False)
        rf, _ = assemble_friction(sp_, v, data, prob.delta, prob.t, False)
        kin_new, kin_old = 0.5 * v @ (M @ v), 0.5 * prev.vbar @ (M @ prev.vbar)
        dv = v - prev.vbar
        jump = 0.5 * dv @ (M @ dv)
        work = float(prob.load @ v)
        lhs = kin_new - kin_old + prob.dt * (rv @ v + rf @ v - work)
        scale = prob.dt * (1.0 + np.linalg.norm(prob.load_f)) * (
            1.0 + np.linalg.norm(v) + np.linalg.norm(st.pressure)
        )
        tol = 10.0 * cfg.newton_tol * scale
        steps.append(EnergyStep(float(lhs), float(lhs + jump), float(tol)))

        visc, extra = _dissipation_split(prob, v)
        sigma, z, k = traction(sp_, v, data, prob.delta, prob.t)
        comp = _complementarity([(sigma, z, k)], prob.delta)
        fric = float(np.sum(sp_.bweights * k * psi_delta(z, prob.delta)))
        m = prob.ops["m"]
        records.append(
            DiagnosticsRecord(
                t=float(st.t),
                kinetic=float(kin_new),
                dissipation=visc,
                eps_dissipation=extra,
                friction=fric,
                work=work,
                div_residual=float(np.linalg.norm(prob.ops["B"] @ v)),
                pressure_mean=float(m @ st.pressure / m.sum()),
                max_traction_ratio=comp.max_ratio,
                alignment_defect=comp.alignment_defect,
                energy_defect=float(lhs),
                newton_iterations=int(st.iterations),
            )
        )
    return EnergyReport(steps, records)


@dataclass
class AprioriRow:
    eps: float
    w1p: float  # ||v||_{L^p(0,T; W^{1,p})}
    eps_w1pc: float  # eps^{1/p'} ||v||_{L^{p'}(0,T; W^{1,p'})}
    linf_l2: float  # max_t ||v||_{L^2}


@dataclass
class AprioriTable:
    rows: list
    flags: list  # (column, index) where a value grew by > 10%

    @property
    def flagged(self) -> bool:
        return bool(self.flags)


def apriori_monitor(eps_runs, p) -> AprioriTable:
    """Tabulate the eps-uniform quantities and flag growth above 10% as eps decreases."""
    pc = p / (p - 1)
    rows = []
    for eps, traj in eps_runs:
        sp_ = traj.space
        w1p = (traj.dt * sum(field_norm(sp_, s.vbar, p, "W1p") ** p for s in traj.states[1:])) ** (1 / p)
        w1pc = (traj.dt * sum(field_norm(sp_, s.vbar, pc, "W1p") ** pc for s in traj.states[1:])) ** (1 / pc)
        l2 = max(field_norm(sp_, s.vbar, 2.0, "Lp") for s in traj.states)
        rows.append(AprioriRow(float(eps), float(w1p), float(eps ** (1 / pc) * w1pc), float(l2)))
    flags = []
    for col in ("w1p", "eps_w1pc", "linf_l2"):
        vals = [getattr(r, col) for r in rows]
        for i in range(1, len(vals)):
            ref = max(vals[:i])
            if vals[i] > 1.1 * ref and vals[i] > 1e-300:
                flags.append((col, i))
    return AprioriTable(rows, flags)


def pressure_mean(space, pressure) -> float:
    m = space.pressure_mass
    return float(m @ pressure / m.sum())


def pressure_consistency(problem: StepProblem, state) -> float:
    """Norm of the free momentum residual ``M dv/dt + R - B^T pi - L`` at ``state``."""
    r, _ = problem.momentum(state.vbar, jacobian=False)
    f = problem.space.free
    res = r[f] - problem.ops["Bf"].T @ state.pressure
    return float(np.linalg.norm(res))


__all__ = [
    "AprioriRow",
    "AprioriTable",
    "Complementarity",
    "DiagnosticsRecord",
    "EnergyReport",
    "EnergyStep",
    "apriori_monitor",
    "energy_report",
    "friction_complementarity",
    "pressure_consistency",
    "pressure_mean",
    "step_problem",
    "traction",
]
