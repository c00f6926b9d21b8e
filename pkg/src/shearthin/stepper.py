"""One implicit-Euler step of the regularized friction problem.

The step solves, for the free velocity entries ``v``, the pressure ``pi`` and
a scalar multiplier ``c`` pinning the pressure mean,

    M (v - v_prev) / dt + R_visc(v) + R_fric(v) - B^T pi = L
    -B v + m c = 0
    m . pi = 0

by damped Newton on the full (symmetric, indefinite) KKT system.  At the
solution ``c = 0`` because constants are orthogonal to the range of ``B`` on
the constrained space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import potential_closed, psi_delta
from .discretization import (
    FESpace,
    assemble_divergence,
    assemble_friction,
    assemble_load,
    assemble_mass,
    assemble_viscous,
    friction_slip,
    lift_coefficients,
    viscous_amplitude,
)

log = logging.getLogger(__name__)


class NewtonDiverged(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class LinearSolveFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class StepConfig:
    dt: float
    newton_tol: float = 1e-10
    newton_max: int = 50
    ls_factor: float = 0.5
    ls_max: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.newton_tol > 0 and self.newton_max >= 1):
            raise ValueError("Newton tolerance and iteration cap must be positive")


@dataclass(frozen=True)
class RegularizationConfig:
    """Vanishing-viscosity schedule and smoothing levels.

    ``eta`` smooths the strain modulus, ``delta`` the friction kink.  With
    ``eta_adapt`` the time loop divides ``eta`` by 10 after every step whose
    Newton solve needed fewer than 5 iterations, never below ``eta_floor``.
    """

    eps_schedule: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    eta: float = 1e-8
    eta_floor: float = 1e-12
    eta_adapt: bool = True
    delta: float = 1e-4
    picard_tol: float = 1e-8
    picard_max: int = 20

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", sched)
        if not sched:
            raise ValueError("eps schedule is empty")
        if any(e < 0 for e in sched) or any(e == 0 for e in sched[:-1]):
            raise ValueError("eps schedule must be positive (only its last entry may be 0)")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        if not (self.eta > 0 and self.eta_floor > 0 and self.delta > 0 and self.picard_tol > 0):
            raise ValueError("smoothing levels and tolerances must be positive")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")


@dataclass(eq=False)
class DiscreteState:
    vbar: np.ndarray
    pressure: np.ndarray
    t: float
    iterations: int = 0
    residual: float = 0.0
    eta: float | None = None
    delta: float | None = None

    @classmethod
    def zero(cls, space: FESpace, t=0.0):
        return cls(np.zeros(space.num_velocity), np.zeros(space.num_pressure), t)


def _operators(space: FESpace):
    ops = space.__dict__.get("_ops")
    if ops is None:
        M = assemble_mass(space)
        B = assemble_divergence(space)
        f = space.free
        ops = {
            "M": M,
            "B": B,
            "Mff": M[f][:, f].tocsc(),
            "Bf": B[:, f].tocsc(),
            "m": space.pressure_mass,
        }
        space.__dict__["_ops"] = ops
    return ops


@dataclass(eq=False)
class StepProblem:
    """Everything fixed during one step: data at ``t = prev.t + dt``."""

    space: FESpace
    prev: DiscreteState
    frozen_u: np.ndarray | None
    data: object
    params: object
    eps: float
    eta: float
    delta: float
    dt: float
    ops: dict = field(init=False)

    def __post_init__(self):
        self.t = self.prev.t + self.dt
        self.ops = _operators(self.space)
        self.load = assemble_load(self.space, self.data, self.t)
        self.load_f = self.load[self.space.free]

    @classmethod
    def build(cls, space, prev, frozen_u, data, params, reg, cfg, eps, eta=None):
        return cls(
            space=space, prev=prev, frozen_u=frozen_u, data=data, params=params, eps=eps,
            eta=reg.eta if eta is None else eta, delta=reg.delta, dt=cfg.dt,
        )

    @property
    def nf(self):
        return self.space.num_free

    @property
    def npr(self):
        return self.space.num_pressure

    def full(self, vf):
        v = np.zeros(self.space.num_velocity)
        v[self.space.free] = vf
        return v

    def momentum(self, vbar, jacobian=True):
        """Momentum residual without the pressure term (full length) and its Jacobian."""
        sp_ = self.space
        rv, kv = assemble_viscous(sp_, vbar, self.frozen_u, self.data, self.params, self.eta, self.eps, self.t, jacobian)
        rf, kf = assemble_friction(sp_, vbar, self.data, self.delta, self.t, jacobian)
        inertia = self.ops["M"] @ (vbar - self.prev.vbar) / self.dt
        r = inertia + rv + rf - self.load
        if not jacobian:
            return r, None
        return r, self.ops["M"] / self.dt + kv + kf

    def kkt_residual(self, x, jacobian=True):
        nf, npr = self.nf, self.npr
        vf, pi, c = x[:nf], x[nf:nf + npr], x[-1]
        vbar = self.full(vf)
        r, K = self.momentum(vbar, jacobian)
        Bf, m = self.ops["Bf"], self.ops["m"]
        F = np.concatenate([r[self.space.free] - Bf.T @ pi, -(Bf @ vf) + m * c, [m @ pi]])
        if not jacobian:
            return F, None
        f = self.space.free
        Kff = K[f][:, f]
        mcol = sp.csc_matrix(m.reshape(-1, 1))
        J = sp.bmat(
            [[Kff, -Bf.T, None], [-Bf, None, mcol], [None, mcol.T, None]],
            format="csc",
        )
        return F, J

    def tolerance(self, cfg: StepConfig) -> float:
        return cfg.newton_tol * (1.0 + np.linalg.norm(self.load_f))

    def energy(self, vbar) -> float:
        return incremental_energy_terms(self, vbar)["total"]


def incremental_energy_terms(problem: StepProblem, vbar) -> dict:
    """Terms of the convex functional whose stationary point is the step."""
    sp_, data, params = problem.space, problem.data, problem.params
    vbar = np.asarray(vbar, dtype=float)
    t, eta = problem.t, problem.eta
    dv = vbar - problem.prev.vbar
    inertia = 0.5 * dv @ (problem.ops["M"] @ dv) / problem.dt

    lift = lift_coefficients(sp_, data) * data.xi(t)
    Dtot = sp_.cell_strains(vbar + lift)
    mtot = np.sqrt(np.sum(Dtot * Dtot * [1.0, 1.0, 2.0], axis=-1) + eta * eta)
    amp = viscous_amplitude(sp_, data, params, problem.frozen_u, t)
    p = params.p
    phi = potential_closed(p, params.mu0, amp, mtot) - potential_closed(p, params.mu0, amp, eta)
    viscous = float(np.sum(sp_.qweights * phi))

    extra = 0.0
    if problem.eps > 0:
        Db = sp_.cell_strains(vbar)
        mb = np.sqrt(np.sum(Db * Db * [1.0, 1.0, 2.0], axis=-1) + eta * eta)
        pc = params.p_conj
        extra = float(2.0 * problem.eps / pc * np.sum(sp_.qweights * (mb**pc - eta**pc)))

    x = sp_.bpoints[..., 0]
    k = data.k(t, x) * np.ones_like(x)
    friction = float(np.sum(sp_.bweights * k * psi_delta(friction_slip(sp_, vbar, data, t), problem.delta)))
    work = float(problem.load @ vbar)
    total = inertia + viscous + extra + friction - work
    return {"inertia": inertia, "viscous": viscous, "eps": extra, "friction": friction, "work": work, "total": total}


def incremental_energy(space, state, prev, frozen_u, data, params, reg, cfg, eps, eta=None) -> float:
    problem = StepProblem.build(space, prev, frozen_u, data, params, reg, cfg, eps, eta)
    return problem.energy(state.vbar)


def _factor(J):
    try:
        return spla.splu(J)
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise LinearSolveFailed(str(exc)) from exc


def solve_step(problem: StepProblem, cfg: StepConfig, guess: DiscreteState | None = None) -> DiscreteState:
    space = problem.space
    start = problem.prev if guess is None else guess
    x = np.concatenate([start.vbar[space.free], start.pressure, [0.0]])
    tol = problem.tolerance(cfg)

    F, J = problem.kkt_residual(x)
    nrm = np.linalg.norm(F)
    it = 0
    while nrm > tol:
        if it >= cfg.newton_max:
            raise NewtonDiverged(
                f"Newton did not reach {tol:.3g} in {it} iterations (residual {nrm:.3g})", nrm, it
            )
        dx = _factor(J).solve(-F)
        if not np.all(np.isfinite(dx)):
            raise LinearSolveFailed("non-finite Newton update")
        alpha = 1.0
        for _ in range(cfg.ls_max + 1):
            trial = x + alpha * dx
            Ft, _ = problem.kkt_residual(trial, jacobian=False)
            nt = np.linalg.norm(Ft)
            if nt <= (1.0 - 1e-4 * alpha) * nrm:
                break
            alpha *= cfg.ls_factor
        else:
            raise NewtonDiverged(f"line search failed at iteration {it} (residual {nrm:.3g})", nrm, it)
        x = trial
        it += 1
        F, J = problem.kkt_residual(x)
        nrm = np.linalg.norm(F)
        log.debug("newton it=%d residual=%.3e alpha=%.3g", it, nrm, alpha)

    nf, npr = problem.nf, problem.npr
    pi = x[nf:nf + npr].copy()
    m = problem.ops["m"]
    pi -= (m @ pi) / m.sum()
    return DiscreteState(
        vbar=problem.full(x[:nf]), pressure=pi, t=problem.t,
        iterations=it, residual=float(nrm), eta=problem.eta, delta=problem.delta,
    )


def implicit_euler_step(space, prev, frozen_u, data, params, reg, cfg, eps, guess=None, eta=None) -> DiscreteState:
    """Advance ``prev`` by ``cfg.dt``; ``frozen_u`` is the velocity frozen inside ``mu``."""
    problem = StepProblem.build(space, prev, frozen_u, data, params, reg, cfg, eps, eta)
    return solve_step(problem, cfg, guess)


def physical_velocity(space, data, state) -> np.ndarray:
    """``v = vbar + v0 xi(t)`` as P2 coefficients."""
    return state.vbar + lift_coefficients(space, data) * data.xi(state.t)


__all__ = [
    "DiscreteState",
    "LinearSolveFailed",
    "NewtonDiverged",
    "RegularizationConfig",
    "StepConfig",
    "StepProblem",
    "implicit_euler_step",
    "incremental_energy",
    "incremental_energy_terms",
    "physical_velocity",
    "solve_step",
]
