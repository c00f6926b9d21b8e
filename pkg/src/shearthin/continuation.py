"""Outer loops: time marching, the vanishing-viscosity schedule and Picard.

Time integrals of trajectory norms use the rectangle rule at the right
endpoints ``t_1 .. t_N``, which is consistent with implicit sampling.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretization import FESpace
from .stepper import (
    DiscreteState,
    LinearSolveFailed,
    NewtonDiverged,
    implicit_euler_step,
)

log = logging.getLogger(__name__)

NORM_KINDS = ("Lp", "W1p")


class EpsNotStabilized(UserWarning):
    """The last distance of the eps schedule is still above tolerance."""


class PicardNotConverged(RuntimeError):
    def __init__(self, message, distances, trajectory=None):
        super().__init__(message)
        self.distances = list(distances)
        self.trajectory = trajectory


class StepFailed(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"time step {step} failed: {cause}")
        self.step = step
        self.cause = cause


@dataclass(eq=False)
class Trajectory:
    space: FESpace
    dt: float
    states: list
    eps: float | None = None
    eps_runs: list = field(default_factory=list)  # [(eps, Trajectory)] from solve_P_u
    eps_distances: list = field(default_factory=list)

    @classmethod
    def zero(cls, space, n_steps, dt):
        return cls(space, dt, [DiscreteState.zero(space, n * dt) for n in range(n_steps + 1)])

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def T(self) -> float:
        return self.states[-1].t

    def velocities(self) -> np.ndarray:
        return np.array([s.vbar for s in self.states])


def num_steps(T, dt) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"horizon T={T:g} is not an integer multiple of dt={dt:g}")
    return n


def field_norm(space: FESpace, coef, p, kind="Lp") -> float:
    """``||u||_{L^p}`` or the gradient seminorm ``||grad u||_{L^p}`` of a P2 field."""
    if kind == "Lp":
        mag = np.linalg.norm(space.cell_values(coef), axis=-1)
    elif kind == "W1p":
        g = space.cell_gradients(coef)
        mag = np.sqrt(np.sum(g * g, axis=(-2, -1)))
    else:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    return space.lp_norm(mag, p)


def traj_norm(traj: Trajectory, p, kind="Lp") -> float:
    acc = sum(field_norm(traj.space, s.vbar, p, kind) ** p for s in traj.states[1:])
    return float((traj.dt * acc) ** (1.0 / p))


def traj_distance(a: Trajectory, b: Trajectory, p, kind="Lp") -> float:
    """Composite ``L^p(0,T; X)`` distance, ``X`` the ``L^p`` or ``W^{1,p}`` seminorm."""
    if (
        a.space.num_velocity != b.space.num_velocity
        or a.n_steps != b.n_steps
        or not np.isclose(a.dt, b.dt, rtol=1e-12, atol=0.0)
    ):
        raise ValueError("trajectories live on different space/time grids")
    acc = 0.0
    for sa, sb in zip(a.states[1:], b.states[1:]):
        acc += field_norm(a.space, sa.vbar - sb.vbar, p, kind) ** p
    return float((a.dt * acc) ** (1.0 / p))


def time_loop(space, frozen, data, params, reg, cfg, eps, warm=None) -> Trajectory:
    """March from the zero state to ``data.T``.

    ``frozen`` is the trajectory whose velocity enters the viscosity (``None``
    for the zero trajectory); ``warm`` provides Newton initial guesses.
    """
    n = num_steps(data.T, cfg.dt)
    for other in (frozen, warm):
        if other is not None and other.n_steps != n:
            raise ValueError("frozen/warm trajectory has a different number of steps")
    states = [DiscreteState.zero(space)]
    eta = reg.eta
    for i in range(n):
        fu = None if frozen is None else frozen.states[i + 1].vbar
        guess = None if warm is None else warm.states[i + 1]
        try:
            st = implicit_euler_step(space, states[-1], fu, data, params, reg, cfg, eps, guess=guess, eta=eta)
        except (NewtonDiverged, LinearSolveFailed, FloatingPointError) as exc:
            raise StepFailed(i + 1, exc) from exc
        states.append(st)
        if reg.eta_adapt and st.iterations < 5:
            eta = max(eta / 10.0, reg.eta_floor)
    return Trajectory(space, cfg.dt, states, eps=eps)


def solve_P_u(space, frozen, data, params, reg, cfg, warm=None, on_run=None) -> Trajectory:
    """Run the eps schedule and return the smallest-eps trajectory.

    Each run warm-starts from the previous one.  ``eps_distances`` holds
    ``d_i = dist(traj_i, traj_{i+1})`` in the ``L^p(0,T; W^{1,p})`` metric.
    """
    runs = []
    prev = warm
    for j, eps in enumerate(reg.eps_schedule):
        traj = time_loop(space, frozen, data, params, reg, cfg, eps, warm=prev)
        runs.append((eps, traj))
        if on_run is not None:
            on_run(j, eps, traj)
        prev = traj
    p = params.p
    dists = [traj_distance(a, b, p, "W1p") for (_, a), (_, b) in zip(runs, runs[1:])]
    final = runs[-1][1]
    final.eps_runs = runs
    final.eps_distances = dists
    if dists:
        scale = 1.0 + traj_norm(final, p, "W1p")
        if dists[-1] > 100.0 * reg.picard_tol * scale:
            warnings.warn(
                f"eps schedule not stabilized: last distance {dists[-1]:.3e}", EpsNotStabilized, stacklevel=2
            )
    return final


@dataclass
class PicardReport:
    distances: list
    norms: list  # L^p(0,T; W^{1,p}) norm of every iterate
    thresholds: list
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.distances)


def picard_lambda(space, data, params, reg, cfg, on_iterate=None, on_run=None):
    """Picard iteration ``u^{k+1} = Lambda(u^k)`` from ``u^0 = 0``.

    Stops when ``||u^{k+1} - u^k||_{L^p(L^p)} <= picard_tol (1 + ||u^k||)``.
    ``on_iterate(k, traj, distance)`` and ``on_run(k, j, eps, traj)`` are
    optional hooks for diagnostics output.
    """
    p = params.p
    n = num_steps(data.T, cfg.dt)
    current = Trajectory.zero(space, n, cfg.dt)
    warm = None
    report = PicardReport([], [], [])
    for k in range(1, reg.picard_max + 1):
        hook = None if on_run is None else (lambda j, eps, tr, k=k: on_run(k, j, eps, tr))
        nxt = solve_P_u(space, None if k == 1 else current, data, params, reg, cfg, warm=warm, on_run=hook)
        d = traj_distance(nxt, current, p, "Lp")
        thr = reg.picard_tol * (1.0 + traj_norm(current, p, "Lp"))
        report.distances.append(d)
        report.thresholds.append(thr)
        report.norms.append(traj_norm(nxt, p, "W1p"))
        log.info("picard k=%d distance=%.3e threshold=%.3e", k, d, thr)
        if on_iterate is not None:
            on_iterate(k, nxt, d)
        warm = nxt.eps_runs[0][1] if nxt.eps_runs else nxt
        current = nxt
        if d <= thr:
            report.converged = True
            return current, report
    raise PicardNotConverged(
        f"Picard iteration did not converge in {reg.picard_max} iterations "
        f"(last distance {report.distances[-1]:.3e})",
        report.distances,
        current,
    )


__all__ = [
    "EpsNotStabilized",
    "PicardNotConverged",
    "PicardReport",
    "StepFailed",
    "Trajectory",
    "field_norm",
    "num_steps",
    "picard_lambda",
    "solve_P_u",
    "time_loop",
    "traj_distance",
    "traj_norm",
]
