"""Power-law stress map, its smoothing and splitting, and the convex potential.

Symmetric 2x2 tensors are stored as arrays whose last axis holds the upper
triangle ``(xx, zz, xz)``.  Every function broadcasts over leading axes.

All viscosity families share the closed form

    mu(o, e, d) = mu0 + A(o, e) * d**2 / (1 + d**2),   0 <= A(o, e) <= mu1 - mu0,

so bounds and monotonicity in ``d`` hold by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

_W = np.array([1.0, 1.0, 2.0])


def sym_inner(a, b):
    """Double contraction ``A : B``."""
    return np.sum(np.asarray(a) * np.asarray(b) * _W, axis=-1)


def sym_norm(a):
    """Frobenius norm ``|A|``."""
    return np.sqrt(sym_inner(a, a))


def sym_from_matrix(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 0, 0], m[..., 1, 1], 0.5 * (m[..., 0, 1] + m[..., 1, 0])], axis=-1)


def sym_to_matrix(a):
    a = np.asarray(a, dtype=float)
    return np.stack([np.stack([a[..., 0], a[..., 2]], -1), np.stack([a[..., 2], a[..., 1]], -1)], -2)


# ---------------------------------------------------------------- viscosity laws


class ViscosityLaw:
    mu0: float
    mu1: float

    def amplitude(self, temp, vel):
        """Return ``A(temp, vel)``, the strain-dependent part's weight."""
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ViscosityLaw):
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("constant viscosity must be positive")

    @property
    def mu0(self):
        return self.c

    @property
    def mu1(self):
        return self.c

    def amplitude(self, temp, vel):
        return np.zeros(np.broadcast_shapes(np.shape(temp), np.shape(vel)[:-1]))


@dataclass(frozen=True)
class BoundedIncreasing(ViscosityLaw):
    mu0: float
    mu1: float

    def __post_init__(self):
        if not 0 < self.mu0 <= self.mu1:
            raise ValueError("need 0 < mu0 <= mu1")

    def amplitude(self, temp, vel):
        shape = np.broadcast_shapes(np.shape(temp), np.shape(vel)[:-1])
        return np.full(shape, self.mu1 - self.mu0)


@dataclass(frozen=True)
class ThermoCoupled(ViscosityLaw):
    """Temperature and velocity gate the shear-thickening part through a logistic."""

    mu0: float
    mu1: float
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not 0 < self.mu0 <= self.mu1:
            raise ValueError("need 0 < mu0 <= mu1")

    def amplitude(self, temp, vel):
        speed = np.linalg.norm(np.asarray(vel, dtype=float), axis=-1)
        gate = special.expit(-self.alpha * np.asarray(temp, dtype=float) + self.beta * speed)
        return (self.mu1 - self.mu0) * gate


FAMILIES = {"constant": Constant, "bounded": BoundedIncreasing, "thermo": ThermoCoupled}


@dataclass(frozen=True)
class FluidParams:
    p: float
    mu: ViscosityLaw

    def __post_init__(self):
        if not (6 / 5 <= self.p < 2 or self.p == 2):
            raise ValueError(f"power-law exponent p={self.p} outside [6/5, 2)")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1) if self.p != 1 else np.inf

    @property
    def mu0(self) -> float:
        return self.mu.mu0

    @property
    def mu1(self) -> float:
        return self.mu.mu1


def mu_from_amplitude(mu0, amp, d):
    d2 = np.square(d)
    return mu0 + amp * d2 / (1.0 + d2)


def viscosity(params: FluidParams, temp, vel, d):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("strain modulus d must be nonnegative")
    return mu_from_amplitude(params.mu0, params.mu.amplitude(temp, vel), d)


# ---------------------------------------------------------------- stress maps


def _power(m, e):
    # m**e with m > 0 assumed where used; zeros are masked by callers
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.power(m, e)


def eval_F(params: FluidParams, temp, vel, lam):
    """``2 mu(temp, vel, |lam|) |lam|^(p-2) lam``, and zero at ``lam = 0``."""
    lam = np.asarray(lam, dtype=float)
    d = sym_norm(lam)
    mu = viscosity(params, temp, vel, d)
    scale = np.where(d > 0, 2.0 * mu * _power(np.where(d > 0, d, 1.0), params.p - 2), 0.0)
    return scale[..., None] * lam


def eval_F_eta(params: FluidParams, temp, vel, lam, eta):
    """Smoothed map ``2 mu(m) m^(p-2) lam`` with ``m = sqrt(|lam|^2 + eta^2)``."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta == 0:
        return eval_F(params, temp, vel, lam)
    lam = np.asarray(lam, dtype=float)
    m = np.sqrt(sym_inner(lam, lam) + eta * eta)
    mu = viscosity(params, temp, vel, m)
    return (2.0 * mu * m ** (params.p - 2))[..., None] * lam


def split_F(params: FluidParams, temp, vel, lam):
    """Return ``(F1, F2)`` with ``F1 = mu0 |lam|^(p-2) lam`` and ``F2 = F - F1``.

    ``F2`` carries the reduced viscosity ``mu - mu0/2``, which is still bounded
    below by ``mu0/2`` and nondecreasing in the strain modulus.
    """
    lam = np.asarray(lam, dtype=float)
    d = sym_norm(lam)
    mu = viscosity(params, temp, vel, d)
    pw = np.where(d > 0, _power(np.where(d > 0, d, 1.0), params.p - 2), 0.0)
    f1 = (params.mu0 * pw)[..., None] * lam
    f2 = (2.0 * (mu - 0.5 * params.mu0) * pw)[..., None] * lam
    return f1, f2


def strong_monotonicity_residual(p, mu0, lam, lam2):
    """``(|l|+|l'|)^(2-p) (F1(l)-F1(l')):(l-l') - mu0 (p-1) |l-l'|^2``.

    Nonnegative for every pair when ``1 < p < 2``.
    """
    lam = np.asarray(lam, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    n1, n2 = sym_norm(lam), sym_norm(lam2)

    def f1(x, n):
        pw = np.where(n > 0, _power(np.where(n > 0, n, 1.0), p - 2), 0.0)
        return (mu0 * pw)[..., None] * x

    diff = lam - lam2
    lhs = (n1 + n2) ** (2 - p) * sym_inner(f1(lam, n1) - f1(lam2, n2), diff)
    return lhs - mu0 * (p - 1) * sym_inner(diff, diff)


# ---------------------------------------------------------------- potentials


def potential_phi(params: FluidParams, temp, vel, t) -> float:
    """``Phi(t) = int_0^t 2 mu(temp, vel, s) s^(p-1) ds`` by adaptive quadrature.

    Scalar version; see :func:`potential_closed` for the vectorised form used
    inside energy functionals.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    amp = float(np.asarray(params.mu.amplitude(temp, vel)))
    mu0, p = params.mu0, params.p
    val, _ = integrate.quad(
        lambda s: 2.0 * mu_from_amplitude(mu0, amp, s) * s ** (p - 1),
        0.0,
        t,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return val


def potential_closed(p, mu0, amp, t):
    """Closed form of ``Phi`` for ``mu = mu0 + amp d^2/(1+d^2)``.

    Writing ``mu = (mu0 + amp) - amp / (1 + s^2)`` and substituting
    ``w = s^2 / (1 + s^2)`` turns the remaining integral into an incomplete
    beta function.
    """
    t = np.asarray(t, dtype=float)
    amp = np.asarray(amp, dtype=float)
    tp = t**p
    if p == 2:
        tail = 0.5 * np.log1p(t * t)
    else:
        a, b = 0.5 * p, 1.0 - 0.5 * p
        w = t * t / (1.0 + t * t)
        tail = 0.5 * special.beta(a, b) * special.betainc(a, b, w)
    return 2.0 * (mu0 + amp) * tp / p - 2.0 * amp * tail


def psi_delta(z, delta):
    """Huber-root ``sqrt(z^2 + delta^2) - delta``, a smooth surrogate of ``|z|``."""
    z = np.asarray(z, dtype=float)
    return np.hypot(z, delta) - delta


def dpsi_delta(z, delta):
    z = np.asarray(z, dtype=float)
    return z / np.hypot(z, delta)


def d2psi_delta(z, delta):
    z = np.asarray(z, dtype=float)
    r = np.hypot(z, delta)
    return delta * delta / (r * r * r)
