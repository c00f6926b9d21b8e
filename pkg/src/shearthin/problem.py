"""Problem data and the builtin scenarios.

Every scenario supplies a lift ``v0`` that is divergence free, vanishes on the
top wall, matches the lateral data ``g`` and is tangential on the bottom, so
the shifted unknown ``vbar = v - v0 xi`` has homogeneous boundary values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import ThinDomain

XI_FAMILIES = ("one", "exp", "linear")


@dataclass(frozen=True)
class XiLaw:
    """Time modulation of the lateral data.

    ``one``: ``initial``; ``exp``: ``initial * exp(-rate t)``;
    ``linear``: ``initial + rate t``.
    """

    family: str = "one"
    rate: float = 0.0
    initial: float = 1.0

    def __post_init__(self):
        if self.family not in XI_FAMILIES:
            raise ValueError(f"unknown xi family {self.family!r}; expected one of {XI_FAMILIES}")

    def __call__(self, t):
        if self.family == "one":
            return self.initial
        if self.family == "exp":
            return self.initial * np.exp(-self.rate * t)
        return self.initial + self.rate * t

    def derivative(self, t):
        if self.family == "one":
            return 0.0
        if self.family == "exp":
            return -self.rate * self.initial * np.exp(-self.rate * t)
        return self.rate


def _zero_vec(*xs):
    shape = np.broadcast_shapes(*(np.shape(a) for a in xs))
    return np.zeros(shape + (2,))


def _zero_scalar(*xs):
    return np.zeros(np.broadcast_shapes(*(np.shape(a) for a in xs)))


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Given fields of the flow problem.

    Call signatures: ``f(t, x, z)``, ``theta(t, x, z)``, ``k(t, x)``,
    ``s(t, x)``, ``v0(x, z)``, ``xi(t)``, ``dxi(t)``.  Vector fields return
    arrays with a trailing axis of length 2.
    """

    f: Callable = _zero_vec
    theta: Callable = _zero_scalar
    k: Callable = _zero_scalar
    s: Callable = _zero_scalar
    v0: Callable = _zero_vec
    xi: Callable = XiLaw()
    dxi: Callable | None = None
    T: float = 1.0
    name: str = "custom"
    exact: Callable | None = None  # (t, x, z) -> velocity, when known

    def __post_init__(self):
        if self.dxi is None:
            if not isinstance(self.xi, XiLaw):
                raise ValueError("dxi is required when xi is not an XiLaw")
            object.__setattr__(self, "dxi", self.xi.derivative)
        xi0 = float(self.xi(0.0))
        if abs(xi0 - 1.0) > 1e-14:
            raise ValueError(f"xi(0) = {xi0:g}, but the modulation must satisfy xi(0) = 1")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")

    def g(self, x, z):
        """Lateral Dirichlet profile (the lift's trace)."""
        return self.v0(x, z)

    def fbar(self, t, x, z):
        return np.asarray(self.f(t, x, z)) + self.dxi(t) * np.asarray(self.v0(x, z))

    def check_friction(self, xs, times) -> None:
        for t in times:
            if np.any(np.asarray(self.k(t, np.asarray(xs))) < 0):
                raise ValueError(f"friction threshold k must be nonnegative (violated at t={t:g})")


def _const_vec(fx, fz):
    def f(t, x, z):
        shape = np.broadcast_shapes(np.shape(x), np.shape(z))
        out = np.empty(shape + (2,))
        out[..., 0] = fx
        out[..., 1] = fz
        return out

    return f


def _const_scalar(value):
    def g(t, x, *rest):
        return np.full(np.shape(x), float(value))

    return g


def zero_data(T=1.0, k=1.0) -> ProblemData:
    """No forcing, no lift, no wall motion; the solution is identically zero."""
    return ProblemData(k=_const_scalar(k), T=T, name="zero")


def couette_lift(U, h0):
    def v0(x, z):
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        out = np.zeros(x.shape + (2,))
        out[..., 0] = U * (1.0 - z / h0)
        return out

    return v0


def couette_data(domain: ThinDomain, U=1.0, k=0.5, s=0.0, fx=0.0, fz=0.0, xi=XiLaw(), T=1.0) -> ProblemData:
    """Shear lift ``v0 = (U (1 - z/h0), 0)`` on a film of constant thickness."""
    if domain.profile != "constant":
        raise ValueError("couette scenario requires a constant thickness profile")
    return ProblemData(
        f=_const_vec(fx, fz),
        k=_const_scalar(k),
        s=_const_scalar(s),
        v0=couette_lift(U, domain.h0),
        xi=xi,
        T=T,
        name="couette",
    )


def coupled_data(domain: ThinDomain, U=1.0, k=0.5, s=0.0, theta0=1.0, fx=0.0, fz=0.0, xi=XiLaw(), T=1.0):
    """Couette setting with the prescribed temperature ``theta0 * z * exp(-t)``."""
    base = couette_data(domain, U=U, k=k, s=s, fx=fx, fz=fz, xi=xi, T=T)

    def theta(t, x, z):
        return theta0 * np.asarray(z, dtype=float) * np.exp(-t) * np.ones_like(np.asarray(x, dtype=float))

    return ProblemData(
        f=base.f, theta=theta, k=base.k, s=base.s, v0=base.v0, xi=xi, T=T, name="coupled"
    )


# --- manufactured solution for p = 2, mu = c, k = 0 on (0, L) x (0, 1) ------
# stream function psi = t x^2 (L-x)^2 z (1-z)^2 (1+2z), pressure
# pi = t (x - L/2)(z - 1/2); the velocity vanishes on the top and lateral
# walls, is tangential with zero shear stress on the bottom.  The forcing
# f = u_t - div(2 c D(u)) + grad(pi) was generated with sympy.


def mms_velocity(t, x, z, L):
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    out = np.empty(x.shape + (2,))
    out[..., 0] = t * x**2 * (x - L) ** 2 * (z - 1) * (8 * z**2 - z - 1)
    out[..., 1] = -2 * t * x * z * (x - L) * (2 * x - L) * (z - 1) ** 2 * (2 * z + 1)
    return out


def mms_pressure(t, x, z, L):
    return 0.25 * t * (2 * x - L) * (2 * z - 1)


def mms_forcing(t, x, z, L, c):
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    out = np.empty(x.shape + (2,))
    out[..., 0] = 0.5 * (
        -96 * L**2 * c * t * x**2 * z + 36 * L**2 * c * t * x**2 - 32 * L**2 * c * t * z**3
        + 36 * L**2 * c * t * z**2 - 4 * L**2 * c * t + 16 * L**2 * x**2 * z**3 - 18 * L**2 * x**2 * z**2
        + 2 * L**2 * x**2 + 192 * L * c * t * x**3 * z - 72 * L * c * t * x**3 + 192 * L * c * t * x * z**3
        - 216 * L * c * t * x * z**2 + 24 * L * c * t * x - 32 * L * x**3 * z**3 + 36 * L * x**3 * z**2
        - 4 * L * x**3 - 96 * c * t * x**4 * z + 36 * c * t * x**4 - 192 * c * t * x**2 * z**3
        + 216 * c * t * x**2 * z**2 - 24 * c * t * x**2 + 2 * t * z - t + 16 * x**4 * z**3
        - 18 * x**4 * z**2 + 2 * x**4
    )
    out[..., 1] = -0.5 * (2 * x - L) * (
        96 * L * c * t * x * z**2 - 72 * L * c * t * x * z - 8 * L * x * z**4 + 12 * L * x * z**3
        - 4 * L * x * z - 96 * c * t * x**2 * z**2 + 72 * c * t * x**2 * z - 48 * c * t * z**4
        + 72 * c * t * z**3 - 24 * c * t * z - t + 8 * x**2 * z**4 - 12 * x**2 * z**3 + 4 * x**2 * z
    )
    return out


def mms_data(domain: ThinDomain, c=1.0, T=0.2) -> ProblemData:
    if domain.profile != "constant" or domain.h0 != 1.0:
        raise ValueError("mms-p2 scenario is posed on a flat film of unit thickness")
    L = domain.L
    return ProblemData(
        f=lambda t, x, z: mms_forcing(t, x, z, L, c),
        T=T,
        name="mms-p2",
        exact=lambda t, x, z: mms_velocity(t, x, z, L),
    )


SCENARIOS = ("zero", "couette", "coupled", "mms-p2")
