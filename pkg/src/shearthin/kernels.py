"""Element kernels for the nonlinear viscous term.

The compiled extension ``shearthin._kernels`` is used when it was built;
otherwise (or with ``SHEARTHIN_PURE=1`` in the environment) the vectorised
numpy version below is selected at import time.  Both take the same arrays:

G      (nc, nq, 12, 3)  Voigt strain of every local basis function
w      (nc, nq)         physical quadrature weights
ctot   (nc, 12)         element coefficients of vbar + lift
cbar   (nc, 12)         element coefficients of vbar
amp    (nc, nq)         viscosity amplitude A at each point

and return the element residuals ``(nc, 12)`` and Jacobians ``(nc, 12, 12)``.
"""
from __future__ import annotations

import os

import numpy as np

_VOIGT = np.array([1.0, 1.0, 2.0])


def viscous_element_numpy(G, w, ctot, cbar, amp, mu0, p, eps, pc, eta, jacobian=True):
    Gw = G * _VOIGT
    D = np.einsum("cqai,ca->cqi", G, ctot)
    m2 = np.einsum("cqi,cqi->cq", D * _VOIGT, D) + eta * eta
    m = np.sqrt(m2)
    mu = mu0 + amp * m2 / (1.0 + m2)  # mu(m): the smoothed modulus enters mu too
    mp2 = m ** (p - 2)
    a = 2.0 * mu * mp2
    DG = np.einsum("cqai,cqi->cqa", Gw, D)
    coef = w * a
    re = np.einsum("cq,cqa->ca", coef, DG)

    has_eps = eps > 0
    if has_eps:
        Db = np.einsum("cqai,ca->cqi", G, cbar)
        mb2 = np.einsum("cqi,cqi->cq", Db * _VOIGT, Db) + eta * eta
        mb = np.sqrt(mb2)
        b = 2.0 * eps * mb ** (pc - 2)
        DbG = np.einsum("cqai,cqi->cqa", Gw, Db)
        re += np.einsum("cq,cqa->ca", w * b, DbG)
    if not jacobian:
        return re, None

    # d/dD [a(m) D] = a I + (a'(m)/m) D (x) D
    mud_over_m = 2.0 * amp / (1.0 + m2) ** 2
    c2 = 2.0 * mud_over_m * mp2
    if p != 2:
        c2 = c2 + 2.0 * (p - 2) * mu * mp2 / m2
    lin = coef
    ke = np.einsum("cq,cqai,cqbi->cab", lin, Gw, G)
    ke += np.einsum("cq,cqa,cqb->cab", w * c2, DG, DG)
    if has_eps:
        ke += np.einsum("cq,cqai,cqbi->cab", w * b, Gw, G)
        if pc != 2:
            cb2 = 2.0 * eps * (pc - 2) * mb ** (pc - 4)
            ke += np.einsum("cq,cqa,cqb->cab", w * cb2, DbG, DbG)
    return re, ke


def _load_compiled():
    if os.environ.get("SHEARTHIN_PURE"):
        return None
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "numpy"


def viscous_element(G, w, ctot, cbar, amp, mu0, p, eps, pc, eta, jacobian=True):
    if _compiled is None:
        return viscous_element_numpy(G, w, ctot, cbar, amp, mu0, p, eps, pc, eta, jacobian)
    return _compiled.viscous_element(
        np.ascontiguousarray(G, dtype=float),
        np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(ctot, dtype=float),
        np.ascontiguousarray(cbar, dtype=float),
        np.ascontiguousarray(amp, dtype=float),
        float(mu0), float(p), float(eps), float(pc), float(eta), bool(jacobian),
    )
