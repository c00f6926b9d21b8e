# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element loop for the viscous residual and Jacobian."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()


cdef inline double _dot3(double a0, double a1, double a2, double b0, double b1, double b2) nogil:
    return a0 * b0 + a1 * b1 + 2.0 * a2 * b2


def viscous_element(const double[:, :, :, ::1] G, const double[:, ::1] w,
                    const double[:, ::1] ctot, const double[:, ::1] cbar,
                    const double[:, ::1] amp, double mu0, double p, double eps,
                    double pc, double eta, bint jacobian=True):
    cdef Py_ssize_t nc = G.shape[0], nq = G.shape[1]
    cdef Py_ssize_t c, q, a, b, i
    cdef double D[3]
    cdef double Db[3]
    cdef double DG[12]
    cdef double DbG[12]
    cdef double m2, m, mu, mp2, av, wq, c2, mb2, mb, bv, cb2, gg
    cdef bint has_eps = eps > 0
    cdef double eta2 = eta * eta

    re_arr = np.zeros((nc, 12))
    cdef Py_ssize_t nk = nc if jacobian else 0
    ke_arr = np.zeros((nk, 12, 12))
    cdef double[:, ::1] re = re_arr
    cdef double[:, :, ::1] ke = ke_arr

    with nogil:
        for c in range(nc):
            for q in range(nq):
                wq = w[c, q]
                for i in range(3):
                    D[i] = 0.0
                    Db[i] = 0.0
                for a in range(12):
                    for i in range(3):
                        D[i] += G[c, q, a, i] * ctot[c, a]
                        Db[i] += G[c, q, a, i] * cbar[c, a]
                m2 = _dot3(D[0], D[1], D[2], D[0], D[1], D[2]) + eta2
                m = sqrt(m2)
                mu = mu0 + amp[c, q] * m2 / (1.0 + m2)
                mp2 = pow(m, p - 2.0)
                av = 2.0 * mu * mp2
                for a in range(12):
                    DG[a] = _dot3(D[0], D[1], D[2], G[c, q, a, 0], G[c, q, a, 1], G[c, q, a, 2])
                    re[c, a] += wq * av * DG[a]
                bv = 0.0
                cb2 = 0.0
                for a in range(12):
                    DbG[a] = 0.0
                if has_eps:
                    mb2 = _dot3(Db[0], Db[1], Db[2], Db[0], Db[1], Db[2]) + eta2
                    mb = sqrt(mb2)
                    bv = 2.0 * eps * pow(mb, pc - 2.0)
                    if pc != 2.0:
                        cb2 = 2.0 * eps * (pc - 2.0) * pow(mb, pc - 4.0)
                    for a in range(12):
                        DbG[a] = _dot3(Db[0], Db[1], Db[2], G[c, q, a, 0], G[c, q, a, 1], G[c, q, a, 2])
                        re[c, a] += wq * bv * DbG[a]
                if not jacobian:
                    continue
                c2 = 4.0 * amp[c, q] / ((1.0 + m2) * (1.0 + m2)) * mp2
                if p != 2.0:
                    c2 = c2 + 2.0 * (p - 2.0) * mu * mp2 / m2
                for a in range(12):
                    for b in range(a, 12):
                        gg = _dot3(G[c, q, a, 0], G[c, q, a, 1], G[c, q, a, 2],
                                   G[c, q, b, 0], G[c, q, b, 1], G[c, q, b, 2])
                        ke[c, a, b] += wq * ((av + bv) * gg + c2 * DG[a] * DG[b] + cb2 * DbG[a] * DbG[b])
            if jacobian:
                for a in range(12):
                    for b in range(a + 1, 12):
                        ke[c, b, a] = ke[c, a, b]
    return re_arr, (ke_arr if jacobian else None)
