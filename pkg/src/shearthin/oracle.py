"""Brute-force reference for a single implicit-Euler step.

The step is posed as a convex minimization over the discrete divergence-free
subspace and solved by first-order methods.  Nothing here reuses the main
assembly path: the node numbering, shape functions, quadrature tables,
constraint detection and the viscous potential are all rebuilt locally.

Velocity vectors inside an instance are component-blocked
``[u_x(node_0..node_n), u_z(node_0..node_n)]``; ``gather``/``export`` convert
from/to any other nodal ordering by matching node coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, special

MAX_FREE = 200


class TooLarge(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    def __init__(self, message, velocity, energy, gap):
        super().__init__(message)
        self.velocity = velocity
        self.energy = energy
        self.gap = gap


# ------------------------------------------------------------------ quadrature


def collapsed_gauss(n=4):
    """Conical product rule on the reference triangle, exact to degree ``2n - 1``."""
    xj, wj = special.roots_jacobi(n, 1.0, 0.0)  # weight (1 - x)
    xl, wl = np.polynomial.legendre.leggauss(n)
    u, wu = 0.5 * (1 + xj), wj / 4.0
    v, wv = 0.5 * (1 + xl), wl / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1 - U)).ravel()])
    w = np.outer(wu, wv).ravel()
    return pts, w  # weights sum to 1/2


def _moments_rule():
    """Solve the moment equations for the two-orbit 6-point degree-4 rule."""
    ref_pts, ref_w = collapsed_gauss(4)

    def exact(i, j):
        return np.sum(ref_w * ref_pts[:, 0] ** i * ref_pts[:, 1] ** j)

    def build(a1, w1, a2, w2):
        orbit = lambda a: np.array([[a, a], [1 - 2 * a, a], [a, 1 - 2 * a]])
        return np.vstack([orbit(a1), orbit(a2)]), np.r_[[w1] * 3, [w2] * 3]

    mons = [(0, 0), (2, 0), (3, 0), (4, 0)]

    def eqs(z):
        pts, w = build(*z)
        return [np.sum(w * pts[:, 0] ** i * pts[:, 1] ** j) - exact(i, j) for i, j in mons]

    z = optimize.fsolve(eqs, [0.45, 0.11, 0.09, 0.05], xtol=1e-13)
    pts, w = build(*z)
    for i in range(5):
        for j in range(5 - i):
            if abs(np.sum(w * pts[:, 0] ** i * pts[:, 1] ** j) - exact(i, j)) > 1e-14:
                raise RuntimeError("moment solve for the 6-point rule failed")
    return pts, w


PTS6, W6 = collapsed_gauss(4)
PTS4, W4 = _moments_rule()
_XE, _WE = np.polynomial.legendre.leggauss(3)
EDGE_S, EDGE_W = 0.5 * (1 + _XE), 0.5 * _WE


# ------------------------------------------------------------- shape functions

_REF_NODES = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float)


def _mono(x, y):
    return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)


def _mono_dx(x, y):
    z, o = np.zeros_like(x), np.ones_like(x)
    return np.stack([z, o, z, 2 * x, y, z], axis=-1)


def _mono_dy(x, y):
    z, o = np.zeros_like(x), np.ones_like(x)
    return np.stack([z, z, o, z, x, 2 * y], axis=-1)


_COEF = np.linalg.inv(_mono(_REF_NODES[:, 0], _REF_NODES[:, 1]))  # column k = shape fn k


def shape(pts):
    x, y = pts[:, 0], pts[:, 1]
    return _mono(x, y) @ _COEF, _mono_dx(x, y) @ _COEF, _mono_dy(x, y) @ _COEF


# ------------------------------------------------------------------- instance


def _interpolate(fn, pts):
    return np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float).reshape(len(pts), 2)


@dataclass(eq=False)
class DenseInstance:
    nodes: np.ndarray  # (nn, 2)
    free: np.ndarray  # indices into the blocked 2*nn vector
    C: np.ndarray  # (npr, nfree) divergence constraint on free unknowns
    N: np.ndarray  # orthonormal basis of ker C
    P: np.ndarray  # projector N N^T
    mass: np.ndarray  # (2nn, 2nn) blocked mass matrix
    # degree-4 volume tables
    w: np.ndarray
    val: np.ndarray
    dx: np.ndarray
    dz: np.ndarray
    amp: np.ndarray
    fbar: np.ndarray  # (Q, 2) at volume points
    lift: np.ndarray  # blocked coefficients of v0 xi(t)
    # Gamma0 tables
    wb: np.ndarray
    valb: np.ndarray
    kb: np.ndarray
    s_tilde: np.ndarray
    # step data
    prev: np.ndarray
    p: float
    mu0: float
    eps: float
    eta: float
    delta: float
    dt: float
    sigma: float  # strong-convexity modulus from the inertia term

    @property
    def nn(self):
        return len(self.nodes)

    @property
    def num_free(self):
        return len(self.free)

    @property
    def nonsmooth(self) -> bool:
        return self.delta <= 1e-6

    # -- ordering conversion
    def _match(self, ext_nodes):
        ext = np.asarray(ext_nodes, dtype=float)
        if ext.shape != self.nodes.shape:
            raise ValueError("node sets differ in size")
        key = lambda a: np.lexsort((np.round(a[:, 1], 12), np.round(a[:, 0], 12)))
        io, ie = key(self.nodes), key(ext)
        if np.max(np.abs(self.nodes[io] - ext[ie])) > 1e-10:
            raise ValueError("node coordinates do not match")
        perm = np.empty(self.nn, dtype=np.int64)
        perm[io] = ie
        return perm  # own node i <-> external node perm[i]

    def gather(self, ext_nodes, coef):
        """Blocked vector from interleaved coefficients on ``ext_nodes``."""
        perm = self._match(ext_nodes)
        c = np.asarray(coef, dtype=float).reshape(-1, 2)[perm]
        return np.concatenate([c[:, 0], c[:, 1]])

    def export(self, ext_nodes, v):
        perm = self._match(ext_nodes)
        out = np.zeros((self.nn, 2))
        out[perm, 0] = v[: self.nn]
        out[perm, 1] = v[self.nn:]
        return out.ravel()

    def full(self, vf):
        v = np.zeros(2 * self.nn)
        v[self.free] = vf
        return v

    # -- energy
    def _strain(self, v):
        ux, uz = v[: self.nn], v[self.nn:]
        exx, ezz = self.dx @ ux, self.dz @ uz
        exz = 0.5 * (self.dz @ ux + self.dx @ uz)
        return exx, ezz, exz

    def _phi(self, t):
        return potential_gj(self.p, self.mu0, self.amp, t)

    def energy(self, vf) -> float:
        v = self.full(vf)
        dv = v - self.prev
        e = 0.5 * dv @ self.mass @ dv / self.dt
        exx, ezz, exz = self._strain(v + self.lift)
        m = np.sqrt(exx**2 + ezz**2 + 2 * exz**2 + self.eta**2)
        e += self.w @ (self._phi(m) - self._phi(np.full_like(m, self.eta)))
        if self.eps > 0:
            bxx, bzz, bxz = self._strain(v)
            mb = np.sqrt(bxx**2 + bzz**2 + 2 * bxz**2 + self.eta**2)
            pc = self.p / (self.p - 1)
            e += 2 * self.eps / pc * (self.w @ (mb**pc - self.eta**pc))
        z = self.valb @ v[: self.nn] - self.s_tilde
        fr = np.abs(z) if self.nonsmooth else np.sqrt(z * z + self.delta**2) - self.delta
        e += self.wb @ (self.kb * fr)
        ux, uz = v[: self.nn], v[self.nn:]
        e -= self.w @ (self.fbar[:, 0] * (self.val @ ux) + self.fbar[:, 1] * (self.val @ uz))
        return float(e)

    def gradient(self, vf) -> np.ndarray:
        """Gradient (a subgradient in nonsmooth mode) over the free unknowns."""
        v = self.full(vf)
        nn = self.nn
        g = self.mass @ (v - self.prev) / self.dt
        exx, ezz, exz = self._strain(v + self.lift)
        m2 = exx**2 + ezz**2 + 2 * exz**2 + self.eta**2
        mu = self.mu0 + self.amp * m2 / (1 + m2)
        a = self.w * 2 * mu * np.sqrt(m2) ** (self.p - 2)
        gx = self.dx.T @ (a * exx) + self.dz.T @ (a * exz)
        gz = self.dz.T @ (a * ezz) + self.dx.T @ (a * exz)
        if self.eps > 0:
            bxx, bzz, bxz = self._strain(v)
            mb2 = bxx**2 + bzz**2 + 2 * bxz**2 + self.eta**2
            pc = self.p / (self.p - 1)
            b = self.w * 2 * self.eps * np.sqrt(mb2) ** (pc - 2)
            gx += self.dx.T @ (b * bxx) + self.dz.T @ (b * bxz)
            gz += self.dz.T @ (b * bzz) + self.dx.T @ (b * bxz)
        z = self.valb @ v[:nn] - self.s_tilde
        dfr = np.sign(z) if self.nonsmooth else z / np.sqrt(z * z + self.delta**2)
        gx += self.valb.T @ (self.wb * self.kb * dfr)
        gx -= self.val.T @ (self.w * self.fbar[:, 0])
        gz -= self.val.T @ (self.w * self.fbar[:, 1])
        g[:nn] += gx
        g[nn:] += gz
        return g[self.free]


def potential_gj(p, mu0, amp, t, n=60):
    """``int_0^t 2 mu(s) s^(p-1) ds`` by Gauss-Jacobi quadrature.

    ``mu(s) = mu0 + amp s^2/(1+s^2)``; after ``s = t u`` the weight
    ``u^(p-1)`` is absorbed by the rule.  For ``t > 1`` the tail beyond
    ``u = 1/t`` is integrated with Gauss-Legendre panels on a geometric grid.
    """
    t = np.asarray(t, dtype=float)
    amp = np.broadcast_to(np.asarray(amp, dtype=float), t.shape)
    xj, wj = special.roots_jacobi(n, 0.0, p - 1.0)
    u, wu = 0.5 * (1 + xj), wj * 0.5**p

    def mu(s, a):
        return mu0 + a * s * s / (1 + s * s)

    out = np.empty_like(t)
    small = t <= 1.0
    ts, As = t[small], amp[small]
    out[small] = 2 * ts**p * (mu(ts[:, None] * u, As[:, None]) @ wu)
    big = ~small
    if np.any(big):
        tb, Ab = t[big], amp[big]
        # [0, 1]: unit interval in s
        acc = 2 * (mu(u[None, :] * np.ones((len(tb), 1)), Ab[:, None]) @ wu)
        xl, wl = np.polynomial.legendre.leggauss(30)
        lo = np.ones_like(tb)
        while np.any(lo < tb):
            hi = np.minimum(2 * lo, tb)
            half = 0.5 * (hi - lo)
            s = (0.5 * (hi + lo))[:, None] + half[:, None] * xl
            f = 2 * mu(s, Ab[:, None]) * s ** (p - 1)
            acc += np.where(lo < tb, half * (f @ wl), 0.0)
            lo = hi
        out[big] = acc
    return out


def _mesh_edges(mesh):
    edges = {}
    for cell in mesh.cells:
        for a in range(3):
            for b in range(a + 1, 3):
                key = (min(cell[a], cell[b]), max(cell[a], cell[b]))
                edges.setdefault(key, len(edges))
    return edges


def make_instance(mesh, data, params, prev_nodes, prev_vbar, t, dt, eps, eta, delta, frozen_u=None):
    """Build the dense single-step problem at time level ``t``.

    ``prev_vbar`` and ``frozen_u`` are interleaved nodal coefficients on
    ``prev_nodes`` (matched to the local nodes by coordinates).
    """
    verts = np.asarray(mesh.vertices, dtype=float)
    cells = np.asarray(mesh.cells, dtype=np.int64)
    nv = len(verts)
    edges = _mesh_edges(mesh)
    nodes = np.vstack([verts, np.array([0.5 * (verts[i] + verts[j]) for i, j in edges])])
    nn = len(nodes)
    # local node order matches _REF_NODES: vertices, then edges (0,1), (1,2), (0,2)
    loc = np.empty((len(cells), 6), dtype=np.int64)
    loc[:, :3] = cells
    for c, cell in enumerate(cells):
        for k, (a, b) in enumerate(((0, 1), (1, 2), (0, 2))):
            i, j = cell[a], cell[b]
            loc[c, 3 + k] = nv + edges[(min(i, j), max(i, j))]

    # constraints from tagged facets
    full_fix = np.zeros(nn, dtype=bool)
    z_fix = np.zeros(nn, dtype=bool)
    bottom = []
    for (i, j), tag in zip(np.asarray(mesh.facets), mesh.facet_tags):
        mid = nv + edges[(min(i, j), max(i, j))]
        trio = [i, j, mid]
        if tag == "Gamma0":
            z_fix[trio] = True
            bottom.append((i, j, mid))
        else:
            full_fix[trio] = True
    fixed = np.concatenate([full_fix, full_fix | z_fix])
    free = np.flatnonzero(~fixed)
    if len(free) > MAX_FREE:
        raise TooLarge(f"{len(free)} free unknowns exceed the oracle cap of {MAX_FREE}")

    # volume tables
    def tables(pts, wts):
        vals, dxi, deta = shape(pts)
        nq = len(pts)
        Q = len(cells) * nq
        W = np.zeros(Q)
        V = np.zeros((Q, nn))
        DX = np.zeros((Q, nn))
        DZ = np.zeros((Q, nn))
        X = np.zeros((Q, 2))
        for c, cell in enumerate(cells):
            p0, p1, p2 = verts[cell]
            J = np.column_stack([p1 - p0, p2 - p0])
            det = np.linalg.det(J)
            Jit = np.linalg.inv(J).T
            rows = slice(c * nq, (c + 1) * nq)
            W[rows] = wts * det
            X[rows] = p0 + pts @ J.T
            for a in range(6):
                V[rows, loc[c, a]] += vals[:, a]
                grad = np.column_stack([dxi[:, a], deta[:, a]]) @ Jit.T
                DX[rows, loc[c, a]] += grad[:, 0]
                DZ[rows, loc[c, a]] += grad[:, 1]
        return W, V, DX, DZ, X

    W6t, V6, DX6, DZ6, _ = tables(PTS6, W6)
    Mb = V6.T @ (W6t[:, None] * V6)
    mass = np.zeros((2 * nn, 2 * nn))
    mass[:nn, :nn] = Mb
    mass[nn:, nn:] = Mb

    # pressure P1 hats at the degree-6 points
    npt = len(PTS6)
    lam = np.column_stack([1 - PTS6[:, 0] - PTS6[:, 1], PTS6[:, 0], PTS6[:, 1]])
    Cfull = np.zeros((nv, 2 * nn))
    for c, cell in enumerate(cells):
        rows = slice(c * npt, (c + 1) * npt)
        for a in range(3):
            q = lam[:, a] * W6t[rows]
            Cfull[cell[a], :nn] += q @ DX6[rows]
            Cfull[cell[a], nn:] += q @ DZ6[rows]
    C = Cfull[:, free]
    sv = np.linalg.svd(C, compute_uv=False)
    rank = int(np.sum(sv > 1e-12 * sv[0])) if len(sv) else 0
    if rank != nv - 1:
        raise ValueError(f"divergence constraint has rank {rank}, expected {nv - 1}")
    N = linalg.null_space(C, rcond=1e-12)
    P = N @ N.T

    w, val, dx, dz, X = tables(PTS4, W4)
    xi_t = float(data.xi(t))
    v0n = _interpolate(data.v0, nodes)
    lift = np.concatenate([v0n[:, 0], v0n[:, 1]]) * xi_t
    temp = np.asarray(data.theta(t, X[:, 0], X[:, 1]), dtype=float) * np.ones(len(X))
    speed_field = lift.copy()
    if frozen_u is not None:
        speed_field = speed_field + DenseInstance.gather(_Proxy(nodes), prev_nodes, frozen_u)
    vel = np.column_stack([val @ speed_field[:nn], val @ speed_field[nn:]])
    amp = np.asarray(params.mu.amplitude(temp, vel), dtype=float) * np.ones(len(X))
    f = np.asarray(data.f(t, X[:, 0], X[:, 1]), dtype=float).reshape(len(X), 2)
    v0q = np.asarray(data.v0(X[:, 0], X[:, 1]), dtype=float).reshape(len(X), 2)
    fbar = f + float(data.dxi(t)) * v0q

    # Gamma0 tables (x-component trace, quadratic along the edge)
    nb = len(bottom) * len(EDGE_S)
    wb, valb, xb = np.zeros(nb), np.zeros((nb, nn)), np.zeros(nb)
    trace = np.column_stack([(1 - EDGE_S) * (1 - 2 * EDGE_S), EDGE_S * (2 * EDGE_S - 1), 4 * EDGE_S * (1 - EDGE_S)])
    for e, (i, j, mid) in enumerate(bottom):
        rows = slice(e * len(EDGE_S), (e + 1) * len(EDGE_S))
        wb[rows] = EDGE_W * np.linalg.norm(verts[j] - verts[i])
        xb[rows] = verts[i, 0] + EDGE_S * (verts[j, 0] - verts[i, 0])
        for a, node in enumerate((i, j, mid)):
            valb[rows, node] += trace[:, a]
    kb = np.asarray(data.k(t, xb), dtype=float) * np.ones(nb)
    s_tilde = np.asarray(data.s(t, xb), dtype=float) * np.ones(nb) - valb @ lift[:nn]

    prev = DenseInstance.gather(_Proxy(nodes), prev_nodes, prev_vbar)
    Mr = N.T @ mass[np.ix_(free, free)] @ N
    sigma = float(np.linalg.eigvalsh(Mr).min() / dt) if N.shape[1] else 1.0 / dt
    return DenseInstance(
        nodes=nodes, free=free, C=C, N=N, P=P, mass=mass,
        w=w, val=val, dx=dx, dz=dz, amp=amp, fbar=fbar, lift=lift,
        wb=wb, valb=valb, kb=kb, s_tilde=s_tilde, prev=prev,
        p=float(params.p), mu0=float(params.mu0), eps=float(eps), eta=float(eta),
        delta=float(delta), dt=float(dt), sigma=sigma,
    )


class _Proxy:
    """Minimal stand-in so ``gather`` can run before the instance exists."""

    def __init__(self, nodes):
        self.nodes = nodes
        self.nn = len(nodes)

    def _match(self, ext_nodes):
        return DenseInstance._match(self, ext_nodes)


# ------------------------------------------------------------------- solvers


@dataclass
class OracleResult:
    velocity: np.ndarray  # blocked full vector
    energy: float
    pg_norm: float
    grad_norm: float
    iterations: int
    certified: bool
    gap: float  # bound on energy - min energy from strong convexity


def _certificate(inst, y):
    vf = inst.N @ y
    g = inst.gradient(vf)
    pg = np.linalg.norm(inst.N.T @ g)
    return pg, np.linalg.norm(g)


def oracle_step(inst: DenseInstance, budget=1_000_000, subgradient_iters=2000, rtol=1e-8) -> OracleResult:
    """Minimize the incremental energy over ``{C v = 0}``.

    Phase 1 is projected subgradient descent with a Polyak step towards a
    shrinking target below the best value found.  Phase 2 polishes with
    projected gradient steps of Barzilai-Borwein length under a nonmonotone
    Armijo safeguard, until ``||P g|| <= rtol (1 + ||g||)``.
    """
    N = inst.N
    if N.shape[1] == 0:
        v = inst.full(np.zeros(inst.num_free))
        return OracleResult(v, inst.energy(np.zeros(inst.num_free)), 0.0, 0.0, 0, True, 0.0)
    E = lambda y: inst.energy(N @ y)
    G = lambda y: N.T @ inst.gradient(N @ y)

    y = N.T @ inst.prev[inst.free]
    fy = E(y)
    best_y, best_f = y.copy(), fy
    gap0 = None
    it = 0
    # phase 1: Polyak-type projected subgradient
    for k in range(min(subgradient_iters, budget)):
        g = G(y)
        gn2 = g @ g
        if gn2 == 0.0:
            break
        if gap0 is None:
            gap0 = 0.5 * gn2 / inst.sigma  # strong-convexity bound on f(y0) - f*
        target = best_f - gap0 / (k + 1)
        y = y - (fy - target) / gn2 * g
        fy = E(y)
        it += 1
        if fy < best_f:
            best_y, best_f = y.copy(), fy
    y, fy = best_y.copy(), best_f

    if inst.nonsmooth:
        pg, gn = _certificate(inst, y)
        return OracleResult(inst.full(N @ y), fy, pg, gn, it, False, np.inf)

    # phase 2: BB projected gradient
    g = G(y)
    alpha = 1.0 / max(np.linalg.norm(g), 1e-300) if it == 0 else 1.0 / inst.sigma
    alpha = min(alpha, 1.0 / inst.sigma)
    recent = [fy]
    while it < budget:
        gn = np.linalg.norm(inst.gradient(N @ y))
        if np.linalg.norm(g) <= rtol * (1.0 + gn):
            pg = float(np.linalg.norm(g))
            return OracleResult(inst.full(N @ y), fy, pg, float(gn), it, True, 0.5 * pg * pg / inst.sigma)
        step = alpha
        for _ in range(60):
            yt = y - step * g
            ft = E(yt)
            if ft <= max(recent) - 1e-4 * step * (g @ g):
                break
            gt = G(yt)
            if ft <= max(recent) + 1e-13 * (1 + abs(fy)) and np.linalg.norm(gt) < np.linalg.norm(g):
                break  # roundoff-level energy change; accept on gradient decrease
            step *= 0.5
        else:
            break
        gt = G(yt)
        s, r = yt - y, gt - g
        sr = s @ r
        alpha = (s @ s) / sr if sr > 0 else 1.0 / inst.sigma
        y, fy, g = yt, ft, gt
        recent = (recent + [fy])[-10:]
        it += 1
    pg = float(np.linalg.norm(g))
    gn = float(np.linalg.norm(inst.gradient(N @ y)))
    if pg <= rtol * (1.0 + gn):
        return OracleResult(inst.full(N @ y), fy, pg, gn, it, True, 0.5 * pg * pg / inst.sigma)
    gap = 0.5 * pg * pg / inst.sigma
    raise BudgetExhausted(
        f"oracle stopped after {it} iterations with projected gradient {pg:.3e}",
        inst.full(N @ y), fy, gap,
    )


def hessian(inst: DenseInstance) -> np.ndarray:
    """Dense Hessian over the free unknowns from gradient differences.

    Exact up to roundoff when the energy is quadratic (``p = 2``, constant
    viscosity, no friction, no eps term).
    """
    n = inst.num_free
    g0 = inst.gradient(np.zeros(n))
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        H[:, i] = inst.gradient(e) - g0
    return 0.5 * (H + H.T), g0


def dense_kkt(inst: DenseInstance) -> np.ndarray:
    """Solve the quadratic step exactly by one dense saddle-point factorization."""
    H, g0 = hessian(inst)
    C = inst.C[:-1]  # rows sum to zero; dropping one leaves full row rank
    n, m = H.shape[0], C.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = C.T
    K[n:, :n] = C
    rhs = np.concatenate([-g0, np.zeros(m)])
    sol = linalg.solve(K, rhs)
    return inst.full(sol[:n])


def is_quadratic(params, inst: DenseInstance) -> bool:
    return params.p == 2 and np.all(inst.amp == 0) and np.all(inst.kb == 0) and inst.eps == 0


__all__ = [
    "BudgetExhausted",
    "DenseInstance",
    "MAX_FREE",
    "OracleResult",
    "TooLarge",
    "dense_kkt",
    "hessian",
    "is_quadratic",
    "make_instance",
    "oracle_step",
    "potential_gj",
]
