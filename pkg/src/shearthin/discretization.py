"""Taylor-Hood (P2 velocity / P1 pressure) discretization on film meshes.

Velocity unknowns are interleaved per node, ``dof = 2 * node + comp`` with
``comp = 0`` the along-film (x) and ``comp = 1`` the vertical (z) component.
P2 nodes are the mesh vertices followed by the edge midpoints.  Pressure
unknowns are the vertex values.

Assembled operators act on the full velocity vector; the stepper restricts
them to the free (unconstrained) entries.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels
from .constitutive import d2psi_delta, dpsi_delta
from .geometry import GAMMA0, GAMMA1, GAMMAL, Mesh

# 6-point symmetric rule, exact for degree 4 (weights normalised to sum 1)
_A1, _W1 = 0.44594849091596488632, 0.2233815896780114657
_A2, _W2 = 0.09157621350977074346, 0.10995174365532186764
TRI_POINTS = np.array(
    [
        [_A1, _A1],
        [1 - 2 * _A1, _A1],
        [_A1, 1 - 2 * _A1],
        [_A2, _A2],
        [1 - 2 * _A2, _A2],
        [_A2, 1 - 2 * _A2],
    ]
)
TRI_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss-Legendre on [0, 1], exact for degree 5
_G = np.sqrt(3.0 / 5.0)
EDGE_POINTS = np.array([0.5 * (1 - _G), 0.5, 0.5 * (1 + _G)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# local edges of a cell, in midpoint-node order 3, 4, 5
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def p2_basis(xi, eta):
    """Values and reference gradients of the six quadratic shape functions."""
    l0, l1, l2 = 1 - xi - eta, xi, eta
    vals = np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )
    # d/dxi, d/deta with dl0 = (-1, -1), dl1 = (1, 0), dl2 = (0, 1)
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = np.stack([l0, l1, l2], axis=-1)
    grads = []
    for i in range(3):
        grads.append((4 * lam[..., i, None] - 1) * dl[i])
    for i, j in LOCAL_EDGES:
        grads.append(4 * (lam[..., i, None] * dl[j] + lam[..., j, None] * dl[i]))
    return vals, np.stack(grads, axis=-2)


def p1_basis(xi, eta):
    return np.stack([1 - xi - eta, xi, eta], axis=-1)


def edge_basis(s):
    """Quadratic trace basis on an edge (start, end, midpoint)."""
    s = np.asarray(s, dtype=float)
    return np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=-1)


class _Pattern:
    """Fixed sparsity pattern with a deterministic scatter of element blocks."""

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        keys = rows.astype(np.int64) * shape[1] + cols
        ukeys, self.pos = np.unique(keys, return_inverse=True)
        self.shape = shape
        urows, ucols = np.divmod(ukeys, shape[1])
        self.indices = ucols.astype(np.int32)
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(self.indptr, urows + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self.nnz = len(ukeys)

    def assemble(self, values) -> sp.csr_matrix:
        data = np.bincount(self.pos, weights=np.asarray(values).ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


@dataclass(eq=False)
class FESpace:
    mesh: Mesh
    nodes: np.ndarray  # (nn, 2) P2 node coordinates
    cell_nodes: np.ndarray  # (nc, 6)
    node_tags: dict  # tag -> boolean mask over nodes
    gamma0_edges: np.ndarray  # (nb, 3) start, end, midpoint node

    def __post_init__(self):
        nn = len(self.nodes)
        full = self.node_tags[GAMMA1] | self.node_tags[GAMMAL]
        slip = self.node_tags[GAMMA0] & ~full
        cons = np.zeros(2 * nn, dtype=bool)
        cons[0::2] = full
        cons[1::2] = full | slip
        self.constrained = cons
        self.free = np.flatnonzero(~cons)
        self.cell_dofs = np.empty((len(self.cell_nodes), 12), dtype=np.int64)
        self.cell_dofs[:, 0::2] = 2 * self.cell_nodes
        self.cell_dofs[:, 1::2] = 2 * self.cell_nodes + 1
        self._geometry()

    # -- sizes
    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_velocity(self) -> int:
        return 2 * len(self.nodes)

    @property
    def num_pressure(self) -> int:
        return self.mesh.num_vertices

    @property
    def num_free(self) -> int:
        return len(self.free)

    # -- precomputed element geometry
    def _geometry(self):
        verts = self.mesh.vertices[self.mesh.cells]  # (nc, 3, 2)
        jac = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=-1)  # (nc,2,2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("mesh has non-positively oriented cells")
        inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
        self.area = 0.5 * det
        self.qweights = self.area[:, None] * TRI_WEIGHTS[None, :]  # (nc, nq)
        self.qpoints = verts[:, 0, None, :] + np.einsum("cij,qj->cqi", jac, TRI_POINTS)
        vals, rgrads = p2_basis(TRI_POINTS[:, 0], TRI_POINTS[:, 1])
        self.phi = vals  # (nq, 6)
        self.dphi = np.einsum("cij,qaj->cqai", inv_t, rgrads)  # (nc, nq, 6, 2)
        self.psi = p1_basis(TRI_POINTS[:, 0], TRI_POINTS[:, 1])  # (nq, 3)
        nc, nq = self.qweights.shape
        G = np.zeros((nc, nq, 12, 3))
        G[:, :, 0::2, 0] = self.dphi[..., 0]
        G[:, :, 0::2, 2] = 0.5 * self.dphi[..., 1]
        G[:, :, 1::2, 1] = self.dphi[..., 1]
        G[:, :, 1::2, 2] = 0.5 * self.dphi[..., 0]
        self.strain_basis = G
        divb = np.empty((nc, nq, 12))
        divb[:, :, 0::2] = self.dphi[..., 0]
        divb[:, :, 1::2] = self.dphi[..., 1]
        self.div_basis = divb
        # boundary (Gamma0) quadrature
        e = self.gamma0_edges
        xa, xb = self.nodes[e[:, 0]], self.nodes[e[:, 1]]
        self.bpoints = xa[:, None, :] + EDGE_POINTS[None, :, None] * (xb - xa)[:, None, :]
        self.bweights = np.linalg.norm(xb - xa, axis=1)[:, None] * EDGE_WEIGHTS[None, :]
        self.bphi = edge_basis(EDGE_POINTS)  # (nqb, 3)
        self.bdofs = 2 * e  # x-component dofs of the edge nodes

    @cached_property
    def block_pattern(self) -> _Pattern:
        d = self.cell_dofs
        n = self.num_velocity
        return _Pattern(np.repeat(d, 12, axis=1), np.tile(d, (1, 12)), (n, n))

    @cached_property
    def boundary_pattern(self) -> _Pattern:
        d = self.bdofs
        n = self.num_velocity
        return _Pattern(np.repeat(d, 3, axis=1), np.tile(d, (1, 3)), (n, n))

    @cached_property
    def pressure_mass(self) -> np.ndarray:
        """``m_i = int psi_i``; the pressure mean is ``m . pi / |Omega|``."""
        out = np.zeros(self.num_pressure)
        np.add.at(out, self.mesh.cells.ravel(), np.repeat(self.area / 3.0, 3))
        return out

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant of a vector field ``fn(x, z) -> (..., 2)``."""
        vals = np.asarray(fn(self.nodes[:, 0], self.nodes[:, 1]), dtype=float)
        return vals.reshape(-1, 2).ravel()

    def cell_values(self, coef) -> np.ndarray:
        """Velocity values ``(nc, nq, 2)`` at volume quadrature points."""
        c = np.asarray(coef)[self.cell_dofs]
        return np.stack([c[:, 0::2] @ self.phi.T, c[:, 1::2] @ self.phi.T], axis=-1)

    def cell_gradients(self, coef) -> np.ndarray:
        """``(nc, nq, 2, 2)`` with ``[..., i, j] = d u_i / d x_j``."""
        c = np.asarray(coef)[self.cell_dofs]
        return np.stack(
            [np.einsum("ca,cqaj->cqj", c[:, 0::2], self.dphi), np.einsum("ca,cqaj->cqj", c[:, 1::2], self.dphi)],
            axis=-2,
        )

    def cell_strains(self, coef) -> np.ndarray:
        """Voigt strain ``(xx, zz, xz)`` at volume quadrature points."""
        return np.einsum("cqai,ca->cqi", self.strain_basis, np.asarray(coef)[self.cell_dofs])

    def boundary_tangential(self, coef) -> np.ndarray:
        """x-component (tangential on the flat bottom) at Gamma0 quadrature points."""
        return np.asarray(coef)[self.bdofs] @ self.bphi.T

    def lp_norm(self, values, p) -> float:
        """``(int |values|^p)^(1/p)`` for pointwise magnitudes at volume qps."""
        return float(np.sum(self.qweights * np.abs(values) ** p) ** (1.0 / p))


def build_space(mesh: Mesh) -> FESpace:
    cells = mesh.cells
    edge_id: dict[tuple[int, int], int] = {}
    cell_nodes = np.empty((len(cells), 6), dtype=np.int64)
    cell_nodes[:, :3] = cells
    nv = mesh.num_vertices
    for c, cell in enumerate(cells):
        for k, (i, j) in enumerate(LOCAL_EDGES):
            key = tuple(sorted((int(cell[i]), int(cell[j]))))
            if key not in edge_id:
                edge_id[key] = len(edge_id)
            cell_nodes[c, 3 + k] = nv + edge_id[key]
    edges = np.array(sorted(edge_id, key=edge_id.get), dtype=np.int64).reshape(-1, 2)
    nodes = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])

    tags = {t: np.zeros(len(nodes), dtype=bool) for t in (GAMMA0, GAMMA1, GAMMAL)}
    g0 = []
    for (i, j), tag in zip(mesh.facets, mesh.facet_tags):
        mid = nv + edge_id[tuple(sorted((int(i), int(j))))]
        tags[tag][[i, j, mid]] = True
        if tag == GAMMA0:
            g0.append((i, j, mid))
    return FESpace(
        mesh=mesh,
        nodes=nodes,
        cell_nodes=cell_nodes,
        node_tags=tags,
        gamma0_edges=np.array(g0, dtype=np.int64).reshape(-1, 3),
    )


# ---------------------------------------------------------------- assembly


def assemble_mass(space: FESpace) -> sp.csr_matrix:
    m = np.einsum("cq,qa,qb->cab", space.qweights, space.phi, space.phi)
    blocks = np.zeros((len(m), 12, 12))
    blocks[:, 0::2, 0::2] = m
    blocks[:, 1::2, 1::2] = m
    return space.block_pattern.assemble(blocks)


def assemble_divergence(space: FESpace) -> sp.csr_matrix:
    """``(B u) . q = int q_h div(u_h)``; shape (num_pressure, num_velocity)."""
    vals = np.einsum("cq,qi,cqa->cia", space.qweights, space.psi, space.div_basis)
    rows = np.repeat(space.mesh.cells[:, :, None], 12, axis=2)
    cols = np.repeat(space.cell_dofs[:, None, :], 3, axis=1)
    return sp.csr_matrix(
        sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(space.num_pressure, space.num_velocity))
    )


def lift_coefficients(space: FESpace, data) -> np.ndarray:
    cache = space.__dict__.setdefault("_lift_cache", {})
    key = id(data.v0)
    if key not in cache:
        cache[key] = (data.v0, space.interpolate(data.v0))
    return cache[key][1]


def viscous_amplitude(space: FESpace, data, params, frozen_u, t) -> np.ndarray:
    """Strain-independent viscosity weight ``A(theta, u + v0 xi)`` per volume qp."""
    x, z = space.qpoints[..., 0], space.qpoints[..., 1]
    temp = data.theta(t, x, z) * np.ones_like(x)
    lift = lift_coefficients(space, data) * data.xi(t)
    u = lift if frozen_u is None else lift + frozen_u
    return np.ascontiguousarray(params.mu.amplitude(temp, space.cell_values(u)), dtype=float)


def assemble_viscous(space: FESpace, vbar, frozen_u, data, params, eta, eps, t, jacobian=True):
    """Residual ``R`` and Jacobian ``K`` of the viscous terms at ``vbar``.

    ``R(phi) = int F_eta(theta, u + v0 xi, D(vbar + v0 xi)) : D(phi)
               + 2 eps int (|D(vbar)|^2 + eta^2)^((p'-2)/2) D(vbar) : D(phi)``
    """
    if not eta > 0:
        raise ValueError("strain smoothing eta must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    vbar = np.asarray(vbar, dtype=float)
    lift = lift_coefficients(space, data) * data.xi(t)
    ctot = np.ascontiguousarray((vbar + lift)[space.cell_dofs])
    cbar = np.ascontiguousarray(vbar[space.cell_dofs])
    amp = viscous_amplitude(space, data, params, frozen_u, t)
    re, ke = kernels.viscous_element(
        space.strain_basis, space.qweights, ctot, cbar, amp,
        params.mu0, params.p, eps, params.p_conj, eta, jacobian,
    )
    if not np.all(np.isfinite(re)) or (jacobian and not np.all(np.isfinite(ke))):
        raise FloatingPointError("non-finite values in viscous assembly")
    res = np.bincount(space.cell_dofs.ravel(), weights=re.ravel(), minlength=space.num_velocity)
    if not jacobian:
        return res, None
    return res, space.block_pattern.assemble(ke)


def friction_slip(space: FESpace, vbar, data, t) -> np.ndarray:
    """``vbar_tau - s~`` at Gamma0 quadrature points, ``s~ = s - (v0)_tau xi``."""
    x = space.bpoints[..., 0]
    lift = lift_coefficients(space, data)
    s_tilde = data.s(t, x) - space.boundary_tangential(lift) * data.xi(t)
    return space.boundary_tangential(vbar) - s_tilde


def assemble_friction(space: FESpace, vbar, data, delta, t, jacobian=True):
    """Smoothed Tresca term ``int_Gamma0 k psi_delta'(vbar_tau - s~) phi_tau``."""
    if not delta > 0:
        raise ValueError("friction smoothing delta must be positive")
    x = space.bpoints[..., 0]
    k = data.k(t, x) * np.ones_like(x)
    z = friction_slip(space, vbar, data, t)
    wk = space.bweights * k
    re = (wk * dpsi_delta(z, delta)) @ space.bphi  # (nb, 3)
    res = np.bincount(space.bdofs.ravel(), weights=re.ravel(), minlength=space.num_velocity)
    if not jacobian:
        return res, None
    ke = np.einsum("eq,qa,qb->eab", wk * d2psi_delta(z, delta), space.bphi, space.bphi)
    return res, space.boundary_pattern.assemble(ke)


def assemble_load(space: FESpace, data, t) -> np.ndarray:
    """``L(phi) = int (f + v0 xi'(t)) . phi``."""
    x, z = space.qpoints[..., 0], space.qpoints[..., 1]
    fbar = np.broadcast_to(data.f(t, x, z), x.shape + (2,)) + data.dxi(t) * data.v0(x, z)
    loc = np.einsum("cq,cqi,qa->cai", space.qweights, fbar, space.phi)  # (nc, 6, 2)
    return np.bincount(space.cell_dofs.ravel(), weights=loc.reshape(-1), minlength=space.num_velocity)
