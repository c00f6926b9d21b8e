import numpy as np
import pytest
import scipy.linalg as sla

from shearthin.constitutive import BoundedIncreasing, Constant, FluidParams, ThermoCoupled
from shearthin.discretization import (
    assemble_divergence,
    assemble_friction,
    assemble_load,
    assemble_mass,
    assemble_viscous,
    build_space,
)
from shearthin.geometry import ThinDomain, build_thin_mesh
from shearthin.problem import ProblemData, XiLaw, couette_data, coupled_data, zero_data


def test_unit_space_counts(unit_space):
    sp = unit_space
    assert sp.num_nodes == 9 and sp.num_pressure == 4 and sp.num_velocity == 18
    corner = int(np.flatnonzero((sp.nodes[:, 0] == 0) & (sp.nodes[:, 1] == 0))[0])
    assert sp.constrained[2 * corner] and sp.constrained[2 * corner + 1]
    # the bottom midpoint only has its normal component pinned
    mid = int(np.flatnonzero((sp.nodes[:, 0] == 0.5) & (sp.nodes[:, 1] == 0))[0])
    assert not sp.constrained[2 * mid] and sp.constrained[2 * mid + 1]


def test_mass_matrix(unit_space, rng):
    M = assemble_mass(unit_space).toarray()
    ones = np.zeros(18)
    ones[0::2] = 1.0
    assert ones @ M @ ones == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0
    # quadratic field is reproduced exactly
    c = unit_space.interpolate(lambda x, z: np.stack([x * z, x * x], -1))
    assert c @ M @ c == pytest.approx(1 / 9 + 1 / 5, rel=1e-13)


def test_mass_matches_monte_carlo(film_space, rng):
    sp = film_space
    c = rng.standard_normal(sp.num_velocity)
    exact = c @ assemble_mass(sp) @ c
    vals = sp.cell_values(c)
    assert np.sum(sp.qweights * np.sum(vals**2, -1)) == pytest.approx(exact, rel=1e-12)


def test_divergence_examples(film_space):
    sp = film_space
    B = assemble_divergence(sp)
    m = sp.pressure_mass
    # div (x, 0) = 1 so B u . 1 = |Omega|
    u = sp.interpolate(lambda x, z: np.stack([x, 0 * z], -1))
    assert np.ones(sp.num_pressure) @ (B @ u) == pytest.approx(0.5, rel=1e-14)
    assert m.sum() == pytest.approx(0.5, rel=1e-14)
    # div (z^2, -x z)... use a solenoidal field (x^2, -2 x z)
    w = sp.interpolate(lambda x, z: np.stack([x * x, -2 * x * z], -1))
    assert np.abs(B @ w).max() < 1e-14
    # rigid translations in x have zero divergence
    t = sp.interpolate(lambda x, z: np.stack([np.ones_like(x), 0 * z], -1))
    assert np.abs(B @ t).max() < 1e-14


def _rand_data(sp):
    d = sp.mesh.domain
    return coupled_data(d, U=0.7, k=0.4, s=0.1, theta0=0.3, fx=0.2, fz=-0.1, xi=XiLaw("exp", 0.5), T=1.0)


@pytest.mark.parametrize("p,eps", [(1.5, 0.0), (1.5, 1e-2), (1.8, 1e-1), (2.0, 0.0)])
def test_viscous_jacobian_matches_fd(film_space, rng, p, eps):
    sp = film_space
    params = FluidParams(p, ThermoCoupled(1.0, 2.0, 1.0, 0.5))
    data = _rand_data(sp)
    v = 0.3 * rng.standard_normal(sp.num_velocity)
    fu = 0.1 * rng.standard_normal(sp.num_velocity)
    r, K = assemble_viscous(sp, v, fu, data, params, 1e-2, eps, 0.3)
    d = rng.standard_normal(sp.num_velocity)
    h = 1e-6
    rp, _ = assemble_viscous(sp, v + h * d, fu, data, params, 1e-2, eps, 0.3, False)
    rm, _ = assemble_viscous(sp, v - h * d, fu, data, params, 1e-2, eps, 0.3, False)
    fd = (rp - rm) / (2 * h)
    assert np.linalg.norm(fd - K @ d) <= 1e-6 * (1 + np.linalg.norm(fd))


def test_viscous_symmetric_and_linear_for_p2(film_space, rng):
    sp = film_space
    params = FluidParams(2.0, Constant(1.5))
    data = zero_data()
    v = rng.standard_normal(sp.num_velocity)
    r, K = assemble_viscous(sp, v, None, data, params, 1e-8, 0.0, 0.0)
    K = K.toarray()
    assert np.allclose(K, K.T, atol=1e-12)
    assert np.allclose(r, K @ v, atol=1e-10)
    # 2 mu int |D v|^2 for v = (z, 0): D = [[0, 1/2], [1/2, 0]], |D|^2 = 1/2
    s = sp.interpolate(lambda x, z: np.stack([z, 0 * x], -1))
    assert s @ K @ s == pytest.approx(2 * 1.5 * 0.5 * 0.5, rel=1e-12)


def test_viscous_rejects_bad_smoothing(film_space):
    params = FluidParams(1.5, Constant(1.0))
    v = np.zeros(film_space.num_velocity)
    with pytest.raises(ValueError):
        assemble_viscous(film_space, v, None, zero_data(), params, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        assemble_viscous(film_space, v, None, zero_data(), params, 1e-3, -1.0, 0.0)


def test_friction_examples(film_space, rng):
    sp = film_space
    data = couette_data(sp.mesh.domain, U=0.0, k=2.0, s=0.0)
    # large uniform slip: residual ~ k sgn(v) per boundary basis integral
    v = sp.interpolate(lambda x, z: np.stack([np.full_like(x, 5.0), 0 * z], -1))
    r, _ = assemble_friction(sp, v, data, 1e-8, 0.0)
    assert r.sum() == pytest.approx(2.0 * 1.0, rel=1e-8)
    r0, _ = assemble_friction(sp, np.zeros(sp.num_velocity), data, 1e-3, 0.0)
    assert np.all(r0 == 0)
    # Jacobian vs finite differences
    w = 0.01 * rng.standard_normal(sp.num_velocity)
    _, J = assemble_friction(sp, w, data, 1e-2, 0.0)
    d = rng.standard_normal(sp.num_velocity)
    h = 1e-7
    fd = (assemble_friction(sp, w + h * d, data, 1e-2, 0.0, False)[0] - assemble_friction(sp, w - h * d, data, 1e-2, 0.0, False)[0]) / (2 * h)
    assert np.allclose(fd, J @ d, rtol=1e-5, atol=1e-6)
    with pytest.raises(ValueError):
        assemble_friction(sp, w, data, 0.0, 0.0)


def test_load_examples(unit_space):
    sp = unit_space
    data = ProblemData(f=lambda t, x, z: np.stack([np.ones_like(x), np.zeros_like(x)], -1))
    L = assemble_load(sp, data, 0.0)
    assert L[0::2].sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(L[1::2] == 0)
    # P2 midpoint shape functions integrate to |T|/3; the diagonal midpoint touches both cells
    diag = int(np.flatnonzero((sp.nodes[:, 0] == 0.5) & (sp.nodes[:, 1] == 0.5))[0])
    assert L[2 * diag] == pytest.approx(1 / 3, rel=1e-13)
    for vertex in range(4):
        assert L[2 * vertex] == pytest.approx(0.0, abs=1e-15)


def test_load_includes_lift_rate(film_space):
    sp = film_space
    xi = XiLaw("linear", rate=2.0)
    data = couette_data(sp.mesh.domain, U=1.0, k=0.0, xi=xi)
    L = assemble_load(sp, data, 0.4)
    ones = np.zeros(sp.num_velocity)
    ones[0::2] = 1
    # int v0_x = U |Omega| / 2 for the linear Couette lift
    assert ones @ L == pytest.approx(2.0 * 0.5 * 0.5, rel=1e-12)


def test_discrete_korn(film_space):
    sp = film_space
    f = sp.free
    params = FluidParams(2.0, Constant(0.5))  # 2 mu = 1, K = int D:D
    _, K = assemble_viscous(sp, np.zeros(sp.num_velocity), None, zero_data(), params, 1e-8, 0.0, 0.0)
    # gradient stiffness with the same pattern: int grad u : grad u
    G = sp.dphi
    lap = np.einsum("cq,cqai,cqbi->cab", sp.qweights, G, G)
    blocks = np.zeros((len(lap), 12, 12))
    blocks[:, 0::2, 0::2] = lap
    blocks[:, 1::2, 1::2] = lap
    A = sp.block_pattern.assemble(blocks)
    Kf = K.toarray()[np.ix_(f, f)]
    Af = A.toarray()[np.ix_(f, f)]
    lam = sla.eigh(Kf, Af, eigvals_only=True)
    assert lam.min() > 0.05
    assert lam.max() <= 1.0 + 1e-10


def test_build_space_on_curved_film():
    sp = build_space(build_thin_mesh(ThinDomain.cosine(2.0, 1.0, 0.3, 2.0), 6, 3))
    assert sp.area.sum() == pytest.approx(sp.mesh.area())
    assert sp.num_pressure == 7 * 4
    assert len(sp.gamma0_edges) == 6
