"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary, and also when this file is run as a script.
"""
import subprocess
import sys
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from shearthin import constitutive as cm
from shearthin.continuation import EpsNotStabilized, picard_lambda, traj_norm
from shearthin.diagnostics import apriori_monitor, energy_report, friction_complementarity
from shearthin.discretization import build_space
from shearthin.geometry import ThinDomain, build_thin_mesh
from shearthin.problem import coupled_data, couette_data, mms_data, zero_data
from shearthin.stepper import DiscreteState, RegularizationConfig, StepConfig, StepProblem
from shearthin.verification import constitutive_measures, linear_sanity, mms_study, oracle_comparison

RESULTS = {}
FILM = ThinDomain.constant(L=1.0, h0=0.5)
EPS = (1e-1, 1e-2, 1e-3, 1e-4)


def record(n, ok, detail, seconds, limit_s):
    ok = bool(ok) and seconds < limit_s
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {detail}  [{seconds:.1f} s < {limit_s:g} s]"
    RESULTS[n] = line
    print(line)
    return ok


@lru_cache(maxsize=None)
def space(nx=4, nz=2):
    return build_space(build_thin_mesh(FILM, nx, nz))


@lru_cache(maxsize=None)
def picard_run(kind):
    """(data, params, reg, cfg, iterates, report, seconds) for the shared runs."""
    t0 = time.perf_counter()
    reg = RegularizationConfig(eps_schedule=EPS)
    cfg = StepConfig(dt=0.1)
    if kind == "thermo":
        data = coupled_data(FILM, U=0.5, k=0.3, theta0=1.0, T=0.5)
        params = cm.FluidParams(1.5, cm.ThermoCoupled(1.0, 2.0, 1.0, 0.5))
    else:
        k = {"couette": 0.3, "friction": 5.0}[kind]
        data = couette_data(FILM, U=0.5, k=k, T=0.5)
        params = cm.FluidParams(1.5, cm.Constant(1.0))
    iterates = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EpsNotStabilized)
        _, report = picard_lambda(space(), data, params, reg, cfg, on_iterate=lambda k, tr, d: iterates.append(tr))
    return data, params, reg, cfg, iterates, report, time.perf_counter() - t0


def test_c01_constitutive_inequalities():
    t0 = time.perf_counter()
    worst = {"F1": -np.inf, "monotone": np.inf, "inegp": np.inf, "split": 0.0}
    for p in (1.2, 1.5, 1.8):
        m = constitutive_measures(p, n=100_000, seed=7, mu0=1.0, mu1=2.0)
        worst["F1"] = max(worst["F1"], m["F1"])
        worst["split"] = max(worst["split"], m["split"])
        worst["monotone"] = min(worst["monotone"], m["monotone"])
        worst["inegp"] = min(worst["inegp"], m["inegp"])
    ok = worst["F1"] <= 1e-12 and worst["monotone"] >= -1e-10 and worst["inegp"] >= -1e-10 and worst["split"] <= 1e-14
    detail = (
        f"(F1) rel. violation {worst['F1']:.2e} <= 1e-12, monotone {worst['monotone']:.2e} >= -1e-10, "
        f"(inegp) {worst['inegp']:.2e} >= -1e-10, split {worst['split']:.2e} <= 1e-14"
    )
    assert record(1, ok, detail, time.perf_counter() - t0, 30)


def test_c02_zero_problem():
    t0 = time.perf_counter()
    data = zero_data(T=0.5)
    levels = []
    _, report = picard_lambda(
        space(), data, cm.FluidParams(1.5, cm.BoundedIncreasing(1.0, 2.0)),
        RegularizationConfig(eps_schedule=EPS), StepConfig(dt=0.1),
        on_run=lambda k, j, eps, tr: levels.append(float(np.max(np.abs(tr.velocities())))),
    )
    sup = max(levels)
    ok = sup <= 1e-10 and len(levels) == len(EPS) * report.iterations
    assert record(2, ok, f"sup |v| = {sup:.1e} <= 1e-10 over {len(levels)} eps/Picard runs", time.perf_counter() - t0, 10)


def test_c03_oracle_equivalence():
    t0 = time.perf_counter()
    rows = oracle_comparison(nx=2, nz=1, steps=2, dt=0.1, p=1.5)
    e = max(r["energy_rel"] for r in rows)
    v = max(r["velocity_rel"] for r in rows)
    ok = e <= 1e-6 and v <= 1e-4 and all(r["below"] for r in rows)
    detail = f"energy rel. gap {e:.1e} <= 1e-6, velocity gap / scale {v:.1e} <= 1e-4, oracle <= stepper"
    assert record(3, ok, detail, time.perf_counter() - t0, 120)


def test_c04_linear_sanity():
    t0 = time.perf_counter()
    iters, gaps = linear_sanity(steps=2)
    ok = set(iters) == {1} and max(gaps) <= 1e-8
    detail = f"Newton iterations per step {iters}, max gap to dense KKT {max(gaps):.1e} <= 1e-8"
    assert record(4, ok, detail, time.perf_counter() - t0, 30)


def test_c05_mms_order():
    t0 = time.perf_counter()
    rows, orders = mms_study(((8, 4), (16, 8)))
    ok = orders[0] >= 2.0
    detail = f"L2 errors {rows[0][2]:.2e} -> {rows[1][2]:.2e}, observed order {orders[0]:.3f} >= 2"
    assert record(5, ok, detail, time.perf_counter() - t0, 300)


def test_c06_eps_uniformity():
    t0 = time.perf_counter()
    _, params, _, _, iterates, _, _ = picard_run("couette")
    final = iterates[-1]
    table = apriori_monitor(final.eps_runs, params.p)
    w = [r.w1p for r in table.rows]
    e = [r.eps_w1pc for r in table.rows]
    d = final.eps_distances
    variation = (max(w) - min(w)) / min(w)
    ok = variation < 0.10 and max(e) <= 2 * e[0] and all(b <= a for a, b in zip(d, d[1:]))
    detail = (
        f"W1p norm variation {variation:.1%} < 10%, eps-term max/first {max(e) / e[0]:.2f} <= 2, "
        f"d_i = {', '.join(f'{x:.2e}' for x in d)} nonincreasing"
    )
    assert record(6, ok, detail, time.perf_counter() - t0, 300)


def test_c07_picard():
    t0 = time.perf_counter()
    _, _, _, cfg, _, rc, _ = picard_run("couette")
    _, _, reg, _, it_t, rt, _ = picard_run("thermo")
    const_ok = rc.iterations == 2 and rc.distances[1] <= 10 * cfg.newton_tol
    dt_ = rt.distances
    thermo_ok = (
        rt.converged
        and rt.iterations <= 20
        and all(b < a for a, b in zip(dt_, dt_[1:]))
        and dt_[-1] <= 1e-8 * (1 + traj_norm(it_t[-2], 1.5, "Lp"))
        and max(rt.norms) <= 2 * rt.norms[0]
    )
    detail = (
        f"constant: second distance {rc.distances[1]:.1e} <= {10 * cfg.newton_tol:.0e}; "
        f"thermo: {rt.iterations} iterations, distances {', '.join(f'{x:.1e}' for x in dt_)}"
    )
    assert record(7, const_ok and thermo_ok, detail, time.perf_counter() - t0, 600)


def test_c08_friction_complementarity():
    t0 = time.perf_counter()
    data, _, reg, _, iterates, _, _ = picard_run("friction")
    c = friction_complementarity(iterates[-1], data, reg.delta)
    ok = c.max_ratio < 1 and c.alignment_defect <= 1e-2 and c.max_sign_product <= 0 and c.n_slip and c.n_stick
    detail = (
        f"1 - max |sigma|/k = {1 - c.max_ratio:.1e} > 0, slip alignment {c.alignment_defect:.1e} <= 1e-2, "
        f"max sigma*slip {c.max_sign_product:.1e} <= 0, {c.n_slip} slipping / {c.n_stick} sticking points"
    )
    assert record(8, ok, detail, time.perf_counter() - t0, 120)


def test_c09_energy_inequality():
    t0 = time.perf_counter()
    worst, n = -np.inf, 0
    for kind in ("couette", "thermo", "friction"):
        data, params, reg, cfg, iterates, _, _ = picard_run(kind)
        for k, traj in enumerate(iterates):
            frozen = iterates[k - 1] if k > 0 else None
            for _, run in traj.eps_runs:
                rep = energy_report(run, data, params, reg, cfg, frozen=frozen)
                worst = max(worst, max(s.lhs / s.tol for s in rep.steps))
                n += len(rep.steps)
    ok = worst <= 1.0
    detail = f"worst violation / (10 newton_tol scale) = {worst:.2e} <= 1 over {n} steps"
    assert record(9, ok, detail, time.perf_counter() - t0, 600)


def _jacobian_scenarios():
    film, unit = space(), build_space(build_thin_mesh(ThinDomain.constant(2.0, 1.0), 4, 2))
    thermo = cm.FluidParams(1.5, cm.ThermoCoupled(1.0, 2.0, 1.0, 0.5))
    return {
        "zero": (film, zero_data(), cm.FluidParams(1.5, cm.BoundedIncreasing(1.0, 2.0))),
        "couette": (film, couette_data(FILM, U=0.5, k=0.3), cm.FluidParams(1.5, cm.Constant(1.0))),
        "coupled": (film, coupled_data(FILM, U=0.5, k=0.3, theta0=1.0), thermo),
        "mms-p2": (unit, mms_data(ThinDomain.constant(2.0, 1.0)), cm.FluidParams(2.0, cm.Constant(1.0))),
    }


def test_c10_jacobian_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    reg = RegularizationConfig()
    worst = 0.0
    for name, (sp_, data, params) in _jacobian_scenarios().items():
        for _ in range(20):
            mask = ~sp_.constrained
            prev = DiscreteState(0.3 * rng.standard_normal(sp_.num_velocity) * mask, np.zeros(sp_.num_pressure), 0.0)
            frozen = 0.3 * rng.standard_normal(sp_.num_velocity) * mask
            prob = StepProblem(sp_, prev, frozen, data, params, 1e-2, reg.eta, reg.delta, 0.1)
            n = prob.nf + prob.npr + 1
            x = 0.3 * rng.standard_normal(n)
            d = rng.standard_normal(n)
            d /= np.linalg.norm(d)
            h = 1e-6 * (1 + np.linalg.norm(x))
            _, J = prob.kkt_residual(x)
            fd = (prob.kkt_residual(x + h * d, False)[0] - prob.kkt_residual(x - h * d, False)[0]) / (2 * h)
            worst = max(worst, np.linalg.norm(fd - J @ d) / np.linalg.norm(J @ d))
    ok = worst <= 1e-6
    detail = f"max relative FD error {worst:.1e} <= 1e-6 over 20 random states x 4 scenarios"
    assert record(10, ok, detail, time.perf_counter() - t0, 600)


CONFIG = """\
scenario = coupled
p = 1.5
mu.family = thermo
U = 0.5
k = 0.3
T = 0.3
dt = 0.1
eps_schedule = 1e-1, 1e-2
"""


def test_c11_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        res = subprocess.run(
            [sys.executable, "-m", "shearthin", "run", "--config", str(cfg), "--out", str(out), "--deterministic"],
            capture_output=True, text=True,
        )
        assert res.returncode == 0, res.stderr
        outs.append((out / "diag.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    assert record(11, ok, f"two deterministic runs: diag.csv byte-identical ({len(outs[0])} bytes)", time.perf_counter() - t0, 600)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
