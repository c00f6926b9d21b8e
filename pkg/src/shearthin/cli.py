"""Command line entry point: ``shearthin <run|verify|sweep|mms> --config PATH``.

Exit codes: 0 success, 1 configuration error, 2 Picard iteration did not
converge, 3 a time step failed, 4 a verification check failed.
"""
from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, defaults, load_config
from .continuation import EpsNotStabilized, PicardNotConverged, StepFailed, picard_lambda
from .diagnostics import DiagnosticsRecord, apriori_monitor, energy_report, friction_complementarity
from .discretization import build_space, lift_coefficients
from .geometry import build_thin_mesh, write_mesh
from .verification import SUITES, mms_study, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_PICARD, EXIT_STEP, EXIT_VERIFY = 0, 1, 2, 3, 4

DIAG_PREFIX = ["picard", "eps_index", "eps", "step"]
COLUMN_DOC = {
    "picard": "Picard iteration k (1-based)",
    "eps_index": "position in the eps schedule (0-based)",
    "eps": "vanishing-viscosity parameter of the run",
    "step": "time step index n (state at t_n)",
    "t": "time level",
    "kinetic": "0.5 ||vbar||^2_L2",
    "dissipation": "int F_eta(D(vbar + v0 xi)) : D(vbar)",
    "eps_dissipation": "2 eps int (|D(vbar)|^2 + eta^2)^((p'-2)/2) |D(vbar)|^2",
    "friction": "int_Gamma0 k psi_delta(vbar_tau - s~)",
    "work": "L(vbar) = int (f + v0 xi') . vbar",
    "div_residual": "||B vbar||",
    "pressure_mean": "mean of the pressure over the domain",
    "max_traction_ratio": "max |sigma_tau,h| / k over Gamma0 quadrature points",
    "alignment_defect": "max | |sigma_tau,h| - k | / k over slipping points",
    "energy_defect": "discrete energy inequality left-hand side (must be <= tolerance)",
    "newton_iterations": "Newton iterations of the step",
}


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.17g}"


# ---------------------------------------------------------------- outputs


def write_vtk(path, space, velocity, pressure, title):
    """Legacy ASCII VTK with 6-node quadratic triangles (cell type 22)."""
    nodes = space.nodes
    nn, nc = len(nodes), len(space.cell_nodes)
    # P1 pressure extended to the P2 nodes by linear interpolation
    pn = np.empty(nn)
    nv = space.num_pressure
    pn[:nv] = pressure
    for cn, cv in zip(space.cell_nodes, space.mesh.cells):
        for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            pn[cn[3 + k]] = 0.5 * (pressure[cv[i]] + pressure[cv[j]])
    v = np.asarray(velocity).reshape(-1, 2)
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nn} double"]
    out += [f"{fmt(x)} {fmt(z)} 0" for x, z in nodes]
    out.append(f"CELLS {nc} {7 * nc}")
    out += ["6 " + " ".join(str(int(i)) for i in cn) for cn in space.cell_nodes]
    out.append(f"CELL_TYPES {nc}")
    out += ["22"] * nc
    out += [f"POINT_DATA {nn}", "VECTORS velocity double"]
    out += [f"{fmt(a)} {fmt(b)} 0" for a, b in v]
    out += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    out += [fmt(x) for x in pn]
    Path(path).write_text("\n".join(out) + "\n")


def _field_steps(cfg: RunConfig, n):
    sel = cfg["output.fields"]
    if sel == ("none",):
        return []
    if sel == ("all",):
        return list(range(n + 1))
    if sel == ("last",):
        return [n]
    return sorted({int(s) for s in sel if int(s) <= n})


class _DiagWriter:
    def __init__(self, path):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.csv = csv.writer(self.fh, lineterminator="\n")
        self.csv.writerow(DIAG_PREFIX + DiagnosticsRecord.columns())
        self.worst_energy = 0.0
        self.max_ratio = 0.0

    def add(self, k, j, eps, traj, data, params, reg, step_cfg, frozen):
        rep = energy_report(traj, data, params, reg, step_cfg, frozen=frozen)
        for n, (rec, es) in enumerate(zip(rep.records, rep.steps), start=1):
            self.csv.writerow([fmt(k), fmt(j), fmt(eps), fmt(n)] + [fmt(x) for x in rec.values()])
            self.worst_energy = max(self.worst_energy, es.lhs / es.tol)
            self.max_ratio = max(self.max_ratio, rec.max_traction_ratio)

    def close(self):
        self.fh.close()


def run(cfg: RunConfig, out: Path, deterministic=False) -> int:
    deterministic = deterministic or cfg["deterministic"]
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    domain = cfg.domain()
    mesh = build_thin_mesh(domain, cfg["mesh.nx"], cfg["mesh.nz"])
    write_mesh(mesh, out / "mesh.txt")
    (out / "config.used").write_text(cfg.dump())
    space = build_space(mesh)
    params, data, reg, step_cfg = cfg.params(), cfg.data(), cfg.reg(), cfg.step()

    writer = _DiagWriter(out / "diag.csv")
    frozen = {"traj": None}
    eps_warnings = []

    def on_run(k, j, eps, traj):
        writer.add(k, j, eps, traj, data, params, reg, step_cfg, frozen["traj"])

    def on_iterate(k, traj, dist):
        frozen["traj"] = traj

    status, code, traj, report, err = "converged", EXIT_OK, None, None, None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", EpsNotStabilized)
            traj, report = picard_lambda(space, data, params, reg, step_cfg, on_iterate=on_iterate, on_run=on_run)
        eps_warnings = list(dict.fromkeys(str(w.message) for w in caught if issubclass(w.category, EpsNotStabilized)))
    except PicardNotConverged as exc:
        status, code, err, traj = "picard-not-converged", EXIT_PICARD, exc, exc.trajectory
    except StepFailed as exc:
        status, code, err = f"step-failure at step {exc.step}", EXIT_STEP, exc
    finally:
        writer.close()

    if traj is not None and code == EXIT_OK:
        lift = lift_coefficients(space, data)
        for n in _field_steps(cfg, traj.n_steps):
            st = traj.states[n]
            write_vtk(
                out / f"fields_{n}.vtk", space, st.vbar + lift * data.xi(st.t), st.pressure,
                f"shearthin velocity and pressure, step {n}, t={fmt(st.t)}",
            )

    lines = [
        "shearthin run report",
        f"status: {status}",
        f"scenario: {cfg['scenario']}  p = {fmt(cfg['p'])}  mu.family = {cfg['mu.family']}",
        f"mesh: {cfg['mesh.nx']} x {cfg['mesh.nz']}  P2 nodes = {space.num_nodes}  free velocity unknowns = {space.num_free}",
        f"time: T = {fmt(cfg['T'])}  dt = {fmt(cfg['dt'])}",
        "eps schedule: " + ", ".join(fmt(e) for e in reg.eps_schedule),
        "",
        "diag.csv columns (one row per time step, eps level and Picard iteration; 17 significant digits):",
    ]
    lines += [f"  {c:<20} {COLUMN_DOC[c]}" for c in DIAG_PREFIX + DiagnosticsRecord.columns()]
    lines.append("")
    dists = report.distances if report is not None else getattr(err, "distances", [])
    if dists:
        lines.append("picard distances (L^p(0,T;L^p)):")
        lines += [f"  k={k} distance={fmt(d)}" for k, d in enumerate(dists, start=1)]
        mono = all(b < a for a, b in zip(dists, dists[1:]))
        lines.append(f"picard distances strictly decreasing: {'yes' if mono else 'no'}")
    if err is not None:
        lines.append(f"error: {err}")
    if traj is not None and traj.eps_runs:
        lines.append("eps stabilization distances d_i (L^p(0,T;W^{1,p})):")
        lines += [f"  d_{i}={fmt(d)}" for i, d in enumerate(traj.eps_distances, start=1)]
        lines += [f"warning: {w}" for w in eps_warnings]
        table = apriori_monitor(traj.eps_runs, params.p)
        lines.append("a priori monitor (eps, ||v||_{L^p W^{1,p}}, eps^{1/p'} ||v||_{L^p' W^{1,p'}}, max_t ||v||_L2):")
        lines += [f"  {fmt(r.eps)} {fmt(r.w1p)} {fmt(r.eps_w1pc)} {fmt(r.linf_l2)}" for r in table.rows]
        lines.append(f"a priori flags: {table.flags if table.flagged else 'none'}")
        comp = friction_complementarity(traj, data, reg.delta)
        lines.append(
            f"friction: max traction ratio = {fmt(comp.max_ratio)}  alignment defect = {fmt(comp.alignment_defect)}"
            f"  slipping points = {comp.n_slip}  sticking points = {comp.n_stick}"
        )
    lines.append(f"energy inequality: worst violation / tolerance = {fmt(writer.worst_energy)}")
    if not deterministic:
        lines.append(f"wall time: {time.perf_counter() - t_start:.2f} s")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print(f"{status}: outputs in {out}")
    return code


def _sweep_one(args):
    cfg, out, deterministic = args
    return run(cfg, out, deterministic)


def sweep(cfg: RunConfig, out: Path, deterministic=False) -> int:
    key, values = cfg["sweep.key"], cfg["sweep.values"]
    if not values:
        raise ConfigError(f"{cfg.source}: sweep needs sweep.key and sweep.values")
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, val in enumerate(values):
        sub = out / f"{i:03d}_{re.sub(r'[^A-Za-z0-9.+-]', '_', key)}={re.sub(r'[^A-Za-z0-9.+-]', '_', val)}"
        jobs.append((cfg.with_value(key, val), sub, deterministic))
    workers = max(1, cfg["sweep.workers"])
    if workers == 1 or deterministic or cfg["deterministic"]:
        codes = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_sweep_one, jobs))
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "key", "value", "exit_code", "directory"])
        for i, ((_, sub, _), val, code) in enumerate(zip(jobs, values, codes)):
            w.writerow([i, key, val, code, sub.name])
    return max(codes)


def mms(cfg: RunConfig, out: Path) -> int:
    if cfg["domain.profile"] != "constant" or cfg["domain.h0"] != 1.0:
        raise ConfigError(f"{cfg.where('domain.h0')}: mms needs a constant profile with domain.h0 = 1")
    out.mkdir(parents=True, exist_ok=True)
    meshes = cfg.mms_meshes()
    rows, orders = mms_study(meshes, L=cfg["domain.L"], T=cfg["T"], dt=cfg["dt"], c=cfg["mu.c"])
    with open(out / "mms.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nx", "nz", "l2_error", "observed_order"])
        for i, (nx, nz, err) in enumerate(rows):
            w.writerow([nx, nz, fmt(err), fmt(orders[i - 1]) if i else ""])
    lines = ["manufactured-solution study (p = 2, constant viscosity, k = 0)"]
    lines += [f"  {nx}x{nz}: L2 error at T = {fmt(err)}" for nx, nz, err in rows]
    lines += [f"  observed order {meshes[i]} -> {meshes[i + 1]}: {o:.4f}" for i, o in enumerate(orders)]
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def verify(selector, out: Path | None) -> int:
    checks = run_suites(selector)
    lines = [c.line() for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    text = "\n".join(lines)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.txt").write_text(text + "\n")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shearthin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "Picard / eps / time loops with diagnostics output"),
        ("sweep", "run one config for every value of sweep.key"),
        ("mms", "manufactured-solution convergence study"),
        ("verify", "property and oracle suites"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name == "verify":
            p.add_argument("selector", nargs="?", default="all", help=f"all or a comma list of: {', '.join(SUITES)}")
        p.add_argument("--config", required=name in ("run", "sweep"), help="flat key = value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--deterministic", action="store_true", help="bit-reproducible outputs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else defaults()
        out = Path(args.out) if args.out else None
        if args.command == "verify":
            return verify(args.selector, out)
        out = out or Path("shearthin-out")
        if args.command == "run":
            return run(cfg, out, args.deterministic)
        if args.command == "sweep":
            return sweep(cfg, out, args.deterministic)
        return mms(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "verify":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
