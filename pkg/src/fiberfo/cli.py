"""Command-line interface.

Subcommands ``mesh``, ``solve``, ``fibers`` and ``study``. Exit codes:
0 success, 1 usage or input error, 2 solver non-convergence (or a study
whose checks fail), 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, fibers, harness
from . import io as fio
from .frankoseen import (BoundaryDataError, DivergenceError, SolverConfig, assemble_system,
                         constant_initial_guess, harmonic_initial_guess, ppgd_solve)
from .linalg import PreconditionerSpec
from .mesh import (GmshParseError, LVGeometry, MeshError, generate_annulus, generate_interval,
                   generate_lv_ellipsoid, generate_slab, generate_unit_square, load_gmsh, locate_apex,
                   write_gmsh)
from .poisson import ContradictoryBCError, SingularSystemError, dirichlet, solve_potential

SCHEMA = "fiberfo-config/1"

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NotConverged(Exception):
    pass


# ---------------------------------------------------------------- configuration


def default_config() -> dict:
    """Full default configuration, the output of ``--print-defaults``."""
    solver = SolverConfig().to_dict()
    geo = LVGeometry()
    return {
        "schema": SCHEMA,
        "solver": solver,
        "rotation": {"alpha_endo_deg": 60.0, "alpha_epi_deg": -60.0},
        "mesh": {"lv": {f.name: getattr(geo, f.name) for f in fields(LVGeometry)}},
        "problem": {"dirichlet": {}, "nitsche": [], "points": {}, "initial": "harmonic"},
    }


def _reject_unknown(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise UsageError(f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}")


def load_config(path=None, overrides=None) -> dict:
    """Read a JSON configuration over the defaults, rejecting unknown keys."""
    cfg = default_config()
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise UsageError(f"{path}: top level must be an object")
    _reject_unknown(data, cfg, "config")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise UsageError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
    for sec in ("solver", "rotation", "problem"):
        part = data.get(sec, {})
        if not isinstance(part, dict):
            raise UsageError(f"config section {sec!r} must be an object")
        _reject_unknown(part, cfg[sec], f"config section {sec!r}")
        cfg[sec].update(part)
    mesh = data.get("mesh", {})
    _reject_unknown(mesh, cfg["mesh"], "config section 'mesh'")
    if "lv" in mesh:
        _reject_unknown(mesh["lv"], cfg["mesh"]["lv"], "config section 'mesh.lv'")
        cfg["mesh"]["lv"].update(mesh["lv"])
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg["solver"][key] = value
    return cfg


def solver_config(cfg) -> SolverConfig:
    try:
        return SolverConfig(**cfg["solver"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid solver settings: {exc}") from exc


def rotation_params(cfg, args=None) -> fibers.RotationParams:
    endo = cfg["rotation"]["alpha_endo_deg"]
    epi = cfg["rotation"]["alpha_epi_deg"]
    if args is not None:
        endo = endo if args.alpha_endo is None else args.alpha_endo
        epi = epi if args.alpha_epi is None else args.alpha_epi
    return fibers.RotationParams.from_degrees(float(endo), float(epi))


# ---------------------------------------------------------------- output helpers

def _write_fields(path, mesh, data, legacy=False):
    path = Path(path)
    if legacy:
        fio.write_legacy_vtk(path.with_suffix(".vtk"), mesh, data)
    fio.write_vtu(path, mesh, data)


def _load_mesh(args):
    if getattr(args, "mesh", None):
        return load_gmsh(args.mesh)
    raise UsageError("--mesh is required")


def _vec(v):
    a = np.zeros(3)
    v = np.asarray(v, dtype=float).ravel()
    if v.size > 3:
        raise UsageError(f"vector {v.tolist()} has more than three components")
    a[: v.size] = v
    return a


def _lv_mesh(cfg, target_h=None):
    geo = dict(cfg["mesh"]["lv"])
    if target_h is not None:
        geo["target_h"] = target_h
    geo["base_cut_height"] = geo.pop("base_z")
    return generate_lv_ellipsoid(**geo)


# ---------------------------------------------------------------- commands

def cmd_mesh(args):
    kind = args.kind
    if kind == "interval":
        m = generate_interval(args.n, args.length)
    elif kind == "square":
        m = generate_unit_square(args.n, args.pattern)
    elif kind == "annulus":
        m = generate_annulus(args.rho, args.R, args.n, args.n_radial)
    elif kind == "slab":
        m = generate_slab(args.n, args.m, args.thickness)
    else:
        m = _lv_mesh(load_config(args.config), args.target_h)
    out = Path(args.out)
    write_gmsh(m, out)
    fio.write_boundary_vtu(out.with_suffix(".vtu"), m)
    print(f"{kind}: {m.n_vertices} vertices, {m.n_cells} cells, tags {sorted(m.tag_names.values())} -> {out}")
    return EXIT_OK


def _director_problem(mesh, problem):
    dirichlet = {}
    for tag, spec in problem["dirichlet"].items():
        dirichlet[tag] = spec if isinstance(spec, str) else _vec(spec)
    points = {int(k): _vec(v) for k, v in problem.get("points", {}).items()}
    return dirichlet, tuple(problem.get("nitsche", ())), points


def cmd_solve(args):
    cfg = load_config(args.config, {"maxit": args.maxit, "rtol": args.rtol,
                                    "preconditioner": args.preconditioner})
    mesh = _load_mesh(args)
    problem = cfg["problem"]
    if not problem["dirichlet"]:
        raise UsageError("config problem.dirichlet is empty")
    if args.problem == "potential":
        bcs = []
        for tag, g in problem["dirichlet"].items():
            if not mesh.has_tag(tag):
                raise UsageError(f"boundary tag {tag!r} not found in mesh; available: "
                                 f"{sorted(mesh.tag_names.values())}")
            if not isinstance(g, (int, float)):
                raise UsageError(f"potential Dirichlet value for {tag!r} must be a number")
            bcs.append(dirichlet(tag, float(g)))
        phi = solve_potential(mesh, bcs)
        _write_fields(args.out, mesh, {"potential": phi}, args.legacy_vtk)
        print(f"potential: min {phi.min():.6g} max {phi.max():.6g} -> {args.out}")
        return EXIT_OK
    config = solver_config(cfg)
    bc, nitsche, points = _director_problem(mesh, problem)
    system = assemble_system(mesh, bc, nitsche_tags=nitsche, C=config.nitsche_C, point_values=points)
    init = problem.get("initial", "harmonic")
    d0 = harmonic_initial_guess(system) if init == "harmonic" else constant_initial_guess(system, _vec(init))
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".csv")
    try:
        d, log = ppgd_solve(system, d0, config)
    except DivergenceError as exc:
        if exc.log is not None:
            fio.atomic_write_text(log_path, exc.log.to_csv())
        raise NotConverged(str(exc)) from exc
    # partial results are written even without convergence
    _write_fields(args.out, mesh, {"director": d}, args.legacy_vtk)
    fio.atomic_write_text(log_path, log.to_csv())
    print(f"frank-oseen: {log.status} after {log.iterations} iterations, residual ratio "
          f"{log.residuals[-1] / log.residuals[0]:.3e}, energy {log.energies[-1]:.10g} -> {args.out}")
    if not log.converged:
        raise NotConverged(f"solver stopped with status {log.status}: {log.message}")
    return EXIT_OK


def cmd_fibers(args):
    cfg = load_config(args.config, {"maxit": args.maxit, "preconditioner": args.preconditioner})
    config = solver_config(cfg)
    params = rotation_params(cfg, args)
    if args.mesh:
        mesh = load_gmsh(args.mesh)
    else:
        mesh = _lv_mesh(cfg, args.target_h)
    apex = locate_apex(mesh)
    reference = None
    if args.compare:
        verts, _, pdata = fio.read_vtu(args.compare)
        if verts.shape != mesh.vertices.shape or not np.allclose(verts, mesh.vertices, atol=1e-9):
            raise UsageError(f"{args.compare}: mesh does not match ({len(verts)} vs {mesh.n_vertices} points)")
        if "fiber" not in pdata:
            raise UsageError(f"{args.compare}: no 'fiber' point array")
        reference = pdata["fiber"]
    data = {}
    if args.method == "rbm":
        phi_t, phi_ab, dt, dab = fibers.rbm_directions(mesh, apex, config.epsilon)
        bundle = fibers.fibers_rbm(mesh, phi_t, dt, dab, params, config.epsilon)
        data["potential"] = phi_t
        logs = {}
    else:
        try:
            dt, log_t = fibers.transmural_vector_fo(mesh, config)
            dab, log_ab, _ = fibers.apicobasal_vector_fo(mesh, apex, dt, config)
            bundle = fibers.fibers_fo(mesh, dt, dab, params, config)
        except (fibers.SolverDidNotConverge, DivergenceError) as exc:
            raise NotConverged(str(exc)) from exc
        logs = {"transmural": log_t, "apicobasal": log_ab, "fiber": bundle.meta["log"]}
    data.update(fiber=bundle.f, sheet=bundle.s, normal=bundle.n)
    near = np.flatnonzero(harness.apex_neighbourhood(mesh, apex))
    print(f"fibers {args.method}: {mesh.n_vertices} vertices, alpha_endo {math.degrees(params.alpha_endo):g} deg, "
          f"alpha_epi {math.degrees(params.alpha_epi):g} deg")
    for k, v in logs.items():
        print(f"  {k} solve: {v.status} in {v.iterations} iterations")
    print(f"  orthonormality defect: {bundle.orthonormality_defect():.3e} "
          f"(away from apex: {bundle.orthonormality_defect(near):.3e})")
    if reference is not None:
        err = fibers.angle_error(bundle.f, reference)
        data["angle_error"] = np.nan_to_num(err, nan=0.0)
        ok = np.isfinite(err)
        p = np.percentile(err[ok], [50, 90, 99])
        print(f"  angle error vs {args.compare}: p50 {p[0]:.3f} p90 {p[1]:.3f} p99 {p[2]:.3f} "
              f"max {err[ok].max():.3f} deg")
    _write_fields(args.out, mesh, data, args.legacy_vtk)
    print(f"  -> {args.out}")
    return EXIT_OK


def _parse_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def cmd_study(args):
    if args.study not in harness.STUDIES:
        raise UsageError(f"unknown study {args.study!r}; available: {', '.join(sorted(harness.STUDIES))}")
    kwargs = _parse_overrides(args.set)
    if args.preconditioner:
        kwargs["config"] = SolverConfig(preconditioner=args.preconditioner)
    if args.study == "lv_comparison" and args.out_dir:
        kwargs.setdefault("out_dir", args.out_dir)
    try:
        rep = harness.STUDIES[args.study](**kwargs)
    except TypeError as exc:
        raise UsageError(f"bad override for study {args.study!r}: {exc}") from exc
    out = Path(args.out_dir or ".")
    fio.atomic_write_text(out / f"{args.study}.csv", rep.to_csv())
    fio.atomic_write_text(out / f"{args.study}_summary.txt", rep.summary_text())
    sys.stdout.write(rep.summary_text())
    return EXIT_OK if rep.passed else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fiberfo", description="Unit director fields and cardiac fiber frames with P1 elements.")
    p.add_argument("--version", action="version", version=f"fiberfo {__version__}")
    p.add_argument("--print-defaults", action="store_true", help="print the default JSON configuration")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    m = sub.add_parser("mesh", help="generate a tagged mesh (MSH 4.1 plus a boundary VTU preview)")
    m.add_argument("kind", choices=["interval", "square", "annulus", "slab", "lv"])
    m.add_argument("--n", type=int, default=20)
    m.add_argument("--m", type=int, default=1, help="slab cells across the thickness")
    m.add_argument("--pattern", default="alternating", choices=["alternating", "right", "left", "crossed"])
    m.add_argument("--length", type=float, default=1.0)
    m.add_argument("--thickness", type=float, default=1.0)
    m.add_argument("--rho", type=float, default=0.5)
    m.add_argument("--R", type=float, default=1.0)
    m.add_argument("--n-radial", type=int, default=None)
    m.add_argument("--target-h", type=float, default=None)
    m.add_argument("--config")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mesh)

    s = sub.add_parser("solve", help="solve a potential or director problem on a mesh file")
    s.add_argument("problem", choices=["potential", "frank-oseen"])
    s.add_argument("--mesh", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--log", help="convergence CSV (default: output path with .csv)")
    s.add_argument("--maxit", type=int)
    s.add_argument("--rtol", type=float)
    s.add_argument("--preconditioner")
    s.add_argument("--legacy-vtk", action="store_true", help="also write legacy ASCII VTK")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("fibers", help="fiber, sheet and normal fields on a left ventricle")
    f.add_argument("method", choices=["rbm", "fo"])
    f.add_argument("--mesh", help="MSH file with endo/epi/base tags (default: generated ellipsoid)")
    f.add_argument("--target-h", type=float)
    f.add_argument("--alpha-endo", type=float, help="degrees")
    f.add_argument("--alpha-epi", type=float, help="degrees")
    f.add_argument("--config")
    f.add_argument("--maxit", type=int)
    f.add_argument("--preconditioner")
    f.add_argument("--compare", help="VTU with a 'fiber' array on the same mesh")
    f.add_argument("--out", required=True)
    f.add_argument("--legacy-vtk", action="store_true")
    f.set_defaults(func=cmd_fibers)

    st = sub.add_parser("study", help="run a numerical study and check its bounds")
    st.add_argument("study", help=f"one of {', '.join(sorted(harness.STUDIES))}")
    st.add_argument("--set", action="append", metavar="KEY=VALUE", help="study keyword override (JSON value)")
    st.add_argument("--preconditioner")
    st.add_argument("--out-dir")
    st.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(json.dumps(default_config(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if getattr(args, "preconditioner", None):
            PreconditionerSpec.parse(args.preconditioner)
        return args.func(args)
    except NotConverged as exc:
        print(f"fiberfo: not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (GmshParseError, OSError) as exc:
        print(f"fiberfo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, MeshError, BoundaryDataError, SingularSystemError, ContradictoryBCError,
            ValueError) as exc:
        print(f"fiberfo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
