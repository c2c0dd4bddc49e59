"""Reproducible numerical studies with pass/fail checks.

Each ``study_*`` function returns a :class:`StudyReport` whose table holds
one row per grid point (failed runs included) and whose ``checks`` list
records the asserted bounds. Tables contain no timings, so reruns on one
machine produce identical CSV output; wall-clock data live in ``timings``.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fem, fibers, oracles
from .frankoseen import (DivergenceError, SolverConfig, assemble_system, constant_initial_guess, energy,
                         harmonic_initial_guess, ppgd_solve, residual)
from .linalg import PreconditionerSpec
from .mesh import generate_annulus, generate_lv_ellipsoid, generate_unit_square, locate_apex

ROBUSTNESS_THETAS = tuple(round(0.1 * k, 1) for k in range(32))

SQUARE_INTERP_BC = {"left": (0.0, -1.0), "right": (0.0, 1.0)}
SQUARE_VORTEX_BC = {"left": (0.0, -1.0), "right": (0.0, 1.0), "top": (-1.0, 0.0), "bottom": (1.0, 0.0)}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class StudyReport:
    study: str
    params: dict
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add_row(self, **values):
        missing = set(self.columns) - set(values)
        if missing:
            raise ValueError(f"row lacks columns {sorted(missing)}")
        self.rows.append({c: values[c] for c in self.columns})

    def check(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def column(self, name):
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    @staticmethod
    def rows_from_csv(text: str):
        """Parse a table written by :meth:`to_csv`, restoring ints, floats and bools."""
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        return header, [{h: _parse(v) for h, v in zip(header, row)} for row in reader]

    def summary_text(self) -> str:
        lines = [f"study {self.study}"]
        for k, v in self.summary.items():
            lines.append(f"  {k}: {_fmt(v)}")
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}" + (f" ({c.detail})" if c.detail else ""))
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _parse(s):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _solve(system, d0, config):
    """PPGD that records divergence as a status instead of raising."""
    try:
        d, log = ppgd_solve(system, d0, config)
    except DivergenceError as exc:
        return None, exc.log
    return d, log


# ---------------------------------------------------------------- 2D square studies

def study_robustness(n: int = 20, thetas=ROBUSTNESS_THETAS, config: SolverConfig | None = None,
                     max_iterations: int = 30) -> StudyReport:
    """Interpolation between ``(0,-1)`` (left) and ``(0,1)`` (right) from constant initial angles."""
    config = SolverConfig() if config is None else config
    rep = StudyReport("robustness", {"n": n, "thetas": list(thetas), "preconditioner": str(config.preconditioner)},
                      ["theta", "status", "iterations", "energy", "residual_ratio"])
    mesh = generate_unit_square(n)
    system = assemble_system(mesh, SQUARE_INTERP_BC)
    t0 = time.perf_counter()
    for th in thetas:
        d0 = constant_initial_guess(system, (math.cos(th), math.sin(th)))
        d, log = _solve(system, d0, config)
        rep.add_row(theta=float(th), status=log.status, iterations=log.iterations,
                    energy=log.energies[-1], residual_ratio=log.residuals[-1] / log.residuals[0])
    rep.timings["total_s"] = time.perf_counter() - t0
    its = rep.column("iterations")
    conv = [s == "converged" for s in rep.column("status")]
    rep.summary.update(converged=sum(conv), runs=len(conv), min_iterations=min(its), max_iterations=max(its))
    rep.check("all runs converge", all(conv), f"{sum(conv)}/{len(conv)}")
    rep.check(f"iterations <= {max_iterations}", max(its) <= max_iterations, f"max {max(its)}")
    return rep


def probe_update_norms(system, d, config: SolverConfig | None = None):
    """``|d + delta|`` for one update driven by the recovered-gradient residual.

    At a converged director this is close to one away from defects and drops
    where the director field is singular.
    """
    config = SolverConfig() if config is None else config
    P = system.preconditioner(config.preconditioner)
    y = d - P.apply(residual(d, system, "recovered"))
    out = np.linalg.norm(y, axis=1)
    out[system.dirichlet_mask] = np.inf
    return out


def study_singularity(n: int = 20, thetas=ROBUSTNESS_THETAS, config: SolverConfig | None = None,
                      max_iterations: int = 250) -> StudyReport:
    """Four-sided Dirichlet data forcing a point defect inside the unit square."""
    config = SolverConfig() if config is None else config
    rep = StudyReport("singularity", {"n": n, "thetas": list(thetas), "preconditioner": str(config.preconditioner)},
                      ["theta", "status", "iterations", "energy", "defect_x", "defect_y", "min_update_norm",
                       "defect_at_center", "max_norm_dev_elsewhere"])
    mesh = generate_unit_square(n)
    system = assemble_system(mesh, SQUARE_VORTEX_BC)
    center = int(np.argmin(np.linalg.norm(mesh.vertices[:, :2] - 0.5, axis=1)))
    t0 = time.perf_counter()
    for th in thetas:
        d0 = constant_initial_guess(system, (math.cos(th), math.sin(th)))
        d, log = _solve(system, d0, config)
        if d is None:
            rep.add_row(theta=float(th), status=log.status, iterations=log.iterations, energy=float("nan"),
                        defect_x=float("nan"), defect_y=float("nan"), min_update_norm=float("nan"),
                        defect_at_center=False, max_norm_dev_elsewhere=float("nan"))
            continue
        probe = probe_update_norms(system, d, config)
        k = int(np.argmin(probe))
        others = system.free.copy()
        others[k] = False
        dev = float(np.max(np.abs(1 - np.linalg.norm(d[others], axis=1))))
        rep.add_row(theta=float(th), status=log.status, iterations=log.iterations, energy=log.energies[-1],
                    defect_x=float(mesh.vertices[k, 0]), defect_y=float(mesh.vertices[k, 1]),
                    min_update_norm=float(probe[k]), defect_at_center=k == center, max_norm_dev_elsewhere=dev)
    rep.timings["total_s"] = time.perf_counter() - t0
    its = rep.column("iterations")
    conv = [s == "converged" for s in rep.column("status")]
    centered = rep.column("defect_at_center")
    devs = [v for v in rep.column("max_norm_dev_elsewhere") if np.isfinite(v)]
    rep.summary.update(converged=sum(conv), runs=len(conv), max_iterations=max(its), centered=sum(centered))
    rep.check("all runs converge", all(conv), f"{sum(conv)}/{len(conv)}")
    rep.check(f"iterations <= {max_iterations}", max(its) <= max_iterations, f"max {max(its)}")
    rep.check("minimum update norm at the centre node", all(centered), f"{sum(centered)}/{len(centered)} runs")
    rep.check("unit norm away from the defect within 1e-6", bool(devs) and max(devs) <= 1e-6,
              f"max {max(devs) if devs else float('nan'):.2e}")
    return rep


def study_optimality(levels=(32, 64, 128, 256), theta: float = 0.0, config: SolverConfig | None = None,
                     max_growth: int = 6) -> StudyReport:
    """Outer iterations against problem size for the interpolation problem."""
    config = SolverConfig() if config is None else config
    rep = StudyReport("optimality", {"levels": list(levels), "theta": theta,
                                     "preconditioner": str(config.preconditioner)},
                      ["n", "dofs", "status", "iterations"])
    per_it = []
    for n in levels:
        mesh = generate_unit_square(n)
        system = assemble_system(mesh, SQUARE_INTERP_BC)
        d0 = constant_initial_guess(system, (math.cos(theta), math.sin(theta)))
        t0 = time.perf_counter()
        system.preconditioner(config.preconditioner)
        t1 = time.perf_counter()
        d, log = _solve(system, d0, config)
        t2 = time.perf_counter()
        per_it.append((t2 - t1) / max(log.iterations, 1))
        rep.timings[f"setup_s_n{n}"] = t1 - t0
        rep.timings[f"solve_s_n{n}"] = t2 - t1
        rep.add_row(n=n, dofs=3 * mesh.n_vertices, status=log.status, iterations=log.iterations)
    its = rep.column("iterations")
    dofs = rep.column("dofs")
    growth = its[-1] - its[0]
    rep.summary.update(iterations=its, dofs=dofs, growth=growth)
    if len(levels) > 1 and per_it[0] > 0:
        rep.timings["time_per_iteration_exponent"] = math.log(per_it[-1] / per_it[0]) / math.log(dofs[-1] / dofs[0])
    rep.check("all levels converge", all(s == "converged" for s in rep.column("status")))
    rep.check(f"iteration growth <= {max_growth}", growth <= max_growth, f"{its[0]} -> {its[-1]}")
    return rep


def observed_rates(h, err):
    h = np.asarray(h, dtype=float)
    e = np.asarray(err, dtype=float)
    return np.log(e[1:] / e[:-1]) / np.log(h[1:] / h[:-1])


def study_convergence(levels=(4, 8, 16, 32, 64, 128, 256), config: SolverConfig | None = None,
                      rate_bounds=(1.85, 2.15), h1_bounds=(0.85, 1.15)) -> StudyReport:
    """L2 and H1 errors against the 1-D great-circle profile on the unit square."""
    config = SolverConfig() if config is None else config
    a, b = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)
    rep = StudyReport("convergence", {"levels": list(levels), "a": list(a), "b": list(b)},
                      ["n", "h", "dofs", "status", "iterations", "l2_error", "h1_error"])

    def exact(p):
        return oracles.slerp(a, b, p[:, 0])

    def exact_grad(p):
        g = np.zeros((len(p), 3, 3))
        g[:, :, 0] = oracles.slerp_derivative(a, b, p[:, 0])
        return g

    for n in levels:
        mesh = generate_unit_square(n)
        system = assemble_system(mesh, {"left": a, "right": b})
        d0 = constant_initial_guess(system, (1.0, 1.0, 0.0))
        d, log = _solve(system, d0, config)
        if d is None:
            rep.add_row(n=n, h=float(mesh.geometry.diameters.max()), dofs=3 * mesh.n_vertices, status=log.status,
                        iterations=log.iterations, l2_error=float("nan"), h1_error=float("nan"))
            continue
        rep.add_row(n=n, h=float(mesh.geometry.diameters.max()), dofs=3 * mesh.n_vertices, status=log.status,
                    iterations=log.iterations, l2_error=fem.l2_error(mesh, d, exact),
                    h1_error=fem.h1_error(mesh, d, exact_grad))
    h, e2, e1 = rep.column("h"), rep.column("l2_error"), rep.column("h1_error")
    r2 = observed_rates(h, e2)
    r1 = observed_rates(h, e1)
    rep.summary.update(l2_rates=[round(float(x), 4) for x in r2], h1_rates=[round(float(x), 4) for x in r1])
    last = r2[-3:]
    rep.check("all levels converge", all(s == "converged" for s in rep.column("status")))
    rep.check("L2 errors decrease monotonically", bool(np.all(np.diff(e2) < 0)))
    rep.check(f"L2 rate in [{rate_bounds[0]}, {rate_bounds[1]}] on the last three levels",
              bool(np.all((last >= rate_bounds[0]) & (last <= rate_bounds[1]))),
              ", ".join(f"{x:.3f}" for x in last))
    rep.check(f"H1 rate in [{h1_bounds[0]}, {h1_bounds[1]}] on the last three levels",
              bool(np.all((r1[-3:] >= h1_bounds[0]) & (r1[-3:] <= h1_bounds[1]))),
              ", ".join(f"{x:.3f}" for x in r1[-3:]))
    return rep


# ---------------------------------------------------------------- annulus studies

def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def in_plane_rotation(d, points):
    """Angle of ``d`` measured from the azimuthal direction ``(-sin t, cos t)``."""
    t = np.arctan2(points[:, 1], points[:, 0])
    return _wrap(np.arctan2(d[:, 1], d[:, 0]) - (t + np.pi / 2))


RING_CONFIG = SolverConfig(preconditioner=PreconditionerSpec("symmetric-gauss-seidel"), maxit=2000)


def study_ring(alphas=(math.pi, 3 * math.pi), rho: float = 0.5, R: float = 1.0, n: int = 128,
               n_radial: int = 32, config: SolverConfig | None = None,
               angle_tol_deg: float = 5.0) -> StudyReport:
    """Two windings of the same boundary data on an annulus.

    Both windings induce identical Dirichlet data, so only the initial guess
    selects the branch. The default configuration uses a Gauss-Seidel
    preconditioner: with multigrid or exact inverses the unit-step update is
    unstable at the high-winding critical point and the iteration falls to the
    low-energy branch.
    """
    config = RING_CONFIG if config is None else config
    rep = StudyReport("ring", {"alphas": [float(a) for a in alphas], "rho": rho, "R": R, "n": n,
                               "n_radial": n_radial, "preconditioner": str(config.preconditioner)},
                      ["alpha0", "status", "iterations", "energy", "exact_energy", "mid_angle_error_deg",
                       "max_norm_dev"])
    mesh = generate_annulus(rho, R, n, n_radial)
    pts = mesh.vertices
    r = np.hypot(pts[:, 0], pts[:, 1])
    radii = np.unique(np.round(r, 12))
    r_star = float(radii[np.argmin(np.abs(radii - math.sqrt(rho * R)))])
    mid = np.abs(r - r_star) < 1e-9
    for a0 in alphas:
        def data(p, a0=a0):
            return oracles.ring_solution_xy(p, rho, R, a0)

        system = assemble_system(mesh, {"inner": data, "outer": data})
        d0 = system.impose(data(pts))
        d, log = _solve(system, d0, config)
        exact = oracles.ring_energy(rho, R, a0) / 2
        if d is None:
            rep.add_row(alpha0=float(a0), status=log.status, iterations=log.iterations, energy=float("nan"),
                        exact_energy=exact, mid_angle_error_deg=float("nan"), max_norm_dev=float("nan"))
            continue
        expected = oracles.ring_angle(r_star, rho, R, a0)
        err = np.degrees(np.abs(_wrap(in_plane_rotation(d[mid], pts[mid]) - expected)))
        rep.add_row(alpha0=float(a0), status=log.status, iterations=log.iterations, energy=energy(d, system.A),
                    exact_energy=exact, mid_angle_error_deg=float(err.max()), max_norm_dev=log.max_norm_dev[-1])
    en = rep.column("energy")
    rep.summary["mid_radius"] = r_star
    rep.check("both windings converge", all(s == "converged" for s in rep.column("status")))
    if len(en) >= 2:
        rep.check("higher winding has higher energy", en[-1] > en[0], f"{en[0]:.6g} vs {en[-1]:.6g}")
    errs = rep.column("mid_angle_error_deg")
    rep.check(f"mid-radius angle within {angle_tol_deg} deg of the log profile",
              bool(np.all(np.isfinite(errs))) and max(errs) <= angle_tol_deg, f"max {max(errs):.3f} deg")
    rep.check("unit norm", all(v <= 1e-6 for v in rep.column("max_norm_dev")))
    return rep


def study_hedgehog(levels=(32, 64, 128), rho: float = 0.25, R: float = 1.0, rotation: float = 0.7,
                   config: SolverConfig | None = None) -> StudyReport:
    """Radial Dirichlet data on an annulus and the same data rotated by a constant ``Q``."""
    config = SolverConfig() if config is None else config
    Q = oracles.rotation_z(rotation)
    rep = StudyReport("hedgehog", {"levels": list(levels), "rho": rho, "R": R, "rotation": rotation},
                      ["n", "h", "status", "iterations", "max_angle_deg", "energy", "energy_rotated",
                       "energy_diff", "rotated_mismatch"])
    for n in levels:
        mesh = generate_annulus(rho, R, n)
        base = assemble_system(mesh, {"inner": oracles.hedgehog, "outer": oracles.hedgehog})
        rot = assemble_system(mesh, {"inner": lambda p: oracles.hedgehog_rotated(Q, p),
                                     "outer": lambda p: oracles.hedgehog_rotated(Q, p)})
        # smooth in-plane twist of the harmonic guess, vanishing on both rims
        pts = mesh.vertices
        r = np.hypot(pts[:, 0], pts[:, 1])
        tw = 0.4 * np.sin(np.pi * np.clip((r - rho) / (R - rho), 0.0, 1.0))
        g = harmonic_initial_guess(base)
        d0 = np.stack([np.cos(tw) * g[:, 0] - np.sin(tw) * g[:, 1],
                       np.sin(tw) * g[:, 0] + np.cos(tw) * g[:, 1], g[:, 2]], axis=1)
        d0 = base.impose(d0)
        d, log = _solve(base, d0, config)
        dq, logq = _solve(rot, d0 @ Q.T, config)
        h = float(mesh.geometry.diameters.max())
        if d is None or dq is None:
            rep.add_row(n=n, h=h, status="diverged", iterations=log.iterations, max_angle_deg=float("nan"),
                        energy=float("nan"), energy_rotated=float("nan"), energy_diff=float("nan"),
                        rotated_mismatch=float("nan"))
            continue
        ang = fibers.angle_error(d, oracles.hedgehog(mesh.vertices))
        e, eq = energy(d, base.A), energy(dq, rot.A)
        status = "converged" if log.converged and logq.converged else "maxit"
        rep.add_row(n=n, h=h, status=status, iterations=log.iterations, max_angle_deg=float(np.nanmax(ang)),
                    energy=e, energy_rotated=eq, energy_diff=abs(e - eq),
                    rotated_mismatch=float(np.abs(dq - d @ Q.T).max()))
    h, ang = rep.column("h"), rep.column("max_angle_deg")
    rep.check("all solves converge", all(s == "converged" for s in rep.column("status")))
    ratio = [math.radians(a) / hh for a, hh in zip(ang, h)]
    rep.summary.update(angle_over_h=[float(x) for x in ratio])
    rep.check("angle error (radians) at most h on every level", bool(np.all(np.array(ratio) <= 1.0)),
              f"max angle/h {max(ratio):.2e}")
    rep.check("rotated data give the rotated solution", max(rep.column("rotated_mismatch")) <= 1e-6,
              f"max {max(rep.column('rotated_mismatch')):.2e}")
    rep.check("energies equal within 1e-10", max(rep.column("energy_diff")) <= 1e-10,
              f"max {max(rep.column('energy_diff')):.2e}")
    return rep


# ---------------------------------------------------------------- left ventricle

def apex_neighbourhood(mesh, apex, fraction: float = 0.2):
    """Vertices closer to the apex than ``fraction`` of the apex-to-base distance."""
    z_base = mesh.vertices[mesh.vertices_of("base"), 2].mean()
    L = abs(z_base - mesh.vertices[apex, 2])
    return np.linalg.norm(mesh.vertices - mesh.vertices[apex], axis=1) <= fraction * L


def study_lv_comparison(params: fibers.RotationParams | None = None, target_h: float = 2.0,
                        config: SolverConfig | None = None, out_dir=None, mesh=None,
                        trans_p99_deg: float = 20.0, fiber_interior_deg: float = 35.0,
                        concentration: float = 0.8) -> StudyReport:
    """Rule-based and director pipelines on the idealized left ventricle."""
    params = fibers.RotationParams() if params is None else params
    config = SolverConfig() if config is None else config
    mesh = generate_lv_ellipsoid(target_h=target_h) if mesh is None else mesh
    apex = locate_apex(mesh)
    rep = StudyReport("lv_comparison", {"target_h": target_h, "alpha_endo_deg": math.degrees(params.alpha_endo),
                                        "alpha_epi_deg": math.degrees(params.alpha_epi),
                                        "n_vertices": mesh.n_vertices, "n_cells": mesh.n_cells},
                      ["field", "p50_deg", "p90_deg", "p99_deg", "max_deg", "max_outside_apex_deg",
                       "top_decile_near_apex"])
    t0 = time.perf_counter()
    phi_t, phi_ab, dt_rbm, dab_rbm = fibers.rbm_directions(mesh, apex, config.epsilon)
    rbm = fibers.fibers_rbm(mesh, phi_t, dt_rbm, dab_rbm, params, config.epsilon)
    t1 = time.perf_counter()
    dt_fo, log_t = fibers.transmural_vector_fo(mesh, config, raise_on_failure=False)
    dab_fo, log_ab, dab_raw = fibers.apicobasal_vector_fo(mesh, apex, dt_fo, config, raise_on_failure=False)
    fo = fibers.fibers_fo(mesh, dt_fo, dab_fo, params, config, raise_on_failure=False)
    t2 = time.perf_counter()
    rep.timings.update(rbm_s=t1 - t0, fo_s=t2 - t1)
    near = apex_neighbourhood(mesh, apex)
    errors = {"transmural": fibers.angle_error(dt_fo, dt_rbm),
              "apicobasal": fibers.angle_error(dab_fo, dab_rbm),
              "fiber": fibers.angle_error(fo.f, rbm.f)}
    for name, e in errors.items():
        ok = np.isfinite(e)
        thr = np.percentile(e[ok], 90)
        top = ok & (e >= thr)
        rep.add_row(field=name, p50_deg=float(np.percentile(e[ok], 50)), p90_deg=float(thr),
                    p99_deg=float(np.percentile(e[ok], 99)), max_deg=float(e[ok].max()),
                    max_outside_apex_deg=float(np.nanmax(e[~near])), top_decile_near_apex=float(near[top].mean()))
    logs = {"transmural": log_t, "apicobasal": log_ab, "fiber": fo.meta["log"]}
    fo_system = fo.meta["system"]
    nem = fibers.nematic_deviation(fo.meta["f_raw"], fo_system)
    nem_norm = float(np.sqrt(np.sum(nem[fo_system.free] ** 2))) / max(int(fo_system.free.sum()), 1)
    tol = config.rtol * logs["fiber"].residuals[0]
    near_idx = np.flatnonzero(near)
    small = np.flatnonzero(np.linalg.norm(dab_raw, axis=1) < 0.5)
    rep.summary.update(
        iterations={k: v.iterations for k, v in logs.items()},
        status={k: v.status for k, v in logs.items()},
        apex=apex, near_apex_vertices=int(near.sum()),
        rbm_orthonormality=fibers.FiberBundle.orthonormality_defect(rbm, near_idx),
        fo_orthonormality=fibers.FiberBundle.orthonormality_defect(fo, near_idx),
        apicobasal_small_nodes=[int(v) for v in small],
        nematic_deviation_l2=nem_norm, solver_tolerance=tol)
    tab = {r["field"]: r for r in rep.rows}
    rep.check("all director solves converge", all(v.converged for v in logs.values()),
              ", ".join(f"{k}:{v.iterations}" for k, v in logs.items()))
    for label, b in (("rbm", rbm), ("frank-oseen", fo)):
        keep = np.ones(mesh.n_vertices, dtype=bool)
        keep[apex] = False
        dev = float(np.abs(1 - np.linalg.norm(b.f[keep], axis=1)).max())
        rep.check(f"{label} fibers unit norm within 1e-6", dev <= 1e-6, f"{dev:.2e}")
        orth = rep.summary[f"{'rbm' if label == 'rbm' else 'fo'}_orthonormality"]
        rep.check(f"{label} bundle orthonormal within 1e-3 away from the apex", orth <= 1e-3, f"{orth:.2e}")
    rep.check(f"transmural p99 angle error <= {trans_p99_deg} deg", tab["transmural"]["p99_deg"] <= trans_p99_deg,
              f"{tab['transmural']['p99_deg']:.2f}")
    for f in ("apicobasal", "fiber"):
        rep.check(f"{f} top-decile errors near the apex (fraction >= {concentration})",
                  tab[f]["top_decile_near_apex"] >= concentration, f"{tab[f]['top_decile_near_apex']:.3f}")
    rep.check(f"fiber error away from the apex <= {fiber_interior_deg} deg",
              tab["fiber"]["max_outside_apex_deg"] <= fiber_interior_deg,
              f"{tab['fiber']['max_outside_apex_deg']:.2f}")
    rep.check("apicobasal director vanishes only at the apex", small.tolist() == [apex], f"{small.tolist()}")
    rep.check("nematic deviation <= 10 x solver tolerance", nem_norm <= 10 * tol, f"{nem_norm:.3e} vs {10 * tol:.3e}")
    if out_dir is not None:
        from pathlib import Path

        from .io import write_vtu

        out = Path(out_dir)
        write_vtu(out / "lv_rbm.vtu", mesh, {"fiber": rbm.f, "sheet": rbm.s, "normal": rbm.n,
                                             "potential": phi_t})
        write_vtu(out / "lv_fo.vtu", mesh, {"fiber": fo.f, "sheet": fo.s, "normal": fo.n,
                                            "angle_error": errors["fiber"]})
    rep.meta = {"rbm": rbm, "fo": fo, "errors": errors, "mesh": mesh}
    return rep


STUDIES = {
    "robustness": study_robustness,
    "singularity": study_singularity,
    "optimality": study_optimality,
    "convergence": study_convergence,
    "ring": study_ring,
    "hedgehog": study_hedgehog,
    "lv_comparison": study_lv_comparison,
}
