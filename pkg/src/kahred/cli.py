"""Command-line driver: scene in, CSV grid and JSON report out."""
from __future__ import annotations

import argparse
import copy
import csv
import functools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import convexity as V
from . import einstein as K
from . import potential as P
from . import reduction as R
from . import toric as T
from .errors import KahredError, NumericalError, UnverifiedBound, ValidationError
from .scene import COMMANDS, Scene, load_scene, scene_from_dict

DEFAULT_TOL = {"reduce": 1e-10, "dh": 1e-8, "moment-image": 1e-8, "toric": 1e-6,
               "ke": 1e-6, "validate": 1e-6}
DH_STEP = 1e-3


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _matrix_cols(name, k):
    return [f"{p}_{name}_{a + 1}_{b + 1}" for a in range(k) for b in range(k) for p in ("re", "im")]


def _matrix_vals(M):
    M = np.atleast_2d(M)
    return [v for a in range(M.shape[0]) for b in range(M.shape[1]) for v in (M[a, b].real, M[a, b].imag)]


def _point_cols(scene: Scene):
    cols = [f"lambda_{i + 1}" for i in range(scene.n)]
    cols += [f"{p}_w_{a + 1}" for a in range(scene.m) for p in ("re", "im")]
    return cols


def _point_vals(lam, w):
    return list(lam) + [v for c in np.atleast_1d(w) for v in (c.real, c.imag)]


# -- per-row work (runs in workers) -------------------------------------------------


@functools.lru_cache(maxsize=8)
def _scene(text: str) -> Scene:
    return scene_from_dict(json.loads(text))


def _row_reduce(scene, li, row, extra):
    prob = R.ReductionProblem(scene.potential, scene.levels[li])
    out, s0 = [], None
    for w in row:
        r = R.reduce_at(prob, w, s0, curvature=False)
        s0 = r.s_star
        out.append(_point_vals(prob.level, w) + list(r.s_star)
                   + [r.rho_lambda, r.v_eff, r.h_lambda] + _matrix_vals(r.psi) + [r.grad_norm])
    return out


def _row_dh(scene, li, row, extra):
    lam = np.array(scene.levels[li])
    prob = R.ReductionProblem(scene.potential, tuple(lam))
    out, s0 = [], None
    for w in row:
        s0 = R.solve_level_set(prob, w, s0)
        psi = R.reduced_metric(prob, w, s_star=s0)
        mu, mu_i = R.dh_decomposition(prob, w, s0)
        lam_mu = sum((l * M for l, M in zip(lam, mu_i)), np.zeros_like(psi))
        res = float(np.max(np.abs(psi - mu - lam_mu)))
        flipped = float(np.max(np.abs(psi - mu + lam_mu)))  # candidate -mu_i
        fd = 0.0
        for i in range(scene.n):
            e = np.zeros(scene.n)
            e[i] = DH_STEP
            hi = R.reduced_metric(R.ReductionProblem(scene.potential, tuple(lam + e)), w, s0)
            lo = R.reduced_metric(R.ReductionProblem(scene.potential, tuple(lam - e)), w, s0)
            fd = max(fd, float(np.max(np.abs((hi - lo) / (2 * DH_STEP) - mu_i[i]))))
        vals = _point_vals(lam, w) + _matrix_vals(mu)
        for M in mu_i:
            vals += _matrix_vals(M)
        out.append(vals + [res, flipped, fd])
    return out


def _row_ke(scene, li, row, extra):
    prob = R.ReductionProblem(scene.potential, scene.levels[li])
    ke = K.KEScene(prob, scene.kappa, np.array(extra["a"]))
    rep = K.reduced_ke_identity(ke, row)
    return [_point_vals(prob.level, w) + [e1, e2, e3] for w, e1, e2, e3 in rep.per_point]


def _row_toric(scene, li, row, extra):
    spec = scene.toric
    prob = T.reduction_problem(spec)
    out, s0 = [], None
    for w in row:
        s0 = R.solve_level_set(prob, w, s0)
        a = R.reduced_metric(prob, w, s_star=s0)
        b = T.facet_metric(spec, w, s_star=s0)
        t = T.reduced_moment_point(spec, w, s_star=s0)
        out.append(_point_vals(prob.level, w) + list(t) + _matrix_vals(a) + _matrix_vals(b)
                   + [float(np.max(np.abs(a - b)))])
    return out


def _row_validate(scene, li, row, extra):
    prob = R.ReductionProblem(scene.potential, scene.levels[li])
    out, s0 = [], None
    for w in row:
        s0 = R.solve_level_set(prob, w, s0)
        p = prob.point(s0, w)
        H = P.full_complex_hessian(scene.potential, p)
        min_eig = float(np.linalg.eigvalsh(H)[0])
        psi = R.reduced_metric(prob, w, s_star=s0)
        scale = 1.0 + float(np.max(np.abs(psi))) if psi.size else 1.0
        direct = float(np.max(np.abs(psi - R.reduced_metric_direct(prob, w, s0)), initial=0.0))
        fd = float(np.max(np.abs(psi - R.fd_reduced_metric(prob, w)), initial=0.0)) / scale
        full, fact = R.determinant_factorization(prob, w, s0)
        det_rel = abs(full - fact) / abs(full)
        intr = float(np.max(np.abs(psi - R.intrinsic_hessian(prob, s0, w, s0)), initial=0.0))
        out.append(_point_vals(prob.level, w) + [min_eig, direct, fd, det_rel, intr])
    return out


def _row_orbit(scene, li, chunk, extra):
    ob = scene.orbit
    F = V.orbit_function(ob.weights, ob.amplitudes)
    FH = None
    if ob.perturbation is not None:
        FH = V.PerturbedFunction(F, _perturbation(scene))
    out = []
    for ell in chunk:
        ell = np.asarray(ell)
        res = V.minimize_shifted(F, ell)
        cert = res.certificate
        ok = V.verify_certificate(F.exponents, ell, cert)
        if res.converged:
            resid = float(np.max(np.abs(F.gradient(res.s_star) - ell)))
            ray = [np.nan] * F.n
        else:
            resid = float("nan")
            ray = list(res.ray)
        vals = list(ell) + [cert.kind, ok, res.converged, resid] + ray + [res.decreasing]
        if FH is not None:
            vals += [V.probe_stability(F, ell), V.probe_stability(FH, ell)]
        out.append(vals)
    return out


def _perturbation(scene):
    ob = scene.orbit
    return P.from_expression(ob.perturbation, ob.weights.shape[1], 0, name="perturbation")


_ROWS = {"reduce": _row_reduce, "dh": _row_dh, "ke": _row_ke, "toric": _row_toric,
         "validate": _row_validate, "moment-image": _row_orbit}


def _task(args):
    text, command, li, row, extra = args
    return _ROWS[command](_scene(text), li, row, extra)


# -- orchestration -----------------------------------------------------------------


def _headers(scene, command):
    pc = _point_cols(scene)
    n, m = scene.n, scene.m
    if command == "reduce":
        return pc + [f"s_star_{i + 1}" for i in range(n)] + ["rho_lambda", "v_eff", "h_lambda"] \
            + _matrix_cols("psi", m) + ["grad_norm"]
    if command == "dh":
        cols = pc + _matrix_cols("mu", m)
        for i in range(n):
            cols += _matrix_cols(f"mu{i + 1}", m)
        return cols + ["dh_residual", "dh_residual_flipped", "dlambda_residual"]
    if command == "ke":
        return pc + ["identity_residual", "literal_residual", "simple_residual"]
    if command == "toric":
        k = scene.toric.n
        return pc + [f"t_{i + 1}" for i in range(k)] + _matrix_cols("psi_reduction", m) \
            + _matrix_cols("psi_facet", m) + ["max_diff"]
    if command == "validate":
        return pc + ["min_eig_full", "schur_vs_jets", "schur_vs_fd", "det_factorization", "intrinsic_vs_psi"]
    if command == "moment-image":
        d = scene.orbit.weights.shape[1]
        cols = [f"ell_{i + 1}" for i in range(d)] + ["kind", "certificate_ok", "converged", "residual"]
        cols += [f"ray_{i + 1}" for i in range(d)] + ["ray_decreasing"]
        if scene.orbit.perturbation is not None:
            cols += ["stable_F", "stable_F_plus_H"]
        return cols
    raise ValidationError(f"unknown command {command!r}")


def _sample_levels(poly: V.Polytope, exps, ob) -> list:
    """Deterministic interior and exterior levels at least ``ob.margin`` from the boundary."""
    rng = np.random.default_rng(ob.seed)
    verts = poly.vertices
    lo, hi = exps.min(axis=0) - 1.0, exps.max(axis=0) + 1.0
    inside, outside = [], []
    if poly.affine_dim == 0:
        return inside, outside
    while len(inside) < ob.interior:
        ell = rng.dirichlet(np.ones(len(verts))) @ verts
        c = V.hull_membership(exps, ell)
        if c.kind == "interior" and c.margin >= ob.margin:
            inside.append(ell)
    while len(outside) < ob.exterior:
        ell = rng.uniform(lo, hi)
        c = V.hull_membership(exps, ell)
        if c.kind == "exterior" and c.margin >= ob.margin:
            outside.append(ell)
    return inside, outside


def _run_tasks(tasks, workers):
    if workers <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def run_command(scene: Scene, command: str, out_dir: str = ".", tolerance: float | None = None,
                workers: int = 1, echo=print) -> int:
    """Evaluate ``command`` on ``scene``, write CSV and JSON report, return exit code."""
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    tol = DEFAULT_TOL[command] if tolerance is None else float(tolerance)
    text = json.dumps(scene.raw, sort_keys=True)
    report = {"scene": scene.name, "command": command, "tolerance": tol}
    extra = {}
    checks = {}

    if command == "toric" and scene.toric is None:
        raise ValidationError("toric command needs a toric block")
    if command == "ke" and scene.kappa is None:
        raise ValidationError("ke command needs a ke block")
    if command == "moment-image" and scene.orbit is None:
        raise ValidationError("moment-image command needs an orbit block")
    if command in ("reduce", "dh", "ke", "validate") and scene.n == 0:
        raise ValidationError("reduction needs fiber rank n >= 1")

    if command == "ke":
        prob = R.ReductionProblem(scene.potential, scene.levels[0])
        pts = K.level_set_sample(prob, scene.grid_points())
        ke = K.KEScene.build(prob, scene.kappa, pts)
        div = K.divergence_identity_check(scene.potential, scene.kappa, pts)
        extra["a"] = ke.a.tolist()
        report.update(a=ke.a, a_deviation=ke.a_deviation, c_coefficient=ke.c_coefficient,
                      c_divergence=div.c_div, c_divergence_deviation=div.max_deviation,
                      c_alternative=-(ke.a + 1.0),
                      ke_residual=K.ke_residual(scene.potential, scene.kappa, pts))
        checks["ke_residual"] = (report["ke_residual"], 1e-8)
        checks["a_deviation"] = (ke.a_deviation, 1e-8)
        checks["c_divergence_deviation"] = (div.max_deviation, 1e-8)

    rows = scene.grid_rows()
    if command == "moment-image":
        ob = scene.orbit
        F = V.orbit_function(ob.weights, ob.amplitudes)
        poly = V.orbit_moment_image(ob.weights, ob.amplitudes)
        report.update(vertices=poly.vertices, affine_dim=poly.affine_dim,
                      facets=[{"normal": u, "offset": b} for u, b in poly.facets])
        if ob.perturbation is not None:
            report["perturbation_sup"] = V.sup_on_box(_perturbation(scene))
            if report["perturbation_sup"] > ob.perturbation_bound:
                raise UnverifiedBound(f"sampled |H| = {report['perturbation_sup']:g} exceeds "
                                      f"the declared bound {ob.perturbation_bound:g}")
        inside, outside = _sample_levels(poly, F.exponents, ob)
        levels = [list(map(float, v)) for v in inside + outside]
        tasks = [(text, command, 0, levels[k:k + 25], extra) for k in range(0, len(levels), 25)]
    elif command == "toric":
        spec = scene.toric
        xi = T.polarization_check(spec)
        sl = T.delzant_slice(spec)
        report.update(polarization=xi, slice_vertices=sl.vertices, active_sets=sl.active_sets,
                      facet_potential_at_base_point=T.facet_potential(spec, spec.base_point))
        tasks = [(text, command, 0, row, extra) for row in rows]
    else:
        tasks = [(text, command, li, row, extra) for li in range(len(scene.levels)) for row in rows]

    results = [r for chunk in _run_tasks(tasks, workers) for r in chunk]
    header = _headers(scene, command)

    col = {name: i for i, name in enumerate(header)}

    def colmax(name):
        vals = [float(r[col[name]]) for r in results]
        return max(vals) if vals else 0.0

    if command == "dh":
        checks["dh_residual"] = (colmax("dh_residual"), tol)
        checks["dlambda_residual"] = (colmax("dlambda_residual"), 1e-4)
        report["dh_residual_flipped"] = colmax("dh_residual_flipped")
        report["mu_i_convention"] = "mu_i = -ddbar s*_i; dh_residual_flipped scores -mu_i instead"
    elif command == "ke":
        checks["identity_residual"] = (colmax("identity_residual"), tol)
        report["literal_residual"] = colmax("literal_residual")
        report["simple_residual"] = colmax("simple_residual")
    elif command == "toric":
        checks["max_diff"] = (colmax("max_diff"), tol)
    elif command == "validate":
        checks["schur_vs_fd"] = (colmax("schur_vs_fd"), tol)
        checks["schur_vs_jets"] = (colmax("schur_vs_jets"), 1e-8)
        checks["det_factorization"] = (colmax("det_factorization"), 1e-8)
        checks["intrinsic_vs_psi"] = (colmax("intrinsic_vs_psi"), 1e-8)
        report["min_eig_full"] = min(float(r[col["min_eig_full"]]) for r in results)
        checks["spsh"] = (0.0 if report["min_eig_full"] > 0 else 1.0, 0.0)
    elif command == "reduce":
        checks["grad_norm"] = (colmax("grad_norm"), tol)
    elif command == "moment-image":
        inner = [r for r in results if r[col["kind"]] == "interior"]
        outer = [r for r in results if r[col["kind"]] == "exterior"]
        report["interior_levels"] = len(inner)
        report["exterior_levels"] = len(outer)
        report["certificates_verified"] = all(r[col["certificate_ok"]] for r in results)
        checks["newton_residual"] = (max((r[col["residual"]] for r in inner), default=0.0), tol)
        checks["unconverged_interior"] = (sum(not r[col["converged"]] for r in inner), 0)
        checks["non_decreasing_rays"] = (sum(not r[col["ray_decreasing"]] for r in outer), 0)
        checks["bad_certificates"] = (sum(not r[col["certificate_ok"]] for r in results), 0)
        if "stable_F" in col:
            checks["disagreements"] = (sum(r[col["stable_F"]] != r[col["stable_F_plus_H"]]
                                           for r in results), 0)

    report["rows"] = len(results)
    report["checks"] = {k: {"value": v, "tolerance": t, "passed": bool(v <= t)}
                        for k, (v, t) in checks.items()}
    passed = all(c["passed"] for c in report["checks"].values())
    report["passed"] = passed

    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, f"{scene.name}.{command}")
    with open(stem + ".csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in results:
            wr.writerow([fmt(v) for v in r])
    with open(stem + ".report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")

    for k, c in report["checks"].items():
        echo(f"{command} {k}: {c['value']:.3e} (tolerance {c['tolerance']:.1e}) "
             f"{'ok' if c['passed'] else 'FAIL'}")
    return 0 if passed else NumericalError.exit_code


def _apply_overrides(raw: dict, lam: str | None, grid: int | None) -> dict:
    d = copy.deepcopy(raw)
    if lam is not None:
        try:
            vals = [float(v) for v in lam.split(",") if v.strip()]
        except ValueError:
            raise ValidationError(f"--lambda expects comma-separated floats, got {lam!r}") from None
        n = d.get("n")
        d["lambda"] = vals if n == 1 else [vals]
    if grid is not None:
        if grid < 1:
            raise ValidationError("--grid must be at least 1")
        d["grid"] = [[ax[0], ax[1], grid] for ax in d.get("grid", [])]
    return d


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kahred", description="Torus reductions of Kähler potentials.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scene", required=True, help="scene JSON file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--lambda", dest="lam", help="comma-separated level(s), overrides the scene")
    ap.add_argument("--grid", type=int, help="points per grid axis, overrides the scene")
    ap.add_argument("--tolerance", type=float, help="tolerance for the main check")
    ap.add_argument("--workers", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scene = load_scene(args.scene)
        if args.lam is not None or args.grid is not None:
            scene = scene_from_dict(_apply_overrides(scene.raw, args.lam, args.grid))
        return run_command(scene, args.command, args.out, args.tolerance, max(1, args.workers))
    except KahredError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:  # anything else is a bug
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
