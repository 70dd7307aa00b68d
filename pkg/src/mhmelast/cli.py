"""Command-line experiment runner: convergence studies, incompressibility
sweeps, patch tests, well-posedness diagnostics and field export, emitting
plot-ready CSV artifacts and a machine-readable summary.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import _assembly as asm
from .mesh import unit_square_mesh
from .pipeline import MHMConfig, default_threads, solve_mhm
from .singlelevel import solve_galerkin_dirichlet, solve_gals_dirichlet
from .verify import (BrennerProblem, LinearProblem, compressibility_residual,
                     compute_errors, convergence_orders, spectral_diagnostics)

CSV_HEADER = "H,err_l2,ord_l2,err_h1,ord_h1,err_sigma,ord_sigma,err_p,ord_p"

# acceptance bands: observed asymptotic orders per degree, minus a 0.25
# margin for parameter and mesh differences
ORDER_BANDS = {
    1: (2.01, 1.00, 1.10, 1.47),
    2: (3.21, 2.11, 1.94, 1.93),
    3: (3.50, 2.50, 2.49, 2.49),
}
BAND_MARGIN = 0.25

MHM_METHODS = {"mhm-gals": "gals", "mhm-ga": "galerkin"}
SINGLE_METHODS = {"gals", "stdgalerkin"}


def _fmt(x):
    return f"{x:.16e}"


def _parse_levels(text):
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",")]


def _read_config_file(path):
    out = {}
    with open(path) as f:
        for ln in f:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise SystemExit(f"malformed config line: {ln!r}")
            key, val = ln.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _apply_config_file(args):
    """File values fill in only options the command line left at default."""
    if not getattr(args, "config", None):
        return args
    file_vals = _read_config_file(args.config)
    for key, val in file_vals.items():
        if not hasattr(args, key):
            raise SystemExit(f"unknown config key: {key}")
        if key in args._explicit:
            continue
        cur = getattr(args, key)
        if isinstance(cur, bool):
            val = val.lower() in ("1", "true", "yes", "on")
        elif isinstance(cur, int):
            val = int(val)
        elif isinstance(cur, float):
            val = float(val)
        setattr(args, key, val)
    return args


class _TrackingParser(argparse.ArgumentParser):
    """Remembers which destinations were set explicitly on the command line
    so a config file can fill in the rest."""

    def parse_args(self, argv=None, namespace=None):
        args = super().parse_args(argv, namespace)
        explicit = set()
        argv = list(sys.argv[1:] if argv is None else argv)
        for action in self._get_all_actions():
            for opt in action.option_strings:
                if any(a == opt or a.startswith(opt + "=") for a in argv):
                    explicit.add(action.dest)
        args._explicit = explicit
        return args

    def _get_all_actions(self):
        actions = list(self._actions)
        for action in self._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sub in action.choices.values():
                    actions.extend(sub._actions)
        return actions


def _errors_to_rows(Hs, records):
    rows = []
    cols = [np.array([getattr(r, a) for r in records])
            for a in ("l2_u", "h1_u", "l2_sigma", "l2_p")]
    orders = [convergence_orders(c) if len(c) > 1 and np.all(c > 0) else []
              for c in cols]
    for i, H in enumerate(Hs):
        row = [_fmt(H)]
        for c, o in zip(cols, orders):
            row.append(_fmt(c[i]))
            row.append(f"{o[i - 1]:.2f}" if i > 0 and len(o) else "-")
        rows.append(",".join(row))
    return rows, orders


def _solve_single(method, n, k, nu, theta, problem):
    mesh = unit_square_mesh(n)
    if method == "stdgalerkin":
        return solve_galerkin_dirichlet(mesh, problem.material, k, problem.f,
                                        u_dirichlet=problem.u)
    return solve_gals_dirichlet(mesh, problem.material, k, problem.f,
                                u_dirichlet=problem.u, theta=theta)


def _solve_mhm_level(method, args, level, problem):
    cfg = MHMConfig(n=args.n, level=level, k=args.k, ell=args.ell, nu=args.nu,
                    theta=args.theta, kind=MHM_METHODS[method],
                    threads=args.threads,
                    override_wellposedness=args.override_wellposedness)
    return solve_mhm(cfg, problem)


def cmd_convergence(args):
    os.makedirs(args.out, exist_ok=True)
    method = args.method
    problem = BrennerProblem(args.nu)
    levels = _parse_levels(args.levels)
    records, Hs = [], []
    mhm_runs = []
    for level in levels:
        if method in MHM_METHODS:
            sol, data = _solve_mhm_level(method, args, level, problem)
            H = data.skeleton.h_skeleton
            mhm_runs.append((sol, data))
        else:
            n = int(round(2 ** (5 - args.k))) * 2 ** level
            sol = _solve_single(method, n, args.k, args.nu, args.theta,
                                problem)
            H = sol.mesh.h_max
        records.append(compute_errors(sol, problem))
        Hs.append(H)
    rows, orders = _errors_to_rows(Hs, records)
    csv_path = os.path.join(args.out, f"convergence_{method}_k{args.k}.csv")
    with open(csv_path, "w") as f:
        f.write(CSV_HEADER + "\n")
        f.write("\n".join(rows) + "\n")

    summary = {"method": method, "k": args.k, "ell": args.ell, "nu": args.nu,
               "levels": levels, "csv": csv_path}
    failed = False
    if method in ("mhm-gals", "gals") and len(levels) > 1:
        bands = [b - BAND_MARGIN for b in ORDER_BANDS[args.k]]
        measured = [float(o[-1]) for o in orders]
        checks = [m >= b for m, b in zip(measured, bands)]
        summary["orders_last_step"] = measured
        summary["order_bands"] = bands
        summary["bands_pass"] = checks
        failed = not all(checks)
    with open(os.path.join(args.out, f"summary_{method}_k{args.k}.json"),
              "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print("\n".join([CSV_HEADER] + rows))
    return 1 if failed else 0


def cmd_nu_sweep(args):
    os.makedirs(args.out, exist_ok=True)
    methods = args.methods.split(",")
    nus = [float(t) for t in args.nus.split(",")]
    results = {}
    for method in methods:
        h1 = []
        for nu in nus:
            problem = BrennerProblem(nu)
            if method in MHM_METHODS:
                ns = argparse.Namespace(**vars(args))
                ns.nu = nu
                sol, _ = _solve_mhm_level(method, ns, args.level, problem)
            else:
                n = int(round(2 ** (5 - args.k)))  # h = sqrt(2)/n = 2^(k-4.5)
                sol = _solve_single(method, n, args.k, nu, args.theta, problem)
            h1.append(compute_errors(sol, problem).h1_u)
        results[method] = h1
    summary = {"nus": nus, "h1_errors": results, "ratios": {}}
    rows = ["method,nu,err_h1"]
    failed = False
    for method, errs in results.items():
        for nu, e in zip(nus, errs):
            rows.append(f"{method},{nu},{_fmt(e)}")
        ratio = float(errs[-1] / errs[0])
        summary["ratios"][method] = ratio
        if method in ("mhm-gals", "gals") and ratio > 3:
            failed = True
        if method == "stdgalerkin" and args.k == 1 and ratio < 5:
            failed = True
    with open(os.path.join(args.out, "nu_sweep.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")
    with open(os.path.join(args.out, "summary_nu_sweep.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print("\n".join(rows))
    return 1 if failed else 0


def cmd_patch_test(args):
    os.makedirs(args.out, exist_ok=True)
    problem = LinearProblem([[0.3, 0.1], [-0.2, 0.4]], [0.05, -0.02],
                            nu=0.3)
    scale = max(np.abs(problem.A).max(), 1.0)
    failed = False
    rows = ["k,ell,err_l2,err_h1,err_sigma,err_p"]
    for k, ell in ((1, 1), (2, 1)):
        cfg = MHMConfig(n=args.n, level=0, k=k, ell=ell, nu=0.3,
                        theta=args.theta, threads=args.threads)
        sol, _ = solve_mhm(cfg, problem)
        rec = compute_errors(sol, problem)
        vals = (rec.l2_u, rec.h1_u, rec.l2_sigma, rec.l2_p)
        rows.append(f"{k},{ell}," + ",".join(_fmt(v) for v in vals))
        if max(vals) > 1e-9 * scale:
            failed = True
    with open(os.path.join(args.out, "patch_test.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")
    print("\n".join(rows))
    print("patch test:", "FAIL" if failed else "PASS")
    return 1 if failed else 0


def cmd_diagnose(args):
    problem = BrennerProblem(args.nu)
    cfg = MHMConfig(n=args.n, level=args.level, k=args.k, ell=args.ell,
                    nu=args.nu, theta=args.theta, threads=args.threads,
                    override_wellposedness=args.override_wellposedness)
    sol, data = solve_mhm(cfg, problem)
    spec = spectral_diagnostics(data.system, skeleton=data.skeleton)
    comp = compressibility_residual(sol, problem.material)
    print(f"refinement conditions: {'pass' if data.refinement.ok else 'FAIL'}")
    print(f"lambda_min on ker(B'): {spec.lambda_min:.6e}")
    print(f"lambda_min, deviatoric: {spec.lambda_min_deviatoric:.6e}")
    print(f"smallest singular value of B: {spec.inf_sup:.6e}")
    print(f"|A|_2: {spec.norm_A:.6e}")
    print(f"max |compressibility residual|: {max(map(abs, comp.values())):.3e}")
    print("diagnostics:", "PASS" if spec.ok else "FAIL")
    return 0 if spec.ok else 1


def cmd_export_fields(args):
    os.makedirs(args.out, exist_ok=True)
    problem = BrennerProblem(args.nu)
    cfg = MHMConfig(n=args.n, level=args.level, k=args.k, ell=args.ell,
                    nu=args.nu, theta=args.theta, threads=args.threads)
    sol, data = solve_mhm(cfg, problem)
    eps = (1 - 2 * cfg.nu) / (2 * cfg.G * cfg.nu)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    rows = ["element,x,y,u1,u2,p,s11,s12,s22"]
    for eid in sorted(sol.fields):
        fld = sol.fields[eid]
        cache = fld.cache
        mesh = cache.local_mesh.mesh
        ref = cache.dofh.ref
        vals, rgrads, _ = ref.tabulate(corners)
        geo = asm.Geometry(mesh)
        grads = np.einsum("tji,qbi->tqbj", geo.jinv_t, rgrads)
        pts = geo.physical_points(corners)
        un = fld.u.reshape(-1, 2)[cache.dofh.loc2glob]       # (nt, nb, 2)
        uh = np.einsum("qb,tbc->tqc", vals, un)
        guh = np.einsum("tqbj,tbc->tqcj", grads, un)
        div = guh[..., 0, 0] + guh[..., 1, 1]
        if fld.p is not None:
            ph = np.einsum("qb,tb->tq", vals, fld.p[cache.dofh.loc2glob])
        else:
            ph = -div / eps
        sh = cfg.G * (guh + np.swapaxes(guh, -1, -2))
        sh[..., 0, 0] -= ph
        sh[..., 1, 1] -= ph
        for t in range(mesh.n_triangles):
            for q in range(3):
                rows.append(",".join(
                    [str(eid)] + [_fmt(v) for v in (
                        pts[t, q, 0], pts[t, q, 1], uh[t, q, 0], uh[t, q, 1],
                        ph[t, q], sh[t, q, 0, 0], sh[t, q, 0, 1],
                        sh[t, q, 1, 1])]))
    with open(os.path.join(args.out, "fields.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")
    lam_rows = ["segment,component,mode,coefficient"]
    dps = data.skeleton.dofs_per_segment
    ell1 = data.skeleton.degree + 1
    for seg in data.skeleton.segments:
        for i, dof in enumerate(data.skeleton.segment_dofs(seg.id)):
            lam_rows.append(f"{seg.id},{i // ell1},{i % ell1},"
                            f"{_fmt(sol.lam[dof])}")
    with open(os.path.join(args.out, "traction.csv"), "w") as f:
        f.write("\n".join(lam_rows) + "\n")
    print(f"wrote {args.out}/fields.csv and {args.out}/traction.csv")
    return 0


def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--override-wellposedness", action="store_true",
                   dest="override_wellposedness")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--nu", type=float, default=0.4999)
    p.add_argument("--level", type=int, default=0)


def main(argv=None):
    parser = _TrackingParser(prog="mhmelast")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="refinement study for one method")
    _add_common(p)
    p.add_argument("--method", default="mhm-gals",
                   choices=sorted(MHM_METHODS) + sorted(SINGLE_METHODS))
    p.add_argument("--levels", default="0:4", help="a:b range or comma list")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("nu-sweep", help="locking comparison across nu")
    _add_common(p)
    p.add_argument("--methods", default="stdgalerkin,mhm-gals")
    p.add_argument("--nus", default="0.3,0.4,0.49,0.499,0.4999,0.49999")
    p.set_defaults(func=cmd_nu_sweep)

    p = sub.add_parser("patch-test", help="linear-solution exactness test")
    _add_common(p)
    p.set_defaults(func=cmd_patch_test)

    p = sub.add_parser("diagnose", help="well-posedness diagnostics")
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("export-fields", help="export sampled solution fields")
    _add_common(p)
    p.set_defaults(func=cmd_export_fields)

    args = parser.parse_args(argv)
    args = _apply_config_file(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
