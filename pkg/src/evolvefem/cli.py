"""Command-line interface: convergence experiments, EOC tables, and the
seeded self-check suites.

Sub-commands:
  run    one of the built-in experiments over a refinement series;
         writes the error CSV and a JSON summary with EOC slopes.
  eoc    pairwise and least-squares slopes of an existing error CSV.
  check  deterministic property suites (assembly invariants, transport
         identities, norm-growth bounds, dual-norm identity, affine
         reproduction, defect decay); exit status reflects overall pass.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harmonic
from .analysis import (
    ERROR_COLUMNS,
    check_matrix_difference_identity,
    defect_diffusion,
    defect_velocity,
    dual_norm_interior,
    eoc,
    matrix_norm,
    norm_growth_factors,
    read_error_csv,
)
from .assembly import (
    assemble_mass,
    assemble_stiffness,
    extract_blocks,
    symmetry_defect,
)
from .experiments import (
    ExperimentConfig,
    derive_ex3_data,
    ex1_velocity,
    ex3_exact_u,
    ex3_flow,
    run_experiment,
    write_summary_json,
)
from .harmonic import solve_harmonic_extension, trace_boundary_velocity
from .linsolve import SolverError, factorize
from .mesh import (
    generate_ball_mesh,
    generate_disk_mesh,
    node_coordinates,
    positions_from_coordinates,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="evolvefem",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a convergence experiment")
    p_run.add_argument("--config", help="flat key=value config file (flags override)")
    p_run.add_argument("--experiment", choices=["ex1", "ex2", "ex3"])
    p_run.add_argument("--degree", type=int, choices=[1, 2])
    p_run.add_argument("--levels", type=int)
    p_run.add_argument("--tau", type=float)
    p_run.add_argument("--tau-ref", dest="tau_ref", type=float)
    p_run.add_argument("--bdf", type=int, choices=[1, 2, 3, 4])
    p_run.add_argument("--beta", type=float)
    p_run.add_argument("--T", type=float)
    p_run.add_argument("--out", help="CSV output path (JSON summary alongside)")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--timing", action="store_true",
                       help="include wall-clock times in the JSON summary "
                            "(breaks byte-identical reruns)")

    p_eoc = sub.add_parser("eoc", help="EOC slopes of an error CSV")
    p_eoc.add_argument("path")

    p_check = sub.add_parser("check", help="run the property suites")
    p_check.add_argument("--suite", choices=sorted(SUITES),
                         help="run a single suite instead of all")
    p_check.add_argument("--seed", type=int, default=1234)
    p_check.add_argument("--debug-flip-coupling", action="store_true",
                         help=argparse.SUPPRESS)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "eoc":
        return cmd_eoc(args.path)
    return cmd_check(args)


# ---------------------------------------------------------------------------
# run

def _load_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


_CONFIG_TYPES = {
    "experiment": str, "degree": int, "levels": int, "tau": float,
    "tau_ref": float, "T": float, "beta": float, "bdf": int, "seed": int,
    "workers": int, "out": str,
}


def build_config(args) -> ExperimentConfig:
    kwargs = {}
    if getattr(args, "config", None):
        for key, val in _load_config_file(args.config).items():
            if key not in _CONFIG_TYPES:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _CONFIG_TYPES[key](val)
    for key in _CONFIG_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            kwargs[key] = flag
    kwargs["timing"] = bool(getattr(args, "timing", False))
    return ExperimentConfig(**kwargs)


def cmd_run(args) -> int:
    config = build_config(args)
    table, summary = run_experiment(config)
    out = config.out or f"{config.experiment}_k{config.degree}.csv"
    table.write_csv(out)
    json_path = out[:-4] + ".json" if out.endswith(".csv") else out + ".json"
    write_summary_json(summary, json_path)
    print(f"wrote {out} and {json_path}")
    _print_slope_table(table)
    return 0


def _print_slope_table(table) -> None:
    slopes = table.slopes()
    for col in ERROR_COLUMNS:
        if col in slopes:
            pw = " ".join(f"{s:7.3f}" for s in slopes[col]["pairwise"])
            print(f"{col:>14}  LS {slopes[col]['least_squares']:6.3f}  pairwise {pw}")


def cmd_eoc(path) -> int:
    table = read_error_csv(path)
    if len(table.rows) < 2:
        raise ValueError("need >= 2 rows to compute EOC slopes")
    _print_slope_table(table)
    return 0


# ---------------------------------------------------------------------------
# check suites

def _random_smooth_displacement(rng, coords, amplitude=0.02):
    """Flat vector field with small random affine + quadratic components."""
    dim = coords.shape[1]
    n = coords.shape[0]
    out = np.empty((dim, n))
    for c in range(dim):
        a0 = rng.uniform(-amplitude, amplitude, size=dim + 1)
        a2 = rng.uniform(-amplitude, amplitude, size=(dim, dim))
        out[c] = a0[0] + coords @ a0[1:] + np.einsum("na,ab,nb->n", coords, a2, coords)
    return out.reshape(-1)


def _check_meshes(degree=2):
    topo2, x2 = generate_disk_mesh(0.35, degree)
    topo3, x3 = generate_ball_mesh(0.9, degree)
    return [(topo2, x2), (topo3, x3)]


def suite_assembly(rng, report) -> bool:
    """Symmetry, stiffness kernel, SPD blocks, and solver residuals."""
    ok = True
    for degree in (1, 2):
        for topo, x in _check_meshes(degree):
            xp = x + _random_smooth_displacement(rng, node_coordinates(topo, x))
            for geom in (x, xp):
                M = assemble_mass(topo, geom)
                A = assemble_stiffness(topo, geom)
                sym = max(symmetry_defect(M), symmetry_defect(A))
                kern = float(np.abs(A @ np.ones(A.shape[0])).max() / abs(A).max())
                try:
                    solver = factorize(extract_blocks(A, topo.n_boundary).A22,
                                       role="check A22")
                    solver.solve(rng.standard_normal(solver.n))
                    spd = True
                except SolverError:
                    spd = False
                good = sym <= 1e-13 and kern <= 1e-12 and spd
                ok &= good
                report(f"assembly dim={topo.dim} k={degree} sym={sym:.1e} "
                       f"kernel={kern:.1e} spd={spd}", good)
    return ok


def suite_transport(rng, report, n_cases=10) -> bool:
    """Matrix-difference transport identity on randomly perturbed meshes."""
    ok = True
    for degree in (1, 2):
        for topo, x in _check_meshes(degree):
            coords = node_coordinates(topo, x)
            for kind in ("mass", "stiffness"):
                tol = 1e-12 if (degree == 1 and kind == "mass") else 1e-8
                worst = 0.0
                for _ in range(n_cases):
                    e = _random_smooth_displacement(rng, coords)
                    w = rng.standard_normal(topo.n_nodes)
                    z = rng.standard_normal(topo.n_nodes)
                    _, _, disc = check_matrix_difference_identity(topo, x, e, w, z, kind)
                    worst = max(worst, disc)
                good = worst <= tol
                ok &= good
                report(f"transport dim={topo.dim} k={degree} {kind} "
                       f"worst={worst:.2e} tol={tol:.0e}", good)
    return ok


def suite_growth(rng, report, n_cases=25) -> bool:
    """Norm-growth bounds with measured sup-norm factors along the homotopy."""
    ok = True
    for topo, x in _check_meshes(2):
        coords = node_coordinates(topo, x)
        worst_m = worst_a = -np.inf
        for _ in range(n_cases):
            e = _random_smooth_displacement(rng, coords)
            w = rng.standard_normal(topo.n_nodes)
            mu, eta = norm_growth_factors(topo, x, e)
            nm0 = matrix_norm(w, assemble_mass(topo, x))
            nm1 = matrix_norm(w, assemble_mass(topo, x + e))
            na0 = matrix_norm(w, assemble_stiffness(topo, x))
            na1 = matrix_norm(w, assemble_stiffness(topo, x + e))
            worst_m = max(worst_m, nm1 / (np.exp(mu / 2) * nm0))
            worst_a = max(worst_a, na1 / (np.exp(eta / 2) * na0))
        good = worst_m <= 1.0 + 1e-10 and worst_a <= 1.0 + 1e-10
        ok &= good
        report(f"growth dim={topo.dim} mass ratio={worst_m:.6f} "
               f"stiffness ratio={worst_a:.6f}", good)
    return ok


def suite_dualnorm(rng, report, n_samples=200) -> bool:
    """Dual norm equals the sup of d'M z / |z|_A over the interior space."""
    ok = True
    for topo, x in _check_meshes(2):
        M = assemble_mass(topo, x)
        A = assemble_stiffness(topo, x)
        bm, ba = extract_blocks(M, topo.n_boundary), extract_blocks(A, topo.n_boundary)
        n_int = bm.A22.shape[0]
        d = rng.standard_normal(n_int)
        value = dual_norm_interior(bm, ba, d)
        solver = factorize(ba.A22, role="dual-norm check")
        z_star = solver.solve(bm.A22 @ d)
        quotients = []
        for z in [z_star] + [rng.standard_normal(n_int) for _ in range(n_samples)]:
            quotients.append(float(d @ (bm.A22 @ z)) / matrix_norm(z, ba.A22))
        top = max(quotients)
        good = (abs(top - value) <= 1e-10 * value
                and all(q <= value * (1 + 1e-10) for q in quotients))
        ok &= good
        report(f"dualnorm dim={topo.dim} value={value:.6e} sup={top:.6e}", good)
    return ok


def suite_affine(rng, report, n_fields=20) -> bool:
    """The interior extension reproduces affine boundary data exactly."""
    ok = True
    for topo, x in _check_meshes(2):
        coords = node_coordinates(topo, x)
        worst = 0.0
        for _ in range(n_fields):
            b = rng.standard_normal(topo.dim)
            C = rng.standard_normal((topo.dim, topo.dim))

            def field(pts, t, b=b, C=C):
                return b + pts @ C.T

            vg = trace_boundary_velocity(field, topo, x, 0.0)
            v = solve_harmonic_extension(topo, x, vg)
            exact = positions_from_coordinates(field(coords, 0.0))
            worst = max(worst, float(np.abs(v - exact).max()))
        good = worst <= 1e-9
        ok &= good
        report(f"affine dim={topo.dim} worst={worst:.2e}", good)
    return ok


def suite_defect(rng, report) -> bool:
    """Interpolation defects of the velocity law and the diffusion equation
    decay with mesh refinement at the expected rate."""
    ok = True
    hs, dv, du = [], [], []
    f_eval, g_eval = derive_ex3_data(1.0)
    for h_target in (0.35, 0.26, 0.18):
        topo, x0 = generate_disk_mesh(h_target, 2)
        coords0 = node_coordinates(topo, x0)
        v_star = positions_from_coordinates(ex1_velocity(coords0, 0.0))
        dv.append(defect_velocity(topo, x0, v_star))

        def position_at(t, topo=topo, coords0=coords0):
            return positions_from_coordinates(ex3_flow(coords0, t))

        du.append(defect_diffusion(topo, position_at, ex3_exact_u, f_eval,
                                   g_eval, 1.0, t=0.5))
        from .mesh import mesh_size

        hs.append(mesh_size(topo, x0))
    _, slope_v = eoc(list(zip(hs, dv)))
    _, slope_u = eoc(list(zip(hs, du)))
    good = slope_v >= 1.7 and slope_u >= 1.7
    ok &= good
    report(f"defect decay slopes v={slope_v:.3f} u={slope_u:.3f}", good)
    return ok


SUITES = {
    "assembly": suite_assembly,
    "transport": suite_transport,
    "growth": suite_growth,
    "dualnorm": suite_dualnorm,
    "affine": suite_affine,
    "defect": suite_defect,
}


def cmd_check(args) -> int:
    if getattr(args, "debug_flip_coupling", False):
        harmonic.FLIP_COUPLING_SIGN = True
    names = [args.suite] if args.suite else sorted(SUITES)
    all_ok = True

    def report(msg, good):
        print(f"[{'PASS' if good else 'FAIL'}] {msg}")

    for name in names:
        rng = np.random.default_rng(args.seed)
        ok = SUITES[name](rng, report)
        all_ok &= ok
        print(f"suite {name}: {'PASS' if ok else 'FAIL'}")
    print(f"overall: {'PASS' if all_ok else 'FAIL'}")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
