"""Command line driver: flow | distance | verify | grid-study.

Outputs are deterministic for a fixed config and seed: CSV for time
series, JSON for scalar results, every file stamped with the config hash
and the tolerance budgets in effect.  Exit codes: 0 all checks pass,
1 an inequality failed, 2 a solver was inconclusive, 64 bad config.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import densities
from .config import (ConfigError, ExperimentConfig, build_workspace,
                     density_from_spec, load_config)
from .entropy import EntropyModel
from .flow import evolve
from .geodesic import distance_with_extrapolation, path_from_flow
from .grid import DensityField

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 64

ENV_OUTPUT_ROOT = "GAMMAFLOW_OUTPUT_ROOT"


def _outdir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(ENV_OUTPUT_ROOT, ".")
    path = Path(root) / cfg.section("output")["directory"]
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v
                             for v in row])


# ---------------------------------------------------------------------------


def cmd_flow(cfg: ExperimentConfig) -> int:
    potential, grid, model = build_workspace(cfg)
    fsec = cfg.section("flow")
    rho0 = density_from_spec(grid, fsec["initial"])
    trace = evolve(grid, rho0, fsec["t_final"], fsec["dt"], model=model,
                   potential=potential, scheme=fsec["scheme"],
                   checkpoints=fsec["checkpoints"], spacing=fsec["spacing"])
    out = _outdir(cfg)
    _write_csv(out / "trace.csv",
               ("t", "mass", "entropy", "production", "action",
                "rho_min", "rho_max"),
               trace.rows())
    _write_json(out / "flow_summary.json", {
        "config_hash": cfg.config_hash,
        "potential": potential.name,
        "alpha": model.alpha,
        "grid": {"half_width": grid.half_width, "nodes": grid.n},
        "t_final": fsec["t_final"],
        "dt": fsec["dt"],
        "scheme": fsec["scheme"],
        "entropy_initial": float(trace.entropy[0]),
        "entropy_final": float(trace.entropy[-1]),
        "production_initial": float(trace.production[0]),
        "production_final": float(trace.production[-1]),
        "mass_drift": float(np.max(np.abs(trace.mass - trace.mass[0]))),
        "vector_norm_ratio_max": trace.vector_norm_ratio_max,
    })
    print(f"flow: wrote {out/'trace.csv'} and {out/'flow_summary.json'}")
    return EXIT_PASS


def cmd_distance(cfg: ExperimentConfig) -> int:
    potential, grid, model = build_workspace(cfg)
    dsec = cfg.section("distance")
    gsec = cfg.section("geodesic")
    rho0 = density_from_spec(grid, dsec["rho0"])
    rho1 = density_from_spec(grid, dsec["rho1"])
    m0, m1 = rho0.mass, rho1.mass
    if abs(m0 - m1) > 1e-9 * max(m0, m1, 1.0):
        print(f"error: endpoint masses differ: {m0!r} vs {m1!r}",
              file=sys.stderr)
        return EXIT_CONFIG
    ext = distance_with_extrapolation(
        rho0, rho1, model, kappas=tuple(gsec["kappas"]),
        n_slices=gsec["time_slices"], tol=gsec["tol"],
        max_iter=gsec["max_iter"])
    out = _outdir(cfg)
    best = ext.ladder[-1]
    _write_json(out / "distance.json", {
        "config_hash": cfg.config_hash,
        "potential": potential.name,
        "alpha": model.alpha,
        "distance": ext.distance,
        "kappa_ladder": {f"{r.kappa:g}": r.distance for r in ext.ladder},
        "gap": ext.gap,
        "gap_certified": all(r.gap_certified for r in ext.ladder),
        "iterations": [r.iterations for r in ext.ladder],
        "converged": all(r.converged for r in ext.ladder),
        "constant_speed_deviation": best.constant_speed_deviation,
        "continuity_residual": best.path.continuity_residual(),
    })
    path = best.path
    rows = []
    for j, s in enumerate(path.s):
        rows.append([float(s), "density"] + [float(v) for v in path.rho[j]])
    for j in range(path.n_slices):
        s_half = (j + 0.5) * path.ds
        rows.append([s_half, "flux"] + [float(v) for v in path.w[j]])
    _write_csv(out / "path.csv", ["s", "kind"] + [f"x{i}" for i in range(grid.n)],
               rows)
    print(f"distance: {ext.distance:.8g} (gap {ext.gap:.3g}); wrote "
          f"{out/'distance.json'} and {out/'path.csv'}")
    return EXIT_PASS if all(r.converged for r in ext.ladder) \
        else EXIT_INCONCLUSIVE


def _verify_for_alpha(cfg: ExperimentConfig, potential, grid, alpha: float):
    from . import verify as V

    model = EntropyModel(alpha)
    vsec = cfg.section("verify")
    gsec = cfg.section("geodesic")
    seed = int(vsec["seed"])
    t_final, dt = float(vsec["flow_t_final"]), float(vsec["flow_dt"])
    solver_cfg = dict(n_slices=gsec["time_slices"], tol=gsec["tol"],
                      max_iter=gsec["max_iter"],
                      kappas=tuple(gsec["kappas"]))
    rng = np.random.default_rng(seed)
    reports = []
    checks = cfg.selected_checks()

    tilt = densities.tilted(grid, 0.5)
    if "structural" in checks:
        reports += V.verify_structural(grid, potential, dt=dt, seed=seed)
    if "commutation" in checks:
        reports.append(V.verify_commutation_convergence(
            potential, sizes=(grid.n // 4, grid.n // 2, grid.n),
            half_width=grid.half_width))
    if "ou_equality" in checks:
        reports += V.verify_ou_equality(grid, model, potential,
                                        t_final=t_final, dt=dt)
    if "entropy_chain" in checks:
        reports += V.verify_entropy_chain(grid, tilt, model, potential,
                                          t_final=t_final, dt=dt)
    if "action_decay" in checks:
        w0 = densities.band_limited(grid, rng).values - 1.0
        from .grid import VectorField
        reports.append(V.verify_action_decay(
            grid, densities.band_limited(grid, rng),
            VectorField(grid, w0), model, potential, dt=dt))
    if "poincare" in checks:
        battery = densities.battery(grid, int(vsec["battery"]), seed)
        reports.append(V.verify_poincare(grid, model, potential,
                                         battery=battery))
        reports.append(V.verify_poincare_equality(grid, model, potential))
    if "talagrand" in checks:
        reports += V.verify_talagrand_and_production_distance(
            grid, tilt, model, potential, solver_cfg=solver_cfg)
    if "contraction" in checks:
        reports += V.verify_contraction(
            grid, densities.tilted(grid, -0.5), tilt, model, potential,
            dt=dt, solver_cfg=solver_cfg)
    if "evi" in checks:
        reports += V.verify_evi(grid, tilt,
                                densities.tilted(grid, -0.25), model,
                                potential, dt=dt, solver_cfg=solver_cfg)
    if "slope" in checks:
        path = path_from_flow(tilt, model, t_final=1.0,
                              n_slices=max(16, gsec["time_slices"]), dt=dt,
                              potential=potential)
        reports += V.verify_entropy_slope_bound(path, model, label="flow")
    return reports


def cmd_verify(cfg: ExperimentConfig) -> int:
    from .verify import FAIL, INCONCLUSIVE

    potential, grid, _ = build_workspace(cfg)
    vsec = cfg.section("verify")
    all_reports = []
    for alpha in vsec["alphas"]:
        for rep in _verify_for_alpha(cfg, potential, grid, float(alpha)):
            all_reports.append((float(alpha), rep))

    out = _outdir(cfg)
    _write_json(out / "reports.json", {
        "config_hash": cfg.config_hash,
        "potential": potential.name,
        "alphas": list(map(float, vsec["alphas"])),
        "reports": [dict(alpha=a, **r.to_dict()) for a, r in all_reports],
    })
    lines = [f"potential {potential.name}   config {cfg.config_hash}"]
    for alpha, rep in all_reports:
        lines.append(f"alpha={alpha:<5g} {rep.table_row()}")
    text = "\n".join(lines) + "\n"
    with open(out / "reports.txt", "w") as fh:
        fh.write(text)
    print(text, end="")

    statuses = [rep.status for _, rep in all_reports]
    if FAIL in statuses:
        return EXIT_FAIL
    if INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def cmd_grid_study(cfg: ExperimentConfig) -> int:
    from .flow import commutation_defect
    from .grid import build_grid

    potential, grid, model = build_workspace(cfg)
    fsec = cfg.section("flow")
    sizes = [grid.n // 4, grid.n // 2, grid.n]
    rows = []
    for n in sizes:
        g = build_grid(potential, grid.half_width, n)
        moment_err = abs(g.integrate(g.x**2) - 1.0) if potential.lam == 1.0 \
            else float("nan")
        rho0 = densities.tilted(g, 0.5)
        defect = commutation_defect(g, rho0, 0.1, 1e-4, potential=potential)
        tr = evolve(g, rho0, 1.0, fsec["dt"], model=model, potential=potential,
                    checkpoints=5)
        drift = float(np.max(np.abs(
            tr.entropy * np.exp(2 * potential.lam * tr.times)
            - tr.entropy[0])) / max(tr.entropy[0], 1e-30))
        rows.append((n, g.dx, moment_err, defect, drift))
    out = _outdir(cfg)
    _write_csv(out / "grid_study.csv",
               ("nodes", "dx", "second_moment_error", "commutation_defect",
                "entropy_envelope_drift"), rows)
    _write_json(out / "grid_study.json", {
        "config_hash": cfg.config_hash,
        "sizes": sizes,
        "commutation_ratios": [rows[i][3] / rows[i + 1][3]
                               for i in range(len(rows) - 1)],
    })
    print(f"grid-study: wrote {out/'grid_study.csv'}")
    return EXIT_PASS


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gammaflow",
        description="Drift-diffusion flows, weighted transport distances, "
                    "and functional-inequality verification on a weighted "
                    "1D grid.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("flow", "run the flow and dump its trace"),
                      ("distance", "compute one transport distance"),
                      ("verify", "run the inequality harness"),
                      ("grid-study", "refinement convergence table")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("config", nargs="?", default=None,
                       help="TOML config file (defaults used when omitted)")
        p.add_argument("overrides", nargs="*", default=[],
                       help="overrides of the form section.key=value")
    args = parser.parse_args(argv)

    config_path = args.config
    overrides = list(args.overrides)
    if config_path is not None and "=" in config_path:
        overrides.insert(0, config_path)  # bare overrides, no config file
        config_path = None

    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    command = {
        "flow": cmd_flow,
        "distance": cmd_distance,
        "verify": cmd_verify,
        "grid-study": cmd_grid_study,
    }[args.command]
    return command(cfg)


if __name__ == "__main__":
    sys.exit(main())
