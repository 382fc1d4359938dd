"""Command-line entry point.

Subcommands: ``simulate`` (one column run), ``experiment`` (low/high
consistency reports), ``diagnose-k0`` (wall-viscosity pathology twin runs),
``convergence`` (interface-derivative accuracy sweep).  Runs are configured
by an INI-style file; unknown sections or keys are hard errors so that
misspelled physics never falls back to silent defaults.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dynamics, harness, spline, surface
from .closure import ClosureConstants
from .errors import ConfigError, EkmanFvError, NumericsError
from .grid import VerticalGrid, build_stretched, build_uniform, ifs_l137_lowest25
from .surface import MOParameters, SchemeKind

log = logging.getLogger("ekmanfv")

#: every key the config file may define, with its parser
_CONFIG_KEYS = {
    "run": {"case": str, "scheme": str, "dt": float, "duration": float},
    "grid": {"kind": str, "n_cells": int, "column_height": float,
             "uniform_cells": int, "uniform_size": float,
             "stretched_cells": int, "top_height": float, "path": str},
    "physics": {"f": float, "u_g": complex},
    "surface": {"kappa": float, "z_r": float, "k_mol": float, "gravity": float,
                "theta_ref": float, "u_star_floor": float, "delta_a": float},
    "closure": {"c_k": float, "c_eps": float, "c_mu": float, "e_min": float,
                "l_inf": float, "pr_slope": float, "pr_max": float},
    "numerics": {"top_bc": str, "picard_iterations": int},
    "experiment": {"refine_factor": int},
}


@dataclass(frozen=True)
class RunManifest:
    """What a CLI invocation is about to do."""

    subcommand: str
    config_path: str | None
    out_dir: str
    seedless_deterministic: bool = True  # no RNG anywhere in the pipeline


def load_config(path) -> dict:
    """Parse and validate the INI config into ``{section: {key: value}}``."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    out: dict = {}
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise ConfigError(f"unknown section [{section}] in {path}")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in _CONFIG_KEYS[section]:
                raise ConfigError(f"unknown key {section}.{key} in {path}")
            caster = _CONFIG_KEYS[section][key]
            try:
                out[section][key] = caster(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {section}.{key} in {path}: {raw!r}") from exc
    return out


def _grid_from_config(cfg: dict, case: str | None) -> VerticalGrid:
    section = cfg.get("grid", {})
    kind = section.get("kind")
    if kind is None:
        if case is not None:
            return harness.case_grid(case)
        return ifs_l137_lowest25()
    if kind == "ifs_l137_25":
        return ifs_l137_lowest25()
    if kind == "uniform":
        return build_uniform(section["n_cells"], section["column_height"])
    if kind == "stretched":
        return build_stretched(section["uniform_cells"], section["uniform_size"],
                               section["stretched_cells"], section["top_height"])
    if kind == "file":
        return VerticalGrid.load(section["path"])
    raise ConfigError(f"unknown grid.kind {kind!r}")


def _mo_from_config(cfg: dict) -> MOParameters:
    keys = {k: v for k, v in cfg.get("surface", {}).items() if k != "delta_a"}
    return MOParameters(**keys)


def _closure_from_config(cfg: dict) -> ClosureConstants:
    return ClosureConstants(**cfg.get("closure", {}))


def build_simulation_config(cfg: dict, args) -> dynamics.SimulationConfig:
    run = dict(cfg.get("run", {}))
    if getattr(args, "case", None):
        run["case"] = args.case
    if getattr(args, "dt", None):
        run["dt"] = args.dt
    if getattr(args, "duration", None):
        run["duration"] = args.duration
    case = run.get("case", "neutral")
    scheme = SchemeKind.parse(run.get("scheme", "fvfree"))
    grid = _grid_from_config(cfg, case)
    physics = cfg.get("physics", {})
    numerics = cfg.get("numerics", {})
    return dynamics.SimulationConfig(
        grid=grid,
        dt=run.get("dt", 30.0),
        duration=run.get("duration", 86400.0),
        f=physics.get("f", 1e-4),
        u_g=physics.get("u_g", 8.0 + 0.0j),
        scheme=scheme,
        stratification=case,
        delta_a=cfg.get("surface", {}).get(
            "delta_a", float(grid.centers[0]) if scheme is SchemeKind.FV_FREE else None),
        mo=_mo_from_config(cfg),
        closure=_closure_from_config(cfg),
        top_bc=numerics.get("top_bc", "zero_flux"),
        picard_iterations=numerics.get("picard_iterations", 1),
    )


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    config = build_simulation_config(cfg, args)
    result = dynamics.integrate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scheme = config.scheme.value
    case = config.stratification
    harness.write_csv(
        out / f"{case}_{scheme}_sim_ustar.csv",
        ["time_s", "scheme", "resolution", "value"],
        [(t, scheme, "single", u) for t, u in zip(result.times, result.u_star)])
    harness.write_csv(
        out / f"{case}_{scheme}_sim_profile.csv",
        ["z_m", "scheme", "resolution", "value"],
        [(z, scheme, "single", s) for z, s in
         zip(config.grid.centers, np.abs(result.final.u_bar))])
    log.info("wrote simulation CSVs to %s (max budget residual %.2e)",
             out, result.budget_residuals.max())
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    cases = [args.case] if args.case else list(harness.CASES)
    if args.schemes:
        schemes = tuple(SchemeKind.parse(s) for s in args.schemes.split(","))
    else:
        schemes = tuple(SchemeKind)
    overrides = {}
    run = cfg.get("run", {})
    overrides["dt"] = args.dt or run.get("dt", 30.0)
    overrides["duration"] = args.duration or run.get("duration", 86400.0)
    if "physics" in cfg:
        overrides.update({k: cfg["physics"][k]
                          for k in ("f", "u_g") if k in cfg["physics"]})
    if "surface" in cfg:
        overrides["mo"] = _mo_from_config(cfg)
    if "closure" in cfg:
        overrides["closure"] = _closure_from_config(cfg)
    factor = args.refine_factor or cfg.get("experiment", {}).get("refine_factor", 3)
    summary = harness.run_all(args.out, cases=cases, schemes=schemes,
                              refine_factor=factor, **overrides)
    for case, entry in summary["cases"].items():
        log.info("case %s ranking: %s", case,
                 entry.get("ranking_by_median_below_200m"))
    return 0


def _cmd_diagnose_k0(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    grid = _grid_from_config(cfg, cfg.get("run", {}).get("case", "neutral"))
    params = _mo_from_config(cfg)
    run = cfg.get("run", {})
    report = surface.k0_pathology_diagnostic(
        grid, params, dt=args.dt or run.get("dt", 30.0),
        duration=args.duration or run.get("duration", 86400.0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "u_z1_molecular_max": report.u_z1_molecular_max,
        "u_z1_matched_max": report.u_z1_matched_max,
        "magnitude_ratio": report.magnitude_ratio,
        "k_mol": report.k_mol,
        "k_matched": report.k_matched,
        "term_ratio": report.term_ratio,
    }
    (out / "k0_report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"max |u(z1)| with K0=K_mol : {report.u_z1_molecular_max:.3g} m/s")
    print(f"max |u(z1)| with K0=K_del : {report.u_z1_matched_max:.3g} m/s")
    print(f"inflation ratio           : {report.magnitude_ratio:.3g}")
    print(f"1/K0 term ratio (exact)   : {report.term_ratio:.3g}")
    return 0


def _cmd_convergence(args) -> int:
    rows = []
    for variant in ("spline", "fourth_order"):
        errors = []
        for n in (16, 32, 64):
            g = build_uniform(n, 400.0)
            z = g.interfaces
            averages = (-50.0 * np.cos(z[1:] / 50.0)
                        + 50.0 * np.cos(z[:-1] / 50.0)) / g.cell_sizes
            system = spline.assemble_compact_system(
                g, averages,
                spline.EdgeRow.fixed_derivative(np.cos(z[0] / 50.0) / 50.0),
                spline.EdgeRow.fixed_derivative(np.cos(z[-1] / 50.0) / 50.0),
                variant=variant)
            phi = spline.solve_tridiagonal(system)
            errors.append(float(np.max(np.abs(phi - np.cos(z / 50.0) / 50.0))))
        orders = [np.log2(errors[i] / errors[i + 1]) for i in range(2)]
        print(f"{variant:12s} errors: " + " ".join(f"{e:.3e}" for e in errors)
              + "  observed orders: " + " ".join(f"{o:.2f}" for o in orders))
        for n, err in zip((16, 32, 64), errors):
            rows.append((float(n), variant, "max_error", err))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(out / "convergence.csv",
                       ["n_cells", "scheme", "resolution", "value"], rows)
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ekmanfv",
        description="1D turbulent Ekman column with surface-layer-aware FV schemes")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--dt", type=float, help="time step override (s)")
        p.add_argument("--duration", type=float, help="run length override (s)")

    p_sim = sub.add_parser("simulate", help="run one column simulation")
    common(p_sim)
    p_sim.add_argument("--case", choices=harness.CASES)
    p_sim.set_defaults(func=_cmd_simulate)

    p_exp = sub.add_parser("experiment", help="low/high resolution consistency runs")
    common(p_exp)
    p_exp.add_argument("--case", choices=harness.CASES)
    p_exp.add_argument("--schemes", help="comma list: fd,fv1,fv2,fvfree")
    p_exp.add_argument("--refine-factor", type=int, dest="refine_factor")
    p_exp.set_defaults(func=_cmd_experiment)

    p_k0 = sub.add_parser("diagnose-k0", help="wall-viscosity pathology twin runs")
    common(p_k0)
    p_k0.set_defaults(func=_cmd_diagnose_k0)

    p_conv = sub.add_parser("convergence", help="interface-derivative order sweep")
    common(p_conv)
    p_conv.set_defaults(func=_cmd_convergence)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("EKMANFV_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = _parser()
    args = parser.parse_args(argv)
    manifest = RunManifest(subcommand=args.subcommand,
                           config_path=getattr(args, "config", None),
                           out_dir=args.out)
    log.debug("manifest: %s", manifest)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except EkmanFvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
