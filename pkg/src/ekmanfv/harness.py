"""Low- vs high-resolution consistency experiments and their reports.

For each case (neutral, stable, unstable) and surface scheme, the same
physics is run on the case's grid and on its factor-3 refinement, and the
runs are compared through the friction-velocity time series and the
end-of-run wind-speed profile projected onto the coarse grid.  For the FV
free scheme one shared surface-layer height is used at both resolutions; the
other schemes tie it to each grid.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics
from .closure import ClosureConstants
from .errors import DimensionMismatchError, GridError, UnsupportedConfigurationError
from .grid import VerticalGrid, build_stretched, build_uniform, ifs_l137_lowest25, refine
from .surface import MOParameters, SchemeKind

CSV_SCHEMA = "ekmanfv-report-v1"
CASES = ("neutral", "stable", "unstable")
NEAR_SURFACE_BAND = 200.0   # metres; summary statistics are taken below this


def case_grid(case: str) -> VerticalGrid:
    if case == "neutral":
        return ifs_l137_lowest25()
    if case == "stable":
        return build_uniform(15, 400.0)
    if case == "unstable":
        return build_stretched(50, 10.0, 15, 1080.0)
    raise UnsupportedConfigurationError(f"unknown case {case!r}")


def experiment_config(case: str, scheme: SchemeKind, grid: VerticalGrid,
                      delta_a: float | None, **overrides) -> dynamics.SimulationConfig:
    base = dict(grid=grid, dt=30.0, duration=86400.0, f=1e-4, u_g=8.0 + 0.0j,
                scheme=scheme, stratification=case, delta_a=delta_a)
    base.update(overrides)
    return dynamics.SimulationConfig(**base)


def physics_hash(config: dynamics.SimulationConfig) -> str:
    """Hash of everything but the surface scheme and its boundary row."""
    payload = (
        config.grid.interfaces.tobytes(),
        repr((config.dt, config.duration, config.f, config.u_g,
              config.stratification, config.top_bc, config.mo,
              config.closure, config.picard_iterations)),
    )
    digest = hashlib.sha256()
    for part in payload:
        digest.update(part if isinstance(part, bytes) else part.encode())
    return digest.hexdigest()[:16]


def project_to_coarse(fine_grid: VerticalGrid, coarse_grid: VerticalGrid,
                      field_values: np.ndarray) -> np.ndarray:
    """Exact FV aggregation of a fine field onto a nested coarse grid."""
    field_values = np.asarray(field_values)
    if field_values.shape != (fine_grid.n_cells,):
        raise DimensionMismatchError("field does not match the fine grid")
    idx = np.searchsorted(fine_grid.interfaces, coarse_grid.interfaces)
    if not np.array_equal(fine_grid.interfaces[idx], coarse_grid.interfaces):
        raise GridError("coarse interfaces are not a subset of the fine ones")
    out = np.empty(coarse_grid.n_cells, dtype=field_values.dtype)
    h = fine_grid.cell_sizes
    for m in range(coarse_grid.n_cells):
        lo, hi = idx[m], idx[m + 1]
        out[m] = np.sum(h[lo:hi] * field_values[lo:hi]) / np.sum(h[lo:hi])
    return out


def relative_difference(a: np.ndarray, b: np.ndarray,
                        mask_tol: float = 0.0) -> np.ndarray:
    """Pointwise |a - b| / |b|; entries with |b| <= mask_tol become NaN."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shapes {a.shape} and {b.shape} differ")
    masked = np.abs(b) <= mask_tol
    if np.all(masked):
        raise UnsupportedConfigurationError("reference field is identically zero")
    out = np.full(a.shape, np.nan)
    out[~masked] = np.abs(a[~masked] - b[~masked]) / np.abs(b[~masked])
    return out


@dataclass
class ConsistencyReport:
    """Everything needed to judge one (case, scheme) pair."""

    case: str
    scheme: SchemeKind
    times: np.ndarray
    ustar_low: np.ndarray
    ustar_high: np.ndarray
    ustar_reldiff: np.ndarray
    z_centers: np.ndarray
    speed_low: np.ndarray
    speed_high: np.ndarray          # projected onto the coarse grid
    profile_reldiff: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def near_surface(self) -> np.ndarray:
        return self.z_centers < NEAR_SURFACE_BAND

    def summary(self) -> dict:
        band = self.profile_reldiff[self.near_surface]
        return {
            "case": self.case,
            "scheme": self.scheme.value,
            "ustar_reldiff_t0": float(self.ustar_reldiff[0]),
            "ustar_reldiff_mean": float(np.nanmean(self.ustar_reldiff)),
            "profile_reldiff_median_below_200m": float(np.nanmedian(band)),
            "profile_reldiff_max_below_200m": float(np.nanmax(band)),
            **self.metadata,
        }


def run_experiment(case: str, scheme: SchemeKind, refine_factor: int = 3,
                   **overrides) -> ConsistencyReport:
    """Twin low/high-resolution runs of one case under one surface scheme.

    The FV free scheme keeps the low-resolution value of ``delta_a`` at both
    resolutions; for the other schemes the grid imposes it.
    """
    grid_low = overrides.pop("grid", None) or case_grid(case)
    grid_high = refine(grid_low, refine_factor)
    delta_free = float(grid_low.centers[0])
    delta_a = delta_free if scheme is SchemeKind.FV_FREE else None
    config_low = experiment_config(case, scheme, grid_low, delta_a, **overrides)
    config_high = experiment_config(case, scheme, grid_high, delta_a, **overrides)

    result_low = dynamics.integrate(config_low)
    result_high = dynamics.integrate(config_high)

    ustar_rd = np.abs(result_low.u_star - result_high.u_star) / result_high.u_star
    projected = project_to_coarse(grid_high, grid_low, result_high.final.u_bar)
    speed_low = np.abs(result_low.final.u_bar)
    speed_high = np.abs(projected)
    profile_rd = relative_difference(speed_low, speed_high)

    meta = {
        "delta_a_low": float(config_low.resolved_delta_a()),
        "delta_a_high": float(config_high.resolved_delta_a()),
        "physics_hash_low": physics_hash(config_low),
        "physics_hash_high": physics_hash(config_high),
        "n_cells_low": grid_low.n_cells,
        "n_cells_high": grid_high.n_cells,
        "max_budget_residual": float(max(result_low.budget_residuals.max(),
                                         result_high.budget_residuals.max())),
        "max_sl_mismatch": float(max(result_low.sl_mismatches.max(),
                                     result_high.sl_mismatches.max())),
    }
    return ConsistencyReport(
        case=case, scheme=scheme, times=result_low.times,
        ustar_low=result_low.u_star, ustar_high=result_high.u_star,
        ustar_reldiff=ustar_rd, z_centers=grid_low.centers.copy(),
        speed_low=speed_low, speed_high=speed_high,
        profile_reldiff=profile_rd, metadata=meta)


def _format(value: float) -> str:
    return format(value, ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [f"# {CSV_SCHEMA}", ",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, str) else _format(c)
                              for c in row))
    path.write_text("\n".join(lines) + "\n")


def write_report(report: ConsistencyReport, out_dir) -> list[Path]:
    """One CSV per quantity: ``{case}_{scheme}_{kind}.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scheme = report.scheme.value
    ustar_path = out / f"{report.case}_{scheme}_ustar.csv"
    rows = []
    for t, lo, hi, rd in zip(report.times, report.ustar_low,
                             report.ustar_high, report.ustar_reldiff):
        rows.append((t, scheme, "low", lo))
        rows.append((t, scheme, "high", hi))
        rows.append((t, scheme, "reldiff", rd))
    write_csv(ustar_path, ["time_s", "scheme", "resolution", "value"], rows)

    profile_path = out / f"{report.case}_{scheme}_profile.csv"
    rows = []
    for z, lo, hi, rd in zip(report.z_centers, report.speed_low,
                             report.speed_high, report.profile_reldiff):
        rows.append((z, scheme, "low", lo))
        rows.append((z, scheme, "high", hi))
        rows.append((z, scheme, "reldiff", rd))
    write_csv(profile_path, ["z_m", "scheme", "resolution", "value"], rows)
    return [ustar_path, profile_path]


def run_all(out_dir, cases=CASES, schemes=tuple(SchemeKind),
            refine_factor: int = 3, **overrides) -> dict:
    """All case x scheme reports plus a JSON summary; failures are recorded.

    Output layout is deterministic: files are named by (case, scheme) and
    floats are written with round-trip precision.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"schema": CSV_SCHEMA, "cases": {}}
    for case in cases:
        case_entry: dict = {}
        hashes = set()
        for scheme in schemes:
            try:
                report = run_experiment(case, scheme, refine_factor, **overrides)
            except Exception as exc:  # partial-failure policy: keep going
                case_entry[scheme.value] = {"failed": True, "error": str(exc)}
                continue
            write_report(report, out)
            entry = report.summary()
            entry["failed"] = False
            case_entry[scheme.value] = entry
            hashes.add((entry["physics_hash_low"], entry["physics_hash_high"]))
        if len({h for h in hashes}) > 1:
            case_entry["physics_hash_mismatch"] = True
        ranked = sorted((s for s, e in case_entry.items()
                         if isinstance(e, dict) and not e.get("failed")),
                        key=lambda s: case_entry[s]["profile_reldiff_median_below_200m"])
        case_entry["ranking_by_median_below_200m"] = ranked
        summary["cases"][case] = case_entry
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
