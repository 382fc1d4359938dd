"""Multi-panel figures from a consistency-report directory.

Rendering is read-only over the CSVs and deliberately timestamp-free, so the
same inputs always produce byte-identical image files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .reader import SchemaError, find_reports  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ekmanplots"  # deterministic SVG element ids

COLORS = {"fd": "tab:gray", "fv1": "tab:orange", "fv2": "tab:green",
          "fvfree": "tab:blue"}
DPI = 150


def _color(scheme: str) -> str:
    return COLORS.get(scheme, "tab:red")


def _save(fig, out_file):
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out_file.suffix == ".svg" else {}
    fig.savefig(out_file, dpi=DPI, metadata=metadata)
    plt.close(fig)
    return out_file


def build_neutral_figure(report_dir):
    """Three panels: u* difference vs time, end profiles, per-level difference.

    The per-level relative-difference panel uses a logarithmic x axis.
    """
    ustar = find_reports(report_dir, "neutral", "ustar")
    profiles = find_reports(report_dir, "neutral", "profile")
    if not ustar or not profiles:
        raise SchemaError(f"no neutral reports found in {report_dir}")

    fig, (ax_time, ax_prof, ax_diff) = plt.subplots(1, 3, figsize=(12.0, 4.0))
    for scheme, series in ustar.items():
        hours = series.axis / 3600.0
        ax_time.plot(hours, series.values["reldiff"], label=scheme,
                     color=_color(scheme))
    ax_time.set_xlabel("time (h)")
    ax_time.set_ylabel("relative difference in u*")
    ax_time.legend()

    for scheme, series in profiles.items():
        ax_prof.plot(series.values["low"], series.axis, color=_color(scheme),
                     label=f"{scheme} low")
        ax_prof.plot(series.values["high"], series.axis, color=_color(scheme),
                     linestyle="--", label=f"{scheme} high")
    ax_prof.set_xlabel("wind speed (m/s)")
    ax_prof.set_ylabel("height (m)")
    ax_prof.set_ylim(bottom=0.0)
    ax_prof.legend(fontsize=7)

    for scheme, series in profiles.items():
        ax_diff.semilogx(series.values["reldiff"], series.axis,
                         color=_color(scheme), label=scheme)
    ax_diff.set_xlabel("relative difference of wind speed (log scale)")
    ax_diff.set_ylabel("height (m)")
    ax_diff.set_ylim(bottom=0.0)
    ax_diff.legend()

    fig.suptitle("Neutral case: low vs high resolution")
    fig.tight_layout()
    return fig


def render_neutral(report_dir, out_file):
    return _save(build_neutral_figure(report_dir), out_file)


def build_stratified_figure(report_dir):
    """Side-by-side per-level relative-difference panels (stable | unstable)."""
    panels = []
    for case in ("stable", "unstable"):
        profiles = find_reports(report_dir, case, "profile")
        if profiles:
            panels.append((case, profiles))
    if not panels:
        raise SchemaError(f"no stable or unstable reports found in {report_dir}")

    fig, axes = plt.subplots(1, len(panels), figsize=(5.0 * len(panels), 4.5))
    if len(panels) == 1:
        axes = [axes]
    for ax, (case, profiles) in zip(axes, panels):
        for scheme, series in profiles.items():
            ax.semilogx(series.values["reldiff"], series.axis,
                        color=_color(scheme), label=scheme)
        ax.set_title(f"{case} stratification")
        ax.set_xlabel("relative difference of wind speed (log scale)")
        ax.set_ylabel("height (m)")
        ax.set_ylim(bottom=0.0)
        ax.legend()
    if len(panels) == 1:
        axes[0].annotate("(other stratified case missing)", xy=(0.98, 0.02),
                         xycoords="axes fraction", ha="right", fontsize=8)
    fig.tight_layout()
    return fig


def render_stratified(report_dir, out_file):
    return _save(build_stratified_figure(report_dir), out_file)
