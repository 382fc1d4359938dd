"""Schema-checked loading of the consistency-report CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA = "ekmanfv-report-v1"


class SchemaError(ValueError):
    """CSV does not carry the expected schema line or columns."""


@dataclass(frozen=True)
class Series:
    """One quantity of one (case, scheme) report, split by resolution."""

    case: str
    scheme: str
    axis: np.ndarray          # time_s or z_m, per resolution group
    values: dict              # resolution -> np.ndarray


def read_report_csv(path) -> Series:
    path = Path(path)
    with open(path, newline="") as handle:
        first = handle.readline().strip()
        if first != f"# {SCHEMA}":
            raise SchemaError(f"{path.name}: expected schema line '# {SCHEMA}', "
                              f"got {first!r}")
        rows = list(csv.DictReader(handle))
    if not rows:
        raise SchemaError(f"{path.name}: no data rows")
    columns = set(rows[0].keys())
    axis_name = "time_s" if "time_s" in columns else "z_m"
    required = {axis_name, "scheme", "resolution", "value"}
    if not required.issubset(columns):
        raise SchemaError(f"{path.name}: missing columns {required - columns}")
    case, scheme = path.stem.split("_")[0], rows[0]["scheme"]
    groups: dict[str, list] = {}
    axes: dict[str, list] = {}
    for row in rows:
        res = row["resolution"]
        groups.setdefault(res, []).append(float(row["value"]))
        axes.setdefault(res, []).append(float(row[axis_name]))
    axis = np.asarray(next(iter(axes.values())))
    values = {res: np.asarray(v) for res, v in groups.items()}
    return Series(case=case, scheme=scheme, axis=axis, values=values)


def find_reports(report_dir, case: str, kind: str) -> dict[str, Series]:
    """All ``{case}_*_{kind}.csv`` series in a directory, keyed by scheme."""
    out = {}
    for path in sorted(Path(report_dir).glob(f"{case}_*_{kind}.csv")):
        series = read_report_csv(path)
        out[series.scheme] = series
    return out
