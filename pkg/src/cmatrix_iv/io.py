"""Dataset ingestion and machine-readable result files.

CSV dialect everywhere: comma-separated, mandatory header row, UTF-8,
'.' decimal point, LF line endings. Floats are written with ``repr``
(shortest round-trip form), so reading a file back reproduces the exact
in-memory values and identical runs produce byte-identical files. JSON
outputs carry a ``schema_version`` field so downstream fixtures can pin
the layout.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .design import DesignData
from .errors import DataFileError
from .simulate import DensityTable, MonteCarloSummary

__all__ = [
    "SCHEMA_VERSION",
    "ColumnManifest",
    "LoadedDataset",
    "load_csv",
    "write_dataset",
    "write_summary_csv",
    "write_summary_json",
    "read_summary_csv",
    "read_summary_json",
    "write_estimates_csv",
    "read_estimates_csv",
    "write_density_csv",
    "read_density_csv",
    "write_table_csv",
    "read_table_csv",
]

#: Version stamp of every JSON document this module writes.
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ColumnManifest:
    """Mapping from CSV columns to design roles.

    ``outcome`` names the single outcome column; ``endogenous``,
    ``controls`` and ``instruments`` name the remaining roles. The four
    sets must be disjoint. ``add_intercept`` prepends a column of ones to
    the controls after loading.
    """

    outcome: str
    endogenous: tuple[str, ...]
    instruments: tuple[str, ...]
    controls: tuple[str, ...] = ()
    add_intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "endogenous", tuple(self.endogenous))
        object.__setattr__(self, "instruments", tuple(self.instruments))
        object.__setattr__(self, "controls", tuple(self.controls))
        if not self.outcome:
            raise DataFileError("manifest needs an outcome column name")
        if not self.endogenous:
            raise DataFileError(
                "manifest needs at least one endogenous column"
            )
        if len(self.instruments) < len(self.endogenous):
            raise DataFileError(
                f"manifest has {len(self.instruments)} instrument columns "
                f"for {len(self.endogenous)} endogenous columns; "
                f"identification needs at least as many instruments"
            )
        roles = (
            (self.outcome,)
            + self.endogenous
            + self.instruments
            + self.controls
        )
        seen = set()
        for name in roles:
            if name in seen:
                raise DataFileError(
                    f"column {name!r} is assigned to more than one role"
                )
            seen.add(name)

    @property
    def referenced(self) -> tuple[str, ...]:
        return (
            (self.outcome,)
            + self.endogenous
            + self.controls
            + self.instruments
        )


@dataclass(frozen=True)
class LoadedDataset:
    """A parsed design plus the indices of rows that were dropped.

    ``dropped_rows`` holds 0-based positions (in file order, after the
    header) of rows rejected for a non-finite or non-numeric value in a
    referenced column.
    """

    data: DesignData
    dropped_rows: tuple[int, ...] = ()


def load_csv(path, manifest: ColumnManifest) -> LoadedDataset:
    """Load a design dataset from a CSV file.

    Referenced columns are parsed as numbers; cells that fail to parse
    (e.g. "NA") become non-finite and cause their whole row to be
    dropped, with the dropped positions reported on the result.

    Parameters
    ----------
    path : str or pathlib.Path
    manifest : ColumnManifest

    Returns
    -------
    LoadedDataset

    Raises
    ------
    DataFileError
        Missing file, missing columns, or zero usable rows.
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise DataFileError(f"no such file: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFileError(f"cannot parse {path}: {exc}") from None

    missing = [c for c in manifest.referenced if c not in frame.columns]
    if missing:
        raise DataFileError(
            f"{path} is missing referenced columns {missing}; "
            f"found {list(frame.columns)}"
        )

    numeric = {}
    for name in manifest.referenced:
        numeric[name] = pd.to_numeric(frame[name], errors="coerce").to_numpy(
            dtype=np.float64
        )
    usable = np.ones(len(frame), dtype=bool)
    for col in numeric.values():
        usable &= np.isfinite(col)
    dropped = tuple(int(i) for i in np.flatnonzero(~usable))
    if not usable.any():
        raise DataFileError(
            f"{path}: no usable rows remain after dropping {len(dropped)} "
            f"rows with non-numeric or non-finite values"
        )

    def block(names):
        if not names:
            return None
        return np.column_stack([numeric[c][usable] for c in names])

    y = numeric[manifest.outcome][usable]
    x_star = block(manifest.endogenous)
    w = block(manifest.controls)
    if manifest.add_intercept:
        ones = np.ones((int(usable.sum()), 1))
        w = ones if w is None else np.column_stack([ones, w])
    z_star = block(manifest.instruments)
    data = DesignData(y=y, x_star=x_star, w=w, z_star=z_star)
    return LoadedDataset(data=data, dropped_rows=dropped)


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "NaN"
        return repr(v)
    return str(value)


def write_table_csv(path, header, rows) -> None:
    """Write one table as CSV with deterministic float formatting."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def read_table_csv(path) -> pd.DataFrame:
    """Read back any CSV written by this module."""
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise DataFileError(f"no such file: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFileError(f"cannot parse {path}: {exc}") from None


def write_dataset(path, data: DesignData) -> ColumnManifest:
    """Write a design dataset as CSV and return the manifest describing it.

    Columns are named ``y``, ``x1..``, ``w1..``, ``z1..``. Values are
    written in shortest round-trip form, so ``load_csv`` with the returned
    manifest reproduces the arrays exactly.
    """
    x_names = [f"x{i + 1}" for i in range(data.l1)]
    w_names = [f"w{i + 1}" for i in range(data.l2)]
    z_names = [f"z{i + 1}" for i in range(data.k1)]
    header = ["y"] + x_names + w_names + z_names
    blocks = [data.y[:, None], data.x_star]
    if data.l2:
        blocks.append(data.w)
    blocks.append(data.z_star)
    matrix = np.column_stack(blocks)
    write_table_csv(path, header, matrix)
    return ColumnManifest(
        outcome="y",
        endogenous=tuple(x_names),
        instruments=tuple(z_names),
        controls=tuple(w_names),
        add_intercept=False,
    )


# ------------------------------------------------------------- summaries


def write_summary_csv(path, summary: MonteCarloSummary) -> None:
    """Write the per-estimator moment table of a replication run."""
    header = ["estimator", "bias", "variance", "mse", "failures"]
    rows = [
        [
            label,
            summary.stats[label].bias,
            summary.stats[label].variance,
            summary.stats[label].mse,
            summary.stats[label].failures,
        ]
        for label in summary.labels
    ]
    write_table_csv(path, header, rows)


def read_summary_csv(path) -> pd.DataFrame:
    return read_table_csv(path)


def write_summary_json(path, summary: MonteCarloSummary) -> None:
    """Write a replication summary with run metadata as JSON."""

    def clean(v: float):
        return None if (isinstance(v, float) and math.isnan(v)) else v

    doc = {
        "schema_version": SCHEMA_VERSION,
        "design": summary.design_label,
        "rounds": summary.rounds,
        "base_seed": summary.base_seed,
        "beta_true": summary.beta_true,
        "notes": list(summary.notes),
        "results": [
            {
                "estimator": label,
                "bias": clean(summary.stats[label].bias),
                "variance": clean(summary.stats[label].variance),
                "mse": clean(summary.stats[label].mse),
                "failures": summary.stats[label].failures,
            }
            for label in summary.labels
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")


def read_summary_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except FileNotFoundError:
        raise DataFileError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataFileError(f"cannot parse {path}: {exc}") from None
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataFileError(
            f"{path} has schema_version {version!r}; this build reads "
            f"{SCHEMA_VERSION}"
        )
    return doc


# ------------------------------------------------- estimates and densities


def write_estimates_csv(path, summary: MonteCarloSummary) -> None:
    """Write the per-round estimate matrix (failed rounds as NaN)."""
    if summary.estimates is None:
        raise DataFileError(
            "summary holds no per-round estimates; rerun with "
            "keep_estimates=True"
        )
    header = ["round"] + list(summary.labels)
    rows = (
        [r] + list(summary.estimates[r]) for r in range(summary.rounds)
    )
    write_table_csv(path, header, rows)


def read_estimates_csv(path) -> pd.DataFrame:
    return read_table_csv(path)


def write_density_csv(path, density: DensityTable) -> None:
    """Write shared-bin histogram counts, one row per bin."""
    labels = list(density.counts)
    header = ["bin_left", "bin_right"] + labels
    edges = density.edges
    rows = (
        [edges[i], edges[i + 1]] + [density.counts[lab][i] for lab in labels]
        for i in range(len(edges) - 1)
    )
    write_table_csv(path, header, rows)


def read_density_csv(path) -> pd.DataFrame:
    return read_table_csv(path)
