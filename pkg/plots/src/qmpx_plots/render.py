# plots/src/qmpx_plots/render.py

"""Curve grouping and figure rendering for sweep CSVs.

The input format is the sweep harness output:

    snr_db,strategy,initializer,analytic_mse,empirical_mse,trials,skipped

Rows group by (strategy, initializer); an empty initializer column groups
by strategy alone. Every group must share the SNR grid. Rendering is
deterministic for a fixed input and style (fixed figure geometry, no
variable metadata in the PNG).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

EXPECTED_COLUMNS = (
    "snr_db",
    "strategy",
    "initializer",
    "analytic_mse",
    "empirical_mse",
    "trials",
    "skipped",
)


class MalformedCsv(ValueError):
    """Input does not match the sweep CSV schema."""


@dataclass
class CurveSet:
    """Rows grouped by (strategy, initializer) over a common SNR grid."""

    snr_db: list
    groups: dict  # (strategy, initializer) -> list of analytic_mse

    def labels(self) -> list:
        out = []
        for strategy, initializer in self.groups:
            out.append(f"{strategy} ({initializer})" if initializer else strategy)
        return out


def load_curves(csv_path) -> CurveSet:
    try:
        with open(csv_path, "r", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != EXPECTED_COLUMNS:
                raise MalformedCsv(
                    f"unexpected header {reader.fieldnames}; expected {','.join(EXPECTED_COLUMNS)}"
                )
            rows = list(reader)
    except OSError as exc:
        raise MalformedCsv(f"cannot read {csv_path}: {exc}") from exc
    if not rows:
        raise MalformedCsv("CSV contains no data rows")

    groups: dict = {}
    grids: dict = {}
    for row in rows:
        try:
            snr = float(row["snr_db"])
            mse = float(row["analytic_mse"])
        except (TypeError, ValueError) as exc:
            raise MalformedCsv(f"non-numeric row: {row}") from exc
        key = (row["strategy"], row["initializer"])
        grids.setdefault(key, []).append(snr)
        groups.setdefault(key, []).append(mse)

    grid_values = list(grids.values())
    for other in grid_values[1:]:
        if other != grid_values[0]:
            raise MalformedCsv("groups do not share the SNR grid")
    return CurveSet(snr_db=grid_values[0], groups=groups)


MARKERS = ("o", "s", "^", "d", "v", "*", "x", "+")


def render(csv_path, out_path, title: str = "", log_y: bool = True) -> None:
    """Draw one line per group with legend and labeled axes, write a PNG."""
    curves = load_curves(csv_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=100)
    for idx, ((strategy, initializer), ys) in enumerate(sorted(curves.groups.items())):
        label = f"{strategy} ({initializer})" if initializer else strategy
        ax.plot(
            curves.snr_db,
            ys,
            marker=MARKERS[idx % len(MARKERS)],
            label=label,
        )
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("averaged MSE")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    # strip variable metadata so identical inputs give identical bytes
    fig.savefig(out_path, format="png", metadata={"Software": None})
    plt.close(fig)
