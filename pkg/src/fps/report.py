"""CSV writers and figure rendering for run outputs.

Every CLI run emits delimited data first; figures are rendered next to
the CSVs from the same rows, never from recomputed values.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import DistributionExport
from .selection import SweepRow
from .trainer import Histogram

TRACE_COLUMNS = [
    "step",
    "L_total",
    "L_SCE",
    "L_SE",
    "L_CE",
    "L_CR",
    "L_delta",
    "alpha_t",
    "beta_t",
    "gamma_t",
]

LANDSCAPE_COLUMNS = [
    "theta",
    "b",
    "acc_source",
    "acc_target",
    "acc_combined",
    "loss_supervised",
    "loss_unsupervised",
    "loss_joint",
]


def _write_rows(path: Path, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


def write_trace_csv(trace: list[dict], path: str | Path) -> None:
    _write_rows(Path(path), TRACE_COLUMNS, trace)


def write_landscape_csv(rows: list[dict], path: str | Path) -> None:
    _write_rows(Path(path), LANDSCAPE_COLUMNS, rows)


def write_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    dicts = [
        {
            "alpha": r.alpha,
            "d_intra_hat": r.d_intra_hat,
            "R": "" if r.R is None else r.R,
            "target_accuracy": "" if r.target_accuracy is None else r.target_accuracy,
            "selected": int(r.selected),
        }
        for r in rows
    ]
    _write_rows(Path(path), ["alpha", "d_intra_hat", "R", "target_accuracy", "selected"], dicts)


def write_histogram_csv(hist: Histogram, path: str | Path) -> None:
    rows = [
        {"bin_left": hist.edges[i], "bin_right": hist.edges[i + 1], "count": int(hist.counts[i])}
        for i in range(len(hist.counts))
    ]
    _write_rows(Path(path), ["bin_left", "bin_right", "count"], rows)


def write_distribution_csv(export: DistributionExport, path: str | Path) -> None:
    write_histogram_csv(Histogram(export.counts, export.edges), path)
    if export.kde_grid is not None:
        kde_path = Path(path).with_suffix(".kde.csv")
        rows = [
            {"x": x, "density": d}
            for x, d in zip(export.kde_grid, export.kde_density)
        ]
        _write_rows(kde_path, ["x", "density"], rows)


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_i", "class_j", "mean_distance"])
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                v = matrix[i, j]
                writer.writerow([i, j, "" if np.isnan(v) else v])


def write_run_metadata(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------- figures


def loss_curve_figure(trace: list[dict], path: str | Path) -> None:
    steps = [row["step"] for row in trace]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("L_total", "L_SCE", "L_SE", "L_CE", "L_CR", "L_delta"):
        ax1.plot(steps, [row[key] for row in trace], label=key)
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    for key in ("alpha_t", "beta_t", "gamma_t"):
        ax2.plot(steps, [row[key] for row in trace], label=key)
    ax2.set_xlabel("step")
    ax2.set_ylabel("schedule weight")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def histogram_figure(hist: Histogram, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    widths = np.diff(hist.edges)
    ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge")
    ax.set_title(title)
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def distribution_figure(export: DistributionExport, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    widths = np.diff(export.edges)
    area = max(float((export.counts * widths).sum()), 1e-12)
    ax.bar(export.edges[:-1], export.counts / area, width=widths, align="edge", alpha=0.5)
    if export.kde_grid is not None:
        ax.plot(export.kde_grid, export.kde_density, lw=2)
    ax.set_title(title)
    ax.set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def landscape_figure(rows: list[dict], path: str | Path, value: str = "acc_combined") -> None:
    thetas = sorted({row["theta"] for row in rows})
    biases = sorted({row["b"] for row in rows})
    grid = np.full((len(biases), len(thetas)), np.nan)
    t_index = {t: i for i, t in enumerate(thetas)}
    b_index = {b: i for i, b in enumerate(biases)}
    for row in rows:
        grid[b_index[row["b"]], t_index[row["theta"]]] = row[value]
    fig, ax = plt.subplots(subplot_kw={"projection": "polar"}, figsize=(5, 5))
    tt, bb = np.meshgrid(thetas, biases)
    mesh = ax.pcolormesh(tt, bb, grid, shading="auto")
    ax.set_title(value)
    fig.colorbar(mesh, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_figure(rows: list[SweepRow], path: str | Path) -> None:
    alphas = [r.alpha for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(alphas, [r.d_intra_hat for r in rows], "o-", color="tab:blue")
    ax1.set_xlabel("alpha")
    ax1.set_ylabel("intra-class distance", color="tab:blue")
    selected = [r for r in rows if r.selected]
    if selected:
        ax1.axvline(selected[0].alpha, color="gray", ls="--", lw=1)
    if any(r.target_accuracy is not None for r in rows):
        ax2 = ax1.twinx()
        ax2.plot(
            alphas,
            [r.target_accuracy for r in rows],
            "s-",
            color="tab:orange",
        )
        ax2.set_ylabel("target accuracy", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def matrix_figure(matrix: np.ndarray, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(matrix, cmap="viridis")
    ax.set_title(title)
    ax.set_xlabel("class j")
    ax.set_ylabel("class i")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
