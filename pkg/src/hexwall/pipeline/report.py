"""Tables (CSV / JSON) and figures for mesh, stress and convergence reports."""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..exporters import write_json  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "hexwall",
    "axes.prop_cycle": matplotlib.cycler(color=["#08589e", "#e6550d", "#31a354", "#756bb1", "#636363"]),
}
FIG_W = 4.2
FIG_H = 3.0


def write_csv(path, rows, fieldnames=None):
    rows = list(rows)
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def quality_rows(report):
    """One row per part with the counts of the quality table."""
    rows = []
    for name, s in report.summary().items():
        rows.append({"part": name, **{k: v for k, v in s.items()}})
    return rows


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None} if path.endswith(".png") else None)
    plt.close(fig)
    return path


def plot_percentile_curves(curves, path, title="Max principal stress percentiles"):
    """``curves`` maps label -> 101-point percentile curve (MPa)."""
    with matplotlib.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(FIG_W, FIG_H))
        q = np.arange(101)
        for label, c in curves.items():
            ax.plot(q, c, label=label)
        ax.set_xlabel("Percentile of nodes")
        ax.set_ylabel("Max principal stress (MPa)")
        ax.set_xlim(0, 100)
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_probe_convergence(layers, values, path):
    """``values`` has shape (n_models, n_probes)."""
    values = np.asarray(values)
    with matplotlib.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(FIG_W, FIG_H))
        for j in range(values.shape[1]):
            ax.plot(layers, values[:, j], marker="o", label=f"probe {j + 1}")
        ax.set_xlabel("Layers through the wall")
        ax.set_ylabel("Max principal stress (MPa)")
        ax.set_xticks(list(layers))
        ax.legend(frameon=False, ncol=2)
        return _save(fig, path)


def plot_quality_histograms(report, path):
    parts = report.parts
    with matplotlib.rc_context(STYLE):
        fig, axes = plt.subplots(len(parts), 2, figsize=(2 * FIG_W, FIG_H * len(parts)), squeeze=False)
        for row, p in zip(axes, parts):
            if p.scaled_jacobian is not None:
                row[0].hist(p.scaled_jacobian, bins=50, color="#08589e")
                row[0].axvline(report.thresholds.jacobian_min, color="k", ls="--", lw=0.8)
                row[0].set_xlabel(f"{p.name}: scaled Jacobian")
            else:
                row[0].hist(p.skew, bins=50, color="#08589e")
                row[0].axvline(report.thresholds.skew_max, color="k", ls="--", lw=0.8)
                row[0].set_xlabel(f"{p.name}: volumetric skew")
            lo, hi = p.angle_range
            row[1].hist(np.nan_to_num(p.min_angle), bins=60, alpha=0.7, label="min")
            row[1].hist(np.nan_to_num(p.max_angle), bins=60, alpha=0.7, label="max")
            for a in (lo, hi):
                row[1].axvline(a, color="k", ls="--", lw=0.8)
            row[1].set_xlabel(f"{p.name}: face angles (deg)")
            row[1].legend(frameon=False)
            for ax in row:
                ax.set_ylabel("Elements")
        fig.tight_layout()
        return _save(fig, path)


def write_quality_report(report, out_dir, plots=True):
    paths = [write_csv(os.path.join(out_dir, "quality_table.csv"), quality_rows(report))]
    txt = os.path.join(out_dir, "quality_table.txt")
    with open(txt, "w") as fh:
        fh.write(report.table() + "\n")
    paths.append(txt)
    if plots:
        paths.append(plot_quality_histograms(report, os.path.join(out_dir, "quality_histograms.png")))
    return paths


def write_stress_report(stats, out_dir, label="wall"):
    rows = [{"percentile": q, "max_principal_MPa": float(v)} for q, v in enumerate(stats.percentile_curve)]
    paths = [write_csv(os.path.join(out_dir, "percentile_curve.csv"), rows)]
    if stats.probe_values:
        prow = [{"probe": i + 1, "x": p.point[0], "y": p.point[1], "z": p.point[2],
                 "node_id": p.node_id, "distance_mm": p.distance, "max_principal_MPa": p.value}
                for i, p in enumerate(stats.probe_values)]
        paths.append(write_csv(os.path.join(out_dir, "probes.csv"), prow))
    paths.append(plot_percentile_curves({label: stats.percentile_curve},
                                        os.path.join(out_dir, "percentile_curve.png")))
    return paths


def write_convergence_report(study, out_dir, plots=True):
    paths = [write_csv(os.path.join(out_dir, "convergence_table.csv"), [r.table_row() for r in study.rows])]
    p = os.path.join(out_dir, "convergence.json")
    write_json(p, study.to_dict())
    paths.append(p)
    if plots and study.rows:
        curves = {f"{r.n_layers} layers": r.curve for r in study.rows}
        paths.append(plot_percentile_curves(curves, os.path.join(out_dir, "convergence_percentiles.png")))
        layers = [r.n_layers for r in study.rows]
        vals = [[pv.value for pv in r.probe_values] for r in study.rows]
        if vals and vals[0]:
            paths.append(plot_probe_convergence(layers, vals, os.path.join(out_dir, "convergence_probes.png")))
    return paths
