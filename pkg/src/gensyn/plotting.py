"""Static figures and their underlying data from a finished run directory."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError


def _load(report_dir: Path) -> dict:
    path = report_dir / "report.json"
    if not path.is_file():
        raise ConfigError(f"no report.json in {report_dir}")
    return json.loads(path.read_text())


def comparison_rows(report_dir: Path) -> list[dict]:
    report = _load(report_dir)
    rows = []
    for method, info in report["methods"].items():
        if info.get("status") != "ok":
            continue
        rows.append({"method": method, "tae": info["tae"], "kl": info["kl"], "frobenius": info["frobenius"]})
    return rows


def _write_csv(path: Path, rows: list[dict]) -> None:
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def plot_report(report_dir) -> list[Path]:
    """Write ``plot_metrics.csv`` and PNG figures; returns the created paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report_dir = Path(report_dir)
    report = _load(report_dir)
    written = []
    rows = comparison_rows(report_dir)
    data_path = report_dir / "plot_metrics.csv"
    _write_csv(data_path, rows)
    written.append(data_path)

    metrics = [m for m in ("tae", "kl", "frobenius") if any(r[m] is not None for r in rows)]
    if rows and metrics:
        fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.5), squeeze=False)
        names = [r["method"] for r in rows]
        for ax, metric in zip(axes[0], metrics):
            ax.bar(names, [r[metric] or 0.0 for r in rows], color="tab:blue")
            ax.set_title(metric)
            ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        path = report_dir / "metrics.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    sweep = [r for r in report.get("tau_sweep", []) if r.get("status") == "ok"]
    if sweep:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        x = [r["tau_times_n"] for r in sweep]
        ax.plot(x, [r["kl"] if r["kl"] is not None else np.nan for r in sweep], marker="o")
        ax.set_xscale("log")
        ax.set_xlabel("tau x N")
        ax.set_ylabel("KL divergence")
        fig.tight_layout()
        path = report_dir / "tau_sweep.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    for method in report["methods"]:
        mpath = report_dir / method / "metrics.json"
        if not mpath.is_file():
            continue
        m = json.loads(mpath.read_text())
        if m.get("status") != "ok":
            continue
        names = m["association_matrix"]["variables"]
        mats = [("synthetic", np.array(m["association_matrix"]["values"]))]
        if "reference_association_matrix" in m:
            mats.insert(0, ("reference", np.array(m["reference_association_matrix"]["values"])))
        fig, axes = plt.subplots(1, len(mats), figsize=(4.5 * len(mats), 4), squeeze=False)
        for ax, (title, mat) in zip(axes[0], mats):
            im = ax.imshow(mat, vmin=0, vmax=1, cmap="viridis")
            ax.set_xticks(range(len(names)), names, rotation=60, fontsize=7)
            ax.set_yticks(range(len(names)), names, fontsize=7)
            ax.set_title(f"{method}: {title}")
        fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
        path = report_dir / f"association_{method}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
