"""Plot-ready series and SVG charts from a finished workspace."""

from __future__ import annotations

import shutil
from pathlib import Path

from .errors import MissingArtifactError
from .pipeline import read_tsv, write_tsv

# (source relative to the workspace, series name)
SERIES = [
    ("pca/A/variance.tsv", "pca_variance_A.tsv"),
    ("pca/C/variance.tsv", "pca_variance_C.tsv"),
    ("distances/distances.tsv", "group_distances.tsv"),
    ("project2d/A.tsv", "projection_A.tsv"),
    ("project2d/C.tsv", "projection_C.tsv"),
    ("year/A/predictions.tsv", "year_predictions_A.tsv"),
    ("year/C/predictions.tsv", "year_predictions_C.tsv"),
    ("year/A/metrics.tsv", "year_metrics_A.tsv"),
    ("year/C/metrics.tsv", "year_metrics_C.tsv"),
    ("keywords/trends.tsv", "keyword_trends.tsv"),
    ("keywords/century_prompts.tsv", "century_prompts.tsv"),
    ("experiment/summary.tsv", "experiment_summary.tsv"),
    ("experiment/lowess.tsv", "experiment_lowess.tsv"),
    ("experiment/axis_values.tsv", "experiment_axis_values.tsv"),
    ("noise_probe/predictions.tsv", "noise_probe.tsv"),
]


def report(workspace, charts: bool = True, require_all: bool = False) -> dict:
    """Copy available series into ``report/series`` and draw charts.

    Missing sources are skipped (or raise with ``require_all``). Returns a
    mapping of series name to output path.
    """
    ws = Path(workspace)
    out = ws / "report"
    series_dir = out / "series"
    series_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for src, name in SERIES:
        p = ws / src
        if not p.is_file():
            if require_all:
                raise MissingArtifactError(p)
            continue
        dst = series_dir / name
        shutil.copyfile(p, dst)
        written[name] = dst
    if charts:
        _charts(ws, out / "charts")
    index = [[name, str(path.relative_to(out))] for name, path in sorted(written.items())]
    write_tsv(out / "index.tsv", ["series", "path"], index)
    return written


def _charts(ws: Path, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "artcontext"
    plt.rcParams["svg.fonttype"] = "none"
    out.mkdir(parents=True, exist_ok=True)

    def save(fig, name):
        fig.savefig(out / name, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)

    for space in ("A", "C"):
        p = ws / "year" / space / "predictions.tsv"
        if p.is_file():
            rows = read_tsv(p)
            fig, ax = plt.subplots(figsize=(4, 4))
            ax.scatter([int(r["decade"]) for r in rows], [float(r["predicted_year"]) for r in rows], s=4)
            ax.plot([1500, 1990], [1500, 1990], color="grey", lw=0.8)
            ax.set_xlabel("true decade")
            ax.set_ylabel("predicted year")
            ax.set_title(f"{space}-space year model")
            save(fig, f"year_{space}.svg")

    p = ws / "experiment" / "lowess.tsv"
    if p.is_file():
        rows = read_tsv(p)
        fig, ax = plt.subplots(figsize=(5, 4))
        keys = sorted({(r["condition"], int(r["steps"])) for r in rows})
        for cond, steps in keys:
            sel = [r for r in rows if r["condition"] == cond and int(r["steps"]) == steps]
            ax.plot([float(r["decade"]) for r in sel], [float(r["fitted_year"]) for r in sel],
                    label=f"{cond} ({steps})", lw=1)
        ax.set_xlabel("source decade")
        ax.set_ylabel("predicted year (LOWESS)")
        ax.legend(fontsize=6)
        save(fig, "experiment_lowess.svg")

    p = ws / "experiment" / "axis_values.tsv"
    if p.is_file():
        rows = read_tsv(p)
        fig, ax = plt.subplots(figsize=(5, 3))
        for cond in sorted({r["condition"] for r in rows}):
            ax.hist([float(r["axis_value"]) for r in rows if r["condition"] == cond], bins=30,
                    histtype="step", label=cond)
        ax.set_xlabel("temporal axis projection")
        ax.legend(fontsize=6)
        save(fig, "axis_values.svg")

    for space in ("A", "C"):
        p = ws / "project2d" / f"{space}.tsv"
        if p.is_file():
            rows = read_tsv(p)
            fig, ax = plt.subplots(figsize=(4, 4))
            sc = ax.scatter([float(r["x"]) for r in rows], [float(r["y"]) for r in rows],
                            c=[int(r["decade"]) for r in rows], s=4, cmap="viridis")
            fig.colorbar(sc, ax=ax, label="decade")
            save(fig, f"projection_{space}.svg")
