"""Summary tables and SVG line charts from campaign result CSVs."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import AGGREGATE_ID, RESULT_COLUMNS, read_results  # noqa: E402

FAMILIES = {
    "frequency": ("F", "P", "G"),
    "absolute": ("F_A", "P_A", "G_A"),
}
REQUIRED = ("model", "fold_id", "hp_profile", "fold_scheme", "n_test_variants") + FAMILIES["frequency"] + FAMILIES[
    "absolute"
]


class SchemaError(ValueError):
    pass


def load_rows(paths: list[str | Path]) -> list[dict[str, str]]:
    rows = []
    for p in paths:
        data = read_results(p, include_aggregate=True)
        if data:
            missing = [c for c in REQUIRED if c not in data[0]]
        else:
            header = Path(p).read_text().splitlines()[:1]
            missing = [c for c in REQUIRED if not header or c not in header[0].split(",")]
        if missing:
            raise SchemaError(f"{p}: missing columns {missing}")
        rows.extend(r for r in data if r["fold_id"] != AGGREGATE_ID)
    return rows


def summarize(rows: list[dict[str, str]]) -> list[dict]:
    """One point per (model, profile, fold scheme): mean x and mean/standard error per metric."""
    groups: dict[tuple[str, str, str], list[dict[str, str]]] = defaultdict(list)
    for r in rows:
        groups[(r["model"], r["hp_profile"], r["fold_scheme"])].append(r)
    out = []
    for (model, profile, scheme), grp in sorted(groups.items()):
        point = {
            "model": model, "hp_profile": profile, "fold_scheme": scheme, "n_folds": len(grp),
            "x": statistics.fmean(float(r["n_test_variants"]) for r in grp),
        }
        for metrics in FAMILIES.values():
            for m in metrics:
                vals = [float(r[m]) for r in grp]
                point[m] = statistics.fmean(vals)
                point[m + "_se"] = statistics.stdev(vals) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        out.append(point)
    return out


def summary_text(points: list[dict]) -> str:
    cols = ["model", "hp_profile", "fold_scheme", "n_folds", "x"] + [m for ms in FAMILIES.values() for m in ms]
    lines = ["\t".join(cols)]
    for p in points:
        lines.append("\t".join(f"{p[c]:.4f}" if isinstance(p[c], float) else str(p[c]) for c in cols))
    return "\n".join(lines) + "\n"


def emit_report(paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """Write one SVG per metric family plus ``summary.tsv``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points = summarize(load_rows(paths))
    written = []
    series: dict[tuple[str, str], list[dict]] = defaultdict(list)
    for p in points:
        series[(p["model"], p["hp_profile"])].append(p)
    with plt.rc_context({"svg.hashsalt": "pmsl", "svg.fonttype": "none"}):
        for family, metrics in FAMILIES.items():
            fig, ax = plt.subplots(figsize=(6.4, 4.2))
            for (model, profile), pts in sorted(series.items()):
                pts = sorted(pts, key=lambda p: p["x"])
                xs = [p["x"] for p in pts]
                for m in metrics:
                    ax.errorbar(
                        xs, [p[m] for p in pts], yerr=[p[m + "_se"] for p in pts],
                        marker="o", capsize=3, label=f"{m} {model} {profile}",
                    )
            ax.set_xlabel("held-out variants per fold")
            ax.set_ylabel("score")
            ax.set_ylim(-0.02, 1.02)
            ax.set_title(f"{family} metrics")
            if series:
                ax.legend(fontsize="small")
            fig.tight_layout()
            path = out_dir / f"{family}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    summary = out_dir / "summary.tsv"
    summary.write_text(summary_text(points))
    written.append(summary)
    return written


__all__ = ["emit_report", "summarize", "load_rows", "SchemaError", "RESULT_COLUMNS"]
