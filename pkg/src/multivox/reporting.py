"""Report emission: delimited tables, plot-data series and rendered figures.

Everything written here is deterministic for a given report: fixed row
order, fixed float formatting, no timestamps. Figures are rendered with the
Agg backend straight to files.
"""

from __future__ import annotations

import json
from pathlib import Path

from .evaluation import ALL_SPEAKERS, MetricReport, PreferenceTally

METRIC_COLUMNS = ("mcd_db", "f0_corr", "vuv_error_rate", "n_frames_scored")

_METRIC_LABELS = {
    "mcd_db": ("Spectral distortion (dB)", "smaller is better"),
    "f0_corr": ("F0 correlation", "bigger is better"),
    "vuv_error_rate": ("V/UV error rate", "smaller is better"),
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _speaker_order(report: MetricReport) -> list[str]:
    return report.speakers + [ALL_SPEAKERS]


def write_metric_csv(report: MetricReport, path: Path) -> None:
    """Long format: one row per speaker x strategy x metric."""
    lines = ["speaker,strategy,metric,value"]
    for strategy in report.strategies:
        for speaker in _speaker_order(report):
            row = report.row(speaker, strategy)
            for metric in METRIC_COLUMNS:
                lines.append(
                    f"{speaker},{strategy},{metric},{_fmt(getattr(row, metric))}"
                )
    Path(path).write_text("\n".join(lines) + "\n")


def write_metric_json(report: MetricReport, path: Path) -> None:
    payload = {
        "speakers": report.speakers,
        "strategies": report.strategies,
        "metrics": report.to_dict(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_plot_data(report: MetricReport, directory: Path) -> list[Path]:
    """One wide CSV per metric: x = speaker, one y column per strategy."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    strategies = report.strategies
    for metric in METRIC_COLUMNS[:3]:
        lines = ["speaker," + ",".join(strategies)]
        for speaker in _speaker_order(report):
            values = [
                _fmt(getattr(report.row(speaker, s), metric)) for s in strategies
            ]
            lines.append(f"{speaker}," + ",".join(values))
        path = directory / f"{metric}.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written


def write_preference(tally: PreferenceTally, path: Path) -> None:
    Path(path).write_text(json.dumps(tally.to_dict(), indent=2, sort_keys=True) + "\n")


def write_preference_csv(tally: PreferenceTally, path: Path) -> None:
    a, b = tally.pair
    lines = [f"speaker,wins_{a},wins_{b},p_value,significant"]
    payload = tally.to_dict()
    for speaker, row in payload["per_speaker"].items():
        lines.append(
            f"{speaker},{row['wins_a']},{row['wins_b']},"
            f"{_fmt(row['p_value'])},{int(row['significant'])}"
        )
    o = payload["overall"]
    lines.append(
        f"{ALL_SPEAKERS},{o['wins_a']},{o['wins_b']},"
        f"{_fmt(o['p_value'])},{int(o['significant'])}"
    )
    Path(path).write_text("\n".join(lines) + "\n")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_metric_figure(report: MetricReport, metric: str, path: Path) -> None:
    """Grouped bars per speaker, one group member per strategy."""
    plt = _pyplot()
    import numpy as np

    speakers = _speaker_order(report)
    strategies = report.strategies
    x = np.arange(len(speakers))
    width = 0.8 / max(len(strategies), 1)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(speakers)), 3.6))
    for i, strategy in enumerate(strategies):
        values = [getattr(report.row(spk, strategy), metric) for spk in speakers]
        values = [float("nan") if v is None else v for v in values]
        ax.bar(x + (i - (len(strategies) - 1) / 2) * width, values, width, label=strategy)
    title, direction = _METRIC_LABELS[metric]
    ax.set_title(f"{title} ({direction})")
    ax.set_xticks(x)
    ax.set_xticklabels(speakers, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel(title)
    ax.legend(fontsize=7, ncol=min(len(strategies), 4))
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_preference_figure(tally: PreferenceTally, path: Path) -> None:
    """Diverging horizontal bars: share preferring A (left) vs B (right)."""
    plt = _pyplot()

    payload = tally.to_dict()
    rows = list(payload["per_speaker"].items()) + [(ALL_SPEAKERS, payload["overall"])]
    labels, shares_a, shares_b, stars = [], [], [], []
    for speaker, row in rows:
        n = row["wins_a"] + row["wins_b"]
        labels.append(speaker)
        shares_a.append(row["wins_a"] / n if n else 0.0)
        shares_b.append(row["wins_b"] / n if n else 0.0)
        stars.append(row["significant"])
    y = range(len(labels))
    fig, ax = plt.subplots(figsize=(6.0, 0.4 * len(labels) + 1.2))
    a, b = tally.pair
    ax.barh(y, [-s for s in shares_a], color="tab:blue", label=a)
    ax.barh(y, shares_b, color="tab:orange", label=b)
    for yi, starred in zip(y, stars):
        if starred:
            ax.text(0.0, yi, "*", ha="center", va="center", fontsize=12)
    ax.set_yticks(list(y))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlim(-1.0, 1.0)
    ax.set_xticks([-1.0, -0.5, 0.0, 0.5, 1.0])
    ax.set_xticklabels(["100%", "50%", "0", "50%", "100%"])
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_title(f"Preference {tally.label} (* = significant at 5%)")
    ax.legend(fontsize=8, loc="lower right")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(
    report: MetricReport,
    directory: Path,
    tallies: list[PreferenceTally] | None = None,
) -> dict[str, Path]:
    """Write the full report bundle into a directory; returns written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    figures = directory / "figures"
    figures.mkdir(exist_ok=True)
    out = {}
    out["csv"] = directory / "report.csv"
    write_metric_csv(report, out["csv"])
    out["json"] = directory / "report.json"
    write_metric_json(report, out["json"])
    for path in write_plot_data(report, directory / "plotdata"):
        out[f"plotdata/{path.stem}"] = path
    for metric in ("mcd_db", "f0_corr", "vuv_error_rate"):
        path = figures / f"{metric}.png"
        render_metric_figure(report, metric, path)
        out[f"figures/{metric}"] = path
    for tally in tallies or []:
        json_path = directory / f"preference_{tally.label}.json"
        write_preference(tally, json_path)
        out[f"preference/{tally.label}.json"] = json_path
        csv_path = directory / f"preference_{tally.label}.csv"
        write_preference_csv(tally, csv_path)
        out[f"preference/{tally.label}.csv"] = csv_path
        fig_path = figures / f"preference_{tally.label}.png"
        render_preference_figure(tally, fig_path)
        out[f"figures/preference_{tally.label}"] = fig_path
    return out
