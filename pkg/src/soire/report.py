"""CSV result tables and the figures rendered next to them."""

from __future__ import annotations

import csv
from pathlib import Path

RESULT_COLUMNS = (
    "dataset",
    "delta",
    "learning_rate",
    "selected",
    "val_accuracy",
    "test_accuracy",
    "network_accuracy",
    "faithfulness",
    "soire_prefix",
    "soire_infix",
)


def format_float(x: float) -> str:
    return f"{x:.6f}"


def write_results_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("delta", "learning_rate", "val_accuracy", "test_accuracy",
                        "network_accuracy", "faithfulness"):
                if key in out and out[key] is not None and out[key] != "":
                    out[key] = format_float(float(out[key]))
            writer.writerow(out)


def read_results_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_accuracy_figure(rows: list[dict], path) -> None:
    """Accuracy and faithfulness of the selected runs against the noise
    level, rendered to an image file next to the CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    selected = [r for r in rows if str(r.get("selected", "")) in ("1", "True", "true")]
    selected.sort(key=lambda r: float(r["delta"]))
    deltas = [float(r["delta"]) for r in selected]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    series = (
        ("test_accuracy", "interpreted accuracy", "o-"),
        ("network_accuracy", "network accuracy", "s--"),
        ("faithfulness", "faithfulness", "^:"),
    )
    for column, label, style in series:
        values = [float(r[column]) * 100.0 for r in selected if r.get(column)]
        if len(values) == len(deltas) and deltas:
            ax.plot(deltas, values, style, label=label)
    ax.set_xlabel(r"noise level $\delta$")
    ax.set_ylabel("percent on the test set")
    ax.set_ylim(0.0, 105.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
