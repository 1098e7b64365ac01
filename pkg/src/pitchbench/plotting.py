"""Static SVG renderings of the harness plot-data tables."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed salt and no date stamp keep the SVG output byte-stable across runs.
_RC = {"svg.hashsalt": "pitchbench", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _values(table, columns):
    return np.array([[np.nan if row.get(c) is None else row[c] for c in columns]
                     for row in table], dtype=float)


def bar_chart(path, table, columns, ylabel, title):
    """Grouped bars: one group per column, one bar per table row.

    ``table`` is a list of dicts with a ``label`` key plus one value per
    column; missing values are drawn as gaps.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        values = _values(table, columns)
        n = max(len(table), 1)
        width = 0.8 / n
        x = np.arange(len(columns))
        for i, row in enumerate(table):
            ax.bar(x + (i - (n - 1) / 2) * width, values[i], width, label=row["label"])
        ax.set_xticks(x, columns)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if table:
            ax.legend(fontsize="small", ncol=min(n, 5))
        fig.tight_layout()
        _save(fig, path)


def line_chart(path, table, columns, xvalues, xlabel, ylabel, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        values = _values(table, columns)
        for i, row in enumerate(table):
            ax.plot(xvalues, values[i], marker="o", label=row["label"])
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if table:
            ax.legend(fontsize="small")
        fig.tight_layout()
        _save(fig, path)
