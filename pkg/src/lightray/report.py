"""CSV tables and matplotlib figures written next to them."""
from __future__ import annotations

import csv
import os
from typing import Iterable, Sequence

import numpy as np


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """RFC 4180 style table with a header row; floats use repr precision."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    import matplotlib.pyplot as plt
    plt.close(fig)
    return path


def figure_path(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + ".png"


def plot_lines(csv_path: str, x, series: dict, xlabel: str, ylabel: str, title: str = "",
               logy: bool = False) -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, y in series.items():
        ax.plot(x, y, label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    return _save(fig, figure_path(csv_path))


def plot_image(csv_path: str, values: np.ndarray, extent, xlabel: str, ylabel: str, title: str = "") -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(np.asarray(values).T, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, figure_path(csv_path))
