"""Static SVG line plots and label heatmaps (matplotlib, Agg backend).

Plots are derived views of data already written to CSV. Output is
byte-stable: the SVG id salt is fixed and no creation date is embedded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "png-sfp"
plt.rcParams["svg.fonttype"] = "path"


@dataclass
class Panel:
    title: str = ""
    xlabel: str = "t"
    ylabel: str = ""
    logx: bool = False
    lines: list = field(default_factory=list)  # (x, y, label, style dict)
    bands: list = field(default_factory=list)  # (x, lo, hi, label, style dict)

    def line(self, x, y, label=None, **style) -> "Panel":
        self.lines.append((np.asarray(x), np.asarray(y), label, style))
        return self

    def band(self, x, lo, hi, label=None, **style) -> "Panel":
        self.bands.append((np.asarray(x), np.asarray(lo), np.asarray(hi), label, style))
        return self


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_panels(path, panels, suptitle: str = "") -> None:
    fig, axes = plt.subplots(1, len(panels), figsize=(5.0 * len(panels), 3.8), squeeze=False)
    for ax, p in zip(axes[0], panels):
        for x, lo, hi, label, style in p.bands:
            ax.fill_between(x, lo, hi, label=label, linewidth=0, **{"alpha": 0.25, **style})
        for x, y, label, style in p.lines:
            ax.plot(x, y, label=label, **style)
        if p.logx:
            ax.set_xscale("symlog", linthresh=1.0)
        ax.set_title(p.title)
        ax.set_xlabel(p.xlabel)
        ax.set_ylabel(p.ylabel)
        if any(item[-2] for item in p.lines + p.bands):
            ax.legend(fontsize=7)
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    _save(fig, path)


def save_label_maps(path, maps, extent, xlabel: str, ylabel: str, n_labels: int) -> None:
    """One heatmap per ``(title, labels)`` pair; label -1 marks unconverged cells."""
    cmap = plt.get_cmap("viridis", max(n_labels, 1) + 1)
    fig, axes = plt.subplots(1, len(maps), figsize=(3.6 * len(maps), 3.6), squeeze=False)
    for ax, (title, labels) in zip(axes[0], maps):
        im = ax.imshow(labels, origin="lower", extent=extent, cmap=cmap,
                       vmin=-1.5, vmax=n_labels - 0.5, interpolation="nearest")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
    cbar = fig.colorbar(im, ax=axes[0].tolist(), ticks=range(-1, n_labels))
    cbar.set_label("equilibrium index (-1 = unconverged)")
    _save(fig, path)
