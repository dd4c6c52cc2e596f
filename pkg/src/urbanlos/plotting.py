"""Matplotlib figures written next to the CSV/JSON outputs (opt-in via ``--plot``)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .citygen import CityModel  # noqa: E402
from .montecarlo import THETA, PlosCurve  # noqa: E402

FIGSIZE = (5.0, 3.6)


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_curves(curves: dict[str, PlosCurve], path, fitted: dict[str, PlosCurve] | None = None, title: str = ""):
    """Simulated curves as thin lines, fitted models as thick lines of the same colour."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for i, (label, c) in enumerate(curves.items()):
        color = f"C{i}"
        m = c.defined
        ax.plot(THETA[m], c.plos[m], lw=0.8, color=color, label=label)
        if fitted and label in fitted:
            ax.plot(THETA, fitted[label].plos, lw=2.2, color=color, alpha=0.8)
    ax.set_xlim(0, 90)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("elevation angle (deg)")
    ax.set_ylabel("P_LoS")
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7, loc="lower right")
    _finish(fig, path)


def plot_city(city: CityModel, path) -> None:
    """Top view, buildings shaded by height."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for hw in city.highways:
        x0, y0, x1, y1 = hw.rect
        ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, color="0.8", lw=0))
    if city.buildings:
        rects = [Rectangle((b.x, b.y), b.w, b.l) for b in city.buildings]
        pc = PatchCollection(rects, cmap="viridis", lw=0)
        pc.set_array([b.h for b in city.buildings])
        ax.add_collection(pc)
        fig.colorbar(pc, ax=ax, shrink=0.7, label="height (m)")
    ax.set_xlim(0, city.side)
    ax.set_ylim(0, city.side)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"{city.layout}  alpha={city.achieved_alpha:.3f}  n={len(city.buildings)}", fontsize=9)
    _finish(fig, path)
