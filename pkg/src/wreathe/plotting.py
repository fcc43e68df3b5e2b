"""Optional diagnostic figures written with matplotlib's file-only backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated runs byte-identical
_META = {"Software": None}


def plot_traces(results, path, observed=None, map_render=None) -> None:
    """Log-posterior and level-count traces per chain, plus the observation and MAP render."""
    panels = 2 + (observed is not None) + (map_render is not None)
    fig, axes = plt.subplots(1, panels, figsize=(4 * panels, 3.2))
    ax_lp, ax_n = axes[0], axes[1]
    for r in results:
        its = [s.iteration for s in r.samples]
        ax_lp.plot(its, [s.log_posterior for s in r.samples], lw=0.8, label=f"seed {r.seed}")
        ax_n.step(its, [len(s.shape) for s in r.samples], lw=0.8, where="post")
    ax_lp.set_xlabel("iteration")
    ax_lp.set_ylabel("log posterior")
    ax_lp.legend(fontsize=7)
    ax_n.set_xlabel("iteration")
    ax_n.set_ylabel("levels")
    k = 2
    for img, title in ((observed, "observed"), (map_render, "MAP")):
        if img is None:
            continue
        axes[k].imshow(np.asarray(img), cmap="gray_r", vmin=0, vmax=1, interpolation="nearest")
        axes[k].set_title(title)
        axes[k].set_xticks([])
        axes[k].set_yticks([])
        k += 1
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_evaluation(summary, path) -> None:
    """Recoverability rates and the distribution of render IoU."""
    fig, (ax_r, ax_h) = plt.subplots(1, 2, figsize=(8, 3.2))
    names = ["full", "up to occupancy"]
    ax_r.bar(names, [summary.full_rate, summary.up_to_occupancy_rate], color=["#4c72b0", "#55a868"])
    ax_r.set_ylim(0, 1)
    ax_r.set_ylabel("rate")
    ax_h.hist([r.render_iou for r in summary.items], bins=np.linspace(0, 1, 11), color="#8172b2")
    ax_h.axvline(summary.mean_iou, color="k", lw=1, ls="--")
    ax_h.set_xlabel("render IoU")
    ax_h.set_ylabel("items")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
