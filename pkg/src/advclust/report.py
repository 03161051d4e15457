"""Matplotlib report figures rendered next to the delimited run logs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_history(records, out_path: str, title: str = "training run") -> str:
    """Render objective curves, discriminator statistics and ACC to a file.

    ``records`` are IterationRecord objects (or dicts with the same keys).
    """
    def col(name):
        vals = []
        for r in records:
            v = r.get(name) if isinstance(r, dict) else getattr(r, name)
            vals.append(np.nan if v is None else v)
        return np.asarray(vals, dtype=np.float64)

    it = col("iteration")
    fig, axes = plt.subplots(3, 1, figsize=(7, 9), sharex=True)

    axes[0].plot(it, col("disc_objective"), label="discriminator")
    axes[0].plot(it, col("enc_objective"), label="encoder")
    axes[0].axhline(-2.0 * np.log(2.0), color="gray", ls=":", lw=1,
                    label="-2 ln 2 equilibrium")
    axes[0].set_ylabel("objective")
    axes[0].legend(loc="best", fontsize=8)

    d_pos, d_neg = col("mean_d_pos"), col("mean_d_neg")
    if np.isfinite(d_pos).any():
        axes[1].plot(it, d_pos, label="mean D(positives)")
        axes[1].plot(it, d_neg, label="mean D(negatives)")
        axes[1].axhline(0.5, color="gray", ls=":", lw=1)
        axes[1].set_ylim(0, 1)
    else:
        axes[1].plot(it, col("recon_loss"), label="reconstruction")
        axes[1].plot(it, col("cluster_loss"), label="cluster loss")
    axes[1].set_ylabel("statistics")
    axes[1].legend(loc="best", fontsize=8)

    acc = col("acc")
    if np.isfinite(acc).any():
        axes[2].plot(it, acc, color="tab:green")
        axes[2].set_ylim(0, 1.02)
    axes[2].set_ylabel("ACC")
    axes[2].set_xlabel("iteration")

    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_latents(latents: np.ndarray, labels, out_path: str,
                 title: str = "latent space") -> str:
    """2-D scatter of latent points (first two dims when Z > 2)."""
    z = np.asarray(latents)
    fig, ax = plt.subplots(figsize=(6, 5))
    if z.shape[1] == 1:
        ax.scatter(z[:, 0], np.zeros(z.shape[0]), c=labels, s=8, cmap="tab10")
    else:
        ax.scatter(z[:, 0], z[:, 1], c=labels, s=8, cmap="tab10")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
