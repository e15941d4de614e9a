"""
SVG figures: benchmark bars, RSS heatmaps, imputer comparison.
"""

import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from modules.utilis import DomainError, ensure_parent_dir  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp so reruns write identical bytes
SVG_RC = {"svg.hashsalt": "rfmap", "svg.fonttype": "path"}
SVG_METADATA = {"Date": None, "Creator": None}


def _save_svg(fig, path):
    ensure_parent_dir(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info("Saved figure to %s", path)


def plot_benchmark(report, path):
    """Mean test MSE per variant with population-std error bars"""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        means = [report.mean(v) for v in report.variants]
        stds = [report.std(v) for v in report.variants]
        positions = np.arange(len(report.variants))
        ax.bar(positions, means, yerr=stds, capsize=6, color="#4c72b0", edgecolor="black")
        ax.set_xticks(positions)
        ax.set_xticklabels(report.variants)
        ax.set_ylabel("Localization MSE (m²)")
        ax.set_title(f"Localization error over {report.runs} runs")
        _save_svg(fig, path)


def plot_rfmap(layers, ap_ids, path, mask=None):
    """One heatmap panel per AP; observed cells are dotted when a mask is given"""
    layers = np.asarray(layers, dtype=float)
    if layers.ndim != 3 or len(layers) != len(ap_ids):
        raise DomainError(f"expected one 2D layer per AP, got shape {layers.shape} for {len(ap_ids)} APs")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != layers.shape[1:] and mask.shape != layers.shape:
            raise DomainError(f"mask shape {mask.shape} does not match layers {layers.shape}")

    with plt.rc_context(SVG_RC):
        fig, axes = plt.subplots(1, len(ap_ids), figsize=(3 * len(ap_ids), 6), squeeze=False)
        vmin, vmax = float(layers.min()), float(layers.max())
        for index, (ax, ap_id) in enumerate(zip(axes[0], ap_ids)):
            image = ax.imshow(layers[index], origin="lower", cmap="viridis", vmin=vmin, vmax=vmax, aspect="auto")
            if mask is not None:
                layer_mask = mask if mask.ndim == 2 else mask[index]
                rows, cols = np.nonzero(layer_mask)
                ax.scatter(cols, rows, s=6, c="white", marker="o")
            ax.set_title(f"AP {ap_id}")
            ax.set_xlabel("col")
            ax.set_ylabel("row")
        fig.colorbar(image, ax=axes[0].tolist(), label="RSS (dBm)")
        ensure_parent_dir(path)
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
        logger.info("Saved RF map figure to %s", path)


def plot_interpolation_comparison(frame, path):
    """Grouped bars of RMSE per imputer, one group per AP"""
    if frame.empty:
        raise DomainError("nothing to plot: empty comparison table")
    pivot = frame.pivot(index="ap_id", columns="method", values="rmse_db")
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        positions = np.arange(len(pivot.index))
        width = 0.8 / len(pivot.columns)
        for offset, method in enumerate(pivot.columns):
            ax.bar(positions + offset * width, pivot[method].to_numpy(), width, label=method)
        ax.set_xticks(positions + width * (len(pivot.columns) - 1) / 2)
        ax.set_xticklabels([str(a) for a in pivot.index])
        ax.set_xlabel("AP")
        ax.set_ylabel("RMSE on unmeasured cells (dB)")
        ax.legend()
        _save_svg(fig, path)
