"""Matplotlib renderings written next to the CSV/JSON report files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_KIND_LABELS = {"gancls": "GAN-CLS", "modified": "modified GAN-CLS"}


def save_history_figure(history, path) -> None:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.2))
    iters = np.arange(1, len(history) + 1)
    ax0.plot(iters, history.d_loss, lw=0.7, label="L_D")
    ax0.plot(iters, history.g_loss, lw=0.7, label="L_G")
    ax0.set_xlabel("iteration")
    ax0.set_ylabel("loss")
    ax0.legend(frameon=False)
    rows = history.snapshot_rows()
    for h in range(history.class_count):
        ax1.plot(rows + 1, history.tv[rows, h], marker=".", ms=3, lw=0.8,
                 label=f"class {h}")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("TV(generated, data)")
    ax1.set_ylim(bottom=0)
    ax1.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_class_histogram_figure(edges, data_masses, generated_masses, path) -> None:
    h_count = data_masses.shape[1]
    fig, axes = plt.subplots(1, h_count, figsize=(3.4 * h_count, 2.8), squeeze=False)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    for h in range(h_count):
        ax = axes[0, h]
        ax.bar(centers, data_masses[:, h], width=width, alpha=0.45, label="data")
        ax.step(edges, np.append(generated_masses[:, h], generated_masses[-1, h]),
                where="post", color="C3", label="generated")
        ax.set_title(f"class {h}", fontsize=10)
        ax.set_xlabel("outcome")
        if h == 0:
            ax.set_ylabel("bin mass")
            ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_d_density_figure(hists, path, labels=("matched", "mismatched", "generated")) -> None:
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    for hist, label in zip(hists, labels):
        ax.step(hist.edges, np.append(hist.masses(), hist.masses()[-1]),
                where="post", label=label)
    ax.set_xlabel("discriminator output")
    ax.set_ylabel("bin mass")
    ax.set_xlim(0, 1)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_fixedpoint_figure(data_conditionals, target_conditionals, argmin_conditionals,
                           path, kind_label="") -> None:
    h_count = data_conditionals.shape[1]
    x = np.arange(data_conditionals.shape[0])
    fig, axes = plt.subplots(1, h_count, figsize=(3.4 * h_count, 2.8), squeeze=False)
    for h in range(h_count):
        ax = axes[0, h]
        ax.bar(x - 0.25, data_conditionals[:, h], width=0.25, label="data")
        ax.bar(x, target_conditionals[:, h], width=0.25, label="closed form")
        ax.bar(x + 0.25, argmin_conditionals[:, h], width=0.25, label="solver")
        ax.set_title(f"condition {h}", fontsize=10)
        ax.set_xlabel("outcome bin")
        if h == 0:
            ax.set_ylabel("probability")
            ax.legend(frameon=False, fontsize=8)
    if kind_label:
        fig.suptitle(kind_label, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_compare_figure(seeds, mean_tv_by_alg, path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.0))
    x = np.arange(len(seeds))
    for i, (alg, vals) in enumerate(sorted(mean_tv_by_alg.items())):
        ax.bar(x + (i - 0.5) * 0.35, vals, width=0.35,
               label=_KIND_LABELS.get(alg, alg))
    ax.set_xticks(x, [str(s) for s in seeds])
    ax.set_xlabel("seed")
    ax.set_ylabel("mean TV(generated, data)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
