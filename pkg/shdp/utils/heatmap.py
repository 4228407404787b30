"""Heatmaps of co-clustering matrices."""

from typing import Optional, Sequence
import os

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_heatmap(matrix: np.ndarray, filename: str, order: Optional[Sequence[int]] = None,
                 boundaries: Optional[Sequence[int]] = None, title: str = '') -> str:
    """Darker cells mean higher co-clustering probability.

    ``boundaries`` are positions (in the displayed order) where a separator line is drawn,
    e.g. cumulative population sizes. The figure format follows the file extension.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    idx = np.arange(n) if order is None else np.asarray(order, dtype=int)
    shown = matrix[np.ix_(idx, idx)]

    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(111)
    image = ax.imshow(shown, cmap='Greys', vmin=0.0, vmax=1.0, interpolation='nearest')
    for b in boundaries or []:
        ax.axhline(b - 0.5, c='red', lw=1)
        ax.axvline(b - 0.5, c='red', lw=1)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(title)
    fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
    plt.tight_layout()

    directory = os.path.dirname(os.path.abspath(filename))
    os.makedirs(directory, exist_ok=True)
    root, ext = os.path.splitext(filename)
    partial = f"{root}.part{ext}"
    try:
        fig.savefig(partial, format=ext.lstrip('.') or 'svg')
        os.replace(partial, filename)
    finally:
        plt.close(fig)
        if os.path.exists(partial):
            os.unlink(partial)
    return filename
