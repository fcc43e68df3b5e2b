"""Binarization of observed images and the Bernoulli pixel likelihood."""

from __future__ import annotations

import numpy as np

P_MIN = 1e-4


class DimensionMismatchError(ValueError):
    pass


def border_mask(shape) -> np.ndarray:
    h, w = shape
    m = np.zeros((h, w), dtype=bool)
    m[0, :] = m[-1, :] = True
    m[:, 0] = m[:, -1] = True
    return m


def binarize(img, threshold: float = 0.5, auto_polarity: bool = True) -> np.ndarray:
    """Threshold to {0, 1}; ink is 1.

    If more than half of the border pixels come out as ink the image is taken
    to be dark strokes on a light background and is inverted.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    out = (img >= threshold).astype(np.uint8)
    if auto_polarity and out.size:
        border = out[border_mask(out.shape)]
        if 2 * int(border.sum()) > border.size:
            out = 1 - out
    return out


def log_likelihood(obs, render, p_min: float = P_MIN) -> float:
    """Sum over pixels of the Bernoulli log probability of ``obs`` given ``render``."""
    if not 0.0 < p_min < 0.5:
        raise ValueError(f"p_min must lie in (0, 0.5), got {p_min}")
    obs = np.asarray(obs)
    render = np.asarray(render, dtype=float)
    if obs.shape != render.shape:
        raise DimensionMismatchError(f"observed image {obs.shape} and render {render.shape} differ in size")
    p = np.clip(render, p_min, 1.0 - p_min)
    return float(np.sum(np.log(np.where(obs != 0, p, 1.0 - p))))
