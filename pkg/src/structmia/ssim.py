"""Gaussian-windowed structural similarity (valid windows, stride 1, channel mean)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2


DEFAULT_PARAMS = SsimParams()


@lru_cache(maxsize=8)
def gaussian_1d(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    g /= g.sum()
    g.setflags(write=False)
    return g


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """2-D window as the outer product of the normalized 1-D kernel."""
    g = gaussian_1d(size, sigma)
    return np.outer(g, g)


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation over axes 0 and 1 of an (H, W, C) array
    k = len(g)
    a = sliding_window_view(a, k, axis=0) @ g  # (H-k+1, W, C)
    a = sliding_window_view(a, k, axis=1) @ g  # (H-k+1, W-k+1, C)
    return a


def ssim_map(x: np.ndarray, y: np.ndarray, params: SsimParams = DEFAULT_PARAMS) -> np.ndarray:
    """Per-window, per-channel SSIM values of shape (H-w+1, W-w+1, C)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if y.ndim == 2:
        y = y[:, :, None]
    if x.shape != y.shape:
        raise ParameterError(f"ssim shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < params.window or x.shape[1] < params.window:
        raise ParameterError(f"image {x.shape[:2]} smaller than the {params.window}x{params.window} window")
    x = np.clip(x, 0.0, 1.0)
    y = np.clip(y, 0.0, 1.0)
    g = gaussian_1d(params.window, params.sigma)
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    c1, c2 = params.c1, params.c2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(x: np.ndarray, y: np.ndarray, params: SsimParams = DEFAULT_PARAMS) -> float:
    """Mean SSIM over windows, then over channels."""
    m = ssim_map(x, y, params)
    return float(np.mean(m.mean(axis=(0, 1))))
