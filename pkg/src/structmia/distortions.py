"""Query-time image distortions used in the robustness experiments.

Randomness comes from a generator keyed by (seed, image id, distortion tag), so
results do not depend on the order in which images are processed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .imagecore import as_image, image_rng

KINDS = ("salt_pepper", "rotation", "saturation", "brightness")
_TAGS = {"salt_pepper": 1, "rotation": 2, "saturation": 3, "brightness": 4}
LUMA = np.array([0.299, 0.587, 0.114])
ROTATION_FILL = 0.0


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    magnitude: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown distortion {self.kind!r}; choose from {KINDS}")
        lo, hi = {
            "salt_pepper": (0.0, 1.0),
            "rotation": (-180.0, 180.0),
            "saturation": (0.0, 1.0),
            "brightness": (0.0, 1.0),
        }[self.kind]
        if not lo <= self.magnitude <= hi:
            raise ParameterError(f"{self.kind} magnitude {self.magnitude} outside [{lo}, {hi}]")

    def apply(self, img: np.ndarray, image_id: int) -> np.ndarray:
        if self.kind == "salt_pepper":
            return salt_pepper(img, self.magnitude, self.seed, image_id)
        if self.kind == "rotation":
            return rotate(img, self.magnitude)
        if self.kind == "saturation":
            return saturation_jitter(img, self.magnitude, self.seed, image_id)
        return brightness_jitter(img, self.magnitude, self.seed, image_id)


# default robustness suite: 10% noise, 10 degrees CCW, +/-50% saturation and brightness
DEFAULT_SPECS = {
    "salt_pepper": 0.10,
    "rotation": 10.0,
    "saturation": 0.5,
    "brightness": 0.5,
}


def salt_pepper(img: np.ndarray, fraction: float = 0.10, seed: int = 0, image_id: int = 0) -> np.ndarray:
    """Set ``round(fraction * H * W)`` distinct pixel positions to black or white."""
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction must be in [0, 1], got {fraction}")
    img = as_image(img)
    h, w, _ = img.shape
    count = int(np.floor(fraction * h * w + 0.5))
    rng = image_rng(seed, image_id, _TAGS["salt_pepper"])
    positions = rng.choice(h * w, size=count, replace=False)
    values = rng.integers(0, 2, size=count).astype(np.float64)
    out = img.copy().reshape(h * w, -1)
    out[positions] = values[:, None]
    return as_image(out.reshape(img.shape))


def _bilinear(img: np.ndarray, rows: np.ndarray, cols: np.ndarray, fill: float) -> np.ndarray:
    h, w, c = img.shape
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = (rows - r0)[..., None]
    fc = (cols - c0)[..., None]
    out = np.zeros(rows.shape + (c,))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr, cc = r0 + dr, c0 + dc
            inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            vals = np.full(rows.shape + (c,), fill)
            vals[inside] = img[rr[inside], cc[inside]]
            out += wr * wc * vals
    return out


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate counterclockwise about the geometric centre; bilinear, black fill."""
    img = as_image(img)
    h, w, _ = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    # output pixel -> source pixel: rotate clockwise by theta in a y-up frame
    x, y = cols - cx, cy - rows
    xs = np.cos(theta) * x + np.sin(theta) * y
    ys = -np.sin(theta) * x + np.cos(theta) * y
    out = _bilinear(img, cy - ys, xs + cx, ROTATION_FILL)
    return as_image(np.clip(out, 0.0, 1.0))


def rotate10ccw(img: np.ndarray) -> np.ndarray:
    return rotate(img, 10.0)


def _sign(seed: int, image_id: int, kind: str) -> float:
    rng = image_rng(seed, image_id, _TAGS[kind])
    return 1.0 if rng.random() < 0.5 else -1.0


def saturate(img: np.ndarray, factor: float) -> np.ndarray:
    """Scale chroma about the luma grey by ``factor``."""
    img = as_image(img)
    if img.shape[2] != 3:
        raise ParameterError("saturation needs an RGB image")
    gray = (img @ LUMA)[..., None]
    return as_image(np.clip(gray + factor * (img - gray), 0.0, 1.0))


def saturation_jitter(img: np.ndarray, delta: float = 0.5, seed: int = 0, image_id: int = 0) -> np.ndarray:
    return saturate(img, 1.0 + _sign(seed, image_id, "saturation") * delta)


def brighten(img: np.ndarray, factor: float) -> np.ndarray:
    img = as_image(img)
    return as_image(np.clip(img * factor, 0.0, 1.0))


def brightness_jitter(img: np.ndarray, delta: float = 0.5, seed: int = 0, image_id: int = 0) -> np.ndarray:
    return brighten(img, 1.0 + _sign(seed, image_id, "brightness") * delta)
