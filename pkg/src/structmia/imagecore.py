"""Image rasters, 8-bit file I/O and the seeded synthetic shapes dataset.

An image is a read-only ``float64`` array of shape ``(H, W, C)`` with ``C`` in
{1, 3} and every value in [0, 1].  Noisy diffusion states are plain arrays of
the same shape that are allowed to leave the unit range; they only become
images again through :func:`clamp_image`.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError, ParameterError

MIN_SIDE = 16
SHAPE_FAMILIES = ("rectangle", "circle", "stripes")
MANIFEST_NAME = "manifest.csv"


def as_image(data) -> np.ndarray:
    """Validate ``data`` as an image and return a read-only float64 copy."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ParameterError(f"image must be HxW, HxWx1 or HxWx3, got shape {arr.shape}")
    if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
        raise ParameterError(f"image sides must be >= {MIN_SIDE}, got {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("image contains NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ParameterError(
            f"image values must lie in [0, 1], got [{arr.min():.6g}, {arr.max():.6g}]"
        )
    arr.setflags(write=False)
    return arr


def clamp_image(raster: np.ndarray) -> np.ndarray:
    """Present a (possibly noisy) raster as an image by clamping to [0, 1]."""
    return as_image(np.clip(raster, 0.0, 1.0))


def quantize(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to bytes with round-half-up."""
    img = as_image(img)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            fmt, mode = im.format, im.mode
            if fmt not in ("PNG", "PPM"):
                raise FormatError(f"{path}: unsupported file format {fmt!r}")
            if mode not in ("L", "RGB"):
                raise FormatError(f"{path}: unsupported pixel mode {mode!r} (need 8-bit gray or RGB)")
            raw = np.asarray(im, dtype=np.uint8)
    except FormatError:
        raise
    except (OSError, ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from exc
    return as_image(raw.astype(np.float64) / 255.0)


def save_image(img: np.ndarray, path) -> None:
    """Write ``img`` as 8-bit PGM (P5, grayscale only) or PNG, chosen by suffix."""
    path = Path(path)
    data = quantize(img)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".pgm"):
        raise ParameterError(f"{path}: only .png and .pgm are supported")
    if data.shape[2] == 1:
        pil = PILImage.fromarray(data[:, :, 0], mode="L")
    elif suffix == ".pgm":
        raise ParameterError(f"{path}: PGM output requires a grayscale image")
    else:
        pil = PILImage.fromarray(data, mode="RGB")
    # PIL raises OSError for unwritable destinations; let it propagate.
    pil.save(path, format="PPM" if suffix == ".pgm" else "PNG")


def image_rng(seed: int, image_id: int, *stream: int) -> np.random.Generator:
    """Independent generator keyed by (seed, image id[, stream tags])."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, image_id, *stream])


@dataclass(frozen=True)
class Sample:
    id: int
    image: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    members: tuple[Sample, ...]
    holdout: tuple[Sample, ...]
    seed: int
    k_classes: int

    def __post_init__(self):
        ids_m = {s.id for s in self.members}
        ids_h = {s.id for s in self.holdout}
        if ids_m & ids_h:
            raise ParameterError("member and holdout ids overlap")

    def member_images(self) -> np.ndarray:
        return np.stack([s.image for s in self.members])

    def member_labels(self) -> np.ndarray:
        return np.array([s.label for s in self.members], dtype=np.int64)

    def fingerprint(self) -> str:
        """SHA-256 over ids, splits, labels and quantized pixels."""
        h = hashlib.sha256()
        for split, samples in (("member", self.members), ("holdout", self.holdout)):
            for s in samples:
                h.update(f"{s.id},{split},{s.label},{s.image.shape}".encode())
                h.update(np.ascontiguousarray(s.image).tobytes())
        return h.hexdigest()


def _palette_color(rng: np.random.Generator, label: int, k_classes: int) -> np.ndarray:
    hue = (label / k_classes + rng.normal(0.0, 0.08)) % 1.0
    sat = rng.uniform(0.5, 1.0)
    val = rng.uniform(0.45, 1.0)
    # HSV -> RGB
    i = int(hue * 6) % 6
    f = hue * 6 - int(hue * 6)
    p, q, u = val * (1 - sat), val * (1 - f * sat), val * (1 - (1 - f) * sat)
    rgb = [(val, u, p), (q, val, p), (p, val, u), (p, q, val), (u, p, val), (val, p, q)][i]
    return np.array(rgb)


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.2, 0.6, size=3)
    grad = rng.uniform(-0.25, 0.25, size=(2, 3))
    freq = rng.uniform(4.0, 14.0, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.03, 0.1, size=3)
    wave = np.sin(2 * np.pi * (freq[0] * xx + freq[1] * yy) + phase)
    img = (
        base
        + xx[..., None] * grad[0]
        + yy[..., None] * grad[1]
        + wave[..., None] * amp
    )
    return img


def _shape_mask(rng: np.random.Generator, family: str, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if family == "circle":
        r = rng.uniform(0.1, 0.25) * size
        cy, cx = rng.uniform(r * 0.5, size - r * 0.5, size=2)
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
    h, w = rng.uniform(0.15, 0.5, size=2) * size
    y0 = rng.uniform(-h * 0.25, size - h * 0.75)
    x0 = rng.uniform(-w * 0.25, size - w * 0.75)
    return (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)


def render_shapes_image(rng: np.random.Generator, size: int, label: int, k_classes: int) -> np.ndarray:
    """Draw 2-5 filled shapes over a textured background.

    The class label fixes the dominant shape family: at least half of the
    shapes (rounded up) come from ``SHAPE_FAMILIES[label % 3]``.
    """
    img = _background(rng, size)
    n_shapes = int(rng.integers(2, 6))
    dominant = SHAPE_FAMILIES[label % len(SHAPE_FAMILIES)]
    n_dominant = (n_shapes + 1) // 2
    families = [dominant] * n_dominant + [
        SHAPE_FAMILIES[int(rng.integers(len(SHAPE_FAMILIES)))] for _ in range(n_shapes - n_dominant)
    ]
    families = [families[i] for i in rng.permutation(n_shapes)]
    yy, xx = np.mgrid[0:size, 0:size]
    for family in families:
        mask = _shape_mask(rng, family, size)
        color = _palette_color(rng, label, k_classes)
        if family == "stripes":
            period = rng.uniform(3.0, 7.0)
            direction = 1 if rng.random() < 0.5 else -1
            phase = ((xx + direction * yy) / period) % 1.0
            second = color * rng.uniform(0.1, 0.45)
            fill = np.where((phase < 0.5)[..., None], color, second)
            img = np.where(mask[..., None], fill, img)
        else:
            img = np.where(mask[..., None], color, img)
    return np.clip(img, 0.0, 1.0)


def gen_shapes_dataset(
    n_member: int, n_holdout: int, size: int = 32, k_classes: int = 4, seed: int = 0
) -> Dataset:
    """Generate disjoint member/holdout splits of synthetic RGB shape images.

    Members take ids ``0..n_member-1`` and holdout images the next
    ``n_holdout`` ids.  Each image (and its label) is drawn from its own
    generator keyed by ``(seed, id)``, so any subset regenerates identically.
    Pixels are snapped to the 8-bit grid so a PNG round trip is lossless.
    """
    if n_member < 2 or n_holdout < 2:
        raise ParameterError("need at least 2 member and 2 holdout images")
    if size < MIN_SIDE:
        raise ParameterError(f"size must be >= {MIN_SIDE}, got {size}")
    if k_classes < 1:
        raise ParameterError("k_classes must be >= 1")

    def make(image_id: int) -> Sample:
        rng = image_rng(seed, image_id)
        label = int(rng.integers(k_classes))
        pixels = quantize(render_shapes_image(rng, size, label, k_classes)) / 255.0
        return Sample(image_id, as_image(pixels), label)

    members = tuple(make(i) for i in range(n_member))
    holdout = tuple(make(i) for i in range(n_member, n_member + n_holdout))
    return Dataset(members=members, holdout=holdout, seed=seed, k_classes=k_classes)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Write every image as PNG plus an ``id,split,class,path`` manifest."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / MANIFEST_NAME
    rows = []
    for split, samples in (("member", dataset.members), ("holdout", dataset.holdout)):
        for s in samples:
            rel = f"images/{s.id:06d}.png"
            save_image(s.image, out_dir / rel)
            rows.append((s.id, split, s.label, rel))
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "split", "class", "path"])
        writer.writerows(rows)
    return manifest


def read_dataset(manifest, seed: int = 0, k_classes: int | None = None) -> Dataset:
    manifest = Path(manifest)
    members, holdout = [], []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            img = load_image(manifest.parent / row["path"])
            sample = Sample(int(row["id"]), img, int(row["class"]))
            (members if row["split"] == "member" else holdout).append(sample)
    labels = [s.label for s in members + holdout]
    k = k_classes if k_classes is not None else max(labels) + 1
    return Dataset(tuple(members), tuple(holdout), seed=seed, k_classes=k)
