"""Image preprocessing and local feature maps.

Images are plain 2-d numpy arrays (rows along eta, columns along phi).
Functions that accept a single image also accept a stack with shape
``(n_events, height, width)`` unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .errors import DegenerateDataError, DomainError, ShapeError

__all__ = [
    "Scaler",
    "fit_scaler",
    "standardize",
    "flip_to_top_right",
    "crop_downsample",
    "select_pixels",
    "s_order",
    "angle_encode",
    "hypersphere_map",
    "SELECTION_MODES",
    "preprocess",
]

SELECTION_MODES = ("central4", "central4+top2", "full", "s_order")


@dataclass(frozen=True)
class Scaler:
    """Global min/max intensity bounds mapped onto [0, pi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise DegenerateDataError(f"scaler needs hi > lo, got lo={self.lo}, hi={self.hi}")

    def __call__(self, x):
        return standardize(x, self)


def fit_scaler(images, n_fit: int | None = None) -> Scaler:
    """Fit global bounds on the first ``n_fit`` images (all if ``None``)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    if n_fit is None:
        n_fit = len(images)
    if n_fit < 1 or len(images) < 1:
        raise DegenerateDataError("need at least one image to fit a scaler")
    subset = images[:n_fit]
    lo, hi = float(subset.min()), float(subset.max())
    if hi == lo:
        raise DegenerateDataError(f"all fitted pixels equal {lo}; cannot standardize")
    return Scaler(lo, hi)


def standardize(image, scaler: Scaler) -> np.ndarray:
    """Map intensities linearly so that lo -> 0 and hi -> pi, clamping outliers."""
    x = np.asarray(image, dtype=np.float64)
    return np.clip((x - scaler.lo) / (scaler.hi - scaler.lo), 0.0, 1.0) * math.pi


def _quadrant_sums(img):
    h, w = img.shape
    top, left = h // 2, w // 2
    # odd sizes: the central row/column belongs to no quadrant
    bottom, right = h - top, w - left
    return {
        "tl": img[:top, :left].sum(),
        "tr": img[:top, right:].sum(),
        "bl": img[bottom:, :left].sum(),
        "br": img[bottom:, right:].sum(),
    }


def flip_to_top_right(image) -> np.ndarray:
    """Flip so that the most intense quadrant ends up top-right.

    Ties prefer no flip, then a horizontal flip, then a vertical one.
    """
    img = np.asarray(image)
    if img.ndim == 3:
        return np.stack([flip_to_top_right(x) for x in img])
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ShapeError(f"flip_to_top_right needs a square image, got shape {img.shape}")
    q = _quadrant_sums(img)
    # candidate quadrant that each flip moves to the top-right
    candidates = [
        ("tr", lambda a: a),
        ("tl", lambda a: a[:, ::-1]),  # horizontal flip
        ("br", lambda a: a[::-1, :]),  # vertical flip
        ("bl", lambda a: a[::-1, ::-1]),
    ]
    best = max(q.values())
    for name, op in candidates:
        if q[name] == best:
            return op(img).copy()
    raise AssertionError("unreachable")


def crop_downsample(image, crop: int, pool: int) -> np.ndarray:
    """Crop ``crop`` pixels from every side, then mean-pool ``pool x pool`` windows.

    Trailing rows/columns that do not fill a window are dropped.
    """
    img = np.asarray(image, dtype=np.float64)
    stacked = img.ndim == 3
    if not stacked:
        img = img[None]
    _, h, w = img.shape
    if crop < 0 or pool < 1:
        raise ShapeError(f"invalid crop={crop} / pool={pool}")
    ch, cw = h - 2 * crop, w - 2 * crop
    if ch < pool or cw < pool:
        raise ShapeError(f"crop={crop} leaves {ch}x{cw} pixels, smaller than pool={pool}")
    img = img[:, crop : h - crop, crop : w - crop]
    oh, ow = ch // pool, cw // pool
    img = img[:, : oh * pool, : ow * pool]
    out = img.reshape(len(img), oh, pool, ow, pool).mean(axis=(2, 4))
    return out if stacked else out[0]


def s_order(image) -> np.ndarray:
    """Serpentine flatten: even rows left to right, odd rows right to left."""
    img = np.asarray(image)
    stacked = img.ndim == 3
    if not stacked:
        img = img[None]
    rows = [img[:, r, :] if r % 2 == 0 else img[:, r, ::-1] for r in range(img.shape[1])]
    out = np.concatenate(rows, axis=1)
    return out if stacked else out[0]


def select_pixels(image, mode: str) -> np.ndarray:
    """Pick the model inputs out of a (standardized) image.

    ``central4`` and ``central4+top2`` need a 4x4 image; the latter prepends the
    two pixels directly above the central block.
    """
    img = np.asarray(image)
    stacked = img.ndim == 3
    if not stacked:
        img = img[None]
    h, w = img.shape[1:]
    if mode in ("central4", "central4+top2"):
        if (h, w) != (4, 4):
            raise ShapeError(f"mode {mode!r} needs a 4x4 image, got {h}x{w}")
        cells = [(1, 1), (1, 2), (2, 1), (2, 2)]
        if mode == "central4+top2":
            cells = [(0, 1), (0, 2)] + cells
        out = np.stack([img[:, r, c] for r, c in cells], axis=1)
    elif mode == "full":
        out = img.reshape(len(img), h * w)
    elif mode == "s_order":
        out = s_order(img)
    else:
        raise ValueError(f"unknown selection mode {mode!r}; choose from {SELECTION_MODES}")
    return out if stacked else out[0]


def angle_encode(x):
    """A standardized pixel is used directly as the R_y rotation angle."""
    return x


def hypersphere_map(x, D: int) -> np.ndarray:
    """Map pixels in [0, pi] to unit vectors in R^D.

    Component j (1-based) is sqrt(C(D-1, j-1)) cos^(D-j)(t) sin^(j-1)(t) with
    t = (x / pi) * pi / 2, so D=2 gives [cos(x/2), sin(x/2)]. Works
    elementwise: the output has one extra trailing axis of length D.
    """
    if D < 2:
        raise DomainError(f"Hilbert dimension must be >= 2, got {D}")
    x = np.asarray(x, dtype=np.float64)
    t = (x / math.pi) * math.pi / 2
    j = np.arange(1, D + 1)
    coef = np.sqrt(comb(D - 1, j - 1))
    c = np.cos(t)[..., None]
    s = np.sin(t)[..., None]
    return coef * c ** (D - j) * s ** (j - 1)


def preprocess(images, crop: int = 12, pool: int = 2, flip: bool = True) -> np.ndarray:
    """Flip each raw image towards the top-right, then crop and downsample."""
    images = np.asarray(images, dtype=np.float64)
    if flip:
        images = flip_to_top_right(images)
    return crop_downsample(images, crop, pool)
