"""Panel segmentation and blank-segment filtering.

Images are split into rectangular panels by finding long horizontal and
vertical edge lines (Canny edges, then an axis-restricted Hough vote:
a row/column qualifies as a separator when its edge support covers at
least ``support_frac`` of the perpendicular dimension).  Splitting
recurses into sub-rectangles up to ``max_split_depth``; candidate
panels below ``min_area_frac`` of the original image are dropped, and
an image with no separators stays whole.

Blank panels (no discernible content) are filtered by a decision tree
over four features computed here: grayscale histogram entropy, aspect
ratio, spectral-residual saliency entropy, and Laplacian variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import cart
from .errors import InvalidThreshold, ModelUntrained
from .imgcore import (
    BBox,
    GrayImage,
    LAPLACIAN_3X3,
    RasterImage,
    _window_apply,
    gaussian_blur,
    resize_bilinear,
    sobel_gradients,
    to_grayscale,
)

BLANK_FEATURE_NAMES = (
    "shannon_entropy",
    "aspect_ratio",
    "saliency_entropy",
    "laplacian_variance",
)

BLANK = "blank"
NON_BLANK = "non-blank"


@dataclass(frozen=True)
class Segment:
    """A rectangular panel cropped from a source image."""

    source: str
    box: BBox
    pixels: RasterImage


@dataclass(frozen=True)
class SegmentSet:
    """Ordered, non-overlapping panels of one image."""

    source: str
    segments: tuple[Segment, ...]

    @property
    def n(self) -> int:
        return len(self.segments)


@dataclass(frozen=True)
class BlankFeatures:
    shannon_entropy: float
    aspect_ratio: float
    saliency_entropy: float
    laplacian_variance: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.shannon_entropy,
                self.aspect_ratio,
                self.saliency_entropy,
                self.laplacian_variance,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Separator:
    """An axis-aligned split line. axis 'h': horizontal line at row pos;
    axis 'v': vertical line at column pos."""

    axis: str
    pos: int
    support: float


@dataclass(frozen=True)
class SegmenterConfig:
    canny_low: float = 40.0
    canny_high: float = 120.0
    canny_sigma: float = 1.4
    support_frac: float = 0.85
    merge_tol: float = 0.02
    min_area_frac: float = 0.05
    max_split_depth: int = 3


def canny(img: GrayImage, low: float, high: float, sigma: float = 1.4) -> np.ndarray:
    """Canny edge map: 5x5 Gaussian, Sobel, NMS, double-threshold hysteresis."""
    if low > high:
        raise InvalidThreshold(f"low {low} > high {high}")
    g = np.asarray(img, dtype=np.float64)
    blurred = gaussian_blur(g, sigma, radius=2)
    gx, gy = sobel_gradients(blurred)
    mag = np.hypot(gx, gy)

    # Quantize gradient direction into 4 sectors (modulo pi).
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = np.zeros(angle.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3

    # Non-maximum suppression along the gradient direction; out-of-image
    # neighbors count as -1 so border maxima survive.  Plateaus keep only
    # the first pixel in scan order (strictly greater than the preceding
    # neighbor, at least equal to the following one).
    padded = np.pad(mag, 1, mode="constant", constant_values=-1.0)

    def shift(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + mag.shape[0], 1 + dx : 1 + dx + mag.shape[1]]

    # per sector: (preceding neighbor, following neighbor) in row-major order
    neighbor_pairs = {
        0: ((0, -1), (0, 1)),
        1: ((-1, 1), (1, -1)),
        2: ((-1, 0), (1, 0)),
        3: ((-1, -1), (1, 1)),
    }
    keep = np.zeros(mag.shape, dtype=bool)
    for s, (prev_off, next_off) in neighbor_pairs.items():
        sel = sector == s
        keep |= sel & (mag > shift(*prev_off)) & (mag >= shift(*next_off))
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high
    weak = nms >= low
    if not strong.any():
        return np.zeros(mag.shape, dtype=bool)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    good = np.unique(labels[strong])
    return weak & np.isin(labels, good[good > 0])


def detect_separators(
    edges: np.ndarray, support_frac: float = 0.85, merge_tol: float = 0.02
) -> list[Separator]:
    """Axis-aligned Hough vote: full-ish rows/columns of edge pixels.

    A row (column) qualifies when its edge count reaches ``support_frac``
    of the width (height); qualifying lines closer than ``merge_tol`` of
    the corresponding dimension merge into their support-weighted mean.
    """
    h, w = edges.shape
    out: list[Separator] = []
    for axis, counts, dim, span in (
        ("h", edges.sum(axis=1), h, w),
        ("v", edges.sum(axis=0), w, h),
    ):
        positions = np.flatnonzero(counts >= support_frac * span)
        if positions.size == 0:
            continue
        tol = merge_tol * dim
        groups: list[list[int]] = [[int(positions[0])]]
        for p in positions[1:]:
            if p - groups[-1][-1] <= tol:
                groups[-1].append(int(p))
            else:
                groups.append([int(p)])
        for grp in groups:
            sup = counts[grp].astype(np.float64)
            pos = int(np.floor(np.sum(sup * np.asarray(grp)) / np.sum(sup) + 0.5))
            out.append(Separator(axis, pos, float(sup.mean()) / span))
    return out


def _intervals(dim: int, cuts: list[int]) -> list[tuple[int, int]]:
    """Open intervals between cut lines (the cut line itself is excluded)."""
    bounds = sorted(set(c for c in cuts if 0 <= c < dim))
    starts = [0] + [c + 1 for c in bounds]
    ends = bounds + [dim]
    return [(s, e) for s, e in zip(starts, ends) if e > s]


def segment_panels(
    img: RasterImage, config: SegmenterConfig = SegmenterConfig(), source: str = ""
) -> SegmentSet:
    """Recursively split an image into panels at separator lines."""
    gray = to_grayscale(img)
    total_area = img.width * img.height
    boxes: list[BBox] = []

    def recurse(x: int, y: int, w: int, h: int, depth: int) -> None:
        if depth > config.max_split_depth:
            boxes.append(BBox(x, y, w, h))
            return
        sub = gray[y : y + h, x : x + w]
        edges = canny(sub, config.canny_low, config.canny_high, config.canny_sigma)
        seps = detect_separators(edges, config.support_frac, config.merge_tol)
        rows = [s.pos for s in seps if s.axis == "h"]
        cols = [s.pos for s in seps if s.axis == "v"]
        if not rows and not cols:
            boxes.append(BBox(x, y, w, h))
            return
        for y0, y1 in _intervals(h, rows):
            for x0, x1 in _intervals(w, cols):
                recurse(x + x0, y + y0, x1 - x0, y1 - y0, depth + 1)

    recurse(0, 0, img.width, img.height, 1)
    kept = [b for b in boxes if b.area >= config.min_area_frac * total_area]
    if not kept:
        kept = [BBox(0, 0, img.width, img.height)]
    kept.sort(key=lambda b: (b.y, b.x))
    segments = tuple(
        Segment(source, b, RasterImage(img.data[b.y : b.y + b.h, b.x : b.x + b.w].copy()))
        for b in kept
    )
    return SegmentSet(source, segments)


def _histogram_entropy(values: np.ndarray) -> float:
    """Shannon entropy (bits) of a 256-bin histogram of [0, 255] values."""
    q = np.clip(np.floor(values + 0.5), 0, 255).astype(np.intp)
    counts = np.bincount(q.ravel(), minlength=256)
    p = counts[counts > 0] / q.size
    return float(-np.sum(p * np.log2(p))) + 0.0  # normalize -0.0


def saliency_map(gray: GrayImage) -> np.ndarray:
    """Spectral-residual saliency on a 64x64 rescale of the image."""
    small = resize_bilinear(gray, 64, 64)
    spectrum = np.fft.fft2(small)
    amplitude = np.abs(spectrum)
    phase = np.angle(spectrum)
    log_amp = np.log(amplitude + 1e-12)
    residual = log_amp - _window_apply(log_amp, np.full((3, 3), 1.0 / 9.0))
    recon = np.fft.ifft2(np.exp(residual + 1j * phase))
    sal = np.abs(recon) ** 2
    return gaussian_blur(sal, 2.5)


def blank_features(seg: Segment) -> BlankFeatures:
    """Shannon entropy, aspect ratio, saliency entropy, Laplacian variance."""
    gray = to_grayscale(seg.pixels)
    shannon = _histogram_entropy(gray)
    aspect = seg.box.w / seg.box.h

    sal = saliency_map(gray)
    smax = float(sal.max())
    sal_scaled = sal / smax * 255.0 if smax > 0 else np.zeros_like(sal)
    sal_entropy = _histogram_entropy(sal_scaled)

    lap = _window_apply(gray, LAPLACIAN_3X3)
    return BlankFeatures(shannon, aspect, sal_entropy, float(lap.var()))


def filter_blanks(segset: SegmentSet, model: cart.DecisionTree) -> SegmentSet:
    """Drop segments the model predicts blank, keeping at least one.

    If every segment is predicted blank, the largest one is retained so
    downstream segment-wise measures always have something to compare.
    """
    if model is None or model.root is None:
        raise ModelUntrained("blank filter model has no fitted nodes")
    keep = [
        seg
        for seg in segset.segments
        if cart.predict(model, blank_features(seg).as_vector()) != BLANK
    ]
    if not keep:
        keep = [max(segset.segments, key=lambda s: s.box.area)]
    return SegmentSet(segset.source, tuple(keep))
