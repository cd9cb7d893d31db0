"""Text removal by mask-driven inpainting.

Text regions are supplied as sidecar masks (for ``foo.png`` the mask is
``foo.mask.png``; a missing mask file means "no text regions").  Masked
pixels are filled by a deterministic fast-marching scheme: pixels are
processed in increasing distance-to-boundary order (ties broken by
row-major index) and each is set to the distance-weighted average of the
already-known pixels in its 5x5 neighborhood, weight 1/(1 + d^2).  The
fill is a convex combination of unmasked pixel values, so filled values
never leave the unmasked value range, and refilling with the same mask
reproduces the same output.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import AllMasked, DecodeError, DimMismatch
from .imgcore import RasterImage

# (flat-offset template, weight) pairs for the 5x5 fill neighborhood
_NEIGHBORHOOD = [
    (dy, dx, 1.0 / (1.0 + dy * dy + dx * dx))
    for dy in range(-2, 3)
    for dx in range(-2, 3)
    if not (dy == 0 and dx == 0)
]


@dataclass(frozen=True)
class TextMask:
    """Per-pixel text flag; True marks pixels to be inpainted."""

    data: np.ndarray  # (h, w) bool

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.dtype != np.bool_:
            raise ValueError("TextMask needs a 2-D bool array")
        if bool(self.data.all()):
            raise AllMasked("mask covers every pixel")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def empty(self) -> bool:
        return not bool(self.data.any())


def load_mask(path, expected_dims: tuple[int, int]) -> TextMask:
    """Load an 8-bit single-channel PNG mask; values >= 128 mark text."""
    exp_w, exp_h = expected_dims
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DecodeError(f"{path}: mask must be PNG, got {im.format!r}")
            im.load()
            if im.mode != "L":
                raise DecodeError(f"{path}: mask must be single-channel, got {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    h, w = arr.shape
    if (w, h) != (exp_w, exp_h):
        raise DimMismatch(f"{path}: mask is {w}x{h}, image is {exp_w}x{exp_h}")
    return TextMask(arr >= 128)


def mask_path_for(image_path: str) -> str:
    """Sidecar mask path: foo.png -> foo.mask.png in the same directory."""
    root, _ = os.path.splitext(image_path)
    return root + ".mask.png"


def load_sidecar_mask(image_path: str, dims: tuple[int, int]) -> TextMask | None:
    """Mask for an image per the sidecar convention, or None when absent."""
    path = mask_path_for(image_path)
    if not os.path.exists(path):
        return None
    return load_mask(path, dims)


def save_mask(mask: np.ndarray, path) -> None:
    """Write a bool (h, w) array as an 8-bit PNG mask (True -> 255)."""
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )


def inpaint(img: RasterImage, mask: TextMask) -> RasterImage:
    """Fill masked pixels by distance-ordered weighted averaging.

    Unmasked pixels are returned bit-identical; masked pixels are filled
    in increasing Euclidean-distance-to-boundary order (row-major on
    ties) from the already-known pixels of their 5x5 neighborhood.
    """
    if (mask.width, mask.height) != (img.width, img.height):
        raise DimMismatch(
            f"mask {mask.width}x{mask.height} vs image {img.width}x{img.height}"
        )
    if mask.empty:
        return img

    h, w, nc = img.height, img.width, img.channels
    m = mask.data

    # Exact Euclidean distance of each masked pixel to the nearest unmasked one.
    dist = ndimage.distance_transform_edt(m)
    masked_flat = np.flatnonzero(m.ravel())
    order = masked_flat[np.lexsort((masked_flat, dist.ravel()[masked_flat]))]

    # Pad by 2 with never-known pixels so the inner loop needs no bounds checks.
    pw = w + 4
    known = np.zeros((h + 4, pw), dtype=bool)
    known[2:-2, 2:-2] = ~m
    vals = np.zeros((nc, h + 4, pw), dtype=np.float64)
    vals[:, 2:-2, 2:-2] = np.moveaxis(img.data.astype(np.float64), 2, 0)

    known_l = known.ravel().tolist()
    vals_l = [vals[c].ravel().tolist() for c in range(nc)]
    offsets = [(dy * pw + dx, wt) for dy, dx, wt in _NEIGHBORHOOD]

    for flat in order.tolist():
        y, x = divmod(flat, w)
        p = (y + 2) * pw + (x + 2)
        wsum = 0.0
        acc = [0.0] * nc
        for off, wt in offsets:
            q = p + off
            if known_l[q]:
                wsum += wt
                for c in range(nc):
                    acc[c] += wt * vals_l[c][q]
        if wsum <= 0.0:
            raise RuntimeError("fill order left a pixel with no known neighbors")
        for c in range(nc):
            vals_l[c][p] = acc[c] / wsum
        known_l[p] = True

    out = img.data.copy()
    filled = np.stack(
        [np.asarray(v, dtype=np.float64).reshape(h + 4, pw)[2:-2, 2:-2] for v in vals_l],
        axis=2,
    )
    my, mx = np.nonzero(m)
    out[my, mx] = np.clip(np.floor(filled[my, mx] + 0.5), 0, 255).astype(np.uint8)
    return RasterImage(out)
