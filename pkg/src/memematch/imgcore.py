"""Image representation, decoding, color conversion, resizing, filtering.

Conventions used throughout the toolkit:

* RasterImage wraps a (h, w, c) uint8 array with c in {1, 3}.
* GrayImage is a plain 2-D float64 array with values in [0, 255];
  all intermediate filtering stays in float and is quantized only
  when an image is written back to disk.
* Resampling uses half-pixel-centered bilinear interpolation.
* All filters replicate the border pixel (clamp-to-edge), so no
  artificial edges appear at image borders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, InvalidDim, InvalidKernel

GrayImage = np.ndarray  # 2-D float64, values in [0, 255]

_GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class RasterImage:
    """Decoded raster: (h, w, c) uint8 with c == 1 (gray) or c == 3 (RGB)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"RasterImage needs (h, w, 1|3) data, got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("RasterImage needs width >= 1 and height >= 1")
        if d.dtype != np.uint8:
            raise ValueError(f"RasterImage data must be uint8, got {d.dtype}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left offset (x, y) and extent (w, h) in pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"BBox extent must be >= 1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError("BBox offsets must be >= 0")

    @property
    def area(self) -> int:
        return self.w * self.h


def load_image(path) -> RasterImage:
    """Decode a PNG or JPEG file; alpha (if present) is composited over white."""
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"{path}: unsupported format {im.format!r}")
            im.load()
            if im.mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            if im.mode in ("RGBA", "LA"):
                bg = Image.new("RGBA", im.size, (255, 255, 255, 255))
                im = Image.alpha_composite(bg, im.convert("RGBA")).convert("RGB")
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return RasterImage(arr)


def save_png(img: RasterImage, path) -> None:
    """Write a RasterImage as PNG (lossless; round-trips bit-exactly)."""
    arr = img.data
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def to_grayscale(img: RasterImage) -> GrayImage:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B; 1-channel input passes through."""
    data = img.data.astype(np.float64)
    if img.channels == 1:
        return data[:, :, 0]
    wr, wg, wb = _GRAY_WEIGHTS
    return wr * data[:, :, 0] + wg * data[:, :, 1] + wb * data[:, :, 2]


def resize_bilinear(img: GrayImage, w: int, h: int) -> GrayImage:
    """Bilinear resize with half-pixel-centered sampling to exactly (w, h)."""
    if w < 1 or h < 1:
        raise InvalidDim(f"target dims must be >= 1, got {w}x{h}")
    src = np.asarray(img, dtype=np.float64)
    src_h, src_w = src.shape
    if (src_w, src_h) == (w, h):
        return src.copy()

    xs = np.clip((np.arange(w) + 0.5) * (src_w / w) - 0.5, 0.0, src_w - 1.0)
    ys = np.clip((np.arange(h) + 0.5) * (src_h / h) - 0.5, 0.0, src_h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]

    # lerp as v0 + f*(v1 - v0): constant inputs reproduce exactly
    top_l, top_r = src[y0][:, x0], src[y0][:, x1]
    bot_l, bot_r = src[y1][:, x0], src[y1][:, x1]
    top = top_l + fx * (top_r - top_l)
    bot = bot_l + fx * (bot_r - bot_l)
    out = top + fy * (bot - top)
    return np.clip(out, src.min(), src.max())


def resize_raster(img: RasterImage, w: int, h: int) -> RasterImage:
    """Per-channel bilinear resize of a RasterImage, requantized to uint8."""
    chans = [
        resize_bilinear(img.data[:, :, c].astype(np.float64), w, h)
        for c in range(img.channels)
    ]
    out = np.stack(chans, axis=2)
    return RasterImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def _window_apply(img: GrayImage, kernel: np.ndarray) -> GrayImage:
    """Correlate img with kernel as given, clamp-to-edge borders, same-size output."""
    src = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    kh, kw = k.shape
    padded = np.pad(src, ((kh // 2, kh // 2), (kw // 2, kw // 2)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw))
    return np.einsum("ijkl,kl->ij", windows, k, optimize=True)


def convolve(img: GrayImage, kernel: np.ndarray) -> GrayImage:
    """True 2-D convolution (kernel flipped) with clamp-to-edge borders.

    An impulse image therefore reproduces the kernel values around the
    impulse location.
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise InvalidKernel(f"kernel must be 2-D with odd dims, got {k.shape}")
    return _window_apply(img, k[::-1, ::-1])


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Normalized 2-D Gaussian; radius defaults to ceil(3*sigma)."""
    if radius is None:
        radius = int(np.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    k = np.outer(g1, g1)
    return k / k.sum()


def gaussian_blur(img: GrayImage, sigma: float, radius: int | None = None) -> GrayImage:
    """Gaussian smoothing (symmetric kernel, so convolution == correlation)."""
    return _window_apply(img, gaussian_kernel(sigma, radius))


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)
LAPLACIAN_3X3 = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


def sobel_gradients(img: GrayImage) -> tuple[GrayImage, GrayImage]:
    """(gx, gy): gx grows with intensity increasing rightward, gy downward."""
    return _window_apply(img, SOBEL_X), _window_apply(img, SOBEL_Y)
