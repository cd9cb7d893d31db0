"""Whole-image binary hashing and embeddings with their distances.

The 64-bit perceptual hash is the sign pattern of the top-left 8x8 block
of an orthonormal 2-D DCT-II of the 32x32-rescaled grayscale image,
thresholded at the median of all 64 coefficients (strict >, DC included).
Hashes serialize as 16 lowercase hex characters, first bit most
significant.

Embeddings come from a pluggable provider.  The built-in provider is a
deterministic 256-dim grid descriptor: 4x4 cells over a 224x224 rescale,
each cell contributing an 8-bin gradient-orientation histogram
(Sobel, magnitude-weighted) and an 8-bin intensity histogram; epsilon
1e-6 is added and the vector L2-normalized.  A sidecar provider serves
externally computed vectors from a JSONL file instead.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, MissingEmbedding
from .imgcore import RasterImage, resize_bilinear, sobel_gradients, to_grayscale

EMBED_EPS = 1e-6
_BUILTIN_DIM = 256
_CELLS = 4
_EMBED_SIZE = 224


@dataclass(frozen=True)
class Hash64:
    """64-bit perceptual hash; bit i (row-major over the 8x8 DCT block)
    lives at integer bit position 63 - i."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << 64):
            raise ValueError("hash must fit in 64 bits")

    def hex(self) -> str:
        return f"{self.bits:016x}"

    @classmethod
    def from_hex(cls, s: str) -> "Hash64":
        return cls(int(s, 16))

    def bit_count(self) -> int:
        return self.bits.bit_count()


def _dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    d[0] *= np.sqrt(1.0 / n)
    d[1:] *= np.sqrt(2.0 / n)
    return d


_DCT32 = _dct_matrix(32)


def phash(img: RasterImage) -> Hash64:
    """Median-thresholded low-frequency DCT hash of the image.

    The DCT is taken on the mean-centered image with the DC coefficient
    restored analytically (32 * mean), so a constant image transforms to
    exact zeros plus its DC term instead of float noise.
    """
    small = resize_bilinear(to_grayscale(img), 32, 32)
    mean = float(small.mean())
    coeffs = _DCT32 @ (small - mean) @ _DCT32.T
    coeffs[0, 0] += 32.0 * mean
    block = coeffs[:8, :8]
    med = float(np.median(block))
    flags = (block > med).ravel()
    bits = 0
    for i, f in enumerate(flags):
        if f:
            bits |= 1 << (63 - i)
    return Hash64(bits)


def hamming(a: Hash64, b: Hash64) -> int:
    """Number of differing bits; range [0, 64]."""
    return (a.bits ^ b.bits).bit_count()


def builtin_embedding(img: RasterImage) -> np.ndarray:
    """256-dim grid descriptor (gradient + intensity histograms), unit norm."""
    g = resize_bilinear(to_grayscale(img), _EMBED_SIZE, _EMBED_SIZE)
    gx, gy = sobel_gradients(g)
    mag = np.hypot(gx, gy)
    ang_bin = np.clip(
        np.floor((np.arctan2(gy, gx) + np.pi) / (np.pi / 4.0)), 0, 7
    ).astype(np.intp)
    int_bin = np.clip(np.floor(g / 32.0), 0, 7).astype(np.intp)

    cell_w = _EMBED_SIZE // _CELLS
    yy, xx = np.mgrid[0:_EMBED_SIZE, 0:_EMBED_SIZE]
    cell = (yy // cell_w) * _CELLS + (xx // cell_w)

    n_cells = _CELLS * _CELLS
    grad_hist = np.bincount(
        (cell * 8 + ang_bin).ravel(), weights=mag.ravel(), minlength=n_cells * 8
    )
    int_hist = np.bincount(
        (cell * 8 + int_bin).ravel(), minlength=n_cells * 8
    ).astype(np.float64)

    vec = np.empty(_BUILTIN_DIM, dtype=np.float64)
    for c in range(n_cells):
        vec[c * 16 : c * 16 + 8] = grad_hist[c * 8 : c * 8 + 8]
        vec[c * 16 + 8 : c * 16 + 16] = int_hist[c * 8 : c * 8 + 8]
    vec += EMBED_EPS
    return vec / np.linalg.norm(vec)


class BuiltinProvider:
    """Deterministic grid-descriptor embeddings computed from pixels."""

    name = "builtin-grid-v1"
    dim = _BUILTIN_DIM
    source = "built-in"

    def __init__(self):
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, image_id: str, img: RasterImage | None = None) -> np.ndarray:
        if image_id in self._cache:
            return self._cache[image_id]
        if img is None:
            raise MissingEmbedding(f"no pixels supplied for {image_id!r}")
        vec = builtin_embedding(img)
        self._cache[image_id] = vec
        return vec


class SidecarProvider:
    """Embeddings served from a JSONL sidecar of {"image_id", "vec"} rows."""

    source = "sidecar-file"

    def __init__(self, path, name: str = "sidecar"):
        self.name = name
        self._vectors: dict[str, np.ndarray] = {}
        dim = None
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                vec = np.asarray(row["vec"], dtype=np.float64)
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise DimMismatch(
                        f"{path}:{line_no}: dim {vec.size} != {dim}"
                    )
                norm = float(np.linalg.norm(vec))
                if norm == 0.0:
                    raise ValueError(f"{path}:{line_no}: zero vector")
                if abs(norm - 1.0) > 1e-6:
                    warnings.warn(
                        f"{path}:{line_no}: vector renormalized (|v|={norm:.6g})"
                    )
                    vec = vec / norm
                self._vectors[str(row["image_id"])] = vec
        if dim is None:
            raise ValueError(f"{path}: sidecar holds no vectors")
        self.dim = int(dim)

    def embed(self, image_id: str, img: RasterImage | None = None) -> np.ndarray:
        try:
            return self._vectors[image_id]
        except KeyError:
            raise MissingEmbedding(f"{image_id!r} not present in sidecar") from None


def get_provider(spec: str):
    """Provider factory: 'builtin' or 'sidecar:<path>'."""
    if spec == "builtin":
        return BuiltinProvider()
    if spec.startswith("sidecar:"):
        return SidecarProvider(spec.split(":", 1)[1])
    raise ValueError(f"unknown embedding provider {spec!r}")


def embed(img: RasterImage, provider, image_id: str = "") -> np.ndarray:
    """Embed an image through the given provider."""
    return provider.embed(image_id, img)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - a.b for unit vectors; range [0, 2]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    return float(1.0 - np.dot(a, b))
