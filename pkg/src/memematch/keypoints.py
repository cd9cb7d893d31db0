"""Oriented corner keypoints, rotated binary descriptors, and the
distance representations built on them.

Detection is FAST-9 (contiguous arc of 9 on a radius-3 Bresenham circle)
over an 8-level bilinear pyramid, candidates ranked by Harris response.
Orientation is the intensity-centroid angle over a radius-15 patch.
Descriptors are 256 brightness comparisons of a fixed pseudo-random
pattern (package-pinned, radius <= 13), rotated per keypoint in 30 steps
of 12 degrees and sampled on the sigma=2 blurred pyramid level; bit i is
I(p_i) < I(q_i).  Keypoints whose rotated pattern would leave the level
are dropped and counted, not errored.

Descriptors are stored packed: one descriptor is 32 uint8 bytes, 256
bits MSB-first within each byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDmax
from .imgcore import GrayImage, gaussian_blur, resize_bilinear, sobel_gradients

MIN_IMAGE_SIDE = 32
DISTANCE_CAP = 200  # distances above this never enter the cumulative distribution
PATTERN_RADIUS = 13
ORIENTATION_BINS = 30
ORIENTATION_PATCH_RADIUS = 15

# radius-3 Bresenham circle, clockwise from 12 o'clock; (dy, dx), y down
_CIRCLE = np.array(
    [
        (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
        (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
    ],
    dtype=np.intp,
)

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    orientation: float  # radians in [-pi, pi]
    response: float
    octave: int


def _make_pattern() -> np.ndarray:
    """Fixed 256-pair sampling pattern, Gaussian spread, norm <= PATTERN_RADIUS."""
    rng = np.random.Generator(np.random.PCG64(0xB81EF))
    pts = np.empty((512, 2), dtype=np.float64)
    filled = 0
    while filled < 512:
        cand = rng.normal(0.0, PATTERN_RADIUS / 3.0, size=(512, 2))
        ok = cand[np.hypot(cand[:, 0], cand[:, 1]) <= PATTERN_RADIUS]
        take = min(512 - filled, ok.shape[0])
        pts[filled : filled + take] = ok[:take]
        filled += take
    return pts.reshape(256, 2, 2)  # [pair, point(p|q), (y, x)]


_PATTERN = _make_pattern()


def _rotated_patterns() -> np.ndarray:
    """Integer pattern offsets for each of the 30 orientation bins."""
    out = np.empty((ORIENTATION_BINS, 256, 2, 2), dtype=np.intp)
    ys = _PATTERN[:, :, 0]
    xs = _PATTERN[:, :, 1]
    for b in range(ORIENTATION_BINS):
        a = 2.0 * np.pi * b / ORIENTATION_BINS
        c, s = np.cos(a), np.sin(a)
        rx = c * xs - s * ys
        ry = s * xs + c * ys
        out[b, :, :, 0] = np.floor(ry + 0.5).astype(np.intp)
        out[b, :, :, 1] = np.floor(rx + 0.5).astype(np.intp)
    return out


_ROTATED = _rotated_patterns()

_PATCH_OFFS = np.array(
    [
        (dy, dx)
        for dy in range(-ORIENTATION_PATCH_RADIUS, ORIENTATION_PATCH_RADIUS + 1)
        for dx in range(-ORIENTATION_PATCH_RADIUS, ORIENTATION_PATCH_RADIUS + 1)
        if dy * dy + dx * dx <= ORIENTATION_PATCH_RADIUS**2
    ],
    dtype=np.intp,
)


def build_pyramid(
    img: GrayImage, n_levels: int = 8, scale_factor: float = 1.2
) -> list[GrayImage]:
    """Bilinear pyramid; levels that fall below the 32-px floor are omitted."""
    h, w = img.shape
    levels = []
    for k in range(n_levels):
        s = scale_factor**k
        lw = int(np.floor(w / s + 0.5))
        lh = int(np.floor(h / s + 0.5))
        if min(lw, lh) < MIN_IMAGE_SIDE:
            break
        levels.append(resize_bilinear(img, lw, lh) if k else np.asarray(img, float))
    return levels


def _fast_corners(level: GrayImage, threshold: float) -> np.ndarray:
    """Boolean FAST-9 corner mask (border of 3 px always False)."""
    h, w = level.shape
    mask = np.zeros((h, w), dtype=bool)
    if h < 7 or w < 7:
        return mask
    center = level[3 : h - 3, 3 : w - 3]
    brighter = np.empty((16,) + center.shape, dtype=bool)
    darker = np.empty_like(brighter)
    for i, (dy, dx) in enumerate(_CIRCLE):
        shifted = level[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx]
        brighter[i] = shifted > center + threshold
        darker[i] = shifted < center - threshold
    corner = np.zeros(center.shape, dtype=bool)
    for flags in (brighter, darker):
        doubled = np.concatenate([flags, flags], axis=0)
        for start in range(16):
            corner |= doubled[start : start + 9].all(axis=0)
    mask[3 : h - 3, 3 : w - 3] = corner
    return mask


def _harris_at(level: GrayImage, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Harris response (7x7 window, k=0.04) at the given pixels."""
    gx, gy = sobel_gradients(level)
    h, w = level.shape

    def box_at(prod: np.ndarray) -> np.ndarray:
        ii = np.zeros((h + 1, w + 1), dtype=np.float64)
        np.cumsum(np.cumsum(prod, axis=0), axis=1, out=ii[1:, 1:])
        y0 = np.clip(ys - 3, 0, h)
        y1 = np.clip(ys + 4, 0, h)
        x0 = np.clip(xs - 3, 0, w)
        x1 = np.clip(xs + 4, 0, w)
        return ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]

    sxx = box_at(gx * gx)
    syy = box_at(gy * gy)
    sxy = box_at(gx * gy)
    return sxx * syy - sxy * sxy - 0.04 * (sxx + syy) ** 2


def compute_orientations(level: GrayImage, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Intensity-centroid angle at each (y, x); patch clipped at borders."""
    h, w = level.shape
    py = ys[:, None] + _PATCH_OFFS[:, 0][None, :]
    px = xs[:, None] + _PATCH_OFFS[:, 1][None, :]
    inside = (py >= 0) & (py < h) & (px >= 0) & (px < w)
    vals = level[np.clip(py, 0, h - 1), np.clip(px, 0, w - 1)] * inside
    m10 = (vals * _PATCH_OFFS[:, 1][None, :]).sum(axis=1)
    m01 = (vals * _PATCH_OFFS[:, 0][None, :]).sum(axis=1)
    return np.arctan2(m01, m10)


def detect_oriented_fast(
    img: GrayImage,
    max_keypoints: int = 500,
    threshold: float = 20.0,
    n_levels: int = 8,
    scale_factor: float = 1.2,
) -> list[Keypoint]:
    """FAST-9 corners over the pyramid, strongest Harris responses first."""
    img = np.asarray(img, dtype=np.float64)
    if min(img.shape) < MIN_IMAGE_SIDE:
        return []
    candidates = []
    for octave, level in enumerate(build_pyramid(img, n_levels, scale_factor)):
        ys, xs = np.nonzero(_fast_corners(level, threshold))
        if ys.size == 0:
            continue
        resp = _harris_at(level, ys, xs)
        ori = compute_orientations(level, ys, xs)
        for i in range(ys.size):
            candidates.append(
                Keypoint(int(xs[i]), int(ys[i]), float(ori[i]), float(resp[i]), octave)
            )
    candidates.sort(key=lambda k: (-k.response, k.octave, k.y, k.x))
    return candidates[:max_keypoints]


def _orientation_bin(theta: float) -> int:
    turn = (theta % (2.0 * np.pi)) / (2.0 * np.pi)
    return int(np.floor(turn * ORIENTATION_BINS + 0.5)) % ORIENTATION_BINS


def compute_rbrief(
    img: GrayImage,
    kps: list[Keypoint],
    n_levels: int = 8,
    scale_factor: float = 1.2,
    blur_sigma: float = 2.0,
) -> tuple[np.ndarray, int]:
    """Packed 256-bit descriptors for the keypoints of one image.

    Returns (descriptors, dropped): descriptors is (k, 32) uint8 in
    keypoint order with out-of-bounds keypoints removed, dropped is the
    removal count.
    """
    img = np.asarray(img, dtype=np.float64)
    if not kps:
        return np.empty((0, 32), dtype=np.uint8), 0
    levels = build_pyramid(img, n_levels, scale_factor)
    blurred: dict[int, np.ndarray] = {}
    rows: list[np.ndarray] = []
    dropped = 0
    margin = PATTERN_RADIUS

    by_level: dict[int, list[int]] = {}
    for i, kp in enumerate(kps):
        by_level.setdefault(kp.octave, []).append(i)

    out: dict[int, np.ndarray] = {}
    for octave, idxs in by_level.items():
        level = levels[octave]
        if octave not in blurred:
            blurred[octave] = gaussian_blur(level, blur_sigma, radius=4)
        lev = blurred[octave]
        h, w = lev.shape
        keep = [
            i
            for i in idxs
            if margin <= kps[i].x < w - margin and margin <= kps[i].y < h - margin
        ]
        dropped += len(idxs) - len(keep)
        if not keep:
            continue
        ys = np.array([kps[i].y for i in keep], dtype=np.intp)
        xs = np.array([kps[i].x for i in keep], dtype=np.intp)
        bins = np.array([_orientation_bin(kps[i].orientation) for i in keep], dtype=np.intp)
        pat = _ROTATED[bins]  # (k, 256, 2, 2)
        p_vals = lev[ys[:, None] + pat[:, :, 0, 0], xs[:, None] + pat[:, :, 0, 1]]
        q_vals = lev[ys[:, None] + pat[:, :, 1, 0], xs[:, None] + pat[:, :, 1, 1]]
        bits = p_vals < q_vals
        packed = np.packbits(bits, axis=1)
        for j, i in enumerate(keep):
            out[i] = packed[j]

    kept_sorted = sorted(out)
    if kept_sorted:
        rows = [out[i] for i in kept_sorted]
        return np.stack(rows).astype(np.uint8), dropped
    return np.empty((0, 32), dtype=np.uint8), dropped


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(|a|, |b|) Hamming distances between packed descriptor sets."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.int32)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int32)
    step = max(1, 8_000_000 // max(1, b.shape[0] * 32))
    for i in range(0, a.shape[0], step):
        block = a[i : i + step, None, :] ^ b[None, :, :]
        out[i : i + step] = _POPCOUNT[block].sum(axis=2, dtype=np.int32)
    return out


def match_distances(desc_m: np.ndarray, desc_r: np.ndarray) -> np.ndarray:
    """Nearest-match Hamming distance for each descriptor of the meme side.

    An empty reference side yields an empty array.
    """
    if desc_m.shape[0] == 0 or desc_r.shape[0] == 0:
        return np.empty(0, dtype=np.int32)
    return hamming_matrix(desc_m, desc_r).min(axis=1)


def distance_distribution(d: np.ndarray) -> np.ndarray:
    """Cumulative counts F[x] = |{delta <= x}| for x = 0..200 (cap rule)."""
    d = np.asarray(d)
    if d.size == 0:
        return np.zeros(DISTANCE_CAP + 1, dtype=np.int64)
    capped = d[d <= DISTANCE_CAP].astype(np.int64)
    hist = np.bincount(capped, minlength=DISTANCE_CAP + 1)[: DISTANCE_CAP + 1]
    return np.cumsum(hist)


@dataclass(frozen=True)
class MomentVector:
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mean, self.variance, self.skewness, self.excess_kurtosis)


def _population_moments(values: np.ndarray) -> MomentVector:
    if values.size == 0:
        return MomentVector(0.0, 0.0, 0.0, 0.0)
    v = values.astype(np.float64)
    mean = float(v.mean())
    var = float(((v - mean) ** 2).mean())
    if var == 0.0:
        return MomentVector(mean, 0.0, 0.0, 0.0)
    sd = var**0.5
    skew = float((((v - mean) / sd) ** 3).mean())
    kurt = float((((v - mean) / sd) ** 4).mean()) - 3.0
    return MomentVector(mean, var, skew, kurt)


def distribution_moments(d: np.ndarray, of_cumulative: bool = False) -> MomentVector:
    """Population moments of the distance multiset.

    ``of_cumulative=True`` instead computes the moments of the 201-value
    cumulative sequence (a literal alternative reading, config-selected).
    """
    d = np.asarray(d)
    if of_cumulative:
        return _population_moments(distance_distribution(d).astype(np.float64))
    return _population_moments(d)


def threshold_match(F: np.ndarray, d_max: int, c_min: int) -> bool:
    """Legacy criterion: at least c_min matches at distance <= d_max."""
    if d_max > DISTANCE_CAP or d_max < 0:
        raise InvalidDmax(f"d_max must be in [0, {DISTANCE_CAP}], got {d_max}")
    return bool(F[d_max] >= c_min)


# --- descriptor cache file (magic "KPD1") ---
#
# Layout, all integers little-endian:
#   4 bytes magic "KPD1"
#   u32 record count
#   per record: u16 image-id byte length, id bytes (utf-8),
#               u32 descriptor count, then count * 32 descriptor bytes.

_MAGIC = b"KPD1"


def write_descriptor_cache(path, descriptors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(descriptors)))
        for image_id, desc in descriptors.items():
            desc = np.ascontiguousarray(desc, dtype=np.uint8)
            if desc.ndim != 2 or desc.shape[1] != 32:
                raise ValueError(f"{image_id}: descriptors must be (n, 32) uint8")
            raw = image_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", desc.shape[0]))
            fh.write(desc.tobytes())


def read_descriptor_cache(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: bad magic, not a KPD1 cache")
        (count,) = struct.unpack("<I", fh.read(4))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            image_id = fh.read(id_len).decode("utf-8")
            (n,) = struct.unpack("<I", fh.read(4))
            data = fh.read(n * 32)
            out[image_id] = np.frombuffer(data, dtype=np.uint8).reshape(n, 32).copy()
    return out
