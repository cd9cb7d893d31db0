"""Per-pair feature vectors for the six similarity measures.

Measures and their dimensions:

* ``keypoint_d`` (201): cumulative distance distribution F[0..200]
* ``keypoint_m`` (4): mean/variance/skewness/excess-kurtosis of distances
* ``embed_w`` / ``hash_w`` (2): whole-image distance and its rank
* ``embed_s`` / ``hash_s`` (8): mean/min/max/spread of all segment-pair
  distances, min and max rank, and the two segment counts

Ranks place a pair's score within the pool of that meme's scores against
every reference (or every reference segment).  Rank 1 is the most
similar, i.e. the smallest distance; ties share the minimum (competition)
rank.  A literal reversed ordering is available behind ``direction``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyReferenceSet, MissingContext, ScoreNotInPool
from .hashembed import Hash64
from .keypoints import (
    DISTANCE_CAP,
    distance_distribution,
    distribution_moments,
    match_distances,
)

MEASURES = ("keypoint_d", "keypoint_m", "embed_w", "hash_w", "embed_s", "hash_s")

FEATURE_DIMS = {
    "keypoint_d": DISTANCE_CAP + 1,
    "keypoint_m": 4,
    "embed_w": 2,
    "hash_w": 2,
    "embed_s": 8,
    "hash_s": 8,
}

MOST_SIMILAR_FIRST = "most_similar_first"
LITERAL_DESCENDING = "literal_descending"


@dataclass(frozen=True)
class SimilarityFeatures:
    measure: str
    pair_id: str
    features: np.ndarray

    def __post_init__(self):
        if self.measure not in FEATURE_DIMS:
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.features.shape != (FEATURE_DIMS[self.measure],):
            raise ValueError(
                f"{self.measure} expects {FEATURE_DIMS[self.measure]} dims, "
                f"got {self.features.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"{self.pair_id}: non-finite feature values")


@dataclass(frozen=True)
class RankContext:
    """Per-meme score pools against the full reference set."""

    backend: str  # "embed" | "hash"
    granularity: str  # "whole" | "segment"
    direction: str
    pools: dict[str, np.ndarray]  # meme id -> sorted score pool

    def pool_for(self, meme_id: str) -> np.ndarray:
        try:
            return self.pools[meme_id]
        except KeyError:
            raise MissingContext(f"no rank pool for meme {meme_id!r}") from None


def _rank_sorted(score: float, pool_sorted: np.ndarray, direction: str) -> int:
    left = int(np.searchsorted(pool_sorted, score, side="left"))
    if left == pool_sorted.size or pool_sorted[left] != score:
        raise ScoreNotInPool(f"score {score!r} not found in pool")
    if direction == MOST_SIMILAR_FIRST:
        return left + 1
    right = int(np.searchsorted(pool_sorted, score, side="right"))
    return pool_sorted.size - right + 1


def rank(score: float, pool, direction: str = MOST_SIMILAR_FIRST) -> int:
    """Competition rank of a score within a pool it belongs to."""
    pool_sorted = np.sort(np.asarray(pool, dtype=np.float64))
    return _rank_sorted(float(score), pool_sorted, direction)


def _pairwise(backend: str, a_reps, b_reps) -> np.ndarray:
    """(|a|, |b|) distance matrix for either backend.

    Every embed entry goes through the same 1-D dot product so a score
    computed for a single pair is bit-identical to the pool entry
    computed in bulk (batched matmul kernels differ in the last ulp).
    """
    if backend == "embed":
        am = [np.ascontiguousarray(v, dtype=np.float64) for v in a_reps]
        bm = [np.ascontiguousarray(v, dtype=np.float64) for v in b_reps]
        out = np.empty((len(am), len(bm)), dtype=np.float64)
        for i, va in enumerate(am):
            for j, vb in enumerate(bm):
                out[i, j] = 1.0 - np.dot(va, vb)
        return out
    if backend == "hash":
        out = np.empty((len(a_reps), len(b_reps)), dtype=np.float64)
        for i, ha in enumerate(a_reps):
            ab = ha.bits if isinstance(ha, Hash64) else int(ha)
            for j, hb in enumerate(b_reps):
                bb = hb.bits if isinstance(hb, Hash64) else int(hb)
                out[i, j] = (ab ^ bb).bit_count()
        return out
    raise ValueError(f"unknown backend {backend!r}")


def build_rank_context(
    memes: dict[str, object],
    refs: dict[str, object],
    backend: str,
    granularity: str,
    direction: str = MOST_SIMILAR_FIRST,
) -> RankContext:
    """Score pools for every meme against the complete reference set.

    For granularity "whole" the representations are one embedding/hash
    per image; for "segment" they are lists of per-segment
    representations and the pool holds every segment-pair score.
    """
    if not refs:
        raise EmptyReferenceSet("rank context needs at least one reference")
    pools: dict[str, np.ndarray] = {}
    if granularity == "whole":
        ref_reps = list(refs.values())
        for mid, rep in memes.items():
            row = _pairwise(backend, [rep], ref_reps)[0]
            pools[mid] = np.sort(row)
    elif granularity == "segment":
        ref_segs = [rep for segs in refs.values() for rep in segs]
        if not ref_segs:
            raise EmptyReferenceSet("reference set has no segments")
        for mid, segs in memes.items():
            mat = _pairwise(backend, list(segs), ref_segs)
            pools[mid] = np.sort(mat.ravel())
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    return RankContext(backend, granularity, direction, pools)


def whole_image_features(
    meme_id: str, m_rep, r_rep, ctx: RankContext, pair_id: str = ""
) -> SimilarityFeatures:
    """[distance, rank] against the full reference pool."""
    if ctx.granularity != "whole":
        raise ValueError("whole_image_features needs a whole-image context")
    sigma = float(_pairwise(ctx.backend, [m_rep], [r_rep])[0, 0])
    pool = ctx.pool_for(meme_id)
    r = _rank_sorted(sigma, pool, ctx.direction)
    measure = "embed_w" if ctx.backend == "embed" else "hash_w"
    return SimilarityFeatures(measure, pair_id, np.array([sigma, float(r)]))


def segment_features(
    meme_id: str,
    m_seg_reps,
    r_seg_reps,
    ctx: RankContext,
    pair_id: str = "",
    spread: str = "range",
) -> SimilarityFeatures:
    """[mean, min, max, spread, min_rank, max_rank, n_m, n_r]."""
    if ctx.granularity != "segment":
        raise ValueError("segment_features needs a segment context")
    if len(m_seg_reps) == 0 or len(r_seg_reps) == 0:
        raise ValueError("segment sets must be non-empty (blank filter guarantees this)")
    scores = _pairwise(ctx.backend, list(m_seg_reps), list(r_seg_reps)).ravel()
    lo, hi = float(scores.min()), float(scores.max())
    if spread == "range":
        spread_val = hi - lo
    elif spread == "iqr":
        spread_val = float(
            np.percentile(scores, 75, method="linear")
            - np.percentile(scores, 25, method="linear")
        )
    else:
        raise ValueError(f"unknown spread mode {spread!r}")
    pool = ctx.pool_for(meme_id)
    r_lo = _rank_sorted(lo, pool, ctx.direction)
    r_hi = _rank_sorted(hi, pool, ctx.direction)
    measure = "embed_s" if ctx.backend == "embed" else "hash_s"
    feats = np.array(
        [
            float(scores.mean()),
            lo,
            hi,
            spread_val,
            float(min(r_lo, r_hi)),
            float(max(r_lo, r_hi)),
            float(len(m_seg_reps)),
            float(len(r_seg_reps)),
        ]
    )
    return SimilarityFeatures(measure, pair_id, feats)


def keypoint_features_from_distances(
    distances: np.ndarray,
    variant: str,
    pair_id: str = "",
    moments_of_cumulative: bool = False,
) -> SimilarityFeatures:
    """Keypoint-D (201 cumulative counts) or Keypoint-M (4 moments)."""
    if variant == "D":
        feats = distance_distribution(distances).astype(np.float64)
        return SimilarityFeatures("keypoint_d", pair_id, feats)
    if variant == "M":
        m = distribution_moments(distances, of_cumulative=moments_of_cumulative)
        return SimilarityFeatures("keypoint_m", pair_id, np.array(m.as_tuple()))
    raise ValueError(f"unknown keypoint variant {variant!r}")


def keypoint_features(
    desc_m: np.ndarray,
    desc_r: np.ndarray,
    variant: str,
    pair_id: str = "",
    moments_of_cumulative: bool = False,
) -> SimilarityFeatures:
    """Keypoint measure computed directly from two descriptor sets."""
    distances = match_distances(desc_m, desc_r)
    return keypoint_features_from_distances(
        distances, variant, pair_id, moments_of_cumulative
    )
