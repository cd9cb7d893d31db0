"""Exception types shared across the toolkit.

Every error raised on a documented contract violation derives from
MemematchError so callers can catch toolkit failures in one place.
"""


class MemematchError(Exception):
    """Base class for all toolkit errors."""


# --- image decoding / geometry ---

class DecodeError(MemematchError):
    """File exists but is not a decodable PNG/JPEG image."""


class InvalidDim(MemematchError):
    """Requested image dimension is zero or negative."""


class InvalidKernel(MemematchError):
    """Convolution kernel has even or non-2D shape."""


class DimMismatch(MemematchError):
    """Two arrays/images that must share dimensions do not."""


# --- masks / inpainting ---

class AllMasked(MemematchError):
    """Text mask covers every pixel; nothing to propagate from."""


# --- segmentation ---

class InvalidThreshold(MemematchError):
    """Edge-detector low threshold exceeds high threshold."""


class ModelUntrained(MemematchError):
    """A decision tree with no fitted nodes was used for prediction."""


# --- embeddings / ranks ---

class MissingEmbedding(MemematchError):
    """Sidecar embedding lookup failed for an image id."""


class ScoreNotInPool(MemematchError):
    """rank() called with a score that is not a member of the pool."""


class MissingContext(MemematchError):
    """Rank context does not cover the requested meme."""


class EmptyReferenceSet(MemematchError):
    """Rank context requested over zero references."""


class InvalidDmax(MemematchError):
    """Legacy threshold criterion called with d_max above the 200 cap."""


# --- decision trees ---

class EmptyData(MemematchError):
    """fit_tree called with zero samples."""


class TooFewSamples(MemematchError):
    """Cross-validation requested with fewer samples than folds."""


# --- evaluation harness ---

class TooFewPerClass(MemematchError):
    """Stratified splitting needs at least two pairs per class."""


class LengthMismatch(MemematchError):
    """Prediction and truth vectors differ in length."""


class MissingFeatures(MemematchError):
    """Feature table does not cover every pair in the split plan."""


class EmptySample(MemematchError):
    """Statistical test invoked on an empty sample."""


class AllZeroDifferences(MemematchError):
    """Signed-rank test invoked on identical paired samples."""


class IncompleteGrid(MemematchError):
    """Report compilation is missing a (task, measure) cell or it is all-null."""


# --- corpus generation / manifests ---

class CollisionExhaustion(MemematchError):
    """Could not render a visually distinct reference within the retry budget."""


class RatioInfeasible(MemematchError):
    """Requested pair count cannot be split at the requested class ratio."""


class ParseError(MemematchError):
    """Manifest row is malformed (unknown field, bad enum, bad JSON)."""


class DuplicatePairId(MemematchError):
    """Manifest contains the same pair_id twice."""


class MissingFile(MemematchError):
    """Manifest references an image file that does not exist."""


class StaleCache(MemematchError):
    """Feature cache was produced under a different configuration."""
