"""Run configuration: defaults, key=value config files, CLI overrides.

Precedence is flags > config file > defaults.  The effective
configuration is echoed into every output header, and the
feature-affecting subset is fingerprinted so stale caches are detected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, asdict

from .corpus import CorpusParams
from .simfeat import MEASURES, MOST_SIMILAR_FIRST


@dataclass
class RunConfig:
    seed: int = 42
    jobs: int = 1
    # corpus scale
    n_templates: int = 120
    n_elements: int = 40
    pairs_per_task: int = 600
    ratio_related: int = 1
    ratio_unrelated: int = 4
    # edge detection / segmentation
    canny_low: float = 40.0
    canny_high: float = 120.0
    canny_sigma: float = 1.4
    support_frac: float = 0.85
    merge_tol: float = 0.02
    min_area_frac: float = 0.05
    max_split_depth: int = 3
    # keypoints
    fast_threshold: float = 20.0
    max_keypoints: int = 500
    n_levels: int = 8
    scale_factor: float = 1.2
    # measures
    provider: str = "builtin"
    measures: tuple[str, ...] = MEASURES
    moments_of_cumulative: bool = False
    rank_direction: str = MOST_SIMILAR_FIRST
    spread_mode: str = "range"
    # evaluation
    n_splits: int = 50
    test_fraction: float = 0.2
    # blank filter
    blank_seed: int = 7
    blank_segments: int = 500
    blank_folds: int = 10

    def validate(self) -> None:
        if self.canny_low > self.canny_high:
            raise ValueError("canny_low must be <= canny_high")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.n_splits < 1 or self.jobs < 1:
            raise ValueError("n_splits and jobs must be >= 1")
        bad = [m for m in self.measures if m not in MEASURES]
        if bad:
            raise ValueError(f"unknown measures {bad}")
        if self.rank_direction not in (MOST_SIMILAR_FIRST, "literal_descending"):
            raise ValueError(f"unknown rank_direction {self.rank_direction!r}")
        if self.spread_mode not in ("range", "iqr"):
            raise ValueError(f"unknown spread_mode {self.spread_mode!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["measures"] = list(self.measures)
        return doc

    def fingerprint(self) -> str:
        """Hash of everything that changes featurize output."""
        keys = (
            "seed",
            "canny_low",
            "canny_high",
            "canny_sigma",
            "support_frac",
            "merge_tol",
            "min_area_frac",
            "max_split_depth",
            "fast_threshold",
            "max_keypoints",
            "n_levels",
            "scale_factor",
            "provider",
            "measures",
            "moments_of_cumulative",
            "rank_direction",
            "spread_mode",
            "blank_seed",
            "blank_segments",
            "blank_folds",
        )
        doc = {k: self.to_dict()[k] for k in keys}
        raw = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]

    def corpus_params(self) -> CorpusParams:
        return CorpusParams()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    raw = raw.strip()
    if name == "measures":
        return tuple(m.strip() for m in raw.split(",") if m.strip())
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: cannot parse bool from {raw!r}")
    return raw


def load_config_file(path: str) -> dict:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            out[key] = _parse_value(key, raw)
    return out


def build_config(
    config_path: str | None = None, overrides: dict | None = None
) -> RunConfig:
    """Defaults, then config file, then non-None overrides."""
    cfg = RunConfig()
    merged: dict = {}
    if config_path:
        merged.update(load_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        merged[key] = value
    for key, value in merged.items():
        setattr(cfg, key, value)
    cfg.measures = tuple(cfg.measures)
    cfg.validate()
    return cfg
