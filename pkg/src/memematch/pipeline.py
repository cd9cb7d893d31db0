"""End-to-end pipeline stages behind the CLI.

featurize: inpaint -> segment -> blank-filter -> per-image hashes,
embeddings, keypoint descriptors -> rank contexts -> six per-pair
feature vectors, written to a JSONL cache stamped with a config
fingerprint.  Per-image work parallelizes across a worker pool; results
are keyed by image id, so output bytes do not depend on worker count.

evaluate: stratified split plans per task, per-(task, measure) decision
trees, compiled report with significance tests.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing as mp
import os
from dataclasses import dataclass

import numpy as np

from . import cart
from .config import RunConfig
from .corpus import KIND_TEMPLATE, load_manifest
from .errors import MissingFeatures, StaleCache, TooFewSamples
from .evalharness import EvalReport, compile_report, evaluate_measure, make_splits
from .hashembed import BuiltinProvider, SidecarProvider, builtin_embedding, phash
from .imgcore import load_image, to_grayscale
from .keypoints import compute_rbrief, detect_oriented_fast, match_distances
from .panelseg import (
    NON_BLANK,
    Segment,
    SegmenterConfig,
    blank_features,
    filter_blanks,
    segment_panels,
)
from .preprocess import inpaint, load_sidecar_mask
from .simfeat import (
    FEATURE_DIMS,
    build_rank_context,
    keypoint_features_from_distances,
    segment_features,
    whole_image_features,
)

FEATURES_FILE = "features.jsonl"
META_FILE = "features_meta.json"
BLANK_MODEL_FILE = "blank_model.json"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"


@dataclass
class ImageArtifacts:
    image_id: str
    hash_bits: int
    embedding: np.ndarray | None
    descriptors: np.ndarray
    dropped: int
    had_mask: bool
    seg_boxes: list[tuple[int, int, int, int]]
    seg_hash_bits: list[int]
    seg_embeddings: list[np.ndarray] | None


def _segmenter_config(cfg: RunConfig) -> SegmenterConfig:
    return SegmenterConfig(
        canny_low=cfg.canny_low,
        canny_high=cfg.canny_high,
        canny_sigma=cfg.canny_sigma,
        support_frac=cfg.support_frac,
        merge_tol=cfg.merge_tol,
        min_area_frac=cfg.min_area_frac,
        max_split_depth=cfg.max_split_depth,
    )


def process_image(
    root: str,
    rel_path: str,
    cfg: RunConfig,
    blank_model: cart.DecisionTree,
    builtin_embeddings: bool = True,
) -> ImageArtifacts:
    """All per-image computation: inpaint, segment, hash, embed, describe."""
    img = load_image(os.path.join(root, rel_path))
    mask = load_sidecar_mask(os.path.join(root, rel_path), (img.width, img.height))
    had_mask = mask is not None and not mask.empty
    if had_mask:
        img = inpaint(img, mask)

    gray = to_grayscale(img)
    kps = detect_oriented_fast(
        gray,
        max_keypoints=cfg.max_keypoints,
        threshold=cfg.fast_threshold,
        n_levels=cfg.n_levels,
        scale_factor=cfg.scale_factor,
    )
    desc, dropped = compute_rbrief(
        gray, kps, n_levels=cfg.n_levels, scale_factor=cfg.scale_factor
    )

    segset = segment_panels(img, _segmenter_config(cfg), source=rel_path)
    segset = filter_blanks(segset, blank_model)

    emb = builtin_embedding(img) if builtin_embeddings else None
    seg_embs = (
        [builtin_embedding(s.pixels) for s in segset.segments]
        if builtin_embeddings
        else None
    )
    return ImageArtifacts(
        image_id=rel_path,
        hash_bits=phash(img).bits,
        embedding=emb,
        descriptors=desc,
        dropped=dropped,
        had_mask=had_mask,
        seg_boxes=[(s.box.x, s.box.y, s.box.w, s.box.h) for s in segset.segments],
        seg_hash_bits=[phash(s.pixels).bits for s in segset.segments],
        seg_embeddings=seg_embs,
    )


_WORKER_STATE: dict = {}


def _worker_init(root: str, cfg_doc: dict, model_doc: dict, builtin: bool) -> None:
    cfg = RunConfig()
    for key, value in cfg_doc.items():
        setattr(cfg, key, tuple(value) if key == "measures" else value)
    _WORKER_STATE["root"] = root
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["model"] = cart.tree_from_dict(model_doc)
    _WORKER_STATE["builtin"] = builtin


def _worker_run(rel_path: str) -> ImageArtifacts:
    return process_image(
        _WORKER_STATE["root"],
        rel_path,
        _WORKER_STATE["cfg"],
        _WORKER_STATE["model"],
        _WORKER_STATE["builtin"],
    )


def train_default_blank_model(cfg: RunConfig) -> tuple[cart.DecisionTree, float]:
    """Blank filter trained on the in-memory synthetic segment set."""
    from .corpus import iter_blank_segments
    from .imgcore import BBox

    X, y = [], []
    for img, label in iter_blank_segments(cfg.blank_seed, cfg.blank_segments):
        seg = Segment("synthetic", BBox(0, 0, img.width, img.height), img)
        X.append(blank_features(seg).as_vector())
        y.append(label)
    X = np.stack(X)
    alpha = cart.cv_select_alpha(
        X, y, k=cfg.blank_folds, objective=f"precision:{NON_BLANK}", seed=cfg.blank_seed
    )
    full = cart.fit_tree(X, y)
    model = cart.mccp_sequence(full).tree_for_alpha(alpha)
    return model, float(alpha)


def _file_sha(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def effective_fingerprint(cfg: RunConfig, blank_model_path: str) -> str:
    return cfg.fingerprint() + "-" + _file_sha(blank_model_path)[:12]


def featurize(
    corpus_root: str,
    out_dir: str,
    cfg: RunConfig,
    force: bool = False,
    blank_model_path: str | None = None,
) -> dict:
    """Compute and cache the per-pair feature vectors for all measures."""
    manifest_path = os.path.join(corpus_root, "manifest.jsonl")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(manifest_path)
    pairs = load_manifest(manifest_path)
    os.makedirs(out_dir, exist_ok=True)

    # blank model: supplied file, or auto-trained from the synthetic set
    if blank_model_path is None:
        blank_model_path = os.path.join(out_dir, BLANK_MODEL_FILE)
        if not os.path.exists(blank_model_path):
            model, alpha = train_default_blank_model(cfg)
            cart.save_tree(model, blank_model_path)
            with open(
                os.path.join(out_dir, "blank_model_alpha.json"), "w", encoding="utf-8"
            ) as fh:
                json.dump({"alpha": alpha}, fh, sort_keys=True)
                fh.write("\n")
    blank_model = cart.load_tree(blank_model_path)

    fingerprint = effective_fingerprint(cfg, blank_model_path)
    meta_path = os.path.join(out_dir, META_FILE)
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            old = json.load(fh)
        if old.get("fingerprint") == fingerprint and os.path.exists(
            os.path.join(out_dir, FEATURES_FILE)
        ):
            old["recomputed"] = False
            return old
        if not force:
            raise StaleCache(
                "feature cache was built under a different configuration; "
                "rerun with --force to overwrite"
            )

    # reference universe per task (library kinds when the index exists)
    index_path = os.path.join(corpus_root, "refs_index.jsonl")
    ref_paths_by_task: dict[str, list[str]] = {}
    if os.path.exists(index_path):
        by_kind: dict[str, list[str]] = {}
        with open(index_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    by_kind.setdefault(row["kind"], []).append(row["path"])
        templates = sorted(by_kind.get(KIND_TEMPLATE, []))
        everything = sorted(p for paths in by_kind.values() for p in paths)
        ref_paths_by_task = {"TM": templates, "MM": everything}
    for task in sorted({p.task for p in pairs}):
        if task not in ref_paths_by_task or not ref_paths_by_task[task]:
            ref_paths_by_task[task] = sorted({p.r for p in pairs if p.task == task})

    image_ids = sorted(
        {p.m for p in pairs}
        | {p.r for p in pairs}
        | {rp for paths in ref_paths_by_task.values() for rp in paths}
    )

    use_builtin = cfg.provider == "builtin"
    artifacts: dict[str, ImageArtifacts] = {}
    if cfg.jobs > 1:
        model_doc = cart.tree_to_dict(blank_model)
        with mp.Pool(
            cfg.jobs,
            initializer=_worker_init,
            initargs=(corpus_root, cfg.to_dict(), model_doc, use_builtin),
        ) as pool:
            for art in pool.imap_unordered(_worker_run, image_ids, chunksize=8):
                artifacts[art.image_id] = art
    else:
        for rel in image_ids:
            artifacts[rel] = process_image(corpus_root, rel, cfg, blank_model, use_builtin)

    # embeddings from a sidecar provider, if configured
    if not use_builtin:
        provider = SidecarProvider(cfg.provider.split(":", 1)[1])
        for art in artifacts.values():
            art.embedding = provider.embed(art.image_id)
            art.seg_embeddings = [
                provider.embed(f"{art.image_id}#seg{i}")
                for i in range(len(art.seg_boxes))
            ]

    from .hashembed import Hash64

    contexts = {}
    tasks = sorted({p.task for p in pairs})
    for task in tasks:
        meme_ids = sorted({p.m for p in pairs if p.task == task})
        ref_ids = ref_paths_by_task[task]
        contexts[(task, "embed", "whole")] = build_rank_context(
            {m: artifacts[m].embedding for m in meme_ids},
            {r: artifacts[r].embedding for r in ref_ids},
            "embed",
            "whole",
            cfg.rank_direction,
        )
        contexts[(task, "hash", "whole")] = build_rank_context(
            {m: Hash64(artifacts[m].hash_bits) for m in meme_ids},
            {r: Hash64(artifacts[r].hash_bits) for r in ref_ids},
            "hash",
            "whole",
            cfg.rank_direction,
        )
        contexts[(task, "embed", "segment")] = build_rank_context(
            {m: artifacts[m].seg_embeddings for m in meme_ids},
            {r: artifacts[r].seg_embeddings for r in ref_ids},
            "embed",
            "segment",
            cfg.rank_direction,
        )
        contexts[(task, "hash", "segment")] = build_rank_context(
            {m: [Hash64(h) for h in artifacts[m].seg_hash_bits] for m in meme_ids},
            {r: [Hash64(h) for h in artifacts[r].seg_hash_bits] for r in ref_ids},
            "hash",
            "segment",
            cfg.rank_direction,
        )

    rows = []
    for p in pairs:
        am, ar = artifacts[p.m], artifacts[p.r]
        per_measure: dict[str, np.ndarray] = {}
        if "keypoint_d" in cfg.measures or "keypoint_m" in cfg.measures:
            dists = match_distances(am.descriptors, ar.descriptors)
            if "keypoint_d" in cfg.measures:
                per_measure["keypoint_d"] = keypoint_features_from_distances(
                    dists, "D", p.pair_id
                ).features
            if "keypoint_m" in cfg.measures:
                per_measure["keypoint_m"] = keypoint_features_from_distances(
                    dists, "M", p.pair_id, cfg.moments_of_cumulative
                ).features
        if "embed_w" in cfg.measures:
            per_measure["embed_w"] = whole_image_features(
                p.m, am.embedding, ar.embedding,
                contexts[(p.task, "embed", "whole")], p.pair_id,
            ).features
        if "hash_w" in cfg.measures:
            per_measure["hash_w"] = whole_image_features(
                p.m, Hash64(am.hash_bits), Hash64(ar.hash_bits),
                contexts[(p.task, "hash", "whole")], p.pair_id,
            ).features
        if "embed_s" in cfg.measures:
            per_measure["embed_s"] = segment_features(
                p.m, am.seg_embeddings, ar.seg_embeddings,
                contexts[(p.task, "embed", "segment")], p.pair_id, cfg.spread_mode,
            ).features
        if "hash_s" in cfg.measures:
            per_measure["hash_s"] = segment_features(
                p.m,
                [Hash64(h) for h in am.seg_hash_bits],
                [Hash64(h) for h in ar.seg_hash_bits],
                contexts[(p.task, "hash", "segment")], p.pair_id, cfg.spread_mode,
            ).features
        for measure in cfg.measures:
            rows.append(
                {
                    "pair_id": p.pair_id,
                    "measure": measure,
                    "features": [float(v) for v in per_measure[measure]],
                }
            )

    with open(os.path.join(out_dir, FEATURES_FILE), "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    meta = {
        "fingerprint": fingerprint,
        "config": cfg.to_dict(),
        "measures": list(cfg.measures),
        "n_pairs": len(pairs),
        "n_rows": len(rows),
        "counters": {
            "images": len(image_ids),
            "images_with_masks": sum(1 for a in artifacts.values() if a.had_mask),
            "dropped_descriptors": sum(a.dropped for a in artifacts.values()),
            "segments": sum(len(a.seg_boxes) for a in artifacts.values()),
        },
        "recomputed": True,
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({k: v for k, v in meta.items() if k != "recomputed"}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")
    return meta


def load_feature_cache(features_dir: str) -> tuple[dict, dict]:
    """(meta, {pair_id: {measure: vector}}) from a featurize output dir."""
    meta_path = os.path.join(features_dir, META_FILE)
    feat_path = os.path.join(features_dir, FEATURES_FILE)
    if not os.path.exists(meta_path) or not os.path.exists(feat_path):
        raise FileNotFoundError(f"{features_dir} is not a feature cache")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    table: dict[str, dict[str, np.ndarray]] = {}
    with open(feat_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            vec = np.asarray(row["features"], dtype=np.float64)
            if vec.shape != (FEATURE_DIMS[row["measure"]],):
                raise MissingFeatures(
                    f"{row['pair_id']}/{row['measure']}: bad feature length"
                )
            table.setdefault(row["pair_id"], {})[row["measure"]] = vec
    return meta, table


def evaluate(
    corpus_root: str,
    features_dir: str,
    out_dir: str,
    cfg: RunConfig,
) -> EvalReport:
    """Per-(task, measure) precision distributions plus significance tests."""
    pairs = load_manifest(os.path.join(corpus_root, "manifest.jsonl"))
    meta, table = load_feature_cache(features_dir)
    cached = set(meta.get("measures", []))
    wanted = [m for m in cfg.measures]
    missing_measures = [m for m in wanted if m not in cached]
    if missing_measures:
        raise MissingFeatures(f"cache lacks measures {missing_measures}")

    os.makedirs(out_dir, exist_ok=True)
    tasks = sorted({p.task for p in pairs})
    precisions: dict[tuple[str, str], list] = {}
    for task in tasks:
        task_pairs = [p for p in pairs if p.task == task]
        plan = make_splits(task_pairs, cfg.seed, cfg.n_splits, cfg.test_fraction)
        for measure in wanted:
            features = {
                p.pair_id: table[p.pair_id][measure]
                for p in task_pairs
                if p.pair_id in table and measure in table[p.pair_id]
            }
            precisions[(task, measure)] = evaluate_measure(task_pairs, features, plan)

    header = {
        "config": cfg.to_dict(),
        "feature_fingerprint": meta.get("fingerprint"),
        "n_splits": cfg.n_splits,
        "test_fraction": cfg.test_fraction,
        "seed": cfg.seed,
        "stratified": True,
    }
    report = compile_report(precisions, header)
    report.save_json(os.path.join(out_dir, REPORT_JSON))
    report.save_csv(os.path.join(out_dir, REPORT_CSV))
    return report


def train_blank_from_manifest(
    manifest_path: str, folds: int, seed: int
) -> tuple[cart.DecisionTree, float, list, float | None]:
    """Train the blank filter from a labeled segment manifest.

    Returns (model, alpha, cv_table, cv_precision_at_alpha).
    """
    from .imgcore import BBox, RasterImage

    root = os.path.dirname(os.path.abspath(manifest_path))
    X, y = [], []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            img = load_image(os.path.join(root, row["segment_path"]))
            seg = Segment(
                row["segment_path"], BBox(0, 0, img.width, img.height), img
            )
            X.append(blank_features(seg).as_vector())
            y.append(row["label"])
    if len(set(y)) < 2:
        raise TooFewSamples("blank training needs both classes")
    X = np.stack(X)
    alpha, tbl = cart.cv_select_alpha(
        X, y, k=folds, objective=f"precision:{NON_BLANK}", seed=seed, return_table=True
    )
    scores = [r["score"] for r in tbl if r["alpha"] == alpha and r["score"] is not None]
    cv_precision = sum(scores) / len(scores) if scores else None
    full = cart.fit_tree(X, y)
    model = cart.mccp_sequence(full).tree_for_alpha(alpha)
    return model, alpha, tbl, cv_precision
