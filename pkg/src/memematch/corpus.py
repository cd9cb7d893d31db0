"""Seeded synthetic corpus: reference images, composited memes, text
masks, and ground-truth labels for both matching tasks.

References come in two kinds: ``template`` (a full-bleed procedural
scene) and ``element`` (a compact sprite on a plain ground).  Memes are
composed from references by three recipes:

* background reuse: the reference is the full canvas;
* element insert: an element is scaled (0.5-1.5x), optionally flipped
  horizontally, and pasted onto a random template background;
* panel composition: the reference fills one panel of a two-panel
  layout separated by a bright full-span gutter, the other panel being
  a fresh distractor scene.

Every meme gets glyph-noise text bands (recorded exactly in the sidecar
mask) and mild photometric jitter.  Related pairs follow the task
semantics (TM: base == r; MM: r appears among base/inserts/panels);
unrelated pairs are hard negatives built from the references most
similar to r under the built-in embedding; that embedding also enforces
pairwise distinctness of rendered references.

All randomness flows through per-purpose PCG64 streams derived from the
corpus seed (see rng.stream), so output is byte-identical across reruns
and independent of generation order.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    CollisionExhaustion,
    DuplicatePairId,
    MissingFile,
    ParseError,
    RatioInfeasible,
)
from .evalharness import RELATED, UNRELATED, TASKS, LabeledPair
from .hashembed import builtin_embedding, cosine_distance
from .imgcore import RasterImage, resize_raster, save_png
from .preprocess import mask_path_for, save_mask
from .rng import stream

KIND_TEMPLATE = "template"
KIND_ELEMENT = "element"


@dataclass(frozen=True)
class ReferenceSpec:
    ref_id: str
    kind: str
    path: str  # relative to corpus root


@dataclass
class MemeRecipe:
    meme_id: str
    task: str
    base: str | None  # ref id of the background, None for panel grids
    inserts: list[str] = field(default_factory=list)
    panels: list[str] = field(default_factory=list)
    text_bands: list[tuple[int, int, int, int]] = field(default_factory=list)

    def components(self) -> set[str]:
        out = set(self.inserts) | set(self.panels)
        if self.base is not None:
            out.add(self.base)
        return out

    def label_for(self, ref_id: str) -> str:
        if self.task == "TM":
            return RELATED if self.base == ref_id else UNRELATED
        return RELATED if ref_id in self.components() else UNRELATED


@dataclass
class CorpusParams:
    """Generator knobs; defaults are the tuned values recorded in
    docs/corpus-tuning.md."""

    template_size: int = 224
    element_size: int = 96
    min_embed_dist: float = 0.05
    max_retries: int = 100
    # scene content
    n_shapes: tuple[int, int] = (4, 8)
    shape_frac: tuple[float, float] = (0.12, 0.50)
    wave_amp: float = 6.0
    scene_noise: float = 3.0
    # meme composition
    brightness_jitter: int = 6
    meme_noise: float = 2.5
    n_text_bands: tuple[int, int] = (1, 3)
    band_height: tuple[float, float] = (0.08, 0.15)
    band_width: tuple[float, float] = (0.55, 0.85)
    glyph_cell: int = 4
    insert_scale: tuple[float, float] = (0.5, 1.5)
    tm_insert_prob: float = 0.25
    mm_bg_frac: float = 0.45
    gutter_px: int = 6
    # hard negatives
    n_hard_negatives: int = 4

    def fingerprint(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()[:16]


# --- procedural rendering -------------------------------------------------


def _rand_color(rng, lo: int = 20, hi: int = 236) -> np.ndarray:
    return rng.integers(lo, hi, size=3).astype(np.float64)


def _gradient(size: int, c0: np.ndarray, c1: np.ndarray, rng) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    proj = np.cos(theta) * xx + np.sin(theta) * yy
    t = (proj - proj.min()) / max(float(np.ptp(proj)), 1e-9)
    return c0[None, None, :] + t[:, :, None] * (c1 - c0)[None, None, :]


def _draw_shape(img: np.ndarray, rng, lo_frac: float, hi_frac: float) -> None:
    size = img.shape[0]
    w = int(rng.uniform(lo_frac, hi_frac) * size)
    h = int(rng.uniform(lo_frac, hi_frac) * size)
    w, h = max(w, 3), max(h, 3)
    x = int(rng.integers(0, max(size - w, 1)))
    y = int(rng.integers(0, max(size - h, 1)))
    color = _rand_color(rng)
    kind = int(rng.integers(0, 3))
    if kind == 0:  # rectangle
        img[y : y + h, x : x + w] = color
    elif kind == 1:  # ellipse
        yy, xx = np.mgrid[0 : img.shape[0], 0 : img.shape[1]].astype(np.float64)
        cx, cy = x + w / 2.0, y + h / 2.0
        mask = ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (h / 2.0)) ** 2 <= 1.0
        img[mask] = color
    else:  # hollow frame
        t = max(2, min(w, h) // 6)
        img[y : y + h, x : x + w] = color
        inner = _rand_color(rng)
        img[y + t : y + h - t, x + t : x + w - t] = inner


def _render_scene(rng, size: int, params: CorpusParams) -> np.ndarray:
    """Full-bleed procedural scene (uint8 RGB)."""
    img = _gradient(size, _rand_color(rng), _rand_color(rng), rng)
    lo, hi = params.n_shapes
    for _ in range(int(rng.integers(lo, hi + 1))):
        _draw_shape(img, rng, *params.shape_frac)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    fx, fy = rng.uniform(1.5, 5.0, size=2)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    img += params.wave_amp * np.sin(
        2.0 * np.pi * (fx * xx + fy * yy) / size + phase
    )[:, :, None]
    img += rng.normal(0.0, params.scene_noise, img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def _render_element(rng, size: int, params: CorpusParams) -> np.ndarray:
    """Compact sprite on a plain light ground (uint8 RGB)."""
    ground = 225.0 + rng.integers(-12, 13, size=3).astype(np.float64)
    img = np.tile(ground[None, None, :], (size, size, 1))
    center = size / 2.0
    reach = size * 0.36
    for _ in range(int(rng.integers(2, 5))):
        w = int(rng.uniform(0.15, 0.45) * size)
        h = int(rng.uniform(0.15, 0.45) * size)
        cx = center + rng.uniform(-reach / 2, reach / 2)
        cy = center + rng.uniform(-reach / 2, reach / 2)
        color = _rand_color(rng, 10, 200)
        color[int(rng.integers(0, 3))] = rng.integers(170, 250)
        if rng.random() < 0.5:
            x0 = int(np.clip(cx - w / 2, 0, size - 1))
            y0 = int(np.clip(cy - h / 2, 0, size - 1))
            img[y0 : min(y0 + h, size), x0 : min(x0 + w, size)] = color
        else:
            yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
            mask = ((xx - cx) / max(w / 2, 1)) ** 2 + (
                (yy - cy) / max(h / 2, 1)
            ) ** 2 <= 1.0
            img[mask] = color
    # small dark detail marks give the sprite stable corners
    for _ in range(3):
        mw = int(rng.integers(3, 8))
        mx = int(center + rng.uniform(-reach, reach - mw))
        my = int(center + rng.uniform(-reach, reach - mw))
        img[my : my + mw, mx : mx + mw] = rng.integers(10, 60, size=3)
    img += rng.normal(0.0, 1.2, img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


# --- meme composition -----------------------------------------------------


def _jitter(canvas: np.ndarray, rng, params: CorpusParams) -> np.ndarray:
    out = canvas.astype(np.float64)
    out += float(rng.integers(-params.brightness_jitter, params.brightness_jitter + 1))
    out += rng.normal(0.0, params.meme_noise, out.shape)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _band_boxes(rng, region: tuple[int, int, int, int], n: int, params: CorpusParams):
    """Text band rectangles inside a region, classic top/bottom placement."""
    rx, ry, rw, rh = region
    slots = ["top", "bottom", "middle"]
    boxes = []
    for i in range(n):
        bh = max(6, int(rng.uniform(*params.band_height) * rh))
        bw = max(12, int(rng.uniform(*params.band_width) * rw))
        x = rx + int(rng.integers(0, max(rw - bw, 1)))
        slot = slots[i % 3]
        if slot == "top":
            y = ry + int(rng.integers(2, max(rh // 12, 3)))
        elif slot == "bottom":
            y = ry + rh - bh - int(rng.integers(2, max(rh // 12, 3)))
        else:
            y = ry + int(rng.integers(rh // 3, max(2 * rh // 3 - bh, rh // 3 + 1)))
        y = int(np.clip(y, ry, ry + rh - bh))
        boxes.append((x, y, bw, bh))
    return boxes


def _apply_text_band(canvas: np.ndarray, rng, box, cell: int) -> None:
    x, y, w, h = box
    dark_on_light = rng.random() < 0.5
    fg, bg = (30.0, 240.0) if dark_on_light else (240.0, 30.0)
    hc = -(-h // cell)
    wc = -(-w // cell)
    patt = rng.random((hc, wc)) < 0.45
    patt = np.repeat(np.repeat(patt, cell, axis=0), cell, axis=1)[:h, :w]
    band = np.where(patt, fg, bg)
    canvas[y : y + h, x : x + w] = band[:, :, None]


def _compose_meme(
    rng,
    recipe_kind: str,
    ref_id: str,
    library_images: dict[str, RasterImage],
    library_kinds: dict[str, str],
    params: CorpusParams,
    exclude: set[str],
    task: str,
    meme_id: str,
) -> tuple[np.ndarray, np.ndarray, MemeRecipe]:
    """Render one meme around ``ref_id``; returns (pixels, mask, recipe)."""
    size = params.template_size
    recipe = MemeRecipe(meme_id, task, None)
    band_regions = [(0, 0, size, size)]

    if recipe_kind == "background":
        canvas = library_images[ref_id].data.astype(np.float64).copy()
        recipe.base = ref_id
    elif recipe_kind == "insert":
        templates = [
            rid
            for rid, kind in sorted(library_kinds.items())
            if kind == KIND_TEMPLATE and rid not in exclude
        ]
        base_id = templates[int(rng.integers(0, len(templates)))]
        canvas = library_images[base_id].data.astype(np.float64).copy()
        recipe.base = base_id
        elem = library_images[ref_id]
        scale = rng.uniform(*params.insert_scale)
        new = max(16, int(np.floor(elem.width * scale + 0.5)))
        patch = resize_raster(elem, new, new).data
        if rng.random() < 0.5:
            patch = patch[:, ::-1]
        px = int(rng.integers(0, size - new))
        py = int(rng.integers(0, size - new))
        canvas[py : py + new, px : px + new] = patch
        recipe.inserts.append(ref_id)
    elif recipe_kind == "panel":
        canvas = np.full((size, size, 3), 245.0)
        g = params.gutter_px
        vertical = rng.random() < 0.5
        split = int(rng.uniform(0.4, 0.6) * (size - g))
        if vertical:
            boxes = [(0, 0, split, size), (split + g, 0, size - split - g, size)]
        else:
            boxes = [(0, 0, size, split), (0, split + g, size, size - split - g)]
        ref_slot = int(rng.integers(0, 2))
        distractor = _render_scene(stream_from(rng), size, params)
        for slot, (bx, by, bw, bh) in enumerate(boxes):
            if slot == ref_slot:
                content = resize_raster(library_images[ref_id], bw, bh).data
            else:
                content = resize_raster(RasterImage(distractor), bw, bh).data
            canvas[by : by + bh, bx : bx + bw] = content
        recipe.panels.append(ref_id)
        band_regions = [
            (bx + 2, by + 2, bw - 4, bh - 4) for (bx, by, bw, bh) in boxes
        ]
    else:
        raise ValueError(f"unknown recipe kind {recipe_kind!r}")

    canvas = _jitter(canvas, rng, params).astype(np.float64)

    mask = np.zeros((size, size), dtype=bool)
    n_bands = int(rng.integers(params.n_text_bands[0], params.n_text_bands[1] + 1))
    region = band_regions[int(rng.integers(0, len(band_regions)))]
    for box in _band_boxes(rng, region, n_bands, params):
        _apply_text_band(canvas, rng, box, params.glyph_cell)
        x, y, w, h = box
        mask[y : y + h, x : x + w] = True
        recipe.text_bands.append((int(x), int(y), int(w), int(h)))

    return np.clip(canvas, 0, 255).astype(np.uint8), mask, recipe


def stream_from(rng) -> np.random.Generator:
    """Child generator forked deterministically from an existing stream."""
    return np.random.Generator(np.random.PCG64(int(rng.integers(0, 2**63))))


# --- reference library ----------------------------------------------------


def generate_references(
    seed: int,
    n_templates: int,
    n_elements: int,
    out_root: str,
    params: CorpusParams | None = None,
) -> tuple[list[ReferenceSpec], dict[str, RasterImage], dict[str, np.ndarray]]:
    """Render the reference library with pairwise-distinct embeddings."""
    params = params or CorpusParams()
    if n_templates < 1 or n_elements < 1:
        raise ValueError("need at least one template and one element")
    refs_dir = os.path.join(out_root, "refs")
    os.makedirs(refs_dir, exist_ok=True)

    specs: list[ReferenceSpec] = []
    images: dict[str, RasterImage] = {}
    embeddings: dict[str, np.ndarray] = {}
    accepted_by_kind: dict[str, list[str]] = {KIND_TEMPLATE: [], KIND_ELEMENT: []}

    plan = [(KIND_TEMPLATE, f"t{i:03d}") for i in range(n_templates)]
    plan += [(KIND_ELEMENT, f"e{i:03d}") for i in range(n_elements)]
    for kind, ref_id in plan:
        ok = False
        for retry in range(params.max_retries):
            rng = stream(seed, f"ref:{ref_id}:r{retry}")
            if kind == KIND_TEMPLATE:
                arr = _render_scene(rng, params.template_size, params)
            else:
                arr = _render_element(rng, params.element_size, params)
            img = RasterImage(arr)
            emb = builtin_embedding(img)
            if all(
                cosine_distance(emb, embeddings[o]) >= params.min_embed_dist
                for o in accepted_by_kind[kind]
            ):
                ok = True
                break
        if not ok:
            raise CollisionExhaustion(
                f"{ref_id}: no distinct render within {params.max_retries} retries"
            )
        rel = f"refs/{ref_id}.png"
        save_png(img, os.path.join(out_root, rel))
        specs.append(ReferenceSpec(ref_id, kind, rel))
        images[ref_id] = img
        embeddings[ref_id] = emb
        accepted_by_kind[kind].append(ref_id)

    with open(os.path.join(out_root, "refs_index.jsonl"), "w", encoding="utf-8") as fh:
        for spec in specs:
            fh.write(
                json.dumps(
                    {"ref_id": spec.ref_id, "kind": spec.kind, "path": spec.path},
                    sort_keys=True,
                )
                + "\n"
            )
    return specs, images, embeddings


def load_library(root: str):
    """Read refs_index.jsonl plus the reference images under a corpus root."""
    from .imgcore import load_image

    specs: list[ReferenceSpec] = []
    images: dict[str, RasterImage] = {}
    index = os.path.join(root, "refs_index.jsonl")
    with open(index, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            spec = ReferenceSpec(row["ref_id"], row["kind"], row["path"])
            specs.append(spec)
            images[spec.ref_id] = load_image(os.path.join(root, spec.path))
    embeddings = {rid: builtin_embedding(img) for rid, img in images.items()}
    return specs, images, embeddings


# --- pair generation ------------------------------------------------------


def _hard_negative_table(
    candidates: list[str], embeddings: dict[str, np.ndarray], k: int
) -> dict[str, list[str]]:
    """Top-k most-similar other references for every candidate."""
    mat = np.stack([embeddings[rid] for rid in candidates])
    dists = 1.0 - mat @ mat.T
    out: dict[str, list[str]] = {}
    for i, rid in enumerate(candidates):
        order = np.argsort(dists[i], kind="stable")
        near = [candidates[j] for j in order if j != i][:k]
        out[rid] = near
    return out


def generate_pairs(
    library,
    task: str,
    n_pairs: int,
    ratio: tuple[int, int],
    seed: int,
    out_root: str,
    params: CorpusParams | None = None,
):
    """Memes, masks, and manifest rows for one task.

    Returns (manifest_rows, recipes).  Related pairs reuse the reference
    per task semantics; each related reference also yields hard-negative
    unrelated pairs built from its most-similar other references.
    """
    params = params or CorpusParams()
    specs, images, embeddings = library
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    a, b = ratio
    if a < 1 or b < 1 or (n_pairs * a) % (a + b) != 0 or b % a != 0:
        raise RatioInfeasible(f"{n_pairs} pairs cannot honor ratio {a}:{b}")
    n_related = n_pairs * a // (a + b)
    per_related = b // a
    if n_related < 1:
        raise RatioInfeasible("need at least one related pair")

    kinds = {s.ref_id: s.kind for s in specs}
    templates = sorted(rid for rid, k in kinds.items() if k == KIND_TEMPLATE)
    elements = sorted(rid for rid, k in kinds.items() if k == KIND_ELEMENT)

    rng = stream(seed, f"pairs:{task}")
    if task == "TM":
        pool = [templates[i] for i in rng.permutation(len(templates))]
        related_refs = [pool[i % len(pool)] for i in range(n_related)]
        negative_space = templates
    else:
        shuffled_templates = [templates[i] for i in rng.permutation(len(templates))]
        ordered = elements + shuffled_templates
        related_refs = [ordered[i % len(ordered)] for i in range(n_related)]
        negative_space = sorted(kinds)
    hard_negatives = _hard_negative_table(
        negative_space, embeddings, params.n_hard_negatives
    )

    def recipe_kind_for(ref_id: str, local_rng) -> str:
        if kinds[ref_id] == KIND_ELEMENT:
            return "insert"
        if task == "TM":
            return "background"
        return "background" if local_rng.random() < params.mm_bg_frac else "panel"

    meme_dir = os.path.join(out_root, "memes", task.lower())
    os.makedirs(meme_dir, exist_ok=True)

    rows: list[dict] = []
    recipes: list[MemeRecipe] = []
    counter = 0

    def emit(designated_ref: str, built_around: str, label: str) -> None:
        nonlocal counter
        pair_id = f"{task.lower()}-p{counter:04d}"
        counter += 1
        meme_id = f"{pair_id}"
        mrng = stream(seed, f"meme:{task}:{pair_id}")
        exclude = {designated_ref} if label == UNRELATED else set()
        kind = recipe_kind_for(built_around, mrng)
        pixels, mask, recipe = _compose_meme(
            mrng, kind, built_around, images, kinds, params, exclude, task, meme_id
        )
        if task == "TM" and kind == "background" and mrng.random() < params.tm_insert_prob:
            elem_pool = [e for e in elements if e != designated_ref]
            elem_id = elem_pool[int(mrng.integers(0, len(elem_pool)))]
            elem = images[elem_id]
            scale = mrng.uniform(*params.insert_scale)
            new = max(16, int(np.floor(elem.width * scale + 0.5)))
            patch = resize_raster(elem, new, new).data
            px = int(mrng.integers(0, params.template_size - new))
            py = int(mrng.integers(0, params.template_size - new))
            base = pixels.astype(np.float64)
            keep_text = mask[py : py + new, px : px + new]
            region = base[py : py + new, px : px + new]
            region[~keep_text] = patch.astype(np.float64)[~keep_text]
            base[py : py + new, px : px + new] = region
            pixels = np.clip(base, 0, 255).astype(np.uint8)
            recipe.inserts.append(elem_id)

        assert recipe.label_for(designated_ref) == label, (
            f"recipe audit failed for {pair_id}"
        )
        rel_path = f"memes/{task.lower()}/{pair_id}.png"
        save_png(RasterImage(pixels), os.path.join(out_root, rel_path))
        save_mask(mask, mask_path_for(os.path.join(out_root, rel_path)))
        ref_rel = f"refs/{designated_ref}.png"
        rows.append(
            {
                "pair_id": pair_id,
                "m": rel_path,
                "r": ref_rel,
                "label": label,
                "task": task,
            }
        )
        recipes.append(recipe)

    for ref_id in related_refs:
        emit(ref_id, ref_id, RELATED)
    for ref_id in related_refs:
        for neighbor in hard_negatives[ref_id][:per_related]:
            emit(ref_id, neighbor, UNRELATED)
    return rows, recipes


# --- whole-corpus orchestration -------------------------------------------


def generate_corpus(
    seed: int,
    out_root: str,
    n_templates: int = 120,
    n_elements: int = 40,
    pairs_per_task: int = 600,
    ratio: tuple[int, int] = (1, 4),
    params: CorpusParams | None = None,
) -> dict:
    """References plus both tasks' pairs, manifest, recipes, and metadata."""
    params = params or CorpusParams()
    os.makedirs(out_root, exist_ok=True)
    library = generate_references(seed, n_templates, n_elements, out_root, params)

    all_rows: list[dict] = []
    all_recipes: list[MemeRecipe] = []
    for task in ("TM", "MM"):
        rows, recipes = generate_pairs(
            library, task, pairs_per_task, ratio, seed, out_root, params
        )
        all_rows.extend(rows)
        all_recipes.extend(recipes)

    manifest_path = os.path.join(out_root, "manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for row in all_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(os.path.join(out_root, "recipes.jsonl"), "w", encoding="utf-8") as fh:
        for rec in all_recipes:
            fh.write(
                json.dumps(
                    {
                        "meme_id": rec.meme_id,
                        "task": rec.task,
                        "base": rec.base,
                        "inserts": rec.inserts,
                        "panels": rec.panels,
                        "text_bands": [list(b) for b in rec.text_bands],
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    with open(manifest_path, "rb") as fh:
        manifest_sha = hashlib.sha256(fh.read()).hexdigest()
    meta = {
        "seed": int(seed),
        "n_templates": n_templates,
        "n_elements": n_elements,
        "pairs_per_task": pairs_per_task,
        "ratio": list(ratio),
        "params_fingerprint": params.fingerprint(),
        "manifest_sha256": manifest_sha,
        "n_pairs": len(all_rows),
    }
    with open(os.path.join(out_root, "corpus_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return meta


def corpus_is_current(
    out_root: str,
    seed: int,
    n_templates: int,
    n_elements: int,
    pairs_per_task: int,
    ratio: tuple[int, int],
    params: CorpusParams,
) -> bool:
    """True when corpus_meta.json matches the requested generation exactly."""
    meta_path = os.path.join(out_root, "corpus_meta.json")
    manifest_path = os.path.join(out_root, "manifest.jsonl")
    if not (os.path.exists(meta_path) and os.path.exists(manifest_path)):
        return False
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(manifest_path, "rb") as fh:
            manifest_sha = hashlib.sha256(fh.read()).hexdigest()
    except (OSError, json.JSONDecodeError):
        return False
    return (
        meta.get("seed") == int(seed)
        and meta.get("n_templates") == n_templates
        and meta.get("n_elements") == n_elements
        and meta.get("pairs_per_task") == pairs_per_task
        and meta.get("ratio") == list(ratio)
        and meta.get("params_fingerprint") == params.fingerprint()
        and meta.get("manifest_sha256") == manifest_sha
    )


# --- manifest ingestion ---------------------------------------------------

_MANIFEST_FIELDS = {"pair_id", "m", "r", "label", "task"}


def load_manifest(path: str) -> list[LabeledPair]:
    """Validated LabeledPairs from a JSONL manifest (paths relative to its dir)."""
    root = os.path.dirname(os.path.abspath(path))
    pairs: list[LabeledPair] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            if not isinstance(row, dict):
                raise ParseError(f"{path}:{line_no}: row must be an object")
            unknown = set(row) - _MANIFEST_FIELDS
            if unknown:
                raise ParseError(f"{path}:{line_no}: unknown fields {sorted(unknown)}")
            missing = _MANIFEST_FIELDS - set(row)
            if missing:
                raise ParseError(f"{path}:{line_no}: missing fields {sorted(missing)}")
            if row["label"] not in (RELATED, UNRELATED):
                raise ParseError(f"{path}:{line_no}: bad label {row['label']!r}")
            if row["task"] not in TASKS:
                raise ParseError(f"{path}:{line_no}: bad task {row['task']!r}")
            if row["pair_id"] in seen:
                raise DuplicatePairId(f"{path}:{line_no}: {row['pair_id']!r}")
            seen.add(row["pair_id"])
            for key in ("m", "r"):
                full = os.path.join(root, row[key])
                if not os.path.exists(full):
                    raise MissingFile(f"{path}:{line_no}: {row[key]} not found")
            pairs.append(
                LabeledPair(row["pair_id"], row["m"], row["r"], row["label"], row["task"])
            )
    return pairs


# --- blank-filter training set --------------------------------------------


def iter_blank_segments(
    seed: int,
    n: int,
    blank_frac: float = 0.4,
    params: CorpusParams | None = None,
):
    """Yield (pixels, label) for the synthetic blank-filter training set.

    Blanks are low-entropy fills with mild noise (sometimes a faint
    gradient); non-blanks are textured crops from procedural scenes.
    """
    params = params or CorpusParams()
    n_blank = int(round(n * blank_frac))
    for i in range(n):
        rng = stream(seed, f"blankset:{i}")
        label = "blank" if i < n_blank else "non-blank"
        w = int(rng.integers(24, 161))
        h = int(rng.integers(24, 161))
        if label == "blank":
            color = _rand_color(rng, 15, 241)
            arr = np.tile(color[None, None, :], (h, w, 1))
            if rng.random() < 0.5:  # faint gradient still counts as blank
                ramp = np.linspace(0, rng.uniform(0, 4), w)[None, :, None]
                arr = arr + ramp
            arr += rng.normal(0.0, rng.uniform(0.3, 2.5), arr.shape)
            arr = np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)
        else:
            scene = _render_scene(rng, params.template_size, params)
            arr = scene[:h, :w]
            for _ in range(20):
                x = int(rng.integers(0, params.template_size - w + 1))
                y = int(rng.integers(0, params.template_size - h + 1))
                crop = scene[y : y + h, x : x + w]
                if crop.std() >= 8.0:
                    arr = crop
                    break
            arr = np.ascontiguousarray(arr)
        yield RasterImage(arr), label


def generate_blank_segments(
    seed: int,
    n: int,
    out_root: str,
    blank_frac: float = 0.4,
    params: CorpusParams | None = None,
) -> str:
    """Write the labeled segment set to disk; returns the manifest path."""
    seg_dir = os.path.join(out_root, "segments")
    os.makedirs(seg_dir, exist_ok=True)
    rows = []
    for i, (img, label) in enumerate(iter_blank_segments(seed, n, blank_frac, params)):
        rel = f"segments/seg{i:04d}.png"
        save_png(img, os.path.join(out_root, rel))
        rows.append({"segment_path": rel, "label": label})
    manifest = os.path.join(out_root, "blank_manifest.jsonl")
    with open(manifest, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest
