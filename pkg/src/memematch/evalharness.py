"""Evaluation protocol: stratified splits, per-split tree classifiers,
related-class precision distributions, and cross-task significance tests.

Each task is evaluated over ``n_splits`` stratified train/test splits
(split j draws from PRNG stream ``seed XOR j``).  For every
(task, measure) cell a fresh unpruned CART classifier is trained per
split and scored by precision on the "related" class; splits where the
classifier predicts no positives yield null, which is excluded from
means and tests but counted.  The compiled report adds a Mann-Whitney U
test per measure across tasks and paired Wilcoxon tests for
segment-vs-whole measures on the MM task.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import cart
from .errors import (
    AllZeroDifferences,
    EmptySample,
    IncompleteGrid,
    LengthMismatch,
    MissingFeatures,
    TooFewPerClass,
)
from .simfeat import MEASURES
from .stats import mann_whitney_u, wilcoxon_signed

RELATED = "related"
UNRELATED = "unrelated"
TASKS = ("MM", "TM")

REPORT_FORMAT = "memematch-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class LabeledPair:
    pair_id: str
    m: str  # meme image id/path
    r: str  # reference image id/path
    label: str  # related | unrelated
    task: str  # MM | TM

    def __post_init__(self):
        if self.label not in (RELATED, UNRELATED):
            raise ValueError(f"bad label {self.label!r}")
        if self.task not in TASKS:
            raise ValueError(f"bad task {self.task!r}")


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    n_splits: int
    test_fraction: float
    assignments: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # (train, test)


def make_splits(
    pairs: list[LabeledPair],
    seed: int,
    n_splits: int = 50,
    test_fraction: float = 0.2,
) -> SplitPlan:
    """Stratified random train/test partitions, one per split index."""
    by_label: dict[str, list[str]] = {}
    for p in pairs:
        by_label.setdefault(p.label, []).append(p.pair_id)
    for label, ids in sorted(by_label.items()):
        if len(ids) < 2:
            raise TooFewPerClass(f"class {label!r} has {len(ids)} pair(s), need >= 2")

    assignments = []
    for j in range(n_splits):
        rng = np.random.Generator(np.random.PCG64((int(seed) ^ j) & (2**64 - 1)))
        test: set[str] = set()
        for label in sorted(by_label):
            ids = sorted(by_label[label])
            n_test = int(round(test_fraction * len(ids)))
            n_test = min(max(n_test, 1), len(ids) - 1)
            perm = rng.permutation(len(ids))
            test.update(ids[i] for i in perm[:n_test])
        all_ids = sorted(p.pair_id for p in pairs)
        train = tuple(i for i in all_ids if i not in test)
        assignments.append((train, tuple(sorted(test))))
    return SplitPlan(int(seed), n_splits, test_fraction, tuple(assignments))


def precision_related(predictions, truths, positive: str = RELATED) -> float | None:
    """TP/(TP+FP) on the positive class; None when nothing was predicted positive."""
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if len(predictions) == 0:
        raise LengthMismatch("empty prediction vector")
    tp = sum(1 for p, t in zip(predictions, truths) if p == positive and t == positive)
    fp = sum(1 for p, t in zip(predictions, truths) if p == positive and t != positive)
    if tp + fp == 0:
        return None
    return tp / (tp + fp)


def evaluate_measure(
    pairs: list[LabeledPair],
    features: dict[str, np.ndarray],
    plan: SplitPlan,
    params: cart.TreeParams | None = None,
) -> list[float | None]:
    """Per-split related-class precision of a tree trained on one measure."""
    labels = {p.pair_id: p.label for p in pairs}
    needed = set()
    for train, test in plan.assignments:
        needed.update(train)
        needed.update(test)
    missing = sorted(i for i in needed if i not in features)
    if missing:
        raise MissingFeatures(f"{len(missing)} pair(s) lack features, e.g. {missing[0]}")

    out: list[float | None] = []
    for train, test in plan.assignments:
        X_train = np.stack([features[i] for i in train])
        y_train = [labels[i] for i in train]
        tree = cart.fit_tree(X_train, y_train, params)
        preds = [cart.predict(tree, features[i]) for i in test]
        out.append(precision_related(preds, [labels[i] for i in test]))
    return out


@dataclass
class EvalReport:
    header: dict
    distributions: dict  # task -> measure -> {values, mean, std, undefined_count}
    mwu: list  # [{measure, comparison, statistic, p_value, method}]
    wilcoxon: list  # [{comparison, statistic, p_value, n_zero_dropped, method}]

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "header": self.header,
            "distributions": self.distributions,
            "mwu": self.mwu,
            "wilcoxon": self.wilcoxon,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        if doc.get("format") != REPORT_FORMAT or doc.get("version") != REPORT_VERSION:
            raise ValueError("not a recognized report document")
        return cls(doc["header"], doc["distributions"], doc["mwu"], doc["wilcoxon"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load_json(cls, path) -> "EvalReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["task", "measure", "split", "precision"])
        for task in sorted(self.distributions):
            for measure in MEASURES:
                if measure not in self.distributions[task]:
                    continue
                values = self.distributions[task][measure]["values"]
                for j, v in enumerate(values):
                    writer.writerow([task, measure, j, "" if v is None else repr(v)])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def _distribution_cell(values: list[float | None]) -> dict:
    defined = [v for v in values if v is not None]
    if not defined:
        raise IncompleteGrid("a (task, measure) distribution is entirely null")
    arr = np.asarray(defined, dtype=np.float64)
    return {
        "values": list(values),
        "mean": float(arr.mean()),
        "std": float(arr.std()),  # population std over defined values
        "undefined_count": len(values) - len(defined),
    }


def compile_report(
    precisions: dict[tuple[str, str], list[float | None]],
    header: dict | None = None,
) -> EvalReport:
    """Assemble distributions plus cross-task and segment-vs-whole tests.

    ``precisions`` maps (task, measure) to the per-split precision list.
    Every (task, measure) combination of the tasks and measures present
    must be supplied, and each distribution needs at least one defined
    value.
    """
    tasks = sorted({t for t, _ in precisions})
    measures = [m for m in MEASURES if any((t, m) in precisions for t in tasks)]
    distributions: dict = {}
    for task in tasks:
        distributions[task] = {}
        for measure in measures:
            if (task, measure) not in precisions:
                raise IncompleteGrid(f"missing cell ({task}, {measure})")
            distributions[task][measure] = _distribution_cell(
                precisions[(task, measure)]
            )

    mwu_rows = []
    if "MM" in tasks and "TM" in tasks:
        for measure in measures:
            tm = [v for v in precisions[("TM", measure)] if v is not None]
            mm = [v for v in precisions[("MM", measure)] if v is not None]
            res = mann_whitney_u(tm, mm)
            mwu_rows.append(
                {
                    "comparison": f"{measure}:TM_vs_MM",
                    "measure": measure,
                    "statistic": res.u,
                    "p_value": res.p_value,
                    "method": res.method,
                }
            )

    wilcoxon_rows = []
    if "MM" in tasks:
        for seg, whole in (("embed_s", "embed_w"), ("hash_s", "hash_w")):
            if seg not in measures or whole not in measures:
                continue
            seg_vals = precisions[("MM", seg)]
            whole_vals = precisions[("MM", whole)]
            paired = [
                (s, w)
                for s, w in zip(seg_vals, whole_vals)
                if s is not None and w is not None
            ]
            row = {
                "comparison": f"MM:{seg}_vs_{whole}",
                "n_pairs_dropped": len(seg_vals) - len(paired),
            }
            try:
                res = wilcoxon_signed([p[0] for p in paired], [p[1] for p in paired])
                row.update(
                    statistic=res.w,
                    p_value=res.p_value,
                    n_zero_dropped=res.n_zero_dropped,
                    method=res.method,
                )
            except (AllZeroDifferences, EmptySample):
                # degenerate on tiny runs: the paired samples are identical
                row.update(
                    statistic=None,
                    p_value=None,
                    n_zero_dropped=len(paired),
                    method="degenerate",
                )
            wilcoxon_rows.append(row)

    return EvalReport(header or {}, distributions, mwu_rows, wilcoxon_rows)
