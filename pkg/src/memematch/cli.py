"""Command-line entry point.

Commands: corpus-gen, featurize, train-blank, evaluate.  Global flags
--seed, --config, --jobs, --out work on every command; flags override
config-file values which override defaults.

Exit codes: 0 ok; 2 io error; 3 missing input; 4 stale cache;
5 incomplete cache; 6 insufficient data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, cart
from .config import build_config
from .corpus import (
    CorpusParams,
    corpus_is_current,
    generate_corpus,
)
from .errors import (
    DecodeError,
    IncompleteGrid,
    MemematchError,
    MissingFeatures,
    MissingFile,
    ParseError,
    RatioInfeasible,
    StaleCache,
    TooFewPerClass,
    TooFewSamples,
)
from .pipeline import REPORT_CSV, REPORT_JSON, evaluate, featurize, train_blank_from_manifest

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2
EXIT_MISSING_INPUT = 3
EXIT_STALE_CACHE = 4
EXIT_INCOMPLETE = 5
EXIT_DATA_INSUFFICIENT = 6


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="base PRNG seed")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes")
    parser.add_argument("--out", default=None, help="output directory")


def _config_from(args: argparse.Namespace, **extra) -> "RunConfig":
    overrides = {"seed": args.seed, "jobs": args.jobs}
    overrides.update(extra)
    return build_config(args.config, overrides)


def cmd_corpus_gen(args: argparse.Namespace) -> int:
    cfg = _config_from(
        args,
        n_templates=args.templates,
        n_elements=args.elements,
        pairs_per_task=args.pairs,
    )
    out = args.out or "corpus"
    params = CorpusParams()
    ratio = (cfg.ratio_related, cfg.ratio_unrelated)
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        print(f"error: output directory not writable: {exc}", file=sys.stderr)
        return EXIT_IO
    if corpus_is_current(
        out, cfg.seed, cfg.n_templates, cfg.n_elements, cfg.pairs_per_task, ratio, params
    ):
        print(f"corpus identical (seed {cfg.seed}); no rewrites")
        return EXIT_OK
    meta = generate_corpus(
        cfg.seed,
        out,
        n_templates=cfg.n_templates,
        n_elements=cfg.n_elements,
        pairs_per_task=cfg.pairs_per_task,
        ratio=ratio,
        params=params,
    )
    print(
        f"corpus written to {out}: {meta['n_templates']} templates, "
        f"{meta['n_elements']} elements, {meta['n_pairs']} pairs"
    )
    return EXIT_OK


def cmd_featurize(args: argparse.Namespace) -> int:
    overrides = {}
    if args.provider:
        overrides["provider"] = args.provider
    cfg = _config_from(args, **overrides)
    out = args.out or os.path.join(args.corpus, "features")
    meta = featurize(
        args.corpus, out, cfg, force=args.force, blank_model_path=args.blank_model
    )
    if meta.get("recomputed"):
        print(
            f"featurized {meta['n_pairs']} pairs -> {meta['n_rows']} cache rows "
            f"({meta['counters']['images']} images, "
            f"{meta['counters']['segments']} segments)"
        )
    else:
        print("feature cache up to date; no recomputation")
    return EXIT_OK


def cmd_train_blank(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    folds = args.folds if args.folds is not None else cfg.blank_folds
    model, alpha, table, cv_precision = train_blank_from_manifest(
        args.manifest, folds, cfg.seed
    )
    out = args.out or "blank_model.json"
    cart.save_tree(model, out)
    table_path = os.path.splitext(out)[0] + "_cv.json"
    with open(table_path, "w", encoding="utf-8") as fh:
        json.dump({"selected_alpha": alpha, "table": table}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    shown = "n/a" if cv_precision is None else f"{cv_precision:.4f}"
    print(
        f"blank filter trained: alpha={alpha:.6g}, "
        f"cv non-blank precision={shown}, model -> {out}"
    )
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    overrides = {}
    if args.measures:
        overrides["measures"] = tuple(m.strip() for m in args.measures.split(","))
    if args.splits is not None:
        overrides["n_splits"] = args.splits
    if args.test_fraction is not None:
        overrides["test_fraction"] = args.test_fraction
    cfg = _config_from(args, **overrides)
    features_dir = args.features or os.path.join(args.corpus, "features")
    out = args.out or features_dir
    report = evaluate(args.corpus, features_dir, out, cfg)
    n_dists = sum(len(m) for m in report.distributions.values())
    print(
        f"report written to {os.path.join(out, REPORT_JSON)} and "
        f"{os.path.join(out, REPORT_CSV)}: {n_dists} distributions, "
        f"{len(report.mwu)} MWU tests, {len(report.wilcoxon)} Wilcoxon tests"
    )
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memematch",
        description="Visual similarity measures for meme-to-reference matching",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus-gen", help="generate the synthetic corpus")
    _add_common(p)
    p.add_argument("--templates", type=int, default=None)
    p.add_argument("--elements", type=int, default=None)
    p.add_argument("--pairs", type=int, default=None, help="pairs per task")
    p.set_defaults(func=cmd_corpus_gen)

    p = sub.add_parser("featurize", help="compute the per-pair feature cache")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="corpus root directory")
    p.add_argument("--force", action="store_true", help="overwrite a stale cache")
    p.add_argument("--blank-model", default=None, help="pretrained blank filter")
    p.add_argument("--provider", default=None, help="builtin or sidecar:<path>")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-blank", help="train the blank-segment filter")
    _add_common(p)
    p.add_argument("--manifest", required=True, help="labeled segment manifest JSONL")
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_train_blank)

    p = sub.add_parser("evaluate", help="run splits, classifiers, and tests")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="corpus root directory")
    p.add_argument("--features", default=None, help="feature cache directory")
    p.add_argument("--measures", default=None, help="comma-separated measure subset")
    p.add_argument("--splits", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except StaleCache as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STALE_CACHE
    except (MissingFeatures, IncompleteGrid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (TooFewSamples, TooFewPerClass, RatioInfeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_INSUFFICIENT
    except (FileNotFoundError, MissingFile) as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ParseError, DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MemematchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
