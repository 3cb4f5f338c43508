"""Command-line entry point: ``segrank <command> [options]``.

Exit codes: 0 success, 1 input/output problem, 2 configuration error,
3 numeric or degenerate-data failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .dataset import SyntheticConfig, generate_blobs, generate_synthetic, read_kv_file, write_csv
from .errors import InputError, SegrankError
from .pipeline import PipelineConfig, Run


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", dest="input_path", help="customer CSV")
    p.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    p.add_argument("--config", help="flat key=value settings file")
    p.add_argument("--seed", type=int)


def _add_cluster_flags(p):
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--n-restarts", dest="n_restarts", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--elbow-method", dest="elbow_method", choices=["curvature", "chord"])
    p.add_argument("--no-standardize", dest="standardize", action="store_const", const=False,
                   help="cluster on raw units instead of z-scores")


def _add_boost_flags(p):
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--interaction-depth", dest="interaction_depth", type=int)
    p.add_argument("--bag-fraction", dest="bag_fraction", type=float)
    p.add_argument("--min-node", dest="min_node", type=int)
    p.add_argument("--oob-window", dest="oob_window", type=int)
    p.add_argument("--pdp-grid", dest="pdp_grid", type=int)
    p.add_argument("--pdp-rows", dest="pdp_rows", type=int,
                   help="rows averaged over for partial dependence (0 = all)")
    p.add_argument("--interaction-grid", dest="interaction_grid", type=int)


def _add_rank_flags(p):
    p.add_argument("--scaling", choices=["percentile", "minmax"])
    p.add_argument("--no-directions", dest="directions", action="store_const", const=False,
                   help="score every feature with higher = better")
    p.add_argument("--weights-file", dest="weights_file")
    p.add_argument("--top-n", dest="top_n", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segrank", description="Customer grouping and ranking pipeline."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic customer CSV")
    g.add_argument("--output", "-o", help="CSV path (default customers.csv)")
    g.add_argument("--n", dest="n_customers", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--zero-asset-fraction", dest="zero_asset_fraction", type=float)
    g.add_argument("--tail-exponent", dest="contribution_tail_exponent", type=float)
    g.add_argument("--noise-scale", dest="noise_scale", type=float)
    g.add_argument("--blobs", type=int, metavar="K",
                   help="write K well-separated segments instead of brokerage data")
    g.add_argument("--config", help="flat key=value settings file")

    p = sub.add_parser("select-features", help="OLS p-value feature selection")
    _add_common(p)
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("elbow", help="inertia curve and elbow k")
    _add_common(p)
    _add_cluster_flags(p)

    p = sub.add_parser("cluster", help="k-means, projection and sigma bands")
    _add_common(p)
    _add_cluster_flags(p)
    p.add_argument("--k-override", dest="k_override", type=int)

    p = sub.add_parser("boost", help="gradient boosting, influence and partial dependence")
    _add_common(p)
    _add_boost_flags(p)

    p = sub.add_parser("rank", help="weighted scorecard")
    _add_common(p)
    _add_rank_flags(p)

    p = sub.add_parser("pipeline", help="run every stage")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    _add_cluster_flags(p)
    p.add_argument("--k-override", dest="k_override", type=int)
    _add_boost_flags(p)
    _add_rank_flags(p)
    return parser


def _file_values(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    if not Path(path).is_file():
        raise InputError(f"config file not found: {path}")
    return read_kv_file(path)


def _generate(args) -> int:
    values = _file_values(args.config)
    out = values.pop("output", None)
    blobs = values.pop("blobs", None)
    if os.environ.get("SEGRANK_SEED") and "seed" not in values:
        values["seed"] = os.environ["SEGRANK_SEED"]
    for key in ("n_customers", "seed", "zero_asset_fraction", "contribution_tail_exponent",
                "noise_scale"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    blobs = args.blobs if args.blobs is not None else (int(blobs) if blobs else None)
    cfg = SyntheticConfig.from_mapping(values)
    if blobs is not None:
        table = generate_blobs(cfg.n_customers, blobs, seed=cfg.seed)
    else:
        table = generate_synthetic(cfg)
    path = Path(args.output or out or "customers.csv")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_csv(path, table)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None
    print(f"wrote {len(table)} customers to {path}")
    return 0


def _config(args) -> PipelineConfig:
    flags = {
        k: v for k, v in vars(args).items()
        if k not in ("command", "config") and v is not None
    }
    return PipelineConfig.from_sources(os.environ, _file_values(args.config), flags)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        return _generate(args)
    cfg = _config(args)
    run_ = Run(cfg)
    run_.prepare()
    if args.command == "pipeline":
        summary = run_.pipeline()
        print(f"k={summary['k']} best_iteration={summary['best_iteration']} "
              f"retained={len(summary['retained_features'])} -> {cfg.output_dir}")
        return 0
    if args.command == "select-features":
        retained = run_.stage("select-features", run_.select_features)
        print(f"retained {len(retained)} features: {', '.join(retained)}")
    elif args.command == "elbow":
        k, no_elbow = run_.stage("elbow", run_.elbow, run_.retained())
        print("no elbow: curve is linear" if no_elbow else f"elbow at k={k}")
    elif args.command == "cluster":
        retained = run_.retained()
        info = run_.stage("cluster", run_.cluster, retained, run_.chosen_k())
        print(f"k={info['k']} sizes={info['sizes']}")
    elif args.command == "boost":
        info = run_.stage("boost", run_.boost, run_.retained())
        print(f"best_iteration={info['best_iteration']} of {info['n_trees']}")
    elif args.command == "rank":
        top = run_.stage("rank", run_.rank)
        if top:
            print(f"top customer {top[0][1]} score {top[0][2]:.3f}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except SegrankError as exc:
        print(f"segrank: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"segrank: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
