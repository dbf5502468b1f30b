"""Command line entry point: ``lidarbeam <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import NOISE_MODES, load_config
from .dataset import read_manifest
from .evaluate import EvalReport
from .pipeline import (DATASET, FEATURES, PipelineError, evaluate_models, featurize, generate,
                       run_pipeline, train_models)
from .selftest import run_selftest


def _ints(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _common(p, subset=False, M=False):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    p.add_argument("--episodes", type=int, help="number of simulated episodes")
    p.add_argument("--noise", choices=NOISE_MODES, help="positioning/LIDAR noise condition")
    p.add_argument("--out", type=Path, default=Path("run"), help="output directory")
    if subset:
        p.add_argument("--subset", choices=("los", "nlos", "all"), default="all",
                       help="which models to train ('all' = detector, stump and both selectors)")
    if M:
        p.add_argument("--M", type=_ints, help="comma separated list of M values")
        p.add_argument("--gate", action="store_true",
                       help="also score selectors chosen by the LOS detector per example")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lidarbeam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("generate", help="design codebooks and simulate paired episodes"))
    p = sub.add_parser("featurize", help="add histograms and d-hat to a dataset")
    _common(p)
    p.add_argument("--dataset", type=Path, help="dataset file (default <out>/dataset.lbds)")
    _common(sub.add_parser("train", help="train detector, stump and selectors"), subset=True)
    _common(sub.add_parser("evaluate", help="score trained models on the test split"), M=True)
    p = sub.add_parser("report", help="print the reports of a finished run")
    p.add_argument("--out", type=Path, default=Path("run"))
    p = sub.add_parser("selftest", help="compare kernels against brute-force oracles")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _common(sub.add_parser("run", help="generate, featurize, train and evaluate"), M=True)
    return parser


def _config(args):
    overrides = {}
    for key in ("seed", "episodes", "noise"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "M", None):
        overrides["eval"] = {"M": args.M}
    return load_config(args.config, **overrides)


def _print_report(out: Path) -> int:
    path = out / "summary.json"
    if not path.exists():
        print(f"no summary in {out}; run 'evaluate' first", file=sys.stderr)
        return 1
    summary = json.loads(path.read_text())
    print(f"condition {summary['condition']}: {summary['n_train']} train / {summary['n_test']} test, "
          f"{summary['num_classes']} classes {tuple(summary['codebook_sizes'])}")
    print(f"LOS detection error: network {summary['detector_error']:.4f}, "
          f"stump {summary['stump_error']:.4f} (gamma {summary['stump_gamma']:.3f} m)")
    for name, d in summary["reports"].items():
        rep = EvalReport.from_dict(d)
        prior = rep.extra.get("prior_accuracy", {})
        print(f"\n{rep.condition} (n={rep.n})")
        print(f"{'M':>5} {'accuracy':>9} {'R_T':>7} {'prior':>7}")
        for M in sorted(rep.accuracy):
            p = prior.get(str(M))
            print(f"{M:>5} {rep.accuracy[M]:>9.4f} {rep.rt[M]:>7.4f} "
                  f"{'' if p is None else f'{p:.4f}':>7}")
        if rep.extra.get("overhead_factor") is not None:
            print(f"overhead reduction at R_T >= {rep.extra['rt_floor']}: "
                  f"{rep.extra['overhead_factor']:.1f}x")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "selftest":
            ok = True
            for r in run_selftest(args.instances, args.seed):
                ok &= r.passed
                print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.instances} instances, "
                      f"{r.failures} mismatches, worst rel. error {r.worst:.2e}, {r.seconds:.2f} s")
            return 0 if ok else 1
        if args.command == "report":
            return _print_report(args.out)
        cfg = _config(args)
        out = args.out
        if args.command == "generate":
            path = generate(cfg, out)
            print(f"wrote {path}: {read_manifest(path)['counts']}")
        elif args.command == "featurize":
            path = featurize(args.dataset or out / DATASET, cfg, out / FEATURES)
            print(f"wrote {path}")
        elif args.command == "train":
            subsets = {"all": ("all", "los", "nlos"), "los": ("los",), "nlos": ("nlos",)}[args.subset]
            for name, secs in train_models(out / FEATURES, cfg, out, subsets).items():
                print(f"trained {name} in {secs:.1f} s")
        elif args.command == "evaluate":
            evaluate_models(out / FEATURES, cfg, out, gate=args.gate)
            return _print_report(out)
        elif args.command == "run":
            run_pipeline(cfg, out, gate=args.gate)
            return _print_report(out)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
