"""Command-line entry point: one subcommand per experiment kind.

``vqls-poisson <experiment> [--config FILE] [--set key.path=value]...
--out DIR [--seed N] [--print-config]``

Exit codes: 0 success, 2 configuration error, 3 runtime error.
Output columns are documented in docs/formats.md.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import EXPERIMENTS, ConfigError, load_config, run, validate_config

_DESCRIPTIONS = {
    "train": "multistart variational training; emits per-evaluation traces",
    "sample-fidelity": "sampled-distribution fidelity vs exact state fidelity",
    "innerp-error": "inner-product estimator error across methods",
    "op-error": "operator-expectation error across decompositions",
    "cost-variation": "cost change under random parameter perturbations",
    "grad-similarity": "cosine similarity of sampled vs exact gradients",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqls-poisson",
        description="Seeded, resumable experiment sweeps for the variational Poisson solver.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name])
        p.add_argument("--config", help="JSON config file; missing keys fall back to defaults")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config entry by dotted path (repeatable), e.g. --set problem.n=4",
        )
        p.add_argument("--out", help="output directory (config.json, raw.csv, summary.csv, meta.json)")
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the effective config and exit without running",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.sets, args.out, args.seed)
        validate_config(cfg)
        if args.print_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        if cfg.get("out") is None:
            raise ConfigError("out", "an output directory is required (--out)")
        report = run(cfg)
    except ConfigError as exc:
        print(f"vqls-poisson: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # filesystem, numerical, interrupted runs
        print(f"vqls-poisson: runtime error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {report.out_dir} ({report.meta['units_run']} of {report.meta['units_total']} units run)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
