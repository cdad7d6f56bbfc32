"""``choice-forge`` command line: generate, run, fit, robustness, report.

Exit codes: 0 full success, 2 partial (flagged or failed cells), 1 failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, ExperimentConfig, default_config

log = logging.getLogger("choice_forge")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="design seed (overrides the config)")
    common.add_argument("--variant", nargs="+", metavar="ID", help="restrict to these variant ids")
    common.add_argument("--agent", nargs="+", metavar="ID", help="restrict to these agent ids")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="choice-forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the design and every prompt set")
    sub.add_parser("run", parents=[common], help="query agents and store choice records")
    sub.add_parser("fit", parents=[common], help="fit logit models, WTP and deviation tables")
    sub.add_parser("robustness", parents=[common], help="order-swap and currency comparison")
    sub.add_parser("report", parents=[common], help="deviation aggregations across variants")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else default_config()
    out = str(Path(args.out).resolve()) if args.out else None
    return cfg.with_overrides(seed=args.seed, out=out, variants=args.variant, agents=args.agent)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "generate":
            m = pipeline.cmd_generate(cfg)
            print(f"{m['design']['n_dilemmas']} dilemmas, {len(m['prompts'])} prompt files "
                  f"-> {cfg.out_dir}")
            return 0
        if args.command == "run":
            m = pipeline.cmd_run(cfg)
        elif args.command == "fit":
            m = pipeline.cmd_fit(cfg)
        elif args.command == "robustness":
            pipeline.cmd_robustness(cfg)
            m = pipeline.load_manifest(cfg.out_dir)
        else:
            pipeline.cmd_report(cfg)
            m = pipeline.load_manifest(cfg.out_dir)
    except (ConfigError, pipeline.ManifestError, pipeline.MissingCounterpartRun,
            FileNotFoundError) as exc:
        print(f"choice-forge: error: {exc}", file=sys.stderr)
        return 1
    for c in m["cells"]:
        if c["status"] != "fit" and c["status"] != "collected":
            print(f"{c['key']}: {c['status']} {c.get('flag') or ''}".rstrip())
    print(f"{len(m['cells'])} cells -> {cfg.out_dir}")
    return pipeline.exit_status(m)


if __name__ == "__main__":
    sys.exit(main())
