"""Command-line entry point: one subcommand per pipeline stage plus the
full pipeline, report assembly, and a default-config writer."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import (ExperimentConfig, apply_overrides, default_config, load_config,
                     save_config)
from .pipeline import (PipelineError, SeedPaths, output_root, run_pipeline,
                       stage_decode, stage_evaluate, stage_gen_data, stage_report,
                       stage_select, stage_svcca, stage_train_student, stage_train_teacher)

logger = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser, with_seed: bool = True) -> None:
    p.add_argument("-c", "--config", help="experiment config YAML (defaults apply if omitted)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key (dotted path, YAML value)")
    p.add_argument("--output-root", help="run directory root (wins over EKD_OUTPUT_ROOT and config)")
    p.add_argument("--force", action="store_true", help="recompute existing artifacts")
    p.add_argument("--allow-indomain", action="store_true",
                   help="permit a student domain that matches a teacher domain")
    if with_seed:
        p.add_argument("--seed", type=int, help="experiment seed (default: first config seed)")


def _load(args) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config, args.overrides)
    elif args.overrides:
        data = apply_overrides(default_config().to_dict(), args.overrides)
        config = ExperimentConfig.from_dict(data)
    else:
        config = default_config()
    if args.allow_indomain:
        config.allow_indomain = True
    config.validate_ood()
    return config


def _paths(config: ExperimentConfig, args) -> tuple[int, SeedPaths]:
    seed = args.seed if args.seed is not None else config.seeds[0]
    root = output_root(config, args.output_root)
    paths = SeedPaths(root, seed)
    paths.ensure()
    return seed, paths


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ekd",
        description="Ensemble distillation experiments for CTC sequence models "
                    "on synthetic multi-domain corpora.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write the default config as YAML")
    p.add_argument("-o", "--out", default="experiment.yaml")

    p = sub.add_parser("pipeline", help="run every stage for every configured seed")
    _add_common(p, with_seed=False)

    p = sub.add_parser("gen-data", help="synthesize corpora, splits, and the n-gram LM")
    _add_common(p)

    p = sub.add_parser("train-teacher", help="train teacher model(s) on their domains")
    _add_common(p)
    p.add_argument("--domain", help="train only this teacher domain")

    p = sub.add_parser("decode", help="dump teacher posteriors for the student-domain train split")
    _add_common(p)
    p.add_argument("--teacher", help="decode with only this teacher")

    p = sub.add_parser("select", help="build training targets with the selection strategies")
    _add_common(p)
    p.add_argument("--strategy", choices=["teacher_average", "framewise_max", "elitist"])

    p = sub.add_parser("train-student", help="train student model(s) on selected soft labels")
    _add_common(p)
    p.add_argument("--strategy", choices=["teacher_average", "framewise_max", "elitist"])

    p = sub.add_parser("evaluate", help="decode test sets and score WER")
    _add_common(p)
    p.add_argument("--lm", choices=["on", "off", "both"], default="both")
    p.add_argument("--models", nargs="*", help="restrict to these model names")

    p = sub.add_parser("svcca", help="layer-correlation trajectories: original vs pseudo labels")
    _add_common(p)

    p = sub.add_parser("report", help="assemble result tables from a run directory")
    _add_common(p)
    p.add_argument("--summary", action="store_true", help="cross-seed summary instead of one seed")
    p.add_argument("--win-counts", action="store_true", help="print per-teacher win counts")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "init-config":
        save_config(default_config(), args.out)
        print(f"wrote {args.out}")
        return 0

    try:
        config = _load(args)
        if args.command == "pipeline":
            table = run_pipeline(config, args.output_root, force=args.force)
            print(table.to_text())
            return 0

        seed, paths = _paths(config, args)
        if args.command == "gen-data":
            stage_gen_data(config, seed, paths, force=args.force)
        elif args.command == "train-teacher":
            stage_train_teacher(config, seed, paths, domain=args.domain, force=args.force)
        elif args.command == "decode":
            stage_decode(config, seed, paths, teacher=args.teacher, force=args.force)
        elif args.command == "select":
            stage_select(config, seed, paths, strategy=args.strategy, force=args.force)
        elif args.command == "train-student":
            stage_train_student(config, seed, paths, strategy=args.strategy, force=args.force)
        elif args.command == "evaluate":
            stage_evaluate(config, seed, paths, lm_mode=args.lm, models=args.models,
                           force=args.force)
        elif args.command == "svcca":
            stage_svcca(config, seed, paths, force=args.force)
        elif args.command == "report":
            if args.summary:
                from .report import summarize

                root = output_root(config, args.output_root)
                per_seed = {}
                for s in config.seeds:
                    sp = SeedPaths(root, s)
                    per_seed[s] = stage_report(config, s, sp)
                print(summarize(per_seed), end="")
            else:
                table = stage_report(config, seed, paths)
                print(table.to_text())
            if args.win_counts:
                print((paths.report / "win_counts.txt").read_text(), end="")
    except (PipelineError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
