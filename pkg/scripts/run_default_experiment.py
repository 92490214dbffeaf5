#!/usr/bin/env python3
"""Run the default five-seed experiment and print the summary tables.

Writes all artifacts under runs/default (override with --output-root or the
EKD_OUTPUT_ROOT environment variable). Roughly 3-4 minutes on one core.
"""
import argparse
import logging
import time

from ekd.config import default_config, load_config
from ekd.pipeline import SeedPaths, output_root, run_pipeline
from ekd.report import ResultTable, summarize


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("-c", "--config", help="experiment YAML (default: built-in config)")
    parser.add_argument("--output-root", help="where to write the run directory")
    parser.add_argument("--force", action="store_true")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(levelname).1s %(name)s: %(message)s")
    config = load_config(args.config) if args.config else default_config()
    start = time.monotonic()
    run_pipeline(config, args.output_root, force=args.force)
    root = output_root(config, args.output_root)

    per_seed = {}
    for seed in config.seeds:
        paths = SeedPaths(root, seed)
        per_seed[seed] = ResultTable.from_tsv((paths.report / "results.tsv").read_text())
    print(f"\n=== per-seed tables under {root}/seed_*/report/")
    print(f"=== first seed ({config.seeds[0]}):\n")
    print(per_seed[config.seeds[0]].to_text())
    print("=== cross-seed summary (mean WER):\n")
    print(summarize(per_seed))
    print(f"done in {time.monotonic() - start:.0f}s; summary file: {root}/summary/summary.tsv")


if __name__ == "__main__":
    main()
