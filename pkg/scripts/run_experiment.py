"""Run a named experiment preset and print its aggregate table.

    python3 scripts/run_experiment.py recovery --out-dir runs/recovery
"""
import argparse
import logging

import pandas as pd

from regddm.experiment import PRESETS, aggregate, preset, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("name", choices=sorted(PRESETS))
    ap.add_argument("--out-dir")
    ap.add_argument("--replications", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = preset(args.name, args.out_dir, replications=args.replications,
                 threads=args.threads, seed=args.seed)
    records = run_experiment(cfg, progress=lambda p: logging.info("done %s", p))
    with pd.option_context("display.width", 200, "display.max_columns", 20):
        print(aggregate(records))


if __name__ == "__main__":
    main()
