"""Wall time of RegDDM fits against N * n (the computation-time study).

    python3 scripts/scaling.py --out-dir runs/scaling

Prints per-cell wall time and its ratio to linear growth from the smallest
cell; a ratio of 1 means time grew exactly in proportion to N * n.
"""
import argparse
import logging

from regddm.experiment import preset, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/scaling")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    records = run_experiment(preset("scaling", args.out_dir, seed=args.seed))
    fits = records[(records.method == "regddm") & (records.variable == "beta_v_0")]
    cells = fits.groupby(["N", "n"])["wall"].mean().reset_index().sort_values(["N", "n"])
    base = cells.iloc[0]
    cells["ratio"] = (cells.wall / base.wall) / (cells.N * cells.n / (base.N * base.n))
    print(cells.to_string(index=False, float_format="%.3f"))


if __name__ == "__main__":
    main()
