"""Random-forest accuracy on F/T vectors and five-fold z-scored importance.

    python3 scripts/rf_importance.py --feature mfcc
"""

import argparse
import logging

import numpy as np
from _common import add_data_args, prepare

from vocalscreen.dataset import PaperModma
from vocalscreen.experiments import forest_accuracy, plan_with_validation, vectors
from vocalscreen.forest import ForestConfig, kfold_importance


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    add_data_args(p)
    p.add_argument("--feature", default="mfcc", choices=["mfcc", "lpc", "fusion"])
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    manifest, data = prepare(args, (args.feature,))
    records, mats = data[args.feature]
    plan = plan_with_validation(manifest, PaperModma(), args.split_seed)
    cfg = ForestConfig(n_trees=args.trees, seed=args.seed, n_jobs=args.jobs)
    for axis in "FT":
        r = forest_accuracy(records, mats, plan, axis, cfg)
        print(f"{args.feature} {axis}-vector: accuracy {r['accuracy']:.3f} F1 {r['f1']:.3f} OOB {r['oob_score']:.3f}")
    rep = kfold_importance(vectors(mats, "F"), np.array([r.label for r in records]),
                           np.array([r.subject_id for r in records]), 5, cfg)
    rep.save(args.workdir / f"importance_{args.feature}.csv", args.workdir / f"importance_{args.feature}.json")
    top = ", ".join(f"{i} ({rep.mean_z[i]:.2f})" for i in rep.ranking[:10])
    print(f"top orders by mean z-score: {top}")


if __name__ == "__main__":
    main()
