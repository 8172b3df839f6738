"""Synthetic end-to-end run: PURE_1D_F on fusion features plus RF on F/T vectors.

    python3 scripts/run_synthetic_pipeline.py --workdir runs/synthetic
"""

import argparse
import json
import logging

from _common import add_data_args, prepare

from vocalscreen.dataset import PaperModma
from vocalscreen.experiments import forest_accuracy, make_splits, plan_with_validation, train_model
from vocalscreen.forest import ForestConfig
from vocalscreen.nn import ModelSpec, TrainConfig, save_model


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    add_data_args(p)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--time-budget", type=float, default=240.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    manifest, data = prepare(args, ("mfcc", "fusion"))
    plan = plan_with_validation(manifest, PaperModma(), args.split_seed)
    splits = make_splits(*data["fusion"], plan)
    model, rep = train_model(splits, ModelSpec("pure-1d-f", 4, 3, (2, 2, 2, 3)),
                             TrainConfig(lr=args.lr, seed=args.seed, time_budget_s=args.time_budget))
    save_model(model, args.workdir / "pure_1d_f")
    rf = {axis: forest_accuracy(*data["mfcc"], plan, axis, ForestConfig(seed=args.seed)) for axis in "FT"}
    result = {
        "cnn": {"test": rep.test, "best_epoch": rep.best_epoch, "epochs_run": rep.epochs_run,
                "stopped": rep.stopped, "seconds": rep.seconds},
        "rf_mfcc": {axis: {"accuracy": r["accuracy"], "f1": r["f1"], "oob": r["oob_score"]} for axis, r in rf.items()},
    }
    (args.workdir / "pipeline_result.json").write_text(json.dumps(result, indent=2))
    print(f"PURE_1D_F test accuracy {rep.test['accuracy']:.3f} (F1 {rep.test['f1']:.3f}) in {rep.seconds:.0f}s")
    print(f"RF MFCC F-vector {rf['F']['accuracy']:.3f} vs T-vector {rf['T']['accuracy']:.3f}")


if __name__ == "__main__":
    main()
