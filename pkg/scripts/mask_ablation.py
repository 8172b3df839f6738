"""Masking ablation (Original / T / F / T-F) averaged over seeds, as a table.

    python3 scripts/mask_ablation.py --features fusion --seeds 0,1,2
    python3 scripts/mask_ablation.py --occlusion   # mask test inputs instead
"""

import argparse
import logging

from _common import add_data_args, prepare

from vocalscreen.augment import MaskConfig
from vocalscreen.dataset import PaperModma
from vocalscreen.experiments import (
    ABLATION_COLUMNS,
    SUMMARY_COLUMNS,
    ablate_masks,
    make_splits,
    plan_with_validation,
    summarize_ablation,
)
from vocalscreen.nn import ModelSpec, TrainConfig, rows_to_csv


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    add_data_args(p)
    p.add_argument("--features", default="fusion", help="comma list of mfcc,lpc,fusion")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--widths", default="8,16")
    p.add_argument("--occlusion", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    kinds = tuple(args.features.split(","))
    manifest, data = prepare(args, kinds)
    plan = plan_with_validation(manifest, PaperModma(), args.split_seed)
    widths = tuple(int(w) for w in args.widths.split(","))
    spec = ModelSpec("pure-1d-f", len(widths), 3, (2,) * len(widths), widths)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for kind in kinds:
        splits = make_splits(*data[kind], plan)
        rows += ablate_masks(splits, kind, spec, TrainConfig(lr=args.lr, max_epochs=args.epochs), MaskConfig(),
                             seeds, occlusion=args.occlusion)
    suffix = "_occlusion" if args.occlusion else ""
    (args.workdir / f"ablation_runs{suffix}.csv").write_text(rows_to_csv(rows, ABLATION_COLUMNS))
    table = rows_to_csv(summarize_ablation(rows), SUMMARY_COLUMNS)
    (args.workdir / f"ablation{suffix}.csv").write_text(table)
    print(table, end="")


if __name__ == "__main__":
    main()
