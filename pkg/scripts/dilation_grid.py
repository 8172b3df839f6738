"""Dilation-rate grid for PURE_1D_F (4 layers, k=3).

    python3 scripts/dilation_grid.py --repeats 3 --epochs 10
"""

import argparse
import logging

from _common import add_data_args, prepare

from vocalscreen.dataset import PaperModma
from vocalscreen.experiments import make_splits, plan_with_validation
from vocalscreen.nn import GridSpace, Mode, TrainConfig, grid_search, rows_to_csv
from vocalscreen.nn.train import GRID_COLUMNS

DILATIONS = [(2, 2, 2, 2), (2, 2, 2, 3), (2, 2, 3, 3), (2, 3, 3, 3), (3, 3, 3, 3)]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    add_data_args(p)
    p.add_argument("--feature", default="fusion", choices=["mfcc", "lpc", "fusion"])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--widths", default="8,16,32,32", help="channel widths, comma separated")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    manifest, data = prepare(args, (args.feature,))
    splits = make_splits(*data[args.feature], plan_with_validation(manifest, PaperModma(), args.split_seed))
    widths = tuple(int(w) for w in args.widths.split(","))
    space = GridSpace([Mode.PURE_1D_F], layers=[4], kernels=[3], dilations=DILATIONS, widths=widths)
    rows = grid_search(space, splits.train, splits.val, splits.test,
                       TrainConfig(lr=args.lr, max_epochs=args.epochs, seed=args.seed),
                       repeats=args.repeats, jobs=args.jobs)
    text = rows_to_csv(rows, GRID_COLUMNS)
    (args.workdir / "dilation_grid.csv").write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
