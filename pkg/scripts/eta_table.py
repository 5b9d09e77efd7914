"""Effective dimensions kx, ky and their ratio eta over a threshold grid.

    python3 scripts/eta_table.py --kind gradual --d 64
"""
import argparse

from covnorm.cli import INSTANCE_KINDS
from covnorm.evaluation import THRESHOLD_GRID
from covnorm.recolor import eta_ratio
from covnorm.stats import retained_dimension


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=sorted(INSTANCE_KINDS), default="gradual")
    parser.add_argument("--d", type=int, default=64)
    parser.add_argument("--seeds", type=int, default=5)
    args = parser.parse_args(argv)

    print("seed,threshold,kx,ky,eta")
    for seed in range(args.seeds):
        inst = INSTANCE_KINDS[args.kind](d=args.d, seed=seed)
        ex, ey = inst.pca_x().eigenvalues, inst.pca_y().eigenvalues
        for t in THRESHOLD_GRID:
            kx, ky = retained_dimension(ex, t), retained_dimension(ey, t)
            print(f"{seed},{t},{kx},{ky},{eta_ratio(kx, ky)!r}")


if __name__ == "__main__":
    main()
