"""Cumulative PCA energy of layer input/output next to the singular-value energy of A.

    python3 scripts/energy_curves.py --kind anisotropic --d 6
"""
import argparse
import sys

from covnorm.cli import INSTANCE_KINDS
from covnorm.evaluation import energy_curves, first_index_exceeding


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=sorted(INSTANCE_KINDS), default="anisotropic")
    parser.add_argument("--d", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--level", type=float, default=0.99)
    parser.add_argument("--out", help="CSV path (default: stdout)")
    args = parser.parse_args(argv)

    inst = INSTANCE_KINDS[args.kind](d=args.d, seed=args.seed)
    curves = energy_curves(inst.pca_x(), inst.pca_y(), inst.a)
    text = curves.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    for name in ("pca_x", "pca_y", "singular"):
        k = first_index_exceeding(getattr(curves, name), args.level)
        print(f"# {name} exceeds {args.level} at k={k}", file=sys.stderr)


if __name__ == "__main__":
    main()
