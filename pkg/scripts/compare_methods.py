"""Error-vs-parameter comparison of CovNorm and the baselines on a synthetic instance.

    python3 scripts/compare_methods.py --kind anisotropic --d 6 --out compare.csv
"""
import argparse
import sys

from covnorm import synthetic
from covnorm.baselines import BaselineSpec
from covnorm.cli import INSTANCE_KINDS
from covnorm.evaluation import THRESHOLD_GRID, CovNormConfig, DataBundle, compare, default_ranks, reports_to_csv


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=sorted(INSTANCE_KINDS), default="gradual")
    parser.add_argument("--d", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--fta-seeds", type=int, default=3)
    parser.add_argument("--out", help="CSV path (default: stdout)")
    args = parser.parse_args(argv)

    inst = INSTANCE_KINDS[args.kind](d=args.d, seed=args.seed)
    bundle = DataBundle.from_instance(inst)
    methods = [CovNormConfig(t) for t in THRESHOLD_GRID]
    for r in sorted(set(default_ranks(args.d))):
        methods += [CovNormConfig(ranks=(r, r)), BaselineSpec("svd", r), BaselineSpec("svd_fta", r),
                    BaselineSpec("pca_fta", r)]
        methods += [BaselineSpec("fta", r, s) for s in range(args.fta_seeds)]
    methods.append(BaselineSpec("bn"))
    text = reports_to_csv(compare(methods, bundle))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
