"""Regenerate the packaged desk-scale quantile table of D_n."""
import argparse
from pathlib import Path

from gofstab.simulation import build_quantile_table

N = list(range(5, 51)) + [100, 200]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=10 ** 5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--output", default=str(Path(__file__).resolve().parents[1]
                                            / "src" / "gofstab" / "data" / "desk_D.csv"))
    args = ap.parse_args()
    build_quantile_table("D", N, M=args.M, seed=args.seed).to_csv(args.output)


if __name__ == "__main__":
    main()
