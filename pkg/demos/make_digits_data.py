"""Materialize the synthetic digit corpus as IDX files.

The training tools read the same four-file layout used by the classic
MNIST distribution, so anything written here can also be swapped out
for real data later.
"""

import argparse
import os

from ebssc.data import write_digits_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data-digits")
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--test", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    write_digits_idx(args.out, args.train, args.test, args.seed)
    for name in sorted(os.listdir(args.out)):
        size = os.path.getsize(os.path.join(args.out, name))
        print(f"{name:28s} {size:>10,d} bytes")
    print(f"\nwrote {args.train} training / {args.test} test digits "
          f"to {args.out}/")


if __name__ == "__main__":
    main()
