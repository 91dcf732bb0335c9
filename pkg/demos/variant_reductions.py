"""Numerical proofs of the architecture's special cases.

Three exact reductions, each checked bit for bit on random tensors:

  1. shrinkage is a difference of two rectifier passes,
  2. a zero-threshold spherical coder is CReLU after sphere
     normalization,
  3. discarding the negative half of CReLU is plain ReLU.
"""

import numpy as np

from ebssc import ThresholdPair, ssc_encode, tensor
from ebssc.shrinkage import crelu_split, shrink


def check(label, a, b):
    exact = np.array_equal(np.asarray(a), np.asarray(b))
    print(f"  {'ok ' if exact else 'FAIL'}  {label}")
    return exact


def main():
    rng = np.random.default_rng(0)
    ok = True

    v = rng.standard_normal((6, 9, 9)).astype(np.float32)
    bp = rng.uniform(0.05, 0.4, (6, 1, 1)).astype(np.float32)
    bm = rng.uniform(0.05, 0.4, (6, 1, 1)).astype(np.float32)
    pair = ThresholdPair(beta_plus=bp, beta_minus=bm)
    print("shrinkage vs two rectifiers:")
    ok &= check("shrink(v) == relu(v - bp) - relu(-(v + bm))",
                shrink(v, pair),
                np.maximum(v - bp, 0) - np.maximum(-(v + bm), 0))

    print("zero-threshold coding vs normalized CReLU:")
    x = rng.standard_normal((1, 10, 10))
    bank = rng.standard_normal((4, 1, 3, 3))
    res = ssc_encode(x, bank, ThresholdPair.symmetric(0.0), pad=0)
    corr = tensor.cross_correlate(x, bank, pad=0)
    ok &= check("code == v / ||v||", res.code, corr / tensor.l2_norm(corr))
    halves = crelu_split(res.code)
    ok &= check("positive half == max(code, 0)",
                halves[:4], np.maximum(res.code, 0))
    ok &= check("negative half == min(code, 0)",
                halves[4:], np.minimum(res.code, 0))

    print("CReLU minus its negative half vs ReLU:")
    t = rng.standard_normal((5, 7, 7)).astype(np.float32)
    parts = crelu_split(t)
    ok &= check("positive branch == relu(t)", parts[:5], np.maximum(t, 0))
    ok &= check("both branches reassemble t", parts[:5] + parts[5:], t)

    print("\nall reductions exact" if ok else "\nsome reduction FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
