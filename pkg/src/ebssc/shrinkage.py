"""Asymmetric two-sided shrinkage and the concatenated rectifier split.

The shrink operator with threshold pair (beta_plus, beta_minus) is

    shrink(v) = v - beta_plus   where v - beta_plus > 0
              = v + beta_minus  where v + beta_minus < 0
              = 0               otherwise,

i.e. a dead zone [-beta_minus, beta_plus] whose ends are pulled to zero.
The pair is *proper* when -beta_minus <= beta_plus elementwise, which makes
the operator single-valued and monotone. Special cases:

* symmetric soft threshold at level b:   (beta_plus, beta_minus) = (b, b)
* one-sided rectifier (ReLU):            beta_plus = 0 with the negative
  branch disabled; a non-finite beta_minus is the sentinel for "disabled"
  (the dead zone extends to -inf).

Equivalently, for finite pairs, shrink(v) = relu(v - beta_plus)
- relu(-(v + beta_minus)) — two rectifiers back to back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ImproperThresholdError

__all__ = ["ThresholdPair", "shrink", "shrink_subgradient", "crelu_split"]


@dataclass(frozen=True)
class ThresholdPair:
    """Upper/lower shrinkage thresholds, broadcastable against the input.

    `beta_plus` gates the positive branch (active where v > beta_plus) and
    `beta_minus` the negative branch (active where v < -beta_minus). Entries
    may be scalars, per-channel (K, 1, 1) arrays, or full per-location maps.
    """

    beta_plus: np.ndarray
    beta_minus: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.beta_plus)
        bm = np.asarray(self.beta_minus)
        object.__setattr__(self, "beta_plus", bp)
        object.__setattr__(self, "beta_minus", bm)
        if np.isnan(bp).any() or np.isnan(bm).any():
            raise ImproperThresholdError("thresholds contain NaN")
        if np.isinf(bp).any() and not (bp[np.isinf(bp)] > 0).all():
            raise ImproperThresholdError("beta_plus may not be -inf")

    @classmethod
    def symmetric(cls, beta):
        """The standard soft threshold at level beta (dead zone [-beta, beta])."""
        return cls(np.asarray(beta), np.asarray(beta))

    @classmethod
    def rectifier(cls):
        """The ReLU limit: zero upper threshold, negative branch disabled."""
        return cls(np.asarray(0.0), np.asarray(-np.inf))

    def is_proper(self):
        """-beta_minus <= beta_plus wherever both branches are enabled."""
        bp, bm = np.broadcast_arrays(self.beta_plus, self.beta_minus)
        ok = np.ones(bp.shape, dtype=bool)
        both = np.isfinite(bp) & np.isfinite(bm)
        ok[both] = -bm[both] <= bp[both]
        return bool(ok.all())

    def require_proper(self):
        if not self.is_proper():
            raise ImproperThresholdError(
                "threshold pair violates -beta_minus <= beta_plus")
        return self


def _branch_masks(v, pair):
    """Boolean (positive, negative) activity masks; kinks count as inactive."""
    bp = np.asarray(pair.beta_plus)
    bm = np.asarray(pair.beta_minus)
    pos = v - bp > 0
    if np.isinf(bm).any():
        neg = np.isfinite(bm) & (v + bm < 0)
    else:
        neg = v + bm < 0
    return pos, neg


def shrink(v, pair):
    """Apply two-sided shrinkage elementwise. Raises on improper pairs."""
    pair.require_proper()
    v = np.asarray(v)
    pos, neg = _branch_masks(v, pair)
    shape = np.broadcast_shapes(v.shape, np.shape(pair.beta_plus),
                                np.shape(pair.beta_minus))
    out = np.zeros(shape, dtype=v.dtype)
    np.copyto(out, v - np.asarray(pair.beta_plus, dtype=v.dtype), where=pos)
    bm = np.where(np.isfinite(pair.beta_minus), pair.beta_minus, 0.0)
    np.copyto(out, v + np.asarray(bm, dtype=v.dtype), where=neg)
    return out


def shrink_subgradient(v, pair):
    """{0, 1} mask: 1 where shrink is locally the identity-plus-shift.

    Zero inside the dead zone and exactly at the kinks, matching the
    convention used throughout backpropagation.
    """
    pair.require_proper()
    v = np.asarray(v)
    pos, neg = _branch_masks(v, pair)
    return (pos | neg).astype(v.dtype)


def crelu_split(v, axis=-3):
    """Concatenate positive and negative parts along the channel axis.

    Returns [max(v, 0); min(v, 0)], doubling the channel count. The two
    halves have disjoint support and sum back to `v` exactly.
    """
    v = np.asarray(v)
    return np.concatenate([np.maximum(v, 0), np.minimum(v, 0)], axis=axis)
