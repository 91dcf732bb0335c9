"""Closed-form spherical sparse coding.

The coding problem maximizes, over codes z in the unit L2 ball,

    <x, sum_k d_k * z_k> - P(z),

where P is an asymmetric L1 penalty with per-coefficient thresholds
(beta_plus, beta_minus).  Writing v = cross-correlation of x with the bank,
the objective separates per coefficient up to the shared ball constraint,
and the maximizer has a two-step closed form:

    z_tilde = shrink(v; beta_plus, beta_minus)
    z_star  = z_tilde / ||z_tilde||_2      (zero when z_tilde = 0)

with ball multiplier lambda_star = ||z_tilde||_2 / 2 and optimal value
||z_tilde||_2.  Class-conditional coding swaps in thresholds built from
per-class arm widths and a shared channel offset (``ClassBiasParams``).

``code_from_correlation`` additionally accepts signed linear bonus terms
(c_plus on the positive part, c_minus on the negative part); these arise
when a later layer's reconstruction feeds back through a split
nonlinearity during unrolled inference.  With both bonuses zero it reduces
exactly to shrink-then-normalize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .shrinkage import ThresholdPair, shrink

__all__ = ["ClassBiasParams", "CodeResult", "UnitScaleResult",
           "class_thresholds", "ssc_encode", "ebssc_encode",
           "code_from_correlation", "unit_scale_to_lsq"]


@dataclass(frozen=True)
class ClassBiasParams:
    """Per-class non-negative arm widths plus a shared channel offset.

    w_hat_plus / w_hat_minus have shape (Y, K) for weights tied across
    locations, or (Y, K, H, W) for full spatial maps.  offset has shape
    (K,) and is shared by every class; it shifts the dead zone without
    changing its width, so properness of the induced thresholds holds for
    any real offset as long as the arm widths stay non-negative.
    """

    w_hat_plus: np.ndarray
    w_hat_minus: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        wp = np.asarray(self.w_hat_plus)
        wm = np.asarray(self.w_hat_minus)
        b = np.asarray(self.offset)
        if wp.shape != wm.shape:
            raise ValueError(
                f"arm width shapes differ: {wp.shape} vs {wm.shape}")
        if wp.ndim not in (2, 4):
            raise ValueError(
                f"arm widths must be (Y, K) or (Y, K, H, W), got {wp.shape}")
        if b.ndim != 1 or b.shape[0] != wp.shape[1]:
            raise ValueError(
                f"offset must be (K,) with K={wp.shape[1]}, got {b.shape}")
        if not (np.all(np.isfinite(wp)) and np.all(np.isfinite(wm))
                and np.all(np.isfinite(b))):
            raise ValueError("class bias parameters must be finite")
        if np.any(wp < 0) or np.any(wm < 0):
            raise ValueError("arm widths must be non-negative")

    @property
    def num_classes(self):
        return np.asarray(self.w_hat_plus).shape[0]

    @property
    def tied(self):
        """True when weights are per-channel scalars, not spatial maps."""
        return np.asarray(self.w_hat_plus).ndim == 2


def _lift(w):
    """(K,) -> (K, 1, 1) so class weights broadcast over feature maps."""
    return w[:, None, None] if w.ndim == 1 else w


def class_thresholds(params, label):
    """Thresholds selecting class ``label``:

    beta_plus = w_hat_plus[label] + offset,
    beta_minus = w_hat_minus[label] - offset.
    """
    wp = np.asarray(params.w_hat_plus)[label]
    wm = np.asarray(params.w_hat_minus)[label]
    b = np.asarray(params.offset)
    if wp.ndim > 1:
        b = b[:, None, None]
    return ThresholdPair(beta_plus=_lift(wp + b), beta_minus=_lift(wm - b))


@dataclass(frozen=True)
class CodeResult:
    """Output of a closed-form coding step."""

    code: np.ndarray
    pre_projection: np.ndarray
    lambda_star: float
    thresholds_used: ThresholdPair

    @property
    def optimal_energy(self):
        """Value of the coding objective at the optimum: ||z_tilde||_2."""
        return 2.0 * self.lambda_star


def _branch_code(v, beta_plus, beta_minus, c_plus=None, c_minus=None):
    """Per-coefficient maximizer of v·z - P(z) + c+·z+ + c-·z- before
    projection.  Returns (z_tilde, pos_mask, neg_mask); masks flag strictly
    active coefficients (used as exact subgradients away from kinks).
    """
    pos_drive = v - beta_plus
    if c_plus is not None:
        pos_drive = pos_drive + c_plus
    pos_part = np.maximum(pos_drive, 0.0)

    finite_neg = np.isfinite(beta_minus)
    neg_drive = v + np.where(finite_neg, beta_minus, 0.0)
    if c_minus is not None:
        neg_drive = neg_drive + c_minus
    neg_part = np.where(finite_neg, np.minimum(neg_drive, 0.0), 0.0)

    choose_pos = pos_part >= -neg_part
    z_tilde = np.where(choose_pos, pos_part, neg_part)
    pos_mask = choose_pos & (pos_part > 0)
    neg_mask = ~choose_pos & (neg_part < 0)
    return z_tilde, pos_mask, neg_mask


def code_from_correlation(v, thresholds, c_plus=None, c_minus=None):
    """Solve the coding problem given the correlation tensor directly."""
    thresholds.require_proper()
    v = np.asarray(v)
    if c_plus is None and c_minus is None:
        z_tilde = shrink(v, thresholds)
    else:
        z_tilde, _, _ = _branch_code(
            v, np.asarray(thresholds.beta_plus),
            np.asarray(thresholds.beta_minus), c_plus, c_minus)
        z_tilde = z_tilde.astype(v.dtype, copy=False)
    norm = tensor.l2_norm(z_tilde)
    if norm > 0:
        code = (z_tilde / norm).astype(v.dtype, copy=False)
    else:
        code = np.zeros_like(z_tilde)
    return CodeResult(code=code, pre_projection=z_tilde,
                      lambda_star=0.5 * norm, thresholds_used=thresholds)


def ssc_encode(x, bank, thresholds, pad=0):
    """Spherical sparse coding with label-independent thresholds.

    ``thresholds`` may be a ThresholdPair or a scalar beta (symmetric
    dead zone [-beta, beta]).
    """
    if not isinstance(thresholds, ThresholdPair):
        thresholds = ThresholdPair.symmetric(float(thresholds))
    v = tensor.cross_correlate(x, bank, pad)
    return code_from_correlation(v, thresholds)


def ebssc_encode(x, bank, params, label, pad=0):
    """Class-conditional coding: thresholds come from ``params`` at
    ``label``; everything else matches ``ssc_encode``."""
    v = tensor.cross_correlate(x, bank, pad)
    return code_from_correlation(v, class_thresholds(params, label))


@dataclass(frozen=True)
class UnitScaleResult:
    """Rescaling of a unit-sphere code to the least-squares solution."""

    scale: float
    reconstruction: np.ndarray
    degenerate: bool


def unit_scale_to_lsq(code, x, bank, beta, pad=0):
    """Map the unit-problem solution at level beta/2 to the solution of
    ||x - r||^2 + beta·||z||_1: the optimal reconstruction is eps·u with
    u = reconstruct(code) and eps = <x, u> - (beta/2)·||code||_1, clamped
    at zero (degenerate instances have the zero code as LSQ optimum).
    """
    u = tensor.reconstruct(np.asarray(code, dtype=np.float64), bank, pad)
    eps = tensor.inner(x, u) - 0.5 * float(beta) * tensor.l1_norm(code)
    if eps <= 0:
        return UnitScaleResult(scale=0.0, reconstruction=np.zeros_like(u),
                               degenerate=True)
    return UnitScaleResult(scale=eps, reconstruction=eps * u,
                           degenerate=False)
