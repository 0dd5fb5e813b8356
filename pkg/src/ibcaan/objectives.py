"""Loss terms, the reversal-strength schedule, and their combination."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .variants import Variant


@dataclass(frozen=True)
class LossBreakdown:
    l_c: float
    l_z: float | None
    l_d: float | None
    total: float
    beta: float
    alpha: float

    def as_dict(self) -> dict:
        return {"l_c": self.l_c, "l_z": self.l_z, "l_d": self.l_d, "total": self.total}


def class_weights(y) -> tuple[float, float]:
    """Inverse class frequency weights ``(w_bona, w_spoof)`` normalised to sum to 2."""
    y = np.asarray(y)
    n = y.size
    n_spoof = int(np.count_nonzero(y == 1))
    n_bona = n - n_spoof
    if n_bona == 0 or n_spoof == 0:
        raise ValueError("class weights need both bonafide and spoof examples")
    return 2.0 * n_spoof / n, 2.0 * n_bona / n


def weighted_bce(logit: Tensor, y, weights: tuple[float, float] = (1.0, 1.0)) -> Tensor:
    """Class-weighted binary cross-entropy on a single detection logit.

    The logit is a bonafide score: ``sigmoid(logit)`` is the probability of
    bonafide, so label 0 (bonafide) is the positive class.  Per example the
    loss is ``w_y * softplus(-logit)`` for bonafide and ``w_y *
    softplus(logit)`` for spoof, which is the usual
    ``-t log(s) - (1 - t) log(1 - s)`` without overflow.  Returns the batch
    mean.
    """
    y = np.asarray(y).reshape(-1)
    if y.size == 0:
        raise ValueError("weighted_bce: empty batch")
    if logit.shape != (y.size, 1):
        raise ad.ShapeError("weighted_bce", logit.shape, (y.size, 1))
    w_bona, w_spoof = weights
    if not (w_bona > 0 and w_spoof > 0):
        raise ValueError(f"class weights must be positive, got {weights}")
    spoof = (y == 1).astype(np.float64)[:, None]
    bona = 1.0 - spoof
    w = (bona * w_bona + spoof * w_spoof)
    per = ad.softplus(ad.neg(logit)) * (w * bona) + ad.softplus(logit) * (w * spoof)
    return ad.reduce_mean(per)


def ce_multiclass(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy, ``logsumexp(row) - row[label]``."""
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise ad.ShapeError("ce_multiclass", logits.shape, labels.shape)
    if labels.size == 0:
        raise ValueError("ce_multiclass: empty batch")
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"attack labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return ad.reduce_mean(ad.logsumexp(logits) - ad.pick(logits, labels))


def kl_std_normal(mu: Tensor, sigma: Tensor) -> Tensor:
    """KL( N(mu, diag sigma^2) || N(0, I) ), summed over dims, averaged over the batch."""
    if mu.shape != sigma.shape or mu.ndim != 2:
        raise ad.ShapeError("kl_std_normal", mu.shape, sigma.shape)
    if np.any(sigma.data <= 0):
        raise ValueError("kl_std_normal: sigma must be strictly positive")
    per = mu * mu + sigma * sigma - 2.0 * ad.log(sigma) - 1.0
    return 0.5 * ad.reduce_mean(ad.reduce_sum(per, axis=1))


def grl_lambda(p: float) -> float:
    """Reversal strength at training progress ``p``: ``2 / (1 + exp(-10 p)) - 1``."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        warnings.warn(f"training progress {p} outside [0, 1]; clamping", stacklevel=2)
        p = min(max(p, 0.0), 1.0)
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0


def total_loss(
    l_c: Tensor,
    l_z: Tensor | None,
    l_d: Tensor | None,
    variant: Variant | str,
    beta: float,
    alpha: float,
) -> tuple[Tensor, LossBreakdown]:
    """Combine the terms a variant uses into ``l_c + beta*l_z + alpha*l_d``.

    Terms the variant does not have are dropped (recorded as ``None``) even
    if passed in.  An adversarial variant may still have ``l_d=None`` when a
    batch holds no spoofed rows.
    """
    variant = Variant(variant)
    if beta < 0 or alpha < 0:
        raise ValueError(f"beta and alpha must be nonnegative, got beta={beta}, alpha={alpha}")
    if not variant.uses_kl:
        l_z = None
    if not variant.adversarial:
        l_d = None

    total = l_c
    if l_z is not None:
        total = total + beta * l_z
    if l_d is not None:
        total = total + alpha * l_d

    breakdown = LossBreakdown(
        l_c=l_c.item(),
        l_z=None if l_z is None else l_z.item(),
        l_d=None if l_d is None else l_d.item(),
        total=total.item(),
        beta=float(beta),
        alpha=float(alpha),
    )
    return total, breakdown
