"""Feature extractor, variational bottleneck, detector head and attack discriminator.

Parameters live in a flat name -> array mapping:

=============  ==========================================================
``theta.i``    feature extractor, ``feature_layers`` tanh layers
``psi1.0``     bottleneck encoder, one tanh layer
``psi2``       linear mean projection
``psi3``       linear scale projection (softplus applied on top)
``omega``      linear detector, one logit (higher = more bonafide)
``phi.0/1``    discriminator: tanh hidden layer then ``n_attacks`` logits
=============  ==========================================================

Each layer has ``.weight`` of shape ``(fan_in, fan_out)`` and ``.bias``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .variants import Variant

SIGMA_FLOOR = 1e-6
# softplus(SIGMA_BIAS) == 1, so the initial scale is about one
SIGMA_BIAS = math.log(math.e - 1.0)
# scale head weights start small so sigma(x) stays near 1 for any input
SIGMA_WEIGHT_SCALE = 0.1


@dataclass(frozen=True)
class ModelDims:
    input_dim: int = 20
    hidden: int = 64
    z_dim: int = 16
    n_attacks: int = 3
    feature_layers: int = 2

    def __post_init__(self):
        for name in ("input_dim", "hidden", "z_dim", "n_attacks", "feature_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"model dimension {name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class ModelParams:
    dims: ModelDims
    arrays: dict[str, np.ndarray] = field(repr=False)

    @property
    def confidence_input(self) -> bool:
        return self.arrays["phi.0.weight"].shape[0] == self.dims.z_dim + 1

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.arrays.items()}

    def replace(self, arrays: Mapping[str, np.ndarray]) -> "ModelParams":
        return ModelParams(self.dims, {k: np.asarray(arrays[k], dtype=np.float64) for k in self.arrays})

    def names(self, group: str) -> list[str]:
        return [k for k in self.arrays if k.split(".")[0] == group]


def _layer(rng, fan_in, fan_out, scale=1.0):
    bound = scale / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)


def init_params(dims: ModelDims, rng: np.random.Generator, variant: Variant | str = Variant.IB_CAAN) -> ModelParams:
    """Fan-in scaled uniform weights ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, zero biases.

    Exceptions: the scale head uses a tenth of that bound and a bias of
    ``log(e - 1)`` so the initial sigma is close to 1.  The discriminator
    input width is ``z_dim + 1`` unless the variant drops the confidence
    input (IB-DANN), in which case it is ``z_dim``.  Layers are drawn in a
    fixed order so variants share every non-discriminator weight for a
    given seed.
    """
    variant = Variant(variant)
    arrays: dict[str, np.ndarray] = {}

    def put(name, wb):
        arrays[f"{name}.weight"], arrays[f"{name}.bias"] = wb

    width = dims.input_dim
    for i in range(dims.feature_layers):
        put(f"theta.{i}", _layer(rng, width, dims.hidden))
        width = dims.hidden
    put("psi1.0", _layer(rng, dims.hidden, dims.hidden))
    put("psi2", _layer(rng, dims.hidden, dims.z_dim))
    w3, b3 = _layer(rng, dims.hidden, dims.z_dim, scale=SIGMA_WEIGHT_SCALE)
    put("psi3", (w3, b3 + SIGMA_BIAS))
    put("omega", _layer(rng, dims.z_dim, 1))
    disc_in = dims.z_dim + 1 if variant != Variant.IB_DANN else dims.z_dim
    put("phi.0", _layer(rng, disc_in, dims.hidden))
    put("phi.1", _layer(rng, dims.hidden, dims.n_attacks))
    return ModelParams(dims, arrays)


def _linear(p: Mapping[str, Tensor], name: str, x: Tensor) -> Tensor:
    return ad.matmul(x, p[f"{name}.weight"]) + p[f"{name}.bias"]


@dataclass
class LatentSample:
    mu: Tensor
    sigma: Tensor
    epsilon: Tensor
    z: Tensor


@dataclass
class ForwardOutput:
    latent: LatentSample
    logit: Tensor
    confidence: Tensor
    attack_logits: Tensor | None = None
    spoof_rows: np.ndarray | None = None


def encode(p: Mapping[str, Tensor], x) -> Tensor:
    """Feature extractor: stacked tanh layers."""
    h = ad.as_tensor(x)
    i = 0
    while f"theta.{i}.weight" in p:
        h = ad.tanh(_linear(p, f"theta.{i}", h))
        i += 1
    return h


def vib_forward(p: Mapping[str, Tensor], h: Tensor, rng: np.random.Generator | None, stochastic: bool) -> LatentSample:
    e = ad.tanh(_linear(p, "psi1.0", h))
    mu = _linear(p, "psi2", e)
    sigma = ad.softplus(_linear(p, "psi3", e)) + SIGMA_FLOOR
    if stochastic:
        if rng is None:
            raise ValueError("stochastic sampling needs an rng")
        eps = ad.gaussian_sample(mu.shape, rng)
        z = mu + sigma * eps
    else:
        eps = ad.Tensor._wrap(np.zeros(mu.shape))
        z = mu
    return LatentSample(mu=mu, sigma=sigma, epsilon=eps, z=z)


def classify(p: Mapping[str, Tensor], z: Tensor) -> Tensor:
    return _linear(p, "omega", z)


def confidence_of(p: Mapping[str, Tensor], z: Tensor) -> Tensor:
    """Detector confidence with the detector weights held constant.

    Gradient still flows into ``z``; nothing reaches ``omega``.
    """
    w = ad.detach(p["omega.weight"])
    b = ad.detach(p["omega.bias"])
    return ad.sigmoid(ad.matmul(z, w) + b)


def discriminate(p: Mapping[str, Tensor], z_s: Tensor, confidence_s: Tensor | None, lam: float) -> Tensor:
    """Attack-type logits for spoofed latents behind gradient reversal.

    Pass ``confidence_s=None`` for the plain domain-adversarial input.
    """
    inp = ad.grad_reverse(z_s, lam)
    if confidence_s is not None:
        if confidence_s.shape != (z_s.shape[0], 1):
            raise ad.ShapeError("discriminate", z_s.shape, confidence_s.shape)
        inp = ad.concat_last_dim(inp, ad.grad_reverse(confidence_s, lam))
    h = ad.tanh(_linear(p, "phi.0", inp))
    return _linear(p, "phi.1", h)


def model_forward(
    p: Mapping[str, Tensor],
    x,
    y=None,
    variant: Variant | str = Variant.IB_CAAN,
    lam: float = 0.0,
    rng: np.random.Generator | None = None,
    mode: str = "train",
) -> ForwardOutput:
    """Run the network for one batch.

    In ``eval`` mode the latent is the mean, no randomness is drawn and the
    discriminator is never touched.  In ``train`` mode the adversarial
    branch runs on the spoofed rows (``y == 1``) when the variant has one
    and the batch contains any.
    """
    variant = Variant(variant)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"

    h = encode(p, x)
    latent = vib_forward(p, h, rng, stochastic=train and variant.stochastic)
    logit = classify(p, latent.z)
    out = ForwardOutput(latent=latent, logit=logit, confidence=ad.sigmoid(logit))

    if train and variant.adversarial and y is not None:
        rows = np.flatnonzero(np.asarray(y).reshape(-1) == 1)
        if rows.size:
            z_s = ad.take_rows(latent.z, rows)
            conf = confidence_of(p, z_s) if variant.confidence_aware else None
            out.attack_logits = discriminate(p, z_s, conf, lam)
            out.spoof_rows = rows
    return out


def predict_scores(params: ModelParams, x) -> np.ndarray:
    """Evaluation-mode detection scores (logits) as a 1-D array."""
    p = params.leaves(requires_grad=False)
    return model_forward(p, x, mode="eval").logit.data[:, 0].copy()
