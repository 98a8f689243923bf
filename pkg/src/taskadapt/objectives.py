"""Training objectives for joint feature-distribution and task-semantic adaptation.

Five losses: the supervised cross-entropy on the labeled source batch, the
domain-adversarial loss routed through a gradient-reversal node, the
task-semantic critic score on a cross-domain distance descriptor, their
weighted total, and the feature-critic loss that trains the critic itself
from a pair of parameter snapshots. Expectations are realized as arithmetic
means over the batch or pivot set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .networks import (LiftedNetworks, NetworkParams, forward_classifier,
                       forward_discriminator, forward_feature, forward_mlp, lift_networks)
from .pivot import PivotSet, paired_pivot_matrices

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
CRITIC_ACTIVATIONS = ("tanh", "sigmoid", "softplus", "relu")
ADAPTOR_VARIANTS = ("literal", "pooled")

# width of the permutation-invariant pooled distance descriptor
POOLED_WIDTH = 9

_CRITIC_ACT = {"tanh": ad.tanh, "sigmoid": ad.sigmoid,
               "softplus": ad.softplus, "relu": ad.relu}


@dataclass(frozen=True)
class LossWeights:
    """Weights of the feature-adaptation and task-adaptation terms."""

    lambda_: float
    mu: float

    def __post_init__(self):
        for name, v in (("lambda", self.lambda_), ("mu", self.mu)):
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")


def _as_networks(nets) -> LiftedNetworks:
    if isinstance(nets, LiftedNetworks):
        return nets
    if isinstance(nets, NetworkParams):
        return lift_networks(nets)[0]
    raise TypeError(f"expected NetworkParams or LiftedNetworks, got {type(nets).__name__}")


def classification_loss(probabilities: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class.

    Probabilities are clamped at PROB_FLOOR before the log so saturated
    predictions cannot produce infinities; any clamped entry is flagged in
    the debug log.
    """
    probs = probabilities if isinstance(probabilities, Tensor) else Tensor(probabilities)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels of shape {labels.shape} do not match batch {probs.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    p_true = (probs * onehot).sum(axis=1)
    if np.any(p_true.data <= PROB_FLOOR):
        logger.debug("classification_loss: %d probabilities clamped at %g",
                     int(np.sum(p_true.data <= PROB_FLOOR)), PROB_FLOOR)
    return -ad.log(ad.clamp(p_true, PROB_FLOOR, 1.0)).mean()


def domain_adversarial_loss(phi, omega, x_s, x_t, reverse_gradient=True) -> Tensor:
    """Binary cross-entropy of the domain discriminator on extracted features.

    Source features carry domain label 1 and target features label 0. The
    features pass through a gradient-reversal node before the discriminator,
    so one backward pass trains the discriminator normally while pushing the
    feature extractor in the adversarial direction. ``reverse_gradient=False``
    builds the same loss without the reversal node (diagnostics only).
    """
    f_s = forward_feature(phi, x_s)
    f_t = forward_feature(phi, x_t)
    if f_s.shape[0] == 0 or f_t.shape[0] == 0:
        raise ValueError("domain_adversarial_loss: batches must be nonempty")
    if reverse_gradient:
        f_s = ad.gradient_reversal(f_s)
        f_t = ad.gradient_reversal(f_t)
    d_s = ad.clamp(forward_discriminator(omega, f_s), PROB_FLOOR, 1.0 - PROB_FLOOR)
    d_t = ad.clamp(forward_discriminator(omega, f_t), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return -ad.log(d_s).mean() - ad.log(1.0 - d_t).mean()


def gram_features(f_s: Tensor, f_t: Tensor) -> Tensor:
    """Row-major flattened matrix of squared distances between feature rows."""
    return ad.flatten(ad.pairwise_sqdist(f_s, f_t))


def pooled_gram_features(f_s: Tensor, f_t: Tensor) -> Tensor:
    """Fixed-width summary of the cross-domain distance matrix.

    Pools the per-source-row means, the per-target-row means and the full
    matrix down to (mean, min, max) triples, which makes the descriptor
    invariant to independent row permutations of either feature matrix.
    """
    g = ad.pairwise_sqdist(f_s, f_t)
    rows = g.mean(axis=1)
    cols = g.mean(axis=0)
    parts = [rows.mean(), rows.min(), rows.max(),
             cols.mean(), cols.min(), cols.max(),
             g.mean(), g.min(), g.max()]
    return ad.concat1d(parts)


def task_semantic_loss(theta, f_s, f_t, variant="literal") -> Tensor:
    """Critic score of the cross-domain feature geometry, as a scalar.

    ``literal`` feeds the flattened distance matrix to the critic MLP;
    ``pooled`` feeds the permutation-invariant summary instead. Gradients
    flow both into the critic parameters and into the feature matrices.
    """
    if variant not in ADAPTOR_VARIANTS:
        raise ValueError(f"unknown adaptor variant {variant!r}")
    f_s = f_s if isinstance(f_s, Tensor) else Tensor(f_s)
    f_t = f_t if isinstance(f_t, Tensor) else Tensor(f_t)
    desc = gram_features(f_s, f_t) if variant == "literal" else pooled_gram_features(f_s, f_t)
    out = forward_mlp(theta, desc.reshape((1, desc.size)))
    return out.mean()


def total_loss(nets, theta, weights: LossWeights, x_s, y_s, x_t,
               adaptor_variant="literal"):
    """Weighted sum of the three training terms with a per-term breakdown.

    Zero-weighted terms are omitted from the graph entirely, so lambda=0
    removes the discriminator branch and mu=0 never touches the critic.
    Returns (scalar Tensor, breakdown dict of raw unweighted values).
    """
    nets = _as_networks(nets)
    probs = forward_classifier(nets.psi, forward_feature(nets.phi, x_s))
    l_cls = classification_loss(probs, y_s)
    total = l_cls
    breakdown = {"l_cls": float(l_cls.data), "l_feat": 0.0, "l_task": 0.0}
    if weights.lambda_ > 0:
        l_feat = domain_adversarial_loss(nets.phi, nets.omega, x_s, x_t)
        breakdown["l_feat"] = float(l_feat.data)
        total = total + weights.lambda_ * l_feat
    if weights.mu > 0:
        f_s = forward_feature(nets.phi, x_s)
        f_t = forward_feature(nets.phi, x_t)
        l_task = task_semantic_loss(theta, f_s, f_t, adaptor_variant)
        breakdown["l_task"] = float(l_task.data)
        total = total + weights.mu * l_task
    breakdown["total"] = float(total.data)
    return total, breakdown


def critic_activation(kind: str):
    if kind not in CRITIC_ACTIVATIONS:
        raise ValueError(f"unknown critic activation {kind!r}")
    return _CRITIC_ACT[kind]


def feature_critic_loss(theta, pivot: PivotSet, params_old: NetworkParams,
                        params_new: NetworkParams, sigma="tanh",
                        adaptor_variant="literal") -> Tensor:
    """Critic-training loss from two parameter snapshots on the pivot data.

    Pivot source and target halves are paired by per-class confidence rank;
    the critic scores the cross-domain feature geometry once under the old
    snapshot and once under the new one, and the loss is the activation of
    (new score - old score). Both snapshots are constants: the gradient
    reaches only the critic parameters.
    """
    act = critic_activation(sigma)
    xs, xt = paired_pivot_matrices(pivot)
    if xs.shape[0] != xt.shape[0]:
        raise ValueError(
            f"pivot halves of unequal size: {xs.shape[0]} source vs {xt.shape[0]} target rows")
    if xs.shape[0] == 0:
        raise ValueError("pivot is empty")
    scores = {}
    for tag, params in (("old", params_old), ("new", params_new)):
        f_s = forward_feature(params.phi, xs).data
        f_t = forward_feature(params.phi, xt).data
        scores[tag] = task_semantic_loss(theta, Tensor(f_s), Tensor(f_t), adaptor_variant)
    return act(scores["new"] - scores["old"])
