"""The two-step training loop plus inference.

Each epoch snapshots the main model into an assist copy, runs Nesterov-SGD
mini-batch updates of the main bundle on the weighted total loss, selects
fresh pivot data, and then takes one plain gradient step on the critic
parameters using the feature-critic loss between the assist snapshot and
the updated main model. The main learning rate follows a polynomial decay
in the cumulative iteration count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .datasets import DomainDataset
from .evaluation import compute_prf, mmd
from .networks import (AdaptorParams, NetworkParams, default_specs, feature_matrix,
                       forward_classifier, forward_feature, init_networks, lift_mlp,
                       lift_networks, network_arrays)
from .objectives import (ADAPTOR_VARIANTS, CRITIC_ACTIVATIONS, LossWeights,
                         POOLED_WIDTH, classification_loss, domain_adversarial_loss,
                         feature_critic_loss, task_semantic_loss, total_loss)
from .pivot import PIVOT_STRATEGIES, pivot_csv_rows, select_pivot

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "l_cls", "l_feat", "l_task", "l_val", "mmd",
               "val_precision", "val_recall", "val_f1", "val_accuracy", "lr")

MMD_PROBE_SIZE = 256


class TrainingAborted(RuntimeError):
    """A non-finite loss or gradient surfaced during training."""


@dataclass(frozen=True)
class TrainConfig:
    """All hyperparameters and variant switches for one training run."""

    lambda_: float = 0.5
    mu: float = 0.001
    alpha: float = 0.004
    beta: float = 0.0005
    gamma: float = 0.001
    upsilon: float = 0.75
    momentum: float = 0.9
    batch_per_domain: int = 16
    m: int = 8
    epochs: int = 40
    seed: int = 0
    sigma: str = "tanh"
    adaptor_variant: str = "literal"
    pivot_strategy: str = "top_m"
    n_classes: int = 2
    feature_widths: tuple = (64, 32)
    discriminator_hidden: tuple = (32,)
    adaptor_hidden: tuple = (128, 64)
    dump_pivots: bool = False

    def __post_init__(self):
        object.__setattr__(self, "feature_widths", tuple(self.feature_widths))
        object.__setattr__(self, "discriminator_hidden", tuple(self.discriminator_hidden))
        object.__setattr__(self, "adaptor_hidden", tuple(self.adaptor_hidden))
        for name in ("alpha", "beta", "gamma", "upsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.lambda_ < 0 or self.mu < 0:
            raise ValueError("loss weights must be >= 0")
        if self.m < 1:
            raise ValueError(f"pivot size m must be >= 1, got {self.m}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_per_domain != self.m * self.n_classes:
            raise ValueError(
                f"batch_per_domain must equal m * n_classes "
                f"({self.m} * {self.n_classes}), got {self.batch_per_domain}")
        if self.sigma not in CRITIC_ACTIVATIONS:
            raise ValueError(f"unknown critic activation {self.sigma!r}")
        if self.adaptor_variant not in ADAPTOR_VARIANTS:
            raise ValueError(f"unknown adaptor variant {self.adaptor_variant!r}")
        if self.pivot_strategy not in PIVOT_STRATEGIES:
            raise ValueError(f"unknown pivot strategy {self.pivot_strategy!r}")

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_, self.mu)

    def to_json_dict(self) -> dict:
        return {"lambda": self.lambda_, "mu": self.mu, "alpha": self.alpha,
                "beta": self.beta, "gamma": self.gamma, "upsilon": self.upsilon,
                "momentum": self.momentum, "batch_per_domain": self.batch_per_domain,
                "m": self.m, "epochs": self.epochs, "seed": self.seed,
                "sigma": self.sigma, "adaptor_variant": self.adaptor_variant,
                "pivot_strategy": self.pivot_strategy, "n_classes": self.n_classes,
                "feature_widths": list(self.feature_widths),
                "discriminator_hidden": list(self.discriminator_hidden),
                "adaptor_hidden": list(self.adaptor_hidden),
                "dump_pivots": self.dump_pivots}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    l_cls: float
    l_feat: float
    l_task: float
    l_val: float
    mmd: float
    val_precision: float
    val_recall: float
    val_f1: float
    val_accuracy: float
    lr: float
    theta_updated: bool = False
    warnings: tuple = ()

    def csv_row(self) -> str:
        vals = [str(self.epoch)] + [repr(float(getattr(self, c)))
                                    for c in LOG_COLUMNS[1:]]
        return ",".join(vals)


@dataclass
class TrainLog:
    """One record per completed epoch, mirrored to CSV when a path is given."""

    records: list = field(default_factory=list)

    @staticmethod
    def csv_header() -> str:
        return ",".join(LOG_COLUMNS)

    def to_csv(self) -> str:
        return "\n".join([self.csv_header()] + [r.csv_row() for r in self.records]) + "\n"


@dataclass
class FitResult:
    params: NetworkParams
    adaptor: AdaptorParams
    log: TrainLog


def lr_schedule(alpha: float, gamma: float, upsilon: float, k: int) -> float:
    """Polynomially decaying rate alpha * (1 + gamma*k) ** (-upsilon)."""
    return alpha * (1.0 + gamma * k) ** (-upsilon)


class NesterovSGD:
    """Nesterov momentum over a fixed list of parameter arrays.

    The caller evaluates gradients at the lookahead point w + momentum * v,
    then ``step`` applies v <- momentum * v - lr * g and w <- w + v in place.
    With zero momentum this reduces to plain gradient descent.
    """

    def __init__(self, params: list, momentum: float):
        self.params = params
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def lookahead(self) -> list:
        if self.momentum == 0.0:
            return [p.copy() for p in self.params]
        return [p + self.momentum * v for p, v in zip(self.params, self.velocity)]

    def step(self, grads: list, lr: float) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v -= lr * g
            p += v


def _check_finite_breakdown(breakdown: dict) -> None:
    for name, value in breakdown.items():
        if not np.isfinite(value):
            raise TrainingAborted(f"non-finite loss term {name} = {value}")


def _blame_nonfinite_gradient(params, theta_params, weights, x_s, y_s, x_t,
                              look, variant) -> str:
    """Identify which loss term produced the non-finite gradient."""

    def term_grads_finite(build):
        nets, tensors = lift_networks(params, requires_grad=True, arrays=look)
        ad.backward(build(nets))
        return all(t.grad is None or np.all(np.isfinite(t.grad)) for t in tensors)

    theta = lift_mlp(theta_params, requires_grad=False)[0]
    probes = [("l_cls", lambda nets: classification_loss(
        forward_classifier(nets.psi, forward_feature(nets.phi, x_s)), y_s))]
    if weights.lambda_ > 0:
        probes.append(("l_feat", lambda nets: domain_adversarial_loss(
            nets.phi, nets.omega, x_s, x_t)))
    if weights.mu > 0:
        probes.append(("l_task", lambda nets: task_semantic_loss(
            theta, forward_feature(nets.phi, x_s),
            forward_feature(nets.phi, x_t), variant)))
    for name, build in probes:
        if not term_grads_finite(build):
            return name
    return "total"


def update_main(params: NetworkParams, adaptor: AdaptorParams, x_s, y_s, x_t,
                weights: LossWeights, optimizer: NesterovSGD, lr: float,
                adaptor_variant: str = "literal") -> dict:
    """One Nesterov-SGD step of the main bundle; the critic stays frozen.

    Gradients are evaluated at the lookahead parameters. Returns the raw
    per-term loss breakdown. Aborts on any non-finite loss or gradient,
    naming the offending term.
    """
    look = optimizer.lookahead()
    nets, tensors = lift_networks(params, requires_grad=True, arrays=look)
    theta = lift_mlp(adaptor.theta, requires_grad=False)[0]
    loss, breakdown = total_loss(nets, theta, weights, x_s, y_s, x_t, adaptor_variant)
    _check_finite_breakdown(breakdown)
    ad.backward(loss)
    grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    if any(not np.all(np.isfinite(g)) for g in grads):
        term = _blame_nonfinite_gradient(params, adaptor.theta, weights,
                                         x_s, y_s, x_t, look, adaptor_variant)
        raise TrainingAborted(f"non-finite gradient in loss term {term}")
    optimizer.step(grads, lr)
    return breakdown


def update_adaptor(adaptor: AdaptorParams, pivot, params_old: NetworkParams,
                   params_new: NetworkParams, beta: float, sigma: str = "tanh",
                   adaptor_variant: str = "literal"):
    """One plain gradient step on the critic; returns (l_val, warning).

    Skips (returning l_val 0.0 and the reason) when the pivot does not hold
    a complete m-per-class complement on both domains, since the critic
    input width is fixed by the full pivot size.
    """
    if not pivot.is_full():
        counts = {c: (len(pivot.source_by_class[c]), len(pivot.target_by_class[c]))
                  for c in pivot.classes}
        warning = f"critic update skipped: incomplete pivot {counts}"
        logger.debug(warning)
        return 0.0, warning
    theta, tensors = lift_mlp(adaptor.theta, requires_grad=True)
    loss = feature_critic_loss(theta, pivot, params_old, params_new, sigma, adaptor_variant)
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingAborted(f"non-finite loss term l_val = {value}")
    ad.backward(loss)
    if any(t.grad is not None and not np.all(np.isfinite(t.grad)) for t in tensors):
        raise TrainingAborted("non-finite gradient in loss term l_val")
    for arr, t in zip(adaptor.theta.arrays(), tensors):
        if t.grad is not None:
            arr -= beta * t.grad
    return value, None


def predict(params: NetworkParams, x: np.ndarray):
    """Class labels (argmax, ties to the lowest index) and softmax probabilities."""
    probs = forward_classifier(params.psi, forward_feature(params.phi, x)).data
    return probs.argmax(axis=1), probs


def _gram_width(config: TrainConfig) -> int:
    if config.adaptor_variant == "pooled":
        return POOLED_WIDTH
    return config.batch_per_domain * config.batch_per_domain


def init_from_config(config: TrainConfig, input_dim: int):
    specs = default_specs(input_dim, config.n_classes, _gram_width(config),
                          config.feature_widths, config.discriminator_hidden,
                          config.adaptor_hidden)
    return init_networks(*specs, seed=config.seed)


def fit(config: TrainConfig, data: DomainDataset, log_path=None,
        step_callback=None) -> FitResult:
    """Run the full two-step training loop and return the final parameters.

    Per epoch: snapshot the assist copy, update the main bundle over paired
    mini-batches (one pass over the larger domain, cycling the smaller),
    select pivot data, then take the critic step against the snapshot. When
    mu is zero the critic is never read or written and pivot selection is
    skipped. The log is written incrementally when ``log_path`` is given, so
    an aborted run leaves the completed epochs on disk.
    """
    n_s, n_t = len(data.source_x), len(data.target_x)
    if n_s == 0 or n_t == 0 or len(data.validation_x) == 0:
        raise ValueError("fit requires nonempty source, target and validation splits")
    b = config.batch_per_domain
    steps_per_epoch = max(n_s, n_t) // b
    if config.epochs > 0 and steps_per_epoch == 0:
        raise ValueError(f"batch_per_domain {b} exceeds both domain sizes ({n_s}, {n_t})")

    params, adaptor = init_from_config(config, data.feature_dim)
    optimizer = NesterovSGD(network_arrays(params), config.momentum)
    weights = config.weights()

    ss = np.random.SeedSequence(config.seed)
    shuffle_rng, probe_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    probe_s = np.sort(probe_rng.choice(n_s, size=min(MMD_PROBE_SIZE, n_s), replace=False))
    probe_t = np.sort(probe_rng.choice(n_t, size=min(MMD_PROBE_SIZE, n_t), replace=False))

    log = TrainLog()
    log_file = None
    pivot_file = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "w")
        log_file.write(TrainLog.csv_header() + "\n")
        log_file.flush()
        if config.dump_pivots:
            pivot_file = open(log_path.parent / "pivots.csv", "w")
            pivot_file.write("epoch,domain,class,sample_index,confidence\n")

    k = 0
    try:
        for epoch in range(1, config.epochs + 1):
            assist = params.clone()
            perm_s = shuffle_rng.permutation(n_s)
            perm_t = shuffle_rng.permutation(n_t)
            sums = {"l_cls": 0.0, "l_feat": 0.0, "l_task": 0.0}
            lr = config.alpha
            for step in range(steps_per_epoch):
                lr = lr_schedule(config.alpha, config.gamma, config.upsilon, k)
                span = np.arange(step * b, (step + 1) * b)
                idx_s = perm_s[span % n_s]
                idx_t = perm_t[span % n_t]
                breakdown = update_main(params, adaptor, data.source_x[idx_s],
                                        data.source_y[idx_s], data.target_x[idx_t],
                                        weights, optimizer, lr, config.adaptor_variant)
                k += 1
                for key in sums:
                    sums[key] += breakdown[key]
                if step_callback is not None:
                    step_callback(epoch=epoch, step=step, params=params,
                                  assist=assist, adaptor=adaptor)

            l_val = 0.0
            theta_updated = False
            warnings = []
            if weights.mu > 0:
                piv = select_pivot(params, data.source_x, data.source_y, data.target_x,
                                   config.m, config.pivot_strategy,
                                   seed=(config.seed, epoch), n_classes=config.n_classes)
                warnings.extend(piv.warnings)
                if pivot_file is not None:
                    for row in pivot_csv_rows(piv, epoch):
                        pivot_file.write(",".join(str(v) for v in row) + "\n")
                    pivot_file.flush()
                l_val, warning = update_adaptor(adaptor, piv, assist, params,
                                                config.beta, config.sigma,
                                                config.adaptor_variant)
                theta_updated = warning is None
                if warning is not None:
                    warnings.append(warning)

            mmd_value = mmd(feature_matrix(params.phi, data.source_x[probe_s]),
                            feature_matrix(params.phi, data.target_x[probe_t]))
            labels, _ = predict(params, data.validation_x)
            report = compute_prf(labels, data.validation_y, positive_class=1)
            record = EpochRecord(
                epoch=epoch,
                l_cls=sums["l_cls"] / steps_per_epoch,
                l_feat=sums["l_feat"] / steps_per_epoch,
                l_task=sums["l_task"] / steps_per_epoch,
                l_val=l_val,
                mmd=mmd_value,
                val_precision=report.precision,
                val_recall=report.recall,
                val_f1=report.f1,
                val_accuracy=report.accuracy,
                lr=lr,
                theta_updated=theta_updated,
                warnings=tuple(warnings),
            )
            log.records.append(record)
            if log_file is not None:
                log_file.write(record.csv_row() + "\n")
                log_file.flush()
    finally:
        if log_file is not None:
            log_file.close()
        if pivot_file is not None:
            pivot_file.close()

    return FitResult(params=params, adaptor=adaptor, log=log)
