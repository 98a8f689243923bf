"""Parameter bundles and forward passes for the four learners.

The feature extractor maps raw inputs to a latent representation, the
classifier maps features to class probabilities, the domain discriminator
maps features to a source-vs-target probability, and the task-semantic
critic scores a flattened cross-domain distance descriptor. All four are
plain MLPs whose parameters live in numpy arrays; forwards run through the
autodiff graph so the same code path serves training and inference.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softmax")

_ACT = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "softmax": ad.row_softmax,
    "identity": None,
}


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus activation choices for one MLP."""

    layer_widths: tuple
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError(f"MlpSpec needs at least two widths, got {self.layer_widths}")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError(f"MlpSpec widths must be positive, got {self.layer_widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def in_width(self):
        return self.layer_widths[0]

    @property
    def out_width(self):
        return self.layer_widths[-1]


@dataclass
class MlpParams:
    """Weights and biases of one MLP, matched to its spec."""

    spec: MlpSpec
    weights: list
    biases: list

    def clone(self) -> "MlpParams":
        return MlpParams(self.spec,
                         [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class NetworkParams:
    """The main parameter bundle: feature extractor, classifier, discriminator."""

    phi: MlpParams
    psi: MlpParams
    omega: MlpParams

    def clone(self) -> "NetworkParams":
        return NetworkParams(self.phi.clone(), self.psi.clone(), self.omega.clone())


@dataclass
class AdaptorParams:
    """Parameters of the task-semantic critic network."""

    theta: MlpParams

    def clone(self) -> "AdaptorParams":
        return AdaptorParams(self.theta.clone())


def clone_params(params):
    """Value-equal, independently mutable deep copy of a parameter bundle."""
    return params.clone()


# ---------------------------------------------------------------------------
# initialization

def init_mlp(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Uniform weights bounded by sqrt(6 / (fan_in + fan_out)); zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(spec, weights, biases)


def init_networks(feature: MlpSpec, classifier: MlpSpec, discriminator: MlpSpec,
                  adaptor: MlpSpec, seed: int):
    """Deterministically initialize all four networks from one integer seed."""
    if classifier.in_width != feature.out_width or discriminator.in_width != feature.out_width:
        raise ValueError(
            "inconsistent widths: feature extractor emits "
            f"{feature.out_width}, classifier expects {classifier.in_width}, "
            f"discriminator expects {discriminator.in_width}")
    rng = np.random.default_rng(seed)
    params = NetworkParams(init_mlp(feature, rng), init_mlp(classifier, rng),
                           init_mlp(discriminator, rng))
    return params, AdaptorParams(init_mlp(adaptor, rng))


# ---------------------------------------------------------------------------
# lifting parameters into a graph

@dataclass
class LiftedMlp:
    """One MLP's parameters wrapped as graph leaves for a single forward pass."""

    spec: MlpSpec
    layers: list  # [(weight Tensor, bias Tensor), ...]


@dataclass
class LiftedNetworks:
    phi: LiftedMlp
    psi: LiftedMlp
    omega: LiftedMlp


def lift_mlp(mlp: MlpParams, requires_grad=False, arrays=None):
    """Wrap an MLP's arrays as Tensors; returns (lifted, flat tensor list)."""
    src = arrays if arrays is not None else mlp.arrays()
    tensors = [Tensor(a, requires_grad=requires_grad) for a in src]
    layers = [(tensors[2 * i], tensors[2 * i + 1]) for i in range(len(mlp.weights))]
    return LiftedMlp(mlp.spec, layers), tensors


def network_arrays(params: NetworkParams) -> list:
    """Flat parameter-array list in a fixed order shared with lift_networks."""
    return params.phi.arrays() + params.psi.arrays() + params.omega.arrays()


def lift_networks(params: NetworkParams, requires_grad=False, arrays=None):
    """Wrap all main-bundle arrays as Tensors; returns (lifted, flat tensor list)."""
    src = arrays if arrays is not None else network_arrays(params)
    tensors = []
    lifted = []
    pos = 0
    for mlp in (params.phi, params.psi, params.omega):
        n = 2 * len(mlp.weights)
        sub, ts = lift_mlp(mlp, requires_grad, arrays=src[pos:pos + n])
        lifted.append(sub)
        tensors.extend(ts)
        pos += n
    return LiftedNetworks(*lifted), tensors


def _as_lifted(net) -> LiftedMlp:
    if isinstance(net, LiftedMlp):
        return net
    if isinstance(net, MlpParams):
        return lift_mlp(net)[0]
    raise TypeError(f"expected MlpParams or LiftedMlp, got {type(net).__name__}")


# ---------------------------------------------------------------------------
# forward passes

def forward_mlp(net, x) -> Tensor:
    """Run one MLP: affine layers with the MlpSpec's hidden/output activations."""
    lifted = _as_lifted(net)
    h = x if isinstance(x, Tensor) else Tensor(x)
    if h.ndim != 2 or h.shape[1] != lifted.spec.in_width:
        raise ShapeError(
            f"forward: expected input of shape (batch, {lifted.spec.in_width}), got {h.shape}")
    hidden = _ACT[lifted.spec.hidden_activation]
    last = len(lifted.layers) - 1
    for i, (w, b) in enumerate(lifted.layers):
        h = h @ w + b
        if i < last and hidden is not None:
            h = hidden(h)
    out = _ACT[lifted.spec.output_activation]
    return out(h) if out is not None else h


def forward_feature(phi, x) -> Tensor:
    return forward_mlp(phi, x)


def forward_classifier(psi, features) -> Tensor:
    return forward_mlp(psi, features)


def forward_discriminator(omega, features) -> Tensor:
    return forward_mlp(omega, features)


def feature_matrix(phi: MlpParams, x: np.ndarray) -> np.ndarray:
    """Inference-only feature extraction, returned as a plain array."""
    return forward_mlp(phi, x).data


def default_specs(input_dim: int, n_classes: int = 2, gram_width: int = 256,
                  feature_widths=(64, 32), discriminator_hidden=(32,),
                  adaptor_hidden=(128, 64)):
    """The stock four-network architecture used by the trainer and CLI."""
    feature = MlpSpec((input_dim, *feature_widths), "relu", "identity")
    classifier = MlpSpec((feature.out_width, n_classes), "relu", "softmax")
    discriminator = MlpSpec((feature.out_width, *discriminator_hidden, 1), "relu", "sigmoid")
    adaptor = MlpSpec((gram_width, *adaptor_hidden, 1), "relu", "identity")
    return feature, classifier, discriminator, adaptor


# ---------------------------------------------------------------------------
# checkpoints

def _spec_to_json(spec: MlpSpec) -> dict:
    return {"layer_widths": list(spec.layer_widths),
            "hidden_activation": spec.hidden_activation,
            "output_activation": spec.output_activation}


def _mlp_entries(name: str, mlp: MlpParams) -> dict:
    entries = {}
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        entries[f"{name}.{i}.weight"] = {"shape": list(w.shape), "values": w.reshape(-1).tolist()}
        entries[f"{name}.{i}.bias"] = {"shape": list(b.shape), "values": b.reshape(-1).tolist()}
    return entries


def _mlp_from_entries(name: str, spec: MlpSpec, layers: dict) -> MlpParams:
    weights, biases = [], []
    for i in range(len(spec.layer_widths) - 1):
        w = layers[f"{name}.{i}.weight"]
        b = layers[f"{name}.{i}.bias"]
        weights.append(np.asarray(w["values"], dtype=np.float64).reshape(w["shape"]))
        biases.append(np.asarray(b["values"], dtype=np.float64).reshape(b["shape"]))
    return MlpParams(spec, weights, biases)


def save_checkpoint(path, params: NetworkParams, adaptor: AdaptorParams | None = None) -> None:
    """Write all parameters as JSON mapping layer name to shape and values.

    JSON floats are emitted with full round-trip precision, so load after
    save reproduces every value exactly. The file appears atomically.
    """
    named = {"phi": params.phi, "psi": params.psi, "omega": params.omega}
    if adaptor is not None:
        named["theta"] = adaptor.theta
    doc = {"specs": {k: _spec_to_json(v.spec) for k, v in named.items()}, "layers": {}}
    for k, v in named.items():
        doc["layers"].update(_mlp_entries(k, v))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True))
    os.replace(tmp, path)


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (NetworkParams, AdaptorParams or None)."""
    doc = json.loads(Path(path).read_text())
    specs = {k: MlpSpec(tuple(v["layer_widths"]), v["hidden_activation"], v["output_activation"])
             for k, v in doc["specs"].items()}
    layers = doc["layers"]
    params = NetworkParams(*(_mlp_from_entries(n, specs[n], layers)
                             for n in ("phi", "psi", "omega")))
    adaptor = None
    if "theta" in specs:
        adaptor = AdaptorParams(_mlp_from_entries("theta", specs["theta"], layers))
    return params, adaptor
