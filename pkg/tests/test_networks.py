import math

import numpy as np
import pytest

from taskadapt import autodiff as ad
from taskadapt.autodiff import ShapeError, Tensor
from taskadapt.networks import (MlpParams, MlpSpec, clone_params, default_specs,
                                forward_classifier, forward_discriminator,
                                forward_feature, init_networks, lift_networks,
                                load_checkpoint, network_arrays, save_checkpoint)


def zero_mlp(spec: MlpSpec) -> MlpParams:
    widths = spec.layer_widths
    return MlpParams(spec,
                     [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
                     [np.zeros(b) for b in widths[1:]])


@pytest.fixture
def stock():
    specs = default_specs(input_dim=2, n_classes=2, gram_width=16)
    return init_networks(*specs, seed=42)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((4,))
    with pytest.raises(ValueError):
        MlpSpec((4, 0, 1))
    with pytest.raises(ValueError):
        MlpSpec((4, 2), hidden_activation="gelu")
    with pytest.raises(ValueError):
        MlpSpec((4, 2), output_activation="step")


def test_init_deterministic_under_seed():
    specs = default_specs(3, 2, gram_width=9)
    p1, a1 = init_networks(*specs, seed=7)
    p2, a2 = init_networks(*specs, seed=7)
    for m1, m2 in ((p1.phi, p2.phi), (p1.psi, p2.psi), (p1.omega, p2.omega),
                   (a1.theta, a2.theta)):
        for w1, w2 in zip(m1.arrays(), m2.arrays()):
            assert np.array_equal(w1, w2)


def test_init_biases_zero_and_weights_bounded(stock):
    params, adaptor = stock
    for mlp in (params.phi, params.psi, params.omega, adaptor.theta):
        for b in mlp.biases:
            assert np.all(b == 0.0)
        for w, fan_in, fan_out in zip(mlp.weights, mlp.spec.layer_widths[:-1],
                                      mlp.spec.layer_widths[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(w) <= bound)


def test_init_rejects_inconsistent_widths():
    feature = MlpSpec((2, 8), output_activation="identity")
    classifier = MlpSpec((9, 2), output_activation="softmax")  # expects width 9
    discriminator = MlpSpec((8, 1), output_activation="sigmoid")
    adaptor = MlpSpec((4, 1))
    with pytest.raises(ValueError, match="width"):
        init_networks(feature, classifier, discriminator, adaptor, seed=0)


def test_forward_zero_net_gives_zero_features():
    spec = MlpSpec((2, 4, 3), output_activation="identity")
    out = forward_feature(zero_mlp(spec), np.ones((5, 2)))
    assert np.all(out.data == 0.0)


def test_forward_identity_single_layer():
    spec = MlpSpec((3, 3), output_activation="identity")
    mlp = MlpParams(spec, [np.eye(3)], [np.zeros(3)])
    x = np.array([[1.0, -2.0, 0.5], [0.0, 4.0, -1.0]])
    out = forward_feature(mlp, x)
    assert np.array_equal(out.data, x)


def test_forward_hand_computed_relu_layer():
    # one hidden relu layer with hand-set 2x2 weights on input [1, -1]
    spec = MlpSpec((2, 2, 1), hidden_activation="relu", output_activation="identity")
    w1 = np.array([[1.0, -1.0], [2.0, 1.0]])
    w2 = np.array([[3.0], [4.0]])
    mlp = MlpParams(spec, [w1, w2], [np.zeros(2), np.zeros(1)])
    # pre-activation: [1*1 + (-1)*2, 1*(-1) + (-1)*1] = [-1, -2] -> relu [0, 0]
    out = forward_feature(mlp, np.array([[1.0, -1.0]]))
    assert out.data.tolist() == [[0.0]]
    # input [1, 1]: pre-activation [3, 0] -> relu [3, 0] -> 3*3 + 0*4 = 9
    out = forward_feature(mlp, np.array([[1.0, 1.0]]))
    assert out.data.tolist() == [[9.0]]


def test_zero_classifier_is_uniform():
    spec = MlpSpec((4, 2), output_activation="softmax")
    probs = forward_classifier(zero_mlp(spec), np.random.default_rng(0).normal(size=(6, 4)))
    np.testing.assert_allclose(probs.data, 0.5, atol=1e-15)


def test_zero_discriminator_is_half():
    spec = MlpSpec((4, 1), output_activation="sigmoid")
    out = forward_discriminator(zero_mlp(spec), np.ones((3, 4)))
    np.testing.assert_allclose(out.data, 0.5, atol=1e-15)


def test_softmax_of_unit_logits():
    spec = MlpSpec((2, 2), output_activation="softmax")
    mlp = MlpParams(spec, [np.eye(2)], [np.zeros(2)])
    probs = forward_classifier(mlp, np.array([[1.0, 0.0]])).data
    e = math.e
    np.testing.assert_allclose(probs, [[e / (e + 1), 1 / (e + 1)]], atol=1e-12)
    np.testing.assert_allclose(probs, [[0.7311, 0.2689]], atol=5e-5)


def test_classifier_rows_sum_to_one(stock):
    params, _ = stock
    x = np.random.default_rng(1).uniform(-2, 2, size=(32, 2))
    probs = forward_classifier(params.psi, forward_feature(params.phi, x)).data
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    d = forward_discriminator(params.omega, forward_feature(params.phi, x)).data
    assert np.all((d > 0.0) & (d < 1.0))


def test_forward_width_mismatch_names_shapes(stock):
    params, _ = stock
    with pytest.raises(ShapeError) as exc:
        forward_feature(params.phi, np.ones((4, 3)))
    assert "(4, 3)" in str(exc.value)


def test_clone_is_value_equal_and_independent(stock):
    params, _ = stock
    copy = clone_params(params)
    for a, b in zip(network_arrays(params), network_arrays(copy)):
        assert np.array_equal(a, b)
    x = np.random.default_rng(2).uniform(-1, 1, size=(5, 2))
    before = forward_feature(params.phi, x).data.copy()
    for arr in network_arrays(copy):
        arr += 1.0
    after = forward_feature(params.phi, x).data
    assert np.array_equal(before, after)
    assert not np.array_equal(forward_feature(copy.phi, x).data, after)


def test_clone_forward_matches_original(stock):
    params, _ = stock
    copy = clone_params(params)
    x = np.random.default_rng(3).uniform(-1, 1, size=(4, 2))
    assert np.array_equal(forward_feature(params.phi, x).data,
                          forward_feature(copy.phi, x).data)


def test_assist_outputs_stable_under_main_updates(stock):
    # clone independence under a sequence of main-model updates
    params, _ = stock
    assist = clone_params(params)
    x = np.random.default_rng(4).uniform(-1, 1, size=(8, 2))
    probe = forward_classifier(assist.psi, forward_feature(assist.phi, x)).data.copy()
    rng = np.random.default_rng(5)
    for _ in range(4):
        for arr in network_arrays(params):
            arr -= 0.05 * rng.normal(size=arr.shape)
        now = forward_classifier(assist.psi, forward_feature(assist.phi, x)).data
        assert np.array_equal(probe, now)


def test_lifted_forward_matches_raw(stock):
    params, _ = stock
    x = np.random.default_rng(6).uniform(-1, 1, size=(5, 2))
    lifted, tensors = lift_networks(params, requires_grad=True)
    out_lifted = forward_feature(lifted.phi, Tensor(x))
    out_raw = forward_feature(params.phi, x)
    assert np.array_equal(out_lifted.data, out_raw.data)
    ad.backward(out_lifted.sum())
    assert any(t.grad is not None for t in tensors)


def test_checkpoint_round_trip_is_exact(stock, tmp_path):
    params, adaptor = stock
    path = tmp_path / "checkpoint.json"
    save_checkpoint(path, params, adaptor)
    loaded, loaded_adaptor = load_checkpoint(path)
    for a, b in zip(network_arrays(params), network_arrays(loaded)):
        assert np.array_equal(a, b)
    for a, b in zip(adaptor.theta.arrays(), loaded_adaptor.theta.arrays()):
        assert np.array_equal(a, b)
    assert loaded.phi.spec == params.phi.spec


def test_checkpoint_without_adaptor(stock, tmp_path):
    params, _ = stock
    path = tmp_path / "nets.json"
    save_checkpoint(path, params)
    loaded, adaptor = load_checkpoint(path)
    assert adaptor is None
    assert np.array_equal(network_arrays(params)[0], network_arrays(loaded)[0])


def test_default_shapes():
    feature, classifier, discriminator, adaptor = default_specs(5, 2, gram_width=256)
    assert feature.layer_widths == (5, 64, 32)
    assert classifier.layer_widths == (32, 2)
    assert discriminator.layer_widths == (32, 32, 1)
    assert adaptor.layer_widths == (256, 128, 64, 1)
    assert adaptor.hidden_activation == "relu"
    assert adaptor.output_activation == "identity"
