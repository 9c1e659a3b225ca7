import numpy as np
import pytest

from conftest import ALL_VARIANTS, HARD_VARIANTS, make_net
from gatelab.errors import BudgetExceededError, VariantError
from gatelab.gram import gram_matrix
from gatelab.network import NetConfig, Variant, forward
from gatelab.paths import (
    activation_gradients,
    delta_matrix,
    effective_weights,
    enumerate_paths,
    feature_vector,
    gram_via_kappa,
    kappa,
    kappa_table,
    num_paths,
    path_sensitivity,
    path_strength,
    path_strengths,
    sensitivity_matrix,
)


def test_path_count_and_order():
    cfg = NetConfig(2, 3, 3, Variant.DLN)
    paths = enumerate_paths(cfg)
    assert num_paths(cfg) == len(paths) == 18
    assert paths[0].tolist() == [0, 0, 0, 0]
    assert paths[1].tolist() == [0, 0, 1, 0]
    assert paths[-1].tolist() == [1, 2, 2, 0]


def test_path_budget():
    with pytest.raises(BudgetExceededError):
        enumerate_paths(NetConfig(2, 10, 5, Variant.DLN), budget=1000)


def test_strength_is_product_of_weights():
    net, _, _ = make_net(Variant.DLN, d_in=2, w=2, d=3)
    p = [1, 0, 1, 0]
    expected = net.weights[0][1, 0] * net.weights[1][0, 1] * net.weights[2][1, 0]
    assert path_strength(net.weights, p) == expected
    paths = enumerate_paths(net.config)
    assert np.array_equal(path_strengths(net.weights, paths),
                          [path_strength(net.weights, q) for q in paths])


def test_dln_effective_weight_matches_forward():
    net, _, _ = make_net(Variant.DLN, d_in=3, w=3, d=4)
    x = np.array([0.2, -0.7, 1.1])
    assert forward(net, x).y[0] == pytest.approx(effective_weights(net.weights, net.config) @ x, rel=1e-12)


def test_dln_features_are_input():
    cfg = NetConfig(2, 2, 3, Variant.DLN)
    phi = feature_vector([3.0, -1.0], np.ones((2, 2)), cfg)
    assert phi.tolist() == [3.0] * 4 + [-1.0] * 4


def test_path_sensitivity_leave_one_out():
    net, _, _ = make_net(Variant.DLN, d_in=1, w=2, d=3)
    cfg = net.config
    p = [0, 1, 0, 0]
    # layer-2 weight from node 1 to node 0 has flat index 2 + 1*2 + 0
    m = 4
    assert path_sensitivity(net.weights, p, m, cfg) == pytest.approx(net.weights[0][0, 1] * net.weights[2][0, 0], rel=1e-15)
    assert path_sensitivity(net.weights, p, 0, cfg) == 0.0
    sens = sensitivity_matrix(net.weights, cfg, enumerate_paths(cfg))
    assert sens[2, m] == path_sensitivity(net.weights, p, m, cfg)


@pytest.mark.parametrize("variant", HARD_VARIANTS)
def test_kappa_with_cross_terms_is_gram(variant):
    net, x, index = make_net(variant, d_in=2, w=2, d=3, n=3, seed=4)
    gates = forward(net, x, index=index).gate_tensor()
    K = gram_matrix(net, x, index=index)
    full = gram_via_kappa(x, gates, net.weights, net.config, cross_terms=True)
    assert np.allclose(full, K, rtol=1e-10, atol=1e-14)


def test_kappa_diagonal_is_gram_for_scalar_input():
    net, x, index = make_net(Variant.FRG, d_in=1, w=3, d=3, n=3, seed=2)
    gates = forward(net, x, index=index).gate_tensor()
    K = gram_matrix(net, x, index=index)
    assert np.allclose(gram_via_kappa(x, gates, net.weights, net.config), K, rtol=1e-10)


def test_kappa_symmetry():
    net, x, index = make_net(Variant.RELU, d_in=2, w=2, d=3, n=3, seed=1)
    gates = forward(net, x).gate_tensor()
    t01 = kappa_table(0, 1, x, gates, net.weights, net.config)
    t10 = kappa_table(1, 0, x, gates, net.weights, net.config)
    assert np.allclose(t01, t10.T)
    assert kappa(0, 1, 1, x, gates, net.weights, net.config) == t01[1, 1]


def test_activation_gradients_need_soft_gates():
    net, x, _ = make_net(Variant.GALU)
    with pytest.raises(VariantError):
        activation_gradients(net, x[:, 0], enumerate_paths(net.config))


def test_delta_matrix_psd():
    net, x, _ = make_net(Variant.SOFT_GALU, d_in=2, w=2, d=3, n=3, seed=3)
    D = delta_matrix(net, x)
    assert np.allclose(D, D.T)
    assert np.linalg.eigvalsh(D).min() > -1e-12 * np.abs(D).max()


def test_activation_gradients_finite_differences():
    net, x, _ = make_net(Variant.SOFT_GALU, d_in=1, w=2, d=3, n=1, seed=9, beta=2.0)
    paths = enumerate_paths(net.config)
    grads = activation_gradients(net, x[:, 0], paths)
    from gatelab.network import flatten_params, unflatten_params
    from gatelab.paths import path_activations
    base = flatten_params(net.gate_weights)
    h = 1e-6
    for m in range(len(base)):
        vals = []
        for sgn in (1, -1):
            v = base.copy()
            v[m] += sgn * h
            probe = net.copy()
            probe.gate_weights = unflatten_params(v, net.config)
            vals.append(path_activations(forward(probe, x).gate_tensor()[0], paths))
        assert np.allclose(grads[:, m], (vals[0] - vals[1]) / (2 * h), atol=1e-8)
