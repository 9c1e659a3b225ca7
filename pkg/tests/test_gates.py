import numpy as np
import pytest

from conftest import make_net
from gatelab.errors import BudgetExceededError, VariantError
from gatelab.gates import (
    GateThresholds,
    beta_slope,
    classify_gates,
    compatibility_bound,
    subnetwork_summary,
    subnetwork_summary_bruteforce,
)
from gatelab.linalg import Prng
from gatelab.network import Variant, compute_gates, flatten_params, gate_jacobian, unflatten_params


def test_compatibility_bound_values():
    # at the midpoint the slope is beta/4 for eps = 0
    assert compatibility_bound(4.0, 0.0, 0.5) == pytest.approx(1.0)
    assert compatibility_bound(2.0, 0.0, 0.9) == pytest.approx(2.0 * 0.9 * 0.1)
    with pytest.raises(ValueError):
        compatibility_bound(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        compatibility_bound(0.0, 0.0, 0.5)


def test_beta_slope_matches_sigmoid_derivative():
    beta, eps = 3.0, 0.2
    q = np.linspace(-2, 2, 9)
    v = (1 + eps) / (1 + np.exp(-beta * q))
    h = 1e-6
    fd = ((1 + eps) / (1 + np.exp(-beta * (q + h))) - (1 + eps) / (1 + np.exp(-beta * (q - h)))) / (2 * h)
    assert np.allclose(beta_slope(v, beta, eps), fd, rtol=1e-7)


def test_default_thresholds_compatible():
    th = GateThresholds.default(4.0, 0.1)
    assert th.tau_active == pytest.approx(0.99)
    assert th.compatible
    assert not GateThresholds(th.tau_active, 0.5 * th.bound, 4.0, 0.1).compatible


def test_hard_gates_rejected():
    net, x, _ = make_net(Variant.RELU)
    with pytest.raises(VariantError):
        classify_gates(net, x)


def test_mismatched_thresholds_rejected():
    net, x, _ = make_net(Variant.SOFT_RELU, beta=4.0)
    with pytest.raises(ValueError):
        classify_gates(net, x, GateThresholds.default(2.0))


def test_derivatives_match_finite_differences():
    net, x, _ = make_net(Variant.SOFT_GALU, d_in=2, w=3, d=3, n=2, seed=4, beta=3.0)
    cls = classify_gates(net, x)
    base = flatten_params(net.gate_weights)
    h = 1e-6
    fd = np.zeros((2, 2, 3, len(base)))
    for m in range(len(base)):
        vals = []
        for sgn in (1, -1):
            v = base.copy()
            v[m] += sgn * h
            probe = net.copy()
            probe.gate_weights = unflatten_params(v, net.config)
            vals.append(compute_gates(probe, x))
        fd[..., m] = (vals[0] - vals[1]) / (2 * h)
    assert np.allclose(cls.max_dg, np.abs(fd).max(axis=3), atol=1e-5)


def test_disjoint_with_default_thresholds():
    for seed in range(10):
        net, x, _ = make_net(Variant.SOFT_RELU, d_in=2, w=4, d=3, n=4, seed=seed, beta=4.0)
        cls = classify_gates(net, x)
        assert not cls.overlap.any()


def test_active_gates_obey_chain_bound():
    for seed in range(10):
        net, x, _ = make_net(Variant.SOFT_GALU, d_in=2, w=4, d=3, n=4, seed=seed, beta=6.0)
        th = GateThresholds(0.6, 1.0, 6.0)
        cls = classify_gates(net, x, th)
        a = cls.active
        assert np.all(cls.max_dg[a] <= cls.scaled_bound[a] * (1 + 1e-12))


def test_budget_and_sampling():
    net, x, _ = make_net(Variant.SOFT_RELU, d_in=2, w=20, d=4, n=1, seed=0)
    with pytest.raises(BudgetExceededError):
        classify_gates(net, x, budget=100)
    cls = classify_gates(net, x, budget=100, sample=True, rng=Prng(1))
    assert cls.sampled_columns is not None
    assert cls.notes and "sampled" in cls.notes[0]
    full = gate_jacobian(net, x[:, 0])[:, :, cls.sampled_columns]
    assert np.allclose(cls.max_dg[0], np.abs(full).max(axis=2))


def test_summary_matches_bruteforce():
    net, x, _ = make_net(Variant.SOFT_GALU, d_in=2, w=4, d=4, n=3, seed=2, beta=2.0)
    th = GateThresholds(0.5, 0.05, 2.0)
    cls = classify_gates(net, x, th)
    summ = subnetwork_summary(cls)
    act, sens = subnetwork_summary_bruteforce(cls)
    assert np.array_equal(summ.active_paths, act)
    assert np.array_equal(summ.sensitive_paths, sens)
    for s in range(3):
        assert np.array_equal(summ.overlap[s, s], summ.active_per_layer[s])


def test_rows_layout():
    net, x, _ = make_net(Variant.SOFT_RELU, d_in=2, w=2, d=3, n=2, seed=0)
    rows = classify_gates(net, x).rows()
    assert len(rows) == 2 * 2 * 2
    assert rows[0]["layer"] == 1
    assert set(rows[0]) == {"example", "layer", "node", "G", "active", "sensitive", "max_dG"}
