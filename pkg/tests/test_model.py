import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sconelab.model import (
    ModelParams,
    OptimizerConfig,
    cross_entropy,
    energy,
    forward,
    g_score,
    init_params,
    learning_rate,
    sgd_step,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_zero_params_give_zero_logits():
    params = ModelParams(
        [np.zeros((3, 4)), np.zeros((4, 5))], [np.zeros(4), np.zeros(5)]
    )
    out = forward(params, rng().normal(size=(7, 3)))
    assert np.array_equal(out, np.zeros((7, 5)))


def test_identity_linear_layer():
    params = ModelParams([np.eye(4)], [np.zeros(4)])
    e1 = np.zeros((1, 4))
    e1[0, 0] = 1.0
    assert np.array_equal(forward(params, e1), e1)


def test_forward_matches_straight_line_oracle():
    # independent reimplementation: explicit per-sample loops
    r = rng(1)
    params = init_params(5, 3, hidden_sizes=(6, 4), rng=r)
    x = r.normal(size=(8, 5))
    got = forward(params, x)
    for i in range(8):
        h = x[i]
        for w, b in zip(params.layer_weights[:-1], params.layer_biases[:-1]):
            h = np.tanh(h @ w + b)
        expect = h @ params.layer_weights[-1] + params.layer_biases[-1]
        assert np.abs(got[i] - expect).max() <= 1e-12


def test_forward_dimension_mismatch_names_dims():
    params = init_params(5, 3, rng=rng())
    with pytest.raises(ValueError, match="expects 5, got 4"):
        forward(params, np.zeros((2, 4)))


def test_energy_uniform_logits():
    e = energy(np.zeros((3, 10)))
    assert np.allclose(e, -math.log(10.0), atol=1e-12)


def test_energy_direct_two_logits():
    # high-precision direct evaluation of -log(e^5 + e^0)
    expect = -math.log(math.exp(5.0) + 1.0)
    assert abs(energy(np.array([[5.0, 0.0]]))[0] - expect) <= 1e-12


def test_energy_shift_identity_exact():
    z = rng(2).normal(size=(4, 6))
    assert np.allclose(energy(z + 3.0) - energy(z), -3.0, atol=1e-12)


@given(st.floats(min_value=-50.0, max_value=50.0))
@settings(max_examples=60, deadline=None)
def test_energy_shift_identity_large_shifts(c):
    z = rng(3).normal(size=(5, 4))
    assert np.abs(energy(z + c) - (energy(z) - c)).max() <= 1e-9


def test_energy_rejects_nonfinite():
    with pytest.raises(ValueError):
        energy(np.array([[np.inf, 0.0]]))


def test_cross_entropy_uniform_prediction():
    loss, _ = cross_entropy(np.zeros((6, 10)), np.arange(6) % 10)
    assert abs(loss - math.log(10.0)) <= 1e-12


def test_cross_entropy_confident_prediction():
    z = np.full((4, 5), -30.0)
    y = np.array([0, 2, 3, 1])
    z[np.arange(4), y] = 30.0
    loss, _ = cross_entropy(z, y)
    assert loss <= 1e-12


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError, match="labels"):
        cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


def test_cross_entropy_gradient_matches_finite_differences():
    r = rng(4)
    z = r.normal(size=(5, 4))
    y = r.integers(0, 4, size=5)
    _, grad = cross_entropy(z, y)
    step = 1e-4
    for i in range(5):
        for j in range(4):
            up, dn = z.copy(), z.copy()
            up[i, j] += step
            dn[i, j] -= step
            num = (cross_entropy(up, y)[0] - cross_entropy(dn, y)[0]) / (2 * step)
            assert abs(grad[i, j] - num) / max(abs(num), abs(grad[i, j]), 1e-8) <= 1e-5


def test_g_score_identity_and_degenerate():
    params = init_params(3, 2, rng=rng())
    e = np.array([-1.0, 0.5, 2.0])
    assert np.array_equal(g_score(params, e), e)  # g_weight=1, g_bias=0 at init
    params.g_weight = 0.0
    params.g_bias = 0.7
    assert np.allclose(g_score(params, e), 0.7)
    params.g_weight = 2.0
    params.g_bias = -1.0
    assert g_score(params, np.array([0.5]))[0] == pytest.approx(0.0, abs=1e-15)


def test_sgd_zero_gradient_is_fixed_point():
    params = init_params(3, 2, rng=rng(5))
    cfg = OptimizerConfig(weight_decay=0.0)
    out, _ = sgd_step(params, params.zeros_like(), params.zeros_like(), 0, 10, cfg)
    for (_, a), (_, b) in zip(out.named_arrays(), params.named_arrays()):
        assert np.array_equal(a, b)
    assert out.g_weight == params.g_weight and out.g_bias == params.g_bias


def test_sgd_plain_gradient_descent():
    params = init_params(3, 2, rng=rng(6))
    grads = params.zeros_like()
    grads.layer_weights[0] = np.ones_like(params.layer_weights[0])
    cfg = OptimizerConfig(base_lr=0.1, momentum=0.0, weight_decay=0.0)
    out, _ = sgd_step(params, grads, params.zeros_like(), 0, 10, cfg)
    assert np.allclose(out.layer_weights[0], params.layer_weights[0] - 0.1, atol=1e-15)


def test_learning_rate_decay_at_sixty_percent():
    cfg = OptimizerConfig()
    assert learning_rate(60, 100, cfg) == pytest.approx(0.00005)
    assert learning_rate(0, 100, cfg) == pytest.approx(0.0001)
    assert learning_rate(80, 100, cfg) == pytest.approx(0.000025)
    assert learning_rate(95, 100, cfg) == pytest.approx(0.0000125)


def test_sgd_rejects_nonfinite_gradient():
    params = init_params(3, 2, rng=rng(7))
    grads = params.zeros_like()
    grads.layer_biases[1] = np.array([np.nan, 0.0])
    with pytest.raises(ValueError, match=r"layer_biases\[1\]"):
        sgd_step(params, grads, params.zeros_like(), 0, 1, OptimizerConfig())


def test_training_steps_are_deterministic():
    def run():
        r = rng(42)
        params = init_params(4, 3, hidden_sizes=(8,), rng=r)
        momentum = params.zeros_like()
        cfg = OptimizerConfig(base_lr=0.05)
        x = r.normal(size=(16, 4))
        y = r.integers(0, 3, size=16)
        for step in range(20):
            from sconelab.model import backward_from_logits, forward_cached

            logits, acts = forward_cached(params, x)
            _, dz = cross_entropy(logits, y)
            grads = backward_from_logits(params, acts, dz)
            params, momentum = sgd_step(params, grads, momentum, step, 20, cfg)
        return params

    a, b = run(), run()
    for (_, wa), (_, wb) in zip(a.named_arrays(), b.named_arrays()):
        assert np.array_equal(wa, wb)


def test_init_dimensions_chain():
    params = init_params(7, 4, hidden_sizes=(10, 5), rng=rng(8))
    shapes = [w.shape for w in params.layer_weights]
    assert shapes == [(7, 10), (10, 5), (5, 4)]
    assert params.input_dim == 7 and params.num_classes == 4
    assert params.all_finite()
    assert params.g_weight == 1.0 and params.g_bias == 0.0


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(decay_factor=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(decay_milestones=(0.5, 0.4))
    with pytest.raises(ValueError):
        OptimizerConfig(batch_size=0)
