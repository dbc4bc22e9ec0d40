import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eegwave import layers as L
from eegwave.autodiff import Tape, Tensor, finite_difference_gradient
from eegwave.errors import ConfigurationError, ContractError, DegenerateParameterError


def conv(x, kernel, d, bias=0.0):
    x = np.asarray(x, dtype=np.float64).reshape(1, -1, 1)
    k = np.asarray(kernel, dtype=np.float64).reshape(1, 1, -1)
    spec = L.ConvSpec(1, 1, k.shape[2], d)
    return L.causal_dilated_conv1d(Tensor(x), spec, Tensor(k), Tensor(np.array([bias]))).data.ravel()


def test_conv_impulse_dilation_two():
    np.testing.assert_array_equal(conv([1, 0, 0, 0, 0], [1, 1, 1], 2), [1, 0, 1, 0, 1])


@pytest.mark.parametrize("d", [1, 2, 5, 17])
def test_conv_current_tap_identity(d):
    x = np.random.default_rng(d).standard_normal(40)
    np.testing.assert_array_equal(conv(x, [0, 0, 1], d), x)


def test_conv_bias_only():
    np.testing.assert_array_equal(conv(np.zeros(9), [0.3, -2, 1], 3, bias=0.5), np.full(9, 0.5))


def test_conv_rejects_bad_config():
    with pytest.raises(ConfigurationError):
        L.ConvSpec(1, 1, 3, dilation=0)
    spec = L.ConvSpec(2, 3, 3, 1)
    with pytest.raises(ConfigurationError):
        L.causal_dilated_conv1d(Tensor(np.zeros((1, 5, 2))), spec, Tensor(np.zeros((3, 2, 2))))


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 30, 3))
    w = rng.standard_normal((4, 3, 3))
    b = rng.standard_normal(4)
    d = 4
    out = L.causal_dilated_conv1d(Tensor(x), L.ConvSpec(3, 4, 3, d), Tensor(w), Tensor(b)).data
    ref = np.tile(b, (2, 30, 1))
    for t in range(30):
        for j in range(3):
            src = t - (2 - j) * d
            if src >= 0:
                ref[:, t, :] += x[:, src, :] @ w[:, :, j].T
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_swish_values():
    out = L.swish(Tensor(np.array([0.0, 1.0, -20.0]))).data
    assert out[0] == 0
    assert out[1] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-6)
    assert out[1] == pytest.approx(0.731059, abs=1e-6)
    assert out[2] == pytest.approx(-20 / (1 + math.exp(20)), rel=1e-9)
    assert -4.2e-8 < out[2] < -4.0e-8


def test_weight_norm_examples():
    v = Tensor(np.array([[3.0, 4.0]]))
    np.testing.assert_allclose(L.weight_normalized_weights(v, Tensor(np.array([1.0]))).data, [[0.6, 0.8]])
    np.testing.assert_allclose(L.weight_normalized_weights(v, Tensor(np.array([10.0]))).data, [[6.0, 8.0]])
    u = np.array([[0.6, 0.8]])
    np.testing.assert_allclose(L.weight_normalized_weights(Tensor(u), Tensor(np.array([1.0]))).data, u)
    with pytest.raises(DegenerateParameterError):
        L.weight_normalized_weights(Tensor(np.zeros((1, 2))), Tensor(np.ones(1)))


@given(arrays(np.float64, (3, 2, 4), elements=st.floats(-10, 10)),
       arrays(np.float64, 3, elements=st.floats(0.1, 10)))
def test_weight_norm_filter_norms_equal_gains(v, g):
    v = v + 1e-3  # keep directions away from zero
    w = L.weight_normalized_weights(Tensor(v), Tensor(g)).data
    np.testing.assert_allclose(np.sqrt((w ** 2).sum(axis=(1, 2))), g, atol=1e-6)


def test_layer_norm_examples():
    one = np.ones(3)
    out = L.layer_norm(Tensor(np.ones((1, 1, 3))), Tensor(one), Tensor(np.zeros(3))).data
    np.testing.assert_allclose(out, 0, atol=1e-12)
    out = L.layer_norm(Tensor(np.array([[[1.0, 3.0]]])), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12).data
    np.testing.assert_allclose(out.ravel(), [-1, 1], atol=1e-9)
    out = L.layer_norm(Tensor(np.random.default_rng(0).standard_normal((2, 3, 4))),
                       Tensor(np.zeros(4)), Tensor(np.full(4, 5.0))).data
    np.testing.assert_allclose(out, 5.0)


def test_dropout_identity_cases():
    x = Tensor(np.arange(10.0))
    assert L.dropout(x, 0.0, True, np.random.default_rng(0)).data is x.data
    np.testing.assert_array_equal(L.dropout(x, 0.7, False).data, x.data)
    with pytest.raises(ConfigurationError):
        L.dropout(x, 1.0, True, np.random.default_rng(0))


@pytest.mark.parametrize("rate", [0.2, 0.5])
def test_dropout_preserves_expectation(rate):
    x = np.random.default_rng(1).uniform(0.5, 1.5, 100_000)
    out = L.dropout(Tensor(x), rate, True, np.random.default_rng(2)).data
    assert abs(out.mean() / x.mean() - 1) < 0.01
    dropped = (out == 0).mean()
    assert abs(dropped - rate) < 0.01


def test_global_average_pool():
    assert L.global_average_pool(Tensor(np.array([[[1.0], [2.0], [3.0]]]))).data[0, 0] == 2
    assert L.global_average_pool(Tensor(np.full((1, 7, 1), 3.25))).data[0, 0] == 3.25
    assert L.global_average_pool(Tensor(np.array([[[-1.0], [1.0]]]))).data[0, 0] == 0


def test_softmax_examples():
    np.testing.assert_allclose(L.softmax(Tensor(np.zeros((1, 4)))).data, 0.25)
    out = L.softmax(Tensor(np.array([[1000.0, 0, 0, 0]]))).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1, 0, 0, 0]], atol=1e-300)


@given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_rows_and_shift(x, c):
    y = L.softmax(Tensor(x)).data
    np.testing.assert_allclose(y.sum(axis=1), 1, atol=1e-6)
    assert np.all((y >= 0) & (y <= 1))
    np.testing.assert_allclose(L.softmax(Tensor(x + c)).data, y, atol=1e-9)


def test_backward_linear():
    tape = Tape()
    w = tape.watch(np.array([1.0, -2.0, 0.5]), "w")
    x = Tensor(np.array([4.0, 5.0, 6.0]))
    g = tape.backward(L.total(L.mul(w, x)))
    np.testing.assert_array_equal(g["w"], [4, 5, 6])


def test_backward_swish_at_zero():
    tape = Tape()
    w = tape.watch(np.array([0.0]), "w")
    assert tape.backward(L.total(L.swish(w)))["w"][0] == pytest.approx(0.5)


def test_backward_requires_scalar():
    tape = Tape()
    w = tape.watch(np.ones(3), "w")
    with pytest.raises(ContractError):
        tape.backward(L.swish(w))


def test_unused_parameter_gets_zero_gradient():
    tape = Tape()
    w = tape.watch(np.ones(3), "w")
    tape.watch(np.ones((2, 2)), "unused")
    g = tape.backward(L.total(w))
    assert g["unused"].shape == (2, 2) and not g["unused"].any()


def test_finite_difference_basics():
    g = finite_difference_gradient(lambda v: float(v[0] ** 2), np.array([3.0]), 1e-4)
    assert g[0] == pytest.approx(6.0, abs=1e-6)
    assert not finite_difference_gradient(lambda v: 7.0, np.ones(4)).any()


def _check_grads(build, params, h=1e-6, tol=1e-4):
    tape = Tape()
    watched = {k: tape.watch(v, k) for k, v in params.items()}
    grads = tape.backward(build(watched))
    for name, value in params.items():
        def f(v, name=name):
            consts = {k: Tensor(v if k == name else params[k]) for k in params}
            return float(build(consts).data)
        fd = finite_difference_gradient(f, value.copy(), h)
        err = np.abs(fd - grads[name]).max() / max(np.abs(fd).max(), 1e-8)
        assert err < tol, (name, err)


def test_layer_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((2, 12, 3)))
    target = Tensor(rng.standard_normal((2, 12, 4)))
    params = {
        "v": rng.standard_normal((4, 3, 2)),
        "g": rng.uniform(0.5, 2, 4),
        "b": rng.standard_normal(4),
        "gamma": rng.uniform(0.5, 2, 4),
        "beta": rng.standard_normal(4),
    }

    def build(p):
        w = L.weight_normalized_weights(p["v"], p["g"])
        h = L.causal_dilated_conv1d(x, L.ConvSpec(3, 4, 2, 3), w, p["b"])
        h = L.layer_norm(L.swish(h), p["gamma"], p["beta"])
        h = L.relu(L.add(h, target))
        pooled = L.softmax(L.global_average_pool(h))
        return L.total(L.mul(pooled, Tensor(np.arange(8.0).reshape(2, 4))))

    _check_grads(build, params)


def test_dense_gradients():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((5, 3)))
    params = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4)}
    _check_grads(lambda p: L.total(L.swish(L.dense(x, p["w"], p["b"]))), params)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 40))
def test_conv_causality(d, k, t0):
    rng = np.random.default_rng(d * 10 + k)
    x = rng.standard_normal((1, 48, 2))
    w = Tensor(rng.standard_normal((3, 2, k)))
    spec = L.ConvSpec(2, 3, k, d)
    base = L.causal_dilated_conv1d(Tensor(x), spec, w).data
    x2 = x.copy()
    x2[0, t0, :] += 1.0
    pert = L.causal_dilated_conv1d(Tensor(x2), spec, w).data
    assert np.array_equal(base[0, :t0], pert[0, :t0])
    changed = np.flatnonzero(np.any(base[0] != pert[0], axis=1))
    assert set(changed) <= {t0 + j * d for j in range(k)}
