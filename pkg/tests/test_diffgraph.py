import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsnlab.diffgraph import (
    LOG_EPS,
    Graph,
    ParameterStore,
    backward,
    bernoulli_nll,
    forward,
    max_relative_error,
    numeric_gradients,
)
from gsnlab.errors import GraphError, ShapeError, StateError
from gsnlab.gsn import GsnConfig, GsnModel, build_walkback_graph, graph_inputs
from gsnlab.ndnum import Rng


def two_layer_noisy_graph(seed=0):
    rng = Rng(seed)
    ps = ParameterStore()
    ps.add("W1", 0.5 * rng.standard_normal(4, 5))
    ps.add("W2", 0.5 * rng.standard_normal(5, 3))
    ps.add("b1", 0.1 * rng.standard_normal(1, 5))
    ps.add("b2", 0.1 * rng.standard_normal(1, 3))
    g = Graph(ps)
    x, t = g.input("x"), g.input("t")
    h = g.add_noise(g.tanh(g.add_noise(g.affine([(x, g.param("W1"))], g.param("b1")), 0.7)), 0.3)
    y = g.sigmoid(g.affine([(g.corrupt(h, 0.2), g.param("W2"))], g.param("b2")))
    loss = g.bernoulli_nll(y, t)
    inputs = {"x": rng.uniform(6, 4), "t": rng.bernoulli(np.full((6, 3), 0.5))}
    return g, loss, inputs


def test_tanh_of_zero():
    g = Graph()
    y = g.tanh(g.input("x"))
    assert np.array_equal(forward(g, {"x": np.zeros((2, 3))})[y.id], np.zeros((2, 3)))


def test_zero_sigma_noise_is_deterministic_network():
    ps = ParameterStore()
    ps.add("W", [[1.0, -2.0], [0.5, 0.25]])
    g = Graph(ps)
    x = g.input("x")
    y = g.add_noise(g.tanh(g.add_noise(g.affine([(x, g.param("W"))]), 0.0)), 0.0)
    xv = np.array([[0.3, -0.7]])
    np.testing.assert_array_equal(forward(g, {"x": xv}, Rng(0))[y.id], np.tanh(xv @ ps.get("W")))


def test_forward_deterministic_given_seed():
    g, loss, inputs = two_layer_noisy_graph()
    a = forward(g, inputs, Rng(3))
    b = forward(g, inputs, Rng(3))
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_unbound_input():
    g = Graph()
    g.tanh(g.input("x"))
    with pytest.raises(GraphError, match="'x'"):
        g.forward({})


def test_backward_before_forward():
    g = Graph()
    loss = g.squared_error(g.input("x"), g.constant([[0.0]]))
    with pytest.raises(StateError):
        backward(g, loss)


def test_least_squares_hand_derivative():
    ps = ParameterStore()
    W = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    ps.add("W", W)
    x = np.array([[1.0], [-2.0], [0.5]])
    yv = np.array([[0.2], [-1.0]])
    g = Graph(ps)
    # column-vector convention: W x as (x^T W^T)^T, written via the tied alias
    ps.tie_transpose("WT", "W")
    pred = g.affine([(g.constant(x.T), g.param("WT"))])
    loss = g.squared_error(pred, g.constant(yv.T))
    g.forward()
    grad = backward(g, loss)["W"]
    np.testing.assert_allclose(grad, (W @ x - yv) @ x.T, atol=1e-14)


def test_finite_difference_two_layer_noisy():
    g, loss, inputs = two_layer_noisy_graph()
    g.forward(inputs, Rng(11))
    analytic = g.backward(loss)
    numeric = numeric_gradients(g, loss, inputs)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_tied_gradient_matches_untied_sum():
    rng = Rng(4)
    W = rng.standard_normal(3, 2)
    xv = rng.uniform(5, 3)

    tied = ParameterStore()
    tied.add("W", W)
    tied.tie_transpose("WT", "W")
    g = Graph(tied)
    x = g.input("x")
    h = g.tanh(g.affine([(x, g.param("W"))]))
    loss = g.squared_error(g.affine([(h, g.param("WT"))]), x)
    g.forward({"x": xv})
    gt = g.backward(loss)

    untied = ParameterStore()
    untied.add("A", W)
    untied.add("B", W.T)
    u = Graph(untied)
    x = u.input("x")
    h = u.tanh(u.affine([(x, u.param("A"))]))
    loss = u.squared_error(u.affine([(h, u.param("B"))]), x)
    u.forward({"x": xv})
    gu = u.backward(loss)

    assert set(gt) == {"W"}
    np.testing.assert_allclose(gt["W"], gu["A"] + gu["B"].T, atol=1e-13)


def test_sample_detach_blocks_gradient():
    ps = ParameterStore()
    ps.add("W", [[0.3, -0.5]])
    g = Graph(ps)
    p = g.sigmoid(g.affine([(g.input("x"), g.param("W"))]))
    loss = g.squared_error(g.sample(p), g.constant([[1.0, 0.0]]))
    g.forward({"x": [[1.0]]}, Rng(0))
    assert not g.backward(loss)["W"].any()


def test_bernoulli_nll_half():
    n = 7
    assert bernoulli_nll(np.full((1, n), 0.5), np.full((1, n), 0.5)) == pytest.approx(n * np.log(2), abs=1e-12)


def test_bernoulli_nll_clamped_floor():
    t = np.array([[1.0, 0.0]])
    assert bernoulli_nll(t, t) == pytest.approx(-2 * np.log(1 - LOG_EPS), rel=1e-9)
    assert np.isfinite(bernoulli_nll(1 - t, t))
    assert bernoulli_nll(1 - t, t) == pytest.approx(-2 * np.log(LOG_EPS), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
def test_bernoulli_nll_direct_sum(r, c, seed):
    rng = Rng(seed)
    p, t = rng.uniform(r, c) * 0.98 + 0.01, rng.uniform(r, c)
    direct = 0.0
    for i in range(r):
        for j in range(c):
            direct -= t[i, j] * np.log(p[i, j]) + (1 - t[i, j]) * np.log(1 - p[i, j])
    assert bernoulli_nll(p, t) == pytest.approx(direct, abs=1e-12, rel=1e-12)


def test_bernoulli_nll_shape_mismatch():
    with pytest.raises(ShapeError):
        bernoulli_nll(np.full((1, 3), 0.5), np.zeros((1, 2)))


def test_walkback_graph_gradients():
    cfg = GsnConfig(visible_size=6, hidden_sizes=[5, 4], walkback_steps=4, seed=1)
    model = GsnModel(cfg)
    x0 = Rng(2).bernoulli(np.full((3, 6), 0.5))
    g, loss = build_walkback_graph(model, x0)
    inputs = graph_inputs(x0)
    g.forward(inputs, Rng(7))
    analytic = g.backward(loss)
    assert max_relative_error(analytic, numeric_gradients(g, loss, inputs)) < 1e-4


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["binary", "real"]))
def test_frozen_forward_repeats_bit_exact(seed, kind):
    cfg = GsnConfig(visible_size=4, hidden_sizes=[3, 3], walkback_steps=3, visible_kind=kind, seed=seed % 97)
    model = GsnModel(cfg)
    x0 = Rng(seed).uniform(2, 4)
    g, loss = build_walkback_graph(model, x0)
    first = g.forward(graph_inputs(x0), Rng(seed))[loss.id]
    again = g.forward(graph_inputs(x0), frozen=True)[loss.id]
    assert np.array_equal(first, again)


def test_duplicate_parameter_rejected():
    ps = ParameterStore()
    ps.add("W", np.eye(2))
    with pytest.raises(GraphError):
        ps.add("W", np.eye(2))
