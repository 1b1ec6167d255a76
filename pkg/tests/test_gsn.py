import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsnlab.diffgraph import bernoulli_nll, sigmoid
from gsnlab.errors import FormatError, ParameterError
from gsnlab.gsn import (
    GsnConfig,
    GsnModel,
    GsnState,
    build_walkback_graph,
    chain_step,
    graph_inputs,
    layer_update,
)
from gsnlab.ndnum import Rng, salt_and_pepper


def zero_model(**kw):
    model = GsnModel(GsnConfig(**kw))
    for v in model.params.values.values():
        v[:] = 0.0
    return model


def test_config_defaults():
    c = GsnConfig(visible_size=10, hidden_sizes=[8, 6, 4])
    assert c.walkback_steps == 6
    assert c.eta_in == [0.0, 2.0, 2.0] and c.eta_out == [0.0, 2.0, 2.0]
    assert c.input_corruption_p == 0.4
    assert c.layer_groups() == ([1, 3], [2])


@pytest.mark.parametrize(
    "kw",
    [
        dict(hidden_sizes=[]),
        dict(hidden_sizes=[3], visible_kind="ternary"),
        dict(hidden_sizes=[3], input_corruption_p=1.5),
        dict(hidden_sizes=[3, 3], eta_in=[1.0]),
        dict(hidden_sizes=[3], walkback_steps=-1),
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ParameterError):
        GsnConfig(visible_size=4, **kw)


def test_init_ranges_and_tied_aliases():
    m = GsnModel(GsnConfig(visible_size=9, hidden_sizes=[16, 4], seed=3))
    assert np.abs(m.params.get("W1")).max() <= 1 / 3
    assert np.abs(m.params.get("W2")).max() <= 1 / 4
    assert not m.params.get("b1").any()
    np.testing.assert_array_equal(m.params.get("W2T"), m.params.get("W2").T)
    assert sorted(m.params.names()) == ["W1", "W2", "b0", "b1", "b2"]


def test_layer_update_all_zero():
    m = zero_model(visible_size=3, hidden_sizes=[2, 2], eta_in=0.0, eta_out=0.0)
    state = m.initial_state(np.ones((1, 3)))
    for l in (1, 2):
        assert not layer_update(m, state, l, Rng(0)).any()


def test_layer_update_hand_computation():
    m = GsnModel(GsnConfig(visible_size=2, hidden_sizes=[2, 1], eta_in=0.0, eta_out=0.0))
    m.params.values["W1"][:] = [[1.0, -1.0], [0.5, 2.0]]
    m.params.values["W2"][:] = [[3.0], [-1.0]]
    m.params.values["b1"][:] = [[0.1, 0.2]]
    state = GsnState(np.array([[1.0, 0.0]]), [np.zeros((1, 2)), np.array([[0.5]])])
    h1 = layer_update(m, state, 1, Rng(0))
    # bottom-up x W1 + b1 plus top-down h2 W2^T
    expect = np.tanh(np.array([[1.0 + 0.1 + 1.5, -1.0 + 0.2 - 0.5]]))
    np.testing.assert_allclose(h1, expect, atol=1e-15)


def test_layer_update_recorded_noise_identity():
    m = GsnModel(GsnConfig(visible_size=4, hidden_sizes=[3, 5], seed=2))
    state = m.initial_state(Rng(1).bernoulli(np.full((7, 4), 0.5)))
    state.h[0] = Rng(2).standard_normal(7, 3)
    h, eta_in, eta_out = layer_update(m, state, 2, Rng(9), return_noise=True)
    a = state.h[0] @ m.params.get("W2") + m.params.get("b2")
    np.testing.assert_allclose(h - eta_out - np.tanh(a + eta_in), 0.0, atol=1e-14)
    assert eta_in.std() > 1.0  # std-2 noise is actually injected on layer 2


def test_layer_update_bad_index():
    m = GsnModel(GsnConfig(visible_size=2, hidden_sizes=[2]))
    with pytest.raises(ParameterError):
        layer_update(m, m.initial_state(np.zeros((1, 2))), 2, Rng(0))


def test_chain_step_one_layer_is_dae_step():
    m = GsnModel(GsnConfig(visible_size=5, hidden_sizes=[4], seed=4))
    x = Rng(0).bernoulli(np.full((3, 5), 0.5))
    out = chain_step(m, m.initial_state(x), Rng(8))

    rng = Rng(8)
    xt = salt_and_pepper(rng, x, 0.4)
    h = np.tanh(xt @ m.params.get("W1") + m.params.get("b1"))
    mean = sigmoid(h @ m.params.get("W1").T + m.params.get("b0"))
    rng.gen.standard_normal((3, 4))  # layer-1 noise draws are zero-std but still skipped cleanly
    np.testing.assert_allclose(out.x_mean, mean, atol=1e-15)
    np.testing.assert_array_equal(out.h[0], h)
    assert set(np.unique(out.x)) <= {0.0, 1.0}


def test_chain_step_zero_params_reconstruct_half():
    m = zero_model(visible_size=6, hidden_sizes=[4, 3])
    out = chain_step(m, m.initial_state(np.ones((2, 6))), Rng(0))
    np.testing.assert_array_equal(out.x_mean, np.full((2, 6), 0.5))


def test_chain_step_deterministic():
    m = GsnModel(GsnConfig(visible_size=6, hidden_sizes=[5, 4, 3], seed=1))

    def trajectory(seed):
        rng, s, xs = Rng(seed), m.initial_state(np.zeros((1, 6))), []
        for _ in range(20):
            s = chain_step(m, s, rng)
            xs.append(np.concatenate([s.x] + s.h, axis=1))
        return np.concatenate(xs)

    assert np.array_equal(trajectory(5), trajectory(5))
    assert not np.array_equal(trajectory(5), trajectory(6))


def test_chain_step_noise_off_is_deterministic_map():
    cfg = GsnConfig(visible_size=5, hidden_sizes=[4, 3], eta_in=0.0, eta_out=0.0, input_corruption_p=0.0, seed=2)
    m = GsnModel(cfg)
    s = m.initial_state(np.full((1, 5), 0.5))
    seen = []
    for _ in range(200):
        # mean-field in place of binary sampling
        s = chain_step(m, s, Rng(0))
        s.x = s.x_mean
        seen.append(np.concatenate([s.x] + s.h, axis=1))
    assert np.allclose(seen[-1], seen[-2], atol=1e-8) or np.allclose(seen[-1], seen[-3], atol=1e-8)


def test_parity_order_matters_only_through_option():
    m = GsnModel(GsnConfig(visible_size=4, hidden_sizes=[3, 3], seed=0))
    x = np.ones((1, 4))
    a = chain_step(m, m.initial_state(x), Rng(1), odd_first=True)
    b = chain_step(m, m.initial_state(x), Rng(1), odd_first=False)
    assert not np.array_equal(a.h[0], b.h[0])


def test_walkback_one_step_is_dae_loss():
    m = GsnModel(GsnConfig(visible_size=6, hidden_sizes=[5], walkback_steps=1, seed=3))
    x0 = Rng(1).bernoulli(np.full((4, 6), 0.5))
    g, loss = build_walkback_graph(m, x0)
    g.forward(graph_inputs(x0), Rng(2))
    corrupt = next(n for n in g.nodes if n.kind == "corrupt")
    h = np.tanh(corrupt.value @ m.params.get("W1") + m.params.get("b1"))
    p = sigmoid(h @ m.params.get("W1").T + m.params.get("b0"))
    assert loss.value.item() == pytest.approx(bernoulli_nll(p, x0) / 4, rel=1e-13)
    # the corruption node really is salt-and-pepper of x0 at p = 0.4
    assert np.all((corrupt.value == x0) | (corrupt.value == 0) | (corrupt.value == 1))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.sampled_from(["binary", "real"]))
def test_walkback_loss_is_sum_of_recomputed_step_nlls(seed, depth, kind):
    cfg = GsnConfig(visible_size=5, hidden_sizes=[4] * depth, visible_kind=kind, seed=seed)
    m = GsnModel(cfg)
    x0 = Rng(seed).bernoulli(np.full((3, 5), 0.5))
    g, loss = build_walkback_graph(m, x0)
    g.forward(graph_inputs(x0), Rng(seed + 1))
    assert len(g.recon_nodes) == 2 * depth
    total = 0.0
    for node in g.recon_nodes:
        if kind == "binary":
            total += bernoulli_nll(node.value, x0) / 3
        else:
            total += 0.5 * ((node.value - x0) ** 2).sum() / 3 + 0.5 * np.log(2 * np.pi) * x0.size / 3
    assert loss.value.item() == pytest.approx(total, rel=1e-12)
    assert loss.value.item() >= 0 or kind == "real"


def test_walkback_gradient_is_sum_of_step_gradients():
    m = GsnModel(GsnConfig(visible_size=5, hidden_sizes=[4, 3], seed=7))
    x0 = Rng(0).bernoulli(np.full((2, 5), 0.5))
    g, loss = build_walkback_graph(m, x0)
    g.forward(graph_inputs(x0), Rng(1))
    total = g.backward(loss)
    parts = [g.backward(s) for s in g.step_losses]
    for name in total:
        np.testing.assert_allclose(total[name], sum(p[name] for p in parts), atol=1e-12)


def test_walkback_loss_decreases_on_fixed_batch():
    m = GsnModel(GsnConfig(visible_size=8, hidden_sizes=[16], seed=0))
    proto = np.array([[1, 1, 1, 1, 0, 0, 0, 0], [0, 0, 0, 0, 1, 1, 1, 1]], float)
    batch = np.repeat(proto, 10, axis=0)
    rng, losses = Rng(3), []
    for _ in range(100):
        loss, grads, _ = m.loss_and_grads(batch, rng)
        losses.append(loss)
        for k, gk in grads.items():
            m.params.values[k] -= 0.1 * gk
    avg = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert min(losses) >= 0
    # trend, not monotonicity: the corruption keeps single steps noisy
    assert avg[-1] < 0.6 * avg[0]
    assert avg[len(avg) // 2] < avg[0]


def test_checkpoint_round_trip(tmp_path):
    m = GsnModel(GsnConfig(visible_size=5, hidden_sizes=[4, 2], seed=9, eta_out=[0.0, 1.5]))
    digest = m.save(tmp_path / "m.ckpt")
    back = GsnModel.load(tmp_path / "m.ckpt")
    assert back.checksum() == digest == m.checksum()
    assert back.config == m.config
    np.testing.assert_array_equal(back.params.get("W2T"), m.params.get("W2").T)


def test_checkpoint_format_errors():
    data = GsnModel(GsnConfig(visible_size=3, hidden_sizes=[2])).to_bytes()
    with pytest.raises(FormatError, match="offset"):
        GsnModel.from_bytes(data[:-5])
    with pytest.raises(FormatError):
        GsnModel.from_bytes(b"NOTACKPT" + data[8:])
