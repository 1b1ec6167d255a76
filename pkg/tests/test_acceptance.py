"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``[PASS]``/``[FAIL]`` line (also repeated in the pytest
terminal summary) and asserts at the stated tolerance and runtime budget.
Criterion 7 trains two MNIST-sized models and is marked ``slow``.
"""

import os
import sys
import time

import numpy as np
import pytest
from conftest import DATA_DIR, FIXTURES, record, tv

from gsnlab import cli
from gsnlab.chainlab import StateSpace, conditional_of, dae_exact_operator
from gsnlab.datasets import make_toy, prototype_table
from gsnlab.diffgraph import max_relative_error, numeric_gradients
from gsnlab.gsn import GsnConfig, GsnModel, build_walkback_graph, graph_inputs
from gsnlab.ndnum import Rng
from gsnlab.sampler import SampleRun, sample_clamped, stack_samples
from gsnlab.trainer import TrainConfig, train
from gsnlab.verify import depnet_battery, perturbation_battery, stationarity_battery

sys.path.insert(0, os.path.join(os.path.dirname(DATA_DIR), "scripts"))


def test_1_gradient_correctness():
    t0 = time.perf_counter()
    model = GsnModel(GsnConfig(visible_size=6, hidden_sizes=[5, 4], walkback_steps=4, seed=0))
    x0 = Rng(1).bernoulli(np.full((4, 6), 0.5))
    g, loss = build_walkback_graph(model, x0)
    inputs = graph_inputs(x0)
    g.forward(inputs, Rng(2))
    err = max_relative_error(g.backward(loss), numeric_gradients(g, loss, inputs, h=1e-5))
    secs = time.perf_counter() - t0
    ok = err < 1e-4 and secs < 10
    record(1, ok, f"max relative error {err:.2e} (< 1e-4), {secs:.2f}s (< 10s)")
    assert ok


def test_2_dae_chain_recovers_data_table():
    t0 = time.perf_counter()
    table = prototype_table(4, n_modes=4, flip=0.2, seed=0)
    ds = make_toy("bit-patterns", 20_000, seed=0, d=4, table=table)
    model = GsnModel(GsnConfig(visible_size=4, hidden_sizes=[100], input_corruption_p=0.1, seed=0))
    cfg = TrainConfig(learning_rate=0.1, momentum=0.5, lr_decay_per_epoch=0.97, epochs=100, minibatch_size=100)
    train(model, ds.examples, cfg)
    pi = dae_exact_operator(model).stationary()
    dist = tv(pi, table)
    secs = time.perf_counter() - t0
    ok = dist < 0.05 and secs < 120
    record(2, ok, f"TV(stationary, P(X)) = {dist:.4f} (< 0.05), {secs:.1f}s (< 120s)")
    assert ok


def test_3_constructed_table_gsns_keep_marginal():
    t0 = time.perf_counter()
    _, passed, rows = stationarity_battery(seed=0, trials=20, tol=1e-9)
    worst = max(r["marginal_error"] for r in rows)
    secs = time.perf_counter() - t0
    ok = passed and len(rows) == 20 and secs < 30
    record(3, ok, f"20 table GSNs, worst |marginal - P(X0)|_1 = {worst:.1e} (<= 1e-9), {secs:.2f}s (< 30s)")
    assert ok


def test_4_perturbation_bound():
    t0 = time.perf_counter()
    _, passed, rows = perturbation_battery(seed=0, trials=200, max_states=16)
    secs = time.perf_counter() - t0
    slack = min(r["rhs"] - r["lhs"] for r in rows)
    ok = passed and len(rows) == 200 and secs < 30
    record(4, ok, f"200 random ergodic pairs, bound holds in all, min slack {slack:.2e}, {secs:.2f}s (< 30s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="norms applied to the column-stochastic matrices do not bound the gap")
def test_4_perturbation_bound_column_orientation():
    _, passed, rows = perturbation_battery(seed=0, trials=200, max_states=16, orientation="column")
    bad = sum(not r["holds"] for r in rows)
    record("4, column-orientation variant (expected to fail)", passed, f"{bad}/200 trials violate the bound")
    assert passed


def test_5_clamped_sampling_matches_conditional():
    t0 = time.perf_counter()
    joint = np.array([0.1, 0.2, 0.3, 0.4])
    ds = make_toy("bit-patterns", 10_000, seed=0, d=2, table=joint)
    model = GsnModel(GsnConfig(visible_size=2, hidden_sizes=[10], seed=0))
    train(model, ds.examples, TrainConfig(learning_rate=0.1, lr_decay_per_epoch=0.97, epochs=20, minibatch_size=20))
    pi = dae_exact_operator(model).stationary()
    cond = conditional_of(pi, StateSpace(2), [True, False], [1, 0])
    mask, values = np.array([True, False]), np.array([[1.0, 0.0]])
    run = SampleRun(burn_in=50, num_samples=1000, n_chains=100, clamp_mask=mask, clamp_values=values)
    bits = stack_samples(sample_clamped(model, run, Rng(0, stream=6)))[:, 1].astype(int)
    dist = tv(np.bincount(bits, minlength=2) / len(bits), cond)
    secs = time.perf_counter() - t0
    ok = len(bits) == 100_000 and dist < 0.02 and secs < 60
    record(5, ok, f"TV(clamped samples, pi(x1 | x0=1)) = {dist:.4f} over {len(bits)} samples (< 0.02), {secs:.1f}s")
    assert ok


def test_6_dependency_networks():
    t0 = time.perf_counter()
    _, passed, rows = depnet_battery(d_ordered=3)
    secs = time.perf_counter() - t0
    by = {r["case"]: r for r in rows}
    ok = passed and secs < 10
    record(
        6,
        ok,
        f"(a) joint error {by['consistent']['error']:.1e}; (b) inconsistent ergodic={by['inconsistent']['ergodic']}; "
        f"(c) ordered period {by['ordered']['period']}; {secs:.2f}s",
    )
    assert ok


@pytest.mark.slow
def test_7_gsn2_outranks_dae_parzen():
    import parzen_rank

    t0 = time.perf_counter()
    res = parzen_rank.run(**parzen_rank.ACCEPTANCE_SETTINGS, log=lambda s: None)
    secs = time.perf_counter() - t0
    ok = res["holds"] and secs <= 7200
    record(
        7,
        ok,
        f"{res['dataset']}: GSN-2 {res['GSN-2']['mean']:.2f}+-{res['GSN-2']['se']:.2f} vs "
        f"DAE-1 {res['DAE-1']['mean']:.2f}+-{res['DAE-1']['se']:.2f}, gap {res['gap']:.2f} "
        f"(> 2 x SE = {2 * res['combined_se']:.2f}), {secs / 60:.1f} min",
    )
    assert ok


def test_8_fixture_checkpoint_is_byte_exact(tmp_path, capsys):
    with open(os.path.join(FIXTURES, "train_fixture.sha256")) as f:
        golden = f.read().strip()
    digests = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert cli.main(["train", "--config", os.path.join(FIXTURES, "train_fixture.cfg"), "--out", str(out)]) == 0
        digests.append(GsnModel.load(out / "model.ckpt").checksum())
    capsys.readouterr()
    ok = digests[0] == digests[1] == golden
    record(8, ok, f"two runs -> {digests[0][:16]}..., {digests[1][:16]}... vs committed {golden[:16]}...")
    assert ok
