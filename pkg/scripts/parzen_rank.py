"""Reduced-scale Parzen comparison of a 2-layer GSN against a 1-layer DAE.

Uses 14x14 binarized MNIST when ``data/mnist5k-images-idx3-ubyte`` exists
(see fetch_mnist_subset.py), otherwise 8-bit patterns.  Prints one line per
model and a final verdict line.
"""

import argparse
import json
import logging
import os
import time

import numpy as np

from gsnlab.datasets import downsample, load_idx, make_toy
from gsnlab.gsn import GsnConfig, GsnModel
from gsnlab.ndnum import Rng
from gsnlab.parzen import evaluate
from gsnlab.sampler import SampleRun, sample
from gsnlab.trainer import TrainConfig, train

MNIST = os.path.join(os.path.dirname(__file__), "..", "data", "mnist5k-images-idx3-ubyte")

# settings used by the acceptance suite: about 45 minutes on one core
ACCEPTANCE_SETTINGS = dict(hidden=500, epochs=300, lr=None, batch=10, n_samples=10_000, seed=0)


def load_data(path=MNIST, n_train=4000):
    if os.path.exists(path):
        ds = downsample(load_idx(path, binary=True), 2)
        x = ds.examples[Rng(0).permutation(len(ds))]
        return "mnist14", x[:n_train], x[n_train:]
    ds = make_toy("bit-patterns", 7000, seed=1, d=8)
    return "bits8", ds.examples[:5000], ds.examples[5000:]


def run(hidden=500, epochs=300, lr=None, batch=10, n_samples=10_000, seed=0, data_path=MNIST, log=print):
    name, train_x, test_x = load_data(data_path)
    d = train_x.shape[1]
    lr = 0.25 / d if lr is None else lr
    results = {}
    for label, sizes in (("DAE-1", [hidden]), ("GSN-2", [hidden, hidden])):
        t0 = time.time()
        model = GsnModel(GsnConfig(d, sizes, seed=seed))
        rep = train(model, train_x, TrainConfig(learning_rate=lr, epochs=epochs, minibatch_size=batch, seed=seed))
        run_cfg = SampleRun(burn_in=100, num_samples=n_samples, collect_mean_field=True)
        samples = np.vstack(sample(model, run_cfg, Rng(seed, stream=5), x_init=train_x[:1]))
        mean, se, sigma = evaluate(samples, test_x, rng=Rng(seed, stream=9))
        results[label] = dict(mean=mean, se=se, sigma=sigma, final_nll=rep.mean_nll[-1], seconds=time.time() - t0)
        log(f"{label}: Parzen LL {mean:.2f} +- {se:.2f} (sigma {sigma:.3f}, train NLL {rep.mean_nll[-1]:.2f}, {time.time() - t0:.0f}s)")
    gap = results["GSN-2"]["mean"] - results["DAE-1"]["mean"]
    combined = float(np.hypot(results["GSN-2"]["se"], results["DAE-1"]["se"]))
    results.update(dataset=name, gap=gap, combined_se=combined, holds=bool(gap > 2 * combined))
    log(f"{name}: GSN-2 - DAE-1 = {gap:.2f}, 2 x combined SE = {2 * combined:.2f}, holds={results['holds']}")
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--lr", type=float, default=None)
    ap.add_argument("--batch", type=int, default=10)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    res = run(args.hidden, args.epochs, args.lr, args.batch, args.samples, args.seed)
    if args.json:
        with open(args.json, "w") as f:
            json.dump(res, f, indent=2)


if __name__ == "__main__":
    main()
