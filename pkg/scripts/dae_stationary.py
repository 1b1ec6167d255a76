"""Train a one-layer DAE on 4-bit patterns and compare the exact stationary
distribution of its sampling chain with the data table.

Prints the table, the learned stationary distribution and their total
variation distance for each corruption level given on the command line.
"""

import argparse

import numpy as np

from gsnlab.chainlab import dae_exact_operator, ergodicity_check
from gsnlab.datasets import make_toy, prototype_table
from gsnlab.gsn import GsnConfig, GsnModel
from gsnlab.trainer import TrainConfig, train


def run(p, n=20_000, hidden=100, epochs=100, seed=0):
    table = prototype_table(4, n_modes=4, flip=0.2, seed=seed)
    ds = make_toy("bit-patterns", n, seed=seed, d=4, table=table)
    model = GsnModel(GsnConfig(visible_size=4, hidden_sizes=[hidden], input_corruption_p=p, seed=seed))
    train(model, ds.examples, TrainConfig(learning_rate=0.1, lr_decay_per_epoch=0.97, epochs=epochs,
                                          minibatch_size=100, seed=seed))
    op = dae_exact_operator(model)
    pi = op.stationary().ravel()
    return table, pi, ergodicity_check(op)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[0.1, 0.4])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    np.set_printoptions(precision=3, suppress=True)
    for p in args.p:
        table, pi, erg = run(p, epochs=args.epochs, seed=args.seed)
        print(f"p={p}: ergodic={erg.ergodic}  TV={0.5 * np.abs(pi - table).sum():.4f}")
        print("  table     ", table)
        print("  stationary", pi)


if __name__ == "__main__":
    main()
