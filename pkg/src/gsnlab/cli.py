"""Command-line entry point: ``gsnlab <command> [--config FILE] [--key value ...]``.

Settings come from one flat ``key = value`` file (``#`` starts a comment)
and are overridden by flags of the same name (``--learning-rate 0.1``).
Unknown keys are rejected.  Every command writes the fully resolved
settings to ``<out>/resolved_config.txt`` and only writes inside ``--out``.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import chainlab, datasets, parzen, sampler
from .errors import GsnError, ParameterError
from .gsn import GsnConfig, GsnModel
from .ndnum import Rng
from .trainer import TrainConfig, train

log = logging.getLogger("gsnlab")

# key: (default, help)
SETTINGS = {
    "seed": (0, "master seed"),
    "out": ("out", "output directory"),
    # data
    "dataset": ("", "training data: CSV file, IDX image file, or toy:<two-gaussians-2d|bit-patterns|ring>"),
    "binarize": (True, "binarize IDX pixels at 0.5"),
    "downsample": (1, "block-mean pooling factor for image data"),
    "toy_n": (2000, "number of toy examples"),
    "toy_bits": (4, "bits per example for toy:bit-patterns"),
    # model
    "hidden_sizes": ("100", "comma-separated hidden layer sizes"),
    "eta_in": (2.0, "pre-activation noise std (layers >= 2)"),
    "eta_out": (2.0, "post-activation noise std (layers >= 2)"),
    "corruption_p": (0.4, "salt-and-pepper corruption probability"),
    "visible_noise_std": (0.5, "Gaussian corruption std for real-valued visibles"),
    "walkback_steps": (0, "unrolled reconstruction steps (0 = 2 x depth)"),
    "corrupt_every_step": (True, "corrupt every resampled visible, not just the first"),
    "odd_first": (True, "update odd hidden layers before even ones"),
    "persist_h0": (False, "reuse each example's last H1 as its next H0 during training"),
    # training
    "learning_rate": (0.25, "initial learning rate"),
    "momentum": (0.5, "momentum coefficient"),
    "lr_decay": (0.99, "multiplicative learning-rate decay per epoch"),
    "epochs": (100, "training epochs"),
    "batch_size": (1, "minibatch size"),
    # sampling
    "checkpoint": ("", "model checkpoint to sample from"),
    "burn_in": (1000, "chain steps discarded before collection"),
    "num_samples": (100, "samples collected per chain"),
    "thinning": (1, "chain steps between collected samples"),
    "n_chains": (1, "independent chains run side by side"),
    "mean_field": (True, "collect reconstruction means instead of binary samples"),
    "init": ("random", "chain start: random or data (first row of dataset)"),
    "grid_rows": (10, "rows of the PGM sample sheet"),
    "grid_cols": (10, "columns of the PGM sample sheet"),
    "image_shape": ("", "HxW of one sample image (default: square if possible)"),
    "clamp_mask": ("", "0/1 flags (CSV file or inline list), 1 = clamped"),
    "clamp_values": ("", "clamped visible values (CSV file or inline list)"),
    # parzen
    "samples": ("", "CSV of generated samples"),
    "test": ("", "CSV or IDX file of test points"),
    "sigma": (0.0, "Parzen bandwidth (0 = select on a validation split)"),
    "sigma_grid": ("", "comma-separated bandwidth grid (default 20 log-spaced in [0.05, 1])"),
    "valid_fraction": (0.1, "fraction of test points used for bandwidth selection"),
    # chain analysis
    "trials": (200, "random trials for the perturbation-bound battery"),
    "theorem2_trials": (20, "random table models for the stationarity battery"),
    "max_states": (16, "largest chain in the perturbation-bound battery"),
}

COMMANDS = ("train", "sample", "inpaint", "eval-parzen", "analyze-chain", "verify")


def _parse_value(key, text):
    default = SETTINGS[key][0]
    text = str(text).strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ParameterError(f"bad value for {key!r}: {text!r}") from None
    return text


def read_config_file(path):
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in SETTINGS:
                raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _parse_value(key, value)
    return out


def resolve(config_path=None, overrides=None):
    cfg = {k: v[0] for k, v in SETTINGS.items()}
    if config_path:
        cfg.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in SETTINGS:
            raise ParameterError(f"unknown key {key!r}")
        cfg[key] = _parse_value(key, value)
    return cfg


def build_parser():
    p = argparse.ArgumentParser(prog="gsnlab", description="Generative stochastic network toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value settings file")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key, (default, help_) in SETTINGS.items():
            flags = ["--" + key.replace("_", "-")]
            if "_" in key:
                flags.append("--" + key)
            sp.add_argument(*flags, dest=key, default=None, help=f"{help_} (default: {default!r})")
    return p


def _write_resolved(cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in cfg.items()]
    with open(os.path.join(cfg["out"], "resolved_config.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    for line in lines:
        log.info("config %s", line)


def _out(cfg, name):
    return os.path.join(cfg["out"], name)


def _require(cfg, key):
    if cfg[key] in ("", None):
        raise ParameterError(f"missing required setting {key!r}")
    return cfg[key]


def load_dataset(cfg, key="dataset"):
    src = _require(cfg, key)
    if src.startswith("toy:"):
        kind = src[4:]
        return datasets.make_toy(kind, cfg["toy_n"], seed=cfg["seed"], d=cfg["toy_bits"])
    if not os.path.exists(src):
        raise ParameterError(f"{key}: no such file {src!r}")
    if src.endswith(".csv"):
        ds = datasets.read_csv(src)
    else:
        ds = datasets.load_idx(src, binary=cfg["binarize"])
    if cfg["downsample"] > 1:
        ds = datasets.downsample(ds, cfg["downsample"])
    return ds


def model_config(cfg, ds):
    sizes = [int(s) for s in str(cfg["hidden_sizes"]).split(",") if s.strip()]
    return GsnConfig(
        visible_size=ds.dim,
        hidden_sizes=sizes,
        eta_in=cfg["eta_in"],
        eta_out=cfg["eta_out"],
        input_corruption_p=cfg["corruption_p"],
        walkback_steps=cfg["walkback_steps"],
        visible_kind="binary" if ds.kind == "binary" else "real",
        seed=cfg["seed"],
        visible_noise_std=cfg["visible_noise_std"],
        corrupt_every_step=cfg["corrupt_every_step"],
        odd_first=cfg["odd_first"],
        persist_h0=cfg["persist_h0"],
    )


def cmd_train(cfg):
    ds = load_dataset(cfg)
    model = GsnModel(model_config(cfg, ds))
    tc = TrainConfig(
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        lr_decay_per_epoch=cfg["lr_decay"],
        epochs=cfg["epochs"],
        minibatch_size=cfg["batch_size"],
        seed=cfg["seed"],
    )
    report = train(model, ds.subset("train").examples, tc)
    digest = model.save(_out(cfg, "model.ckpt"))
    report.write_csv(_out(cfg, "train_report.csv"))
    print(f"checkpoint sha256 {digest}")
    if report.mean_nll:
        print(f"final mean walkback NLL {report.mean_nll[-1]:.6f} after {len(report)} epochs")
    return 0


def _image_shape(cfg, v):
    if cfg["image_shape"]:
        h, w = (int(s) for s in cfg["image_shape"].lower().split("x"))
        return h, w
    side = int(round(np.sqrt(v)))
    return (side, side) if side * side == v else (1, v)


def _read_row(path, key):
    """A CSV file holding one row, or the row itself written inline as ``1,0,1``."""
    if not os.path.exists(path):
        try:
            return np.array([float(t) for t in path.split(",")])
        except ValueError:
            raise ParameterError(f"{key}: no such file {path!r}") from None
    return np.loadtxt(path, delimiter=",", ndmin=2)[0]


def _run_sampler(cfg, clamped):
    model = GsnModel.load(_require(cfg, "checkpoint"))
    v = model.config.visible_size
    run = sampler.SampleRun(
        burn_in=cfg["burn_in"],
        num_samples=cfg["num_samples"],
        thinning=cfg["thinning"],
        collect_mean_field=cfg["mean_field"],
        n_chains=cfg["n_chains"],
    )
    x_init = None
    if cfg["init"] == "data":
        x_init = np.repeat(load_dataset(cfg).examples[:1], cfg["n_chains"], axis=0)
    elif cfg["init"] != "random":
        raise ParameterError(f"init must be 'random' or 'data', got {cfg['init']!r}")
    rng = Rng(cfg["seed"], stream=3)
    if clamped:
        mask = _read_row(_require(cfg, "clamp_mask"), "clamp_mask") > 0.5
        values = _read_row(_require(cfg, "clamp_values"), "clamp_values").reshape(1, -1)
        if mask.size != v or values.shape[1] != v:
            raise ParameterError(f"clamp_mask and clamp_values need {v} entries")
        run.clamp_mask, run.clamp_values = mask, values
        rows = sampler.stack_samples(sampler.sample_clamped(model, run, rng, x_init))
        stem = "inpaint"
    else:
        rows = sampler.stack_samples(sampler.sample(model, run, rng, x_init))
        stem = "samples"
    sampler.write_csv(_out(cfg, f"{stem}.csv"), rows)
    if len(rows):
        grid = sampler.to_grid(rows, _image_shape(cfg, v), (cfg["grid_rows"], cfg["grid_cols"]))
        sampler.write_pgm(_out(cfg, f"{stem}.pgm"), grid)
    print(f"wrote {len(rows)} samples to {_out(cfg, stem + '.csv')}")
    return 0


def cmd_sample(cfg):
    return _run_sampler(cfg, clamped=False)


def cmd_inpaint(cfg):
    return _run_sampler(cfg, clamped=True)


def cmd_eval_parzen(cfg):
    samples = datasets.read_csv(_require(cfg, "samples")).examples
    test = load_dataset(cfg, "test").examples
    if cfg["sigma"] > 0:
        mean, se = parzen.log_likelihood(parzen.ParzenEstimator(samples, cfg["sigma"]), test)
        sigma = cfg["sigma"]
    else:
        grid = [float(s) for s in cfg["sigma_grid"].split(",") if s.strip()] or None
        mean, se, sigma = parzen.evaluate(samples, test, grid, cfg["valid_fraction"], Rng(cfg["seed"], stream=4))
    with open(_out(cfg, "parzen.json"), "w") as f:
        json.dump({"mean": mean, "std_error": se, "sigma": sigma}, f)
    print(f"Parzen log-likelihood {mean:.4f} +- {se:.4f} (sigma {sigma:.4g})")
    return 0


def cmd_analyze_chain(cfg):
    model = GsnModel.load(_require(cfg, "checkpoint"))
    op = chainlab.dae_exact_operator(model)
    erg = chainlab.ergodicity_check(op)
    row = {"trial": 0, "irreducible": erg.irreducible, "period": erg.period, "ergodic": erg.ergodic}
    pi = op.stationary() if erg.irreducible else None
    if pi is not None:
        np.savetxt(_out(cfg, "stationary.csv"), pi.reshape(1, -1), delimiter=",", fmt="%.17g")
        if cfg["dataset"] == "toy:bit-patterns":
            table = load_dataset(cfg).table
            row["tv_to_table"] = float(0.5 * np.abs(pi - table).sum())
    chainlab.write_report(_out(cfg, "chain_report.jsonl"), [row])
    print(json.dumps(row))
    return 0


def cmd_verify(cfg):
    from .verify import run_all

    ok = run_all(cfg["out"], seed=cfg["seed"], trials=cfg["trials"], max_states=cfg["max_states"],
                 theorem2_trials=cfg["theorem2_trials"])
    return 0 if ok else 1


HANDLERS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "inpaint": cmd_inpaint,
    "eval-parzen": cmd_eval_parzen,
    "analyze-chain": cmd_analyze_chain,
    "verify": cmd_verify,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k) for k in SETTINGS}
        cfg = resolve(args.config, overrides)
        _write_resolved(cfg)
        return HANDLERS[args.command](cfg)
    except (GsnError, OSError) as exc:
        print(f"gsnlab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
