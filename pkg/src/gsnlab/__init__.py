"""Generative stochastic networks trained by walkback back-propagation, with
exact finite-state chain analysis and Parzen-window evaluation."""

from .chainlab import (
    ChainOperator,
    DepNetSpec,
    StateSpace,
    dae_exact_operator,
    depnet_operator,
    ergodicity_check,
    joint_chain_operator,
    schweitzer_bound,
)
from .datasets import Dataset, downsample, load_idx, make_toy
from .diffgraph import Graph, ParameterStore
from .gsn import GsnConfig, GsnModel, GsnState, build_walkback_graph, chain_step, layer_update
from .ndnum import Rng, stationary_distribution
from .parzen import ParzenEstimator, log_likelihood, select_bandwidth
from .sampler import SampleRun, sample, sample_clamped
from .trainer import TrainConfig, TrainReport, train

__version__ = "0.1.0"
