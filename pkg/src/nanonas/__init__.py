"""Desk-scale differentiable architecture search over masked superkernels."""

from . import autodiff
from .autodiff import Graph, Tensor
from .data import Dataset, load_idx, synth_classification, write_idx
from .engine import (SGD, SearchConfig, SearchReport, loss, random_search, run_search,
                     search, search_bilevel, shared_subset_ablation, train_fixed,
                     variance_study)
from .errors import (ConfigError, DivergenceError, FormatError, InfeasibleError,
                     NanonasError, NumericError, ShapeError)
from .fixednet import FixedMBConv, FixedNet, fixed_net_from_supernet
from .hypertune import (GPModel, HyperObjective, TradeoffSample, bo_suggest, grid_study,
                        hypertune, multifidelity_suggest, reward)
from .latency import LatencyTable, ingest_lut, layer_runtime, lutgen, network_runtime
from .searchspace import (ALL_TYPES, SKIP, DropoutSchedule, MBConvType, SearchSpaceConfig,
                          Supernet, decode_architecture, default_config, enumerable_config,
                          indicator)

__version__ = "0.1.0"
