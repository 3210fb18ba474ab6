"""Tensor trains: container, cross approximation, algebra and quadrature."""
from .core import (
    TensorTrain,
    load,
    ones,
    random_tt,
    rank1,
    save,
    tt_add,
    tt_dot,
    tt_eval,
    tt_hadamard,
    tt_norm,
    tt_normalize,
    tt_round,
)
from .cross import CrossInfo, CrossWarning, EntryOracle, RankConfig, maxvol, tt_cross
from .quad import MeshGrid, ProxEstimationError, gaussian_factors, tt_integrate, tt_mean, tt_prox

__all__ = [
    "TensorTrain",
    "ones",
    "rank1",
    "random_tt",
    "tt_eval",
    "tt_add",
    "tt_dot",
    "tt_hadamard",
    "tt_norm",
    "tt_normalize",
    "tt_round",
    "save",
    "load",
    "EntryOracle",
    "RankConfig",
    "CrossInfo",
    "CrossWarning",
    "maxvol",
    "tt_cross",
    "MeshGrid",
    "ProxEstimationError",
    "gaussian_factors",
    "tt_integrate",
    "tt_prox",
    "tt_mean",
]
