"""kpp: greedy key-patch selection for masked image reconstruction.

Given an image split into a grid of patches and a reconstruction oracle,
the selector greedily picks the budgeted subset of patches that minimizes
the masked reconstruction error. A submodularity lab verifies the
diminishing-returns structure that justifies the lazy variant, and a
harness reproduces greedy-vs-random loss curves.
"""

from .errors import GeometryError, ImageLoadError, KppError, OracleError
from .oracle import (
    IdwOracle,
    MeanFillOracle,
    OracleInterface,
    PatchSet,
    Reconstruction,
    NO_INFO_FULL_MSE,
    full_mse,
    masked_mse,
    reconstruct_idw,
    reconstruct_mean_fill,
)
from .patch_grid import GridSpec, assemble, central_index, load_and_resize, split
from .selector import (
    Budget,
    InitPolicy,
    SelectionTrace,
    TraceStep,
    kpp_greedy,
    lazy_greedy,
    random_select,
    resolve_budget,
)

__all__ = [
    "Budget",
    "GeometryError",
    "GridSpec",
    "IdwOracle",
    "ImageLoadError",
    "InitPolicy",
    "KppError",
    "MeanFillOracle",
    "OracleError",
    "OracleInterface",
    "PatchSet",
    "Reconstruction",
    "SelectionTrace",
    "TraceStep",
    "assemble",
    "NO_INFO_FULL_MSE",
    "central_index",
    "full_mse",
    "kpp_greedy",
    "lazy_greedy",
    "load_and_resize",
    "masked_mse",
    "random_select",
    "reconstruct_idw",
    "reconstruct_mean_fill",
    "resolve_budget",
    "split",
]

__version__ = "0.1.0"
