"""Monotone couplings of conditioned binomial Galton-Watson trees (d = 2, 3).

Exact combinatorics, flow-built coupling kernels, samplers for every tree
law in the construction, and window-level statistical verification.
"""

from .combinatorics import (
    CompanionPairLaws,
    OffspringParams,
    SizeLaw,
    as_fraction,
    companion_pair_laws,
    companion_size_law,
    count_trees,
    min_split_law,
    second_tree_factor,
    size_pmf,
    split_law,
    survival_probability,
)
from .rng import RngStream
from .treecore import DTree, WindowedTree, decode, enumerate_trees, vertex_key

__all__ = [
    "CompanionPairLaws",
    "DTree",
    "OffspringParams",
    "RngStream",
    "SizeLaw",
    "WindowedTree",
    "as_fraction",
    "companion_pair_laws",
    "companion_size_law",
    "count_trees",
    "decode",
    "enumerate_trees",
    "min_split_law",
    "second_tree_factor",
    "size_pmf",
    "split_law",
    "survival_probability",
    "vertex_key",
]
