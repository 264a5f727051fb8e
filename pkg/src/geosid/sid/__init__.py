from .codes import (
    SidParseError,
    SpatialSemanticId,
    find_sid_runs,
    parse_sid,
    render_sid,
    sid_pattern,
)
from .registry import (
    SidBuildError,
    SidConfig,
    SidRegistry,
    SuffixOverflowWarning,
    assign_suffixes,
    build_registry,
    geospatial_prefix,
    load_embeddings,
    shared_hex_prefix,
    union_lcp,
    valid_next_tokens,
)
from .rvq import RvqModel, encode_semantic, reconstruction_errors, train_rvq
from .trie import TokenTrie

__all__ = [
    "RvqModel",
    "SidBuildError",
    "SidConfig",
    "SidParseError",
    "SidRegistry",
    "SpatialSemanticId",
    "SuffixOverflowWarning",
    "TokenTrie",
    "assign_suffixes",
    "build_registry",
    "encode_semantic",
    "find_sid_runs",
    "geospatial_prefix",
    "load_embeddings",
    "parse_sid",
    "reconstruction_errors",
    "render_sid",
    "shared_hex_prefix",
    "sid_pattern",
    "train_rvq",
    "union_lcp",
    "valid_next_tokens",
]
