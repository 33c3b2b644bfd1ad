"""Graph-bridged video question answering: graph operators, IO and training."""

import json
import os

from . import _bta
from ._bta import (
    CheckpointMismatchError,
    ConfigError,
    FormatError,
    IngestionError,
    IoError,
    ManifestError,
    NumericError,
    adjacency,
    burst_direction,
    gcn_forward,
    gradient_check,
    interaction_matrix,
    load_trace,
    question_affinity,
    question_graph_weights,
    read_tensor,
    round_count,
    select_answer,
    visual_edge_weights,
    write_tensor,
)


def write_synthetic(directory, **spec):
    """Write a planted synthetic dataset; returns the manifest path."""
    return _bta.write_synthetic(os.fspath(directory), json.dumps(spec))


def train(config, base_dir="."):
    """Train from a run-config dict (same keys as the CLI config file)."""
    return _bta.train(json.dumps(config), os.fspath(base_dir))


def evaluate(checkpoint, manifest):
    """Returns (metric name, value)."""
    return _bta.evaluate(os.fspath(checkpoint), os.fspath(manifest))


def infer(checkpoint, manifest):
    """Returns [(sample id, answer, output array)]."""
    return _bta.infer(os.fspath(checkpoint), os.fspath(manifest))


def dump_interactions(checkpoint, manifest, sample_id, out):
    _bta.dump_interactions(os.fspath(checkpoint), os.fspath(manifest), sample_id, os.fspath(out))
    return load_trace(os.fspath(out))


__all__ = [name for name in dir() if not name.startswith("_")]
