"""Python bindings for the mcce multi-objective search loop."""

import json as _json

from ._mcce import (
    ConfigError,
    Error,
    InitFailed,
    LogParseError,
    __version__,
    dominates,
    dpo_loss,
    fingerprint,
    hypervolume,
    metrics_csv,
    nondominated_ranks,
    parse_response,
    prompt_similarity,
    tanimoto,
    znormalize,
)
from . import _mcce


def similarity_stats(samples):
    """Mean, population sigma, filter band and the I1-I3 windows of similarity samples."""
    return _json.loads(_mcce._similarity_stats(list(samples)))


def synthesize(log_path, window=100, alpha=0.3, pairs=1):
    """Preference triplets and the synthesis report for a trajectory log."""
    lines, report = _mcce._synthesize(str(log_path), window, alpha, pairs)
    return [_json.loads(line) for line in lines], _json.loads(report)


def run(config=None, overrides=(), output_dir=None):
    """Runs the search loop. `config` is a dict or a JSON string."""
    if config is None:
        config = {}
    if not isinstance(config, str):
        config = _json.dumps(config)
    out = _mcce._run(config, list(overrides), None if output_dir is None else str(output_dir))
    return _json.loads(out)


__all__ = [
    "ConfigError",
    "Error",
    "InitFailed",
    "LogParseError",
    "__version__",
    "dominates",
    "dpo_loss",
    "fingerprint",
    "hypervolume",
    "metrics_csv",
    "nondominated_ranks",
    "parse_response",
    "prompt_similarity",
    "run",
    "similarity_stats",
    "synthesize",
    "tanimoto",
    "znormalize",
]
