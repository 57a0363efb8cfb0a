"""Budget-constrained demonstration selection experiments.

Thin wrappers over the compiled core: structured values cross the C++
boundary as JSON strings and are decoded here.
"""

import json
from pathlib import Path

from iclbudget._core import (
    __version__,
    conllu_to_jsonl,
    cosine_similarity,
    entropy,
    hash_embed,
    pearson,
)
from iclbudget import _core

__all__ = [
    "__version__",
    "conllu_to_jsonl",
    "cosine_similarity",
    "entropy",
    "hash_embed",
    "max_pool_size",
    "pearson",
    "render_annotation",
    "parse_completion",
    "run",
    "run_oracle",
    "resume",
    "report",
    "select_pool",
    "score",
]


def run(config_path):
    """Execute the full sweep described by a config file."""
    return json.loads(_core.run_json(str(config_path)))


def run_oracle(config_path):
    """Evaluate the full-train-pool reference cell."""
    return json.loads(_core.run_oracle_json(str(config_path)))


def resume(manifest_path):
    """Complete the pending cells of an existing run."""
    return json.loads(_core.resume_json(str(manifest_path)))


def report(run_dir):
    """Regenerate CSV/plot outputs from cell artifacts."""
    return json.loads(_core.report_json(str(run_dir)))


def select_pool(config_path, strategy, k, seed=0):
    """Select an annotation pool; returns the pool as a dict."""
    return json.loads(_core.select_pool_json(str(config_path), strategy, k, seed))


def max_pool_size(config_path):
    """Largest pool the retrieval step can ever touch under this config."""
    return _core.max_pool_size(str(config_path))


def render_annotation(task, sample):
    """Render a gold-annotated sample (a dict) into prompt text."""
    return _core.render_annotation(task, json.dumps(sample))


def parse_completion(task, output, sample):
    """Parse a model completion against its inference sample (a dict)."""
    return json.loads(_core.parse_completion_json(task, output, json.dumps(sample)))


def score(task, samples, outputs):
    """Score raw completions against gold samples (list of dicts)."""
    samples_jsonl = "".join(json.dumps(s) + "\n" for s in samples)
    return json.loads(_core.score_json(task, samples_jsonl, list(outputs)))
