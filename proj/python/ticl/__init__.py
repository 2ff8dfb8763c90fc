"""Text-visual in-context learning harness.

Thin dict-based wrappers over the native ``_ticl`` module.
"""

import json
from os import fspath

from . import _ticl
from ._ticl import (
    BackendError,
    BudgetError,
    Error,
    ParseError,
    ValidationError,
    cosine_similarity,
    count_tokens,
    default_template,
    extract_generation,
    kfold_mean,
    sha256_hex,
    task_ids,
)

__all__ = [
    "BackendError", "BudgetError", "Error", "ParseError", "ValidationError",
    "accuracy", "aggregate_tags", "build_prompt", "cosine_similarity", "count_tokens",
    "default_template", "extract_generation", "kfold_mean", "macro_f1", "parse_answer",
    "run_experiment", "sha256_hex", "task_ids", "task_spec", "vqa_exact_match",
]


def task_spec(task_id):
    return json.loads(_ticl.task_spec(task_id))


def aggregate_tags(bundle):
    """Thresholded tags of a raw tag bundle, plus their rendered text."""
    return json.loads(_ticl.aggregate_tags(json.dumps(bundle)))


def parse_answer(raw, task_id, extra_tasks=None):
    extra = json.dumps(extra_tasks) if extra_tasks else ""
    return json.loads(_ticl.parse_answer(raw, task_id, extra))


def build_prompt(task_id, samples, eval_sample, verbalizations, method_id="tags",
                 chars_per_token=4.0):
    return json.loads(_ticl.build_prompt(task_id, json.dumps(samples), json.dumps(eval_sample),
                                         json.dumps(verbalizations), method_id, chars_per_token))


def _record(r):
    out = {"prompt_hash": "", "raw_generation": "", "latency_ms": 0, "repeat": 0}
    out.update(r)
    out.setdefault("parsed_answer", r.get("matched") or "")
    out.setdefault("valid", r.get("matched") is not None)
    return out


def accuracy(records, golds):
    return _ticl.accuracy(json.dumps([_record(r) for r in records]), json.dumps(golds))


def macro_f1(records, golds, labels):
    return _ticl.macro_f1(json.dumps([_record(r) for r in records]), json.dumps(golds), list(labels))


def vqa_exact_match(records, golds):
    return _ticl.vqa_exact_match(json.dumps([_record(r) for r in records]), json.dumps(golds))


def run_experiment(config, base_dir=""):
    """Runs one experiment from a config dict; returns report, records and call counts."""
    return json.loads(_ticl.run_experiment(json.dumps(config), fspath(base_dir)))
