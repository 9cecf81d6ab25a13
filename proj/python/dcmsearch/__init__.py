"""Python access to the dcmsearch specification-search engine."""

import json

from . import _core
from ._core import ConfigError, DatasetError, apply_transform, credit_assign, space_size

__all__ = [
    "ConfigError",
    "DatasetError",
    "apply_transform",
    "credit_assign",
    "estimate",
    "null_log_likelihood",
    "pareto_front",
    "run",
    "space_size",
    "truth",
]


def run(*args):
    """Run a CLI subcommand in-process and return its exit code."""
    return _core.run_cli([str(a) for a in args])


def null_log_likelihood(data_path):
    """Log-likelihood of the equal-utility model on a wide CSV file."""
    return _core.null_log_likelihood(str(data_path))


def estimate(data_path, spec):
    """Estimate `spec` (dict in the spec JSON format) on a wide CSV file."""
    return json.loads(_core.estimate_json(str(data_path), json.dumps(spec)))


def truth(case_id, n=100, seed=0):
    """Specification and parameters of a simulated case."""
    return json.loads(_core.truth_json(case_id, n, seed))


def pareto_front(points, minimise=True):
    """Non-dominated (n_params, objective, key) triples, sorted by n_params."""
    return _core.pareto_front([tuple(p) for p in points], minimise)
