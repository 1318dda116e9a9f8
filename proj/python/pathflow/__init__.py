"""Python bindings for the pathflow library.

Configs and reports are plain dicts; they take the same JSON schema as the ``pathflow run`` CLI.
"""

import json

from ._pathflow import (
    PathflowError,
    accept,
    build_id,
    set_thread_count,
    simulate_present,
    thread_count,
)

__all__ = [
    "PathflowError",
    "accept",
    "benchmarks",
    "build_id",
    "run",
    "set_thread_count",
    "simulate_present",
    "thread_count",
]


def run(config):
    """Run one experiment and return the report as a dict."""
    from ._pathflow import run_json

    return json.loads(run_json(json.dumps(config)))


def benchmarks():
    """The benchmark registry: name, description, closed form and provenance per row."""
    from ._pathflow import benchmarks_json

    return json.loads(benchmarks_json())
