import math

import numpy as np
import pytest

import pathflow


def test_build_id_is_a_string():
    assert isinstance(pathflow.build_id(), str)


def test_registry_lists_the_heat_benchmarks():
    names = {row["name"] for row in pathflow.benchmarks()}
    assert {"heat-present-square", "point-delay", "lq-control"} <= names


def test_value_run_matches_closed_form():
    report = pathflow.run(
        {
            "benchmark": "heat-present-square",
            "mode": "value",
            "grid": {"T": 1.0, "N": 20},
            "mc": {"seed": 3, "n_paths": 4000},
            "query": {"t0": 0.0, "x0": [0.5]},
        }
    )
    value = report["payload"]["value"]
    assert abs(value["mean"] - 1.25) <= 3.0 * value["std_error"]
    assert report["seed"] == 3


def test_reports_are_reproducible():
    config = {"benchmark": "heat-present-linear", "mode": "value", "mc": {"seed": 9, "n_paths": 500}}
    assert pathflow.run(config)["payload"] == pathflow.run(config)["payload"]


def test_invalid_config_raises():
    with pytest.raises(pathflow.PathflowError, match="mc.n_paths"):
        pathflow.run({"benchmark": "heat-present-square", "mode": "value", "mc": {"n_paths": 0}})


def test_simulated_brownian_paths():
    paths = pathflow.simulate_present("heat-present-square", 16, 4000, 5, [0.0])
    assert paths.shape == (4000, 17, 1)
    assert np.all(paths[:, 0, 0] == 0.0)
    terminal = paths[:, -1, 0]
    assert abs(terminal.mean()) <= 3.0 / math.sqrt(len(terminal))
    assert abs(terminal.var() - 1.0) <= 0.1


def test_fast_acceptance_subset():
    rows = pathflow.accept("fast", [1, 10])
    assert [r["id"] for r in rows] == [1, 10]
    assert all(r["passed"] for r in rows), [r["detail"] for r in rows]
