import json
import math

import numpy as np
import pytest
import scipy.stats as ss

from echelon.core import Rng
from echelon.search import (DESK_SPACE, FULL_SPACE, in_space, objective, run_search, sample_config,
                            sample_value)


def test_grid_values_on_step():
    rng = Rng(3)
    seen = {sample_value(("grid", 64, 1024, 64), rng) for _ in range(2000)}
    assert seen == set(range(64, 1025, 64))
    assert {sample_value(("grid", 5, 20, 1), rng) for _ in range(2000)} == set(range(5, 21))


def test_log_uniform_is_uniform_in_log10():
    rng = Rng(11)
    lr = np.array([sample_value(("log", 1e-5, 1e-3), rng) for _ in range(4000)])
    assert lr.min() >= 1e-5 and lr.max() <= 1e-3
    u = (np.log10(lr) + 5) / 2
    assert ss.kstest(u, "uniform").pvalue > 0.01


@pytest.mark.parametrize("space", [DESK_SPACE, FULL_SPACE])
def test_samples_stay_in_space(space):
    rng = Rng(5)
    for kind in space:
        for _ in range(50):
            assert in_space(sample_config(kind, rng, space), space[kind])


def test_desk_space_is_inside_full_space():
    rng = Rng(8)
    for kind in DESK_SPACE:
        for _ in range(50):
            assert in_space(sample_config(kind, rng, DESK_SPACE), FULL_SPACE[kind])


def test_in_space_rejects_off_grid():
    space = FULL_SPACE["LNN"]
    good = sample_config("LNN", Rng(1), FULL_SPACE)
    assert in_space(good, space)
    assert not in_space({**good, "neurons": 100}, space)
    assert not in_space({**good, "lr": 1e-2}, space)


@pytest.fixture(scope="module")
def sma_search():
    return run_search("sma", trials=4, seed=42)


def test_search_argmax_and_log(sma_search):
    res = sma_search
    assert len(res.log) == 4
    scores = [e["objective"] for e in res.log]
    assert res.best_objective == max(scores)
    assert res.best_trial == scores.index(max(scores))
    assert res.best_params == res.log[res.best_trial]["params"]
    assert all(math.isfinite(s) for s in scores)
    assert json.loads(res.log_json())[0]["trial"] == 0


def test_search_deterministic(sma_search):
    again = run_search("SMA", trials=4, seed=42)
    assert again.log == sma_search.log and again.best_trial == sma_search.best_trial


def test_single_trial_and_budget():
    res = run_search("SMA", trials=1, seed=7)
    assert res.best_trial == 0 and len(res.log) == 1
    with pytest.raises(ValueError):
        run_search("SMA", trials=0)


def test_objective_is_layer3_validation_profit(sma_search):
    from echelon.search import evaluate_config
    from echelon.simulator import ChainConfig
    from echelon.demand import DemandSpec
    run = evaluate_config("SMA", sma_search.best_params, 42, ChainConfig(), DemandSpec(seed=42))
    assert objective(run) == pytest.approx(float(np.sum(run.validation(3, "profit"))))
