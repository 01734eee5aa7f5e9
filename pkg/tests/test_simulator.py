import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from echelon.demand import DemandSpec
from echelon.policies import SmaForecaster
from echelon.simulator import (LAYERS, ChainConfig, LayerState, RunResult, audit, blend_forecast,
                               candidate_orders, choose_order, evaluate_candidate, new_chain,
                               round_to_batch, run_episode, safety_stock, step_day)

CFG = ChainConfig()


class Fixed:
    """Forecaster that always predicts the same 7 values."""

    direct = False
    fitted = True

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def forecast(self, state, t):
        return self.values


def test_safety_stock_examples():
    cfg = CFG.with_overrides(safety_stock_base=10.0)
    assert safety_stock([50.0] * 12, cfg) == 10.0
    assert safety_stock([40.0, 60.0] * 5, cfg) == pytest.approx(20.0)
    assert safety_stock([33.0], CFG.with_overrides(safety_stock_base=5.0)) == 5.0


def test_blend_examples():
    assert blend_forecast([10.0] * 7, [10.0] * 7, CFG)[0] == pytest.approx(10.0)
    point, sm = blend_forecast([10.0] * 7, [0.0] * 7, CFG)
    assert np.allclose(sm, 3.0) and point == pytest.approx(3.0)
    raw = [7, 6, 5, 4, 3, 2, 1]
    w = [1 - 0.5 * k / 6 for k in range(7)]
    assert sum(w) == pytest.approx(5.25)
    point, _ = blend_forecast(raw, raw, CFG)
    assert point == pytest.approx(sum(a * b for a, b in zip(w, raw)) / 5.25)
    assert point == pytest.approx(23.3333333 / 5.25)


def test_blend_rejects_wrong_length():
    with pytest.raises(ValueError):
        blend_forecast([1.0] * 6, None, CFG)


def test_candidate_examples():
    cfg = CFG.with_overrides(max_inventory=1000.0)
    # lo = 50, hi = 210 via 1.5 * 20 * 7 = 210 on empty stock
    assert candidate_orders(40.0, 10.0, 0.0, [20.0] * 10, cfg) == [50, 130, 210]
    assert candidate_orders(10.0, 5.0, 900.0, [50.0] * 10, cfg) == [0]
    assert candidate_orders(50.0, 15.0, 100.0, [50.0] * 10, cfg) == [0, 80, 160, 240, 320, 400, 425]


def test_candidate_cap_by_max_inventory():
    cfg = CFG.with_overrides(max_inventory=300.0)
    assert candidate_orders(50.0, 15.0, 100.0, [50.0] * 10, cfg)[-1] == 200


def test_evaluate_candidate_examples():
    st_ = LayerState(layer=1, inventory=100.0, demand=[0.0])
    assert evaluate_candidate(0, [0.0] * 7, st_, 1, CFG) == pytest.approx(-21.0)
    st_ = LayerState(layer=1, inventory=100.0, demand=[50.0])
    assert evaluate_candidate(0, [50.0] * 7, st_, 1, CFG) == pytest.approx(6989.5)


def test_zero_margin_candidate():
    cfg = CFG.with_overrides(unit_cost=(0, 30, 45, 60), unit_price=(0, 30.000001, 46, 61),
                             holding_rate=0.0, shortage_rate=0.0)
    st_ = LayerState(layer=1, inventory=0.0, demand=[10.0])
    for q in (0, 10, 70, 200):
        assert evaluate_candidate(q, [10.0] * 7, st_, 1, cfg) <= 1e-4 * 70 + 1e-9


def test_evaluate_counts_pipeline():
    st_ = LayerState(layer=1, inventory=0.0, demand=[10.0], pipeline=[(1, 30.0)])
    # pipeline lands day 1, new order lands day 1 too
    p = evaluate_candidate(0, [10.0] * 7, st_, 1, CFG)
    expect = 3 * 10 * 70 - 30 * 30 - 0.03 * (0.5 * (30 + 20) + 0.5 * (20 + 10) + 0.5 * (10 + 0)) - 4 * 0.3
    assert p == pytest.approx(expect)


def test_round_to_batch():
    assert round_to_batch(17, 16) == 32
    assert round_to_batch(16, 16) == 16
    assert round_to_batch(0, 16) == 0


def test_choose_order_concave_ledger():
    fc = [40.0, 40.0, 40.0, 10.0, 0.0, 0.0, 0.0]
    w = np.array([1 - 0.5 * k / 6 for k in range(7)])
    d_hat = float(w @ fc / w.sum())
    cfg = CFG.with_overrides(safety_stock_base=50.0 - d_hat)
    st_ = LayerState(layer=1, inventory=0.0, demand=[20.0] * 10)
    cands = candidate_orders(d_hat, safety_stock(st_.demand, cfg), 0.0, st_.demand, cfg)
    assert cands == [50, 130, 210]
    profits = [evaluate_candidate(q, fc, st_, 1, cfg) for q in cands]
    assert profits[1] > profits[0] and profits[1] > profits[2]
    assert choose_order(st_, fc, 1, cfg) == 144


def test_choose_order_zero():
    st_ = LayerState(layer=2, inventory=500.0, demand=[0.0] * 10)
    assert choose_order(st_, [0.0] * 7, 2, CFG.with_overrides(safety_stock_base=0.0)) == 0


def test_step_day_layer1_ledger():
    chain = new_chain(CFG)
    models = [Fixed([0.0] * 7) for _ in LAYERS]
    led = step_day(chain, 0, 50.0, models, CFG.with_overrides(safety_stock_base=0.0))
    l1 = led[0]
    assert (l1.revenue, l1.holding_cost, l1.shortage_cost) == (3500.0, pytest.approx(2.25), 0.0)
    assert l1.profit == pytest.approx(3497.75)


def test_step_day_out_of_range():
    with pytest.raises(ValueError):
        step_day(new_chain(CFG), CFG.horizon, 1.0, [Fixed([0] * 7)] * 3, CFG)


def test_quiescent_chain():
    cfg = CFG.with_overrides(safety_stock_base=0.0, horizon=300, train_days=219)
    spec = DemandSpec(base=0.0, seasonal_amp=0.0, weekly_amp=0.0, noise_sd=0.0, horizon=300)
    run = run_episode(cfg, spec, [SmaForecaster() for _ in LAYERS])
    for i in LAYERS:
        assert np.all(run.series(i, "orders") == 0)
        assert np.all(run.series(i, "revenue") == 0)
        assert np.allclose(run.series(i, "profit"), -run.series(i, "holding"))
    assert audit(run, cfg) == []


def test_upstream_supply_capped():
    # layer 2 holds 0 stock, so layer 1's order is lost upstream and never arrives
    cfg = CFG.with_overrides(initial_inventory=0.0)
    chain = new_chain(cfg)
    models = [Fixed([60.0] * 7) for _ in LAYERS]
    step_day(chain, 0, 10.0, models, cfg)
    order1 = chain[0].orders[0]
    assert order1 > 0 and chain[1].unmet[0] == order1
    assert chain[0].pipeline == [(1, 0.0)]
    assert chain[2].pipeline == [(1, chain[2].orders[0])]  # infinite raw-material source


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0, 200), min_size=30, max_size=60), st.floats(0, 300))
def test_step_day_identities(demands, init):
    cfg = CFG.with_overrides(initial_inventory=init)
    chain = new_chain(cfg)
    models = [SmaForecaster() for _ in LAYERS]
    prev = [init] * 3
    for t, d in enumerate(demands):
        led = step_day(chain, t, d, models, cfg)
        for k, (state, l) in enumerate(zip(chain, led)):
            assert state.inventory >= 0
            assert all(day > t for day, _ in state.pipeline)
            assert state.inventory == pytest.approx(prev[k] + l.arrivals - l.sales, abs=1e-9)
            assert l.profit == l.revenue - l.purchase_cost - l.holding_cost - l.shortage_cost
            assert l.order % cfg.batch_size == 0
            prev[k] = state.inventory
        assert led[1].demand == led[0].order and led[2].demand == led[1].order


def test_episode_determinism_and_roundtrip(tmp_path):
    cfg = CFG.with_overrides(horizon=400)
    spec = DemandSpec(seed=42, horizon=400)
    a = run_episode(cfg, spec, [SmaForecaster() for _ in LAYERS], name="SMA")
    b = run_episode(cfg, spec, [SmaForecaster() for _ in LAYERS], name="SMA")
    assert a.to_json() == b.to_json()
    assert audit(a, cfg) == []
    a.save(tmp_path / "r.json")
    c = RunResult.load(tmp_path / "r.json")
    assert c.to_json() == a.to_json()
    d = c.to_dict()
    assert {"model", "seed", "layers"} <= set(d)
    assert {"demand", "orders", "sales", "inventory", "profit", "cum_profit", "holding",
            "shortage"} <= set(d["layers"][0]["series"])


def test_noise_only_touches_validation():
    cfg = CFG.with_overrides(horizon=400)
    spec = DemandSpec(seed=42, horizon=400)
    clean = run_episode(cfg, spec, [SmaForecaster() for _ in LAYERS], 0.0)
    noisy = run_episode(cfg, spec, [SmaForecaster() for _ in LAYERS], 1.0)
    n = cfg.train_days
    assert np.array_equal(clean.consumer_demand[:n], noisy.consumer_demand[:n])
    assert not np.array_equal(clean.consumer_demand[n:], noisy.consumer_demand[n:])


def test_audit_detects_tampering():
    cfg = CFG.with_overrides(horizon=300)
    run = run_episode(cfg, DemandSpec(horizon=300), [SmaForecaster() for _ in LAYERS])
    run.layers[1]["inventory"][250] += 1.0
    run.layers[0]["profit"][10] += 1.0
    problems = audit(run, cfg)
    assert any("layer 2 day 250" in p for p in problems)
    assert any("layer 1 day 10: profit" in p for p in problems)


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(unit_price=(0, 20, 100, 130))
    with pytest.raises(ValueError):
        ChainConfig(lead_time=0)
    with pytest.raises(ValueError):
        ChainConfig(batch_size=0)
