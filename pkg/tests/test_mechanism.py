import math

import numpy as np
import pytest

from postedpricing import (AdditiveValue, PiecewiseLinearCDF, PriceLottery,
                           PriceMenu, Uniform,
                           bang_per_buck_order, build_oblivious,
                           choose_epsilon, degenerate_lottery,
                           derandomize_additive, fractional_knapsack_value,
                           integral_knapsack_value, ironed_curve, market_size,
                           oblivious_guarantee,
                           reduce_lottery_pairs, run, select_within_budget,
                           sequential_guarantee, solve_additive,
                           two_price_lottery)

from oracles import lp_vertex_fractional, mechanism_expectation

U01 = Uniform(0, 1)


def _menu_from_prices(prices, quantiles=None, policy="fixed-sequence"):
    quantiles = [1.0] * len(prices) if quantiles is None else quantiles
    lots = tuple(PriceLottery(p, p, 1.0, q, q) for p, q in zip(prices, quantiles))
    return PriceMenu(lotteries=lots, quantiles=np.asarray(quantiles, float),
                     ordering_policy=policy)


def test_run_basic_trace():
    menu = _menu_from_prices([0.5, 0.5])
    vf = AdditiveValue((1.0, 1.0))
    out = run(menu, vf, [0.3, 0.6], 0.5, rng=0)
    assert out.selected == (0,)
    assert out.total_spend == 0.5
    assert out.offers_made == (0,)  # agent 1's price exceeds the leftover 0
    assert out.value == 1.0
    assert out.payments[0] == 0.5 and out.payments[1] == 0.0


def test_run_second_agent_rejected_but_offered():
    menu = _menu_from_prices([0.5, 0.4])
    out = run(menu, AdditiveValue((1.0, 1.0)), [0.3, 0.9], 1.0, rng=0)
    assert out.offers_made == (0, 1)
    assert out.selected == (0,)


def test_run_zero_budget_offers_nobody():
    menu = _menu_from_prices([0.5, 0.5])
    out = run(menu, AdditiveValue((1.0, 1.0)), [0.1, 0.1], 0.0, rng=0)
    assert out.selected == ()
    assert out.offers_made == ()
    assert out.value == 0.0


def test_run_skips_zero_quantile_agents():
    menu = _menu_from_prices([0.5, 0.5], quantiles=[1.0, 0.0])
    out = run(menu, AdditiveValue((1.0, 1.0)), [0.1, 0.0], 1.0, rng=0)
    assert out.offers_made == (0,)
    assert math.isnan(out.realized_prices[1])


def test_run_lottery_distribution_matches_enumeration():
    d = PiecewiseLinearCDF(((0.0, 0.0), (0.2, 0.5), (0.8, 0.6), (1.0, 1.0)))
    ic = ironed_curve(d)
    a, b = ic.intervals[0]
    lottery = two_price_lottery(ic, d, 0.5 * (a + b))
    lots = (degenerate_lottery(U01, 0.6), lottery, degenerate_lottery(U01, 0.4))
    quant = np.array([0.6, lottery.quantile, 0.4])
    menu = PriceMenu(lotteries=lots, quantiles=quant, ordering_policy="fixed-sequence")
    vf = AdditiveValue((1.0, 2.0, 1.5))
    budget = 1.0
    order = (0, 1, 2)
    exact = mechanism_expectation(lots, quant > 0, vf, order, budget)
    trials = 60_000
    rng = np.random.default_rng(11)
    dists = (U01, d, U01)
    total = 0.0
    for t in range(trials):
        costs = [float(di.inverse_cdf(rng.random())) for di in dists]
        total += run(menu, vf, costs, budget, order=order, rng=rng).value
    mean = total / trials
    assert abs(mean - exact) <= 4 * 2.0 / math.sqrt(trials)


def test_run_budget_never_exceeded_with_lotteries():
    d = PiecewiseLinearCDF(((0.0, 0.0), (0.2, 0.5), (0.8, 0.6), (1.0, 1.0)))
    ic = ironed_curve(d)
    a, b = ic.intervals[0]
    lot = two_price_lottery(ic, d, 0.5 * (a + b))
    menu = PriceMenu(lotteries=(lot,) * 3, quantiles=np.full(3, lot.quantile),
                     ordering_policy="fixed-sequence")
    vf = AdditiveValue((1.0, 1.0, 1.0))
    rng = np.random.default_rng(0)
    for _ in range(500):
        costs = d.inverse_cdf(rng.random(3))
        out = run(menu, vf, costs, 1.3, rng=rng)
        assert out.total_spend <= 1.3


def test_bang_per_buck_order_examples():
    assert bang_per_buck_order([4.0, 3.0], [2.0, 3.0]) == (0, 1)
    assert bang_per_buck_order([1.0, 2.0], [1.0, 2.0]) == (0, 1)  # tie -> index
    rng = np.random.default_rng(3)
    v = rng.uniform(0.1, 2.0, 5)
    p = rng.uniform(0.1, 2.0, 5)
    order = bang_per_buck_order(v, p)
    expected = tuple(sorted(range(5), key=lambda i: (-v[i] / p[i], i)))
    assert order == expected


def test_bang_per_buck_rejects_zero_price():
    with pytest.raises(ValueError):
        bang_per_buck_order([1.0], [0.0], [0.5])


def test_bang_per_buck_zero_quantile_goes_last():
    order = bang_per_buck_order([1.0, 9.0], [1.0, 0.0], [0.5, 0.0])
    assert order == (0, 1)


def test_run_bang_per_buck_policy_orders_by_ratio():
    menu = _menu_from_prices([0.5, 0.25], policy="bang-per-buck")
    vf = AdditiveValue((1.0, 1.0))
    # agent 1 has ratio 4 > 2 and goes first; nothing is left for agent 0
    out = run(menu, vf, [0.0, 0.0], 0.25, rng=0)
    assert out.selected == (1,)


def test_choose_epsilon_matches_dense_recomputation():
    k = 100.0
    eps = choose_epsilon(k)
    grid = np.linspace(2.0 / k, 0.5, 300_001)[1:-1]
    vals = (1 - grid) * (1 - np.exp(-grid ** 2 * (1 - grid) * k / 12))
    best = float(vals.max())
    assert oblivious_guarantee(k, eps) >= best - 1e-6


def test_choose_epsilon_monotone_value_in_k():
    b100 = oblivious_guarantee(100, choose_epsilon(100))
    b1000 = oblivious_guarantee(1000, choose_epsilon(1000))
    assert b1000 > b100


def test_choose_epsilon_narrow_interval():
    k = 4.0001
    eps = choose_epsilon(k)
    assert 2.0 / k < eps < 0.5


def test_choose_epsilon_rejects_small_markets():
    with pytest.raises(ValueError):
        choose_epsilon(4.0)


def test_build_oblivious_scaled_uniform_market():
    vf = AdditiveValue((1.0,) * 16)
    menu = build_oblivious([U01] * 16, vf, 4.0, 0.2)
    expect = math.sqrt(0.8 * 4.0 / 16)
    assert menu.lotteries[0].price_lo == pytest.approx(expect, abs=1e-6)
    assert menu.epsilon == 0.2


def test_build_oblivious_tiny_epsilon_matches_full_budget():
    vf = AdditiveValue((1.0,) * 4)
    menu = build_oblivious([U01] * 4, vf, 1.0, 1e-9)
    sol = solve_additive([U01] * 4, [1.0] * 4, 1.0)
    assert menu.lotteries[0].price_lo == pytest.approx(sol.lotteries[0].price_lo,
                                                       abs=1e-6)


def test_build_oblivious_market_warning():
    vf = AdditiveValue((1.0,) * 4)
    menu = build_oblivious([U01] * 4, vf, 1.0, 0.2)  # k ~ 2.2 << 2/eps
    assert menu.market_warning


def test_build_oblivious_rejects_bad_epsilon():
    vf = AdditiveValue((1.0,))
    for eps in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(ValueError):
            build_oblivious([U01], vf, 1.0, eps)


def test_market_size_uses_max_lottery_price():
    d = PiecewiseLinearCDF(((0.0, 0.0), (0.2, 0.5), (0.8, 0.6), (1.0, 1.0)))
    ic = ironed_curve(d)
    a, b = ic.intervals[0]
    lot = two_price_lottery(ic, d, 0.5 * (a + b))
    menu = PriceMenu(lotteries=(lot,), quantiles=np.array([lot.quantile]))
    assert market_size(menu, 2.0).k == pytest.approx(2.0 / lot.price_hi)


def test_fractional_knapsack_examples():
    v, p = [3.0, 2.0, 1.0], [2.0, 2.0, 2.0]
    assert fractional_knapsack_value(v, p, 3.0, {0, 1, 2}) == pytest.approx(4.0)
    assert fractional_knapsack_value(v, p, 10.0, {0, 1, 2}) == pytest.approx(6.0)
    assert fractional_knapsack_value(v, p, 3.0, set()) == 0.0
    assert integral_knapsack_value(v, p, 3.0, {0, 1, 2}) == pytest.approx(3.0)
    assert integral_knapsack_value(v, p, 2.0, {1}) == pytest.approx(2.0)
    assert integral_knapsack_value(v, p, 0.0, {0, 1, 2}) == 0.0


@pytest.mark.parametrize("seed", range(8))
def test_knapsack_properties_and_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 3
    v = rng.uniform(0.1, 2.0, n)
    p = rng.uniform(0.1, 1.0, n)
    budget = float(rng.uniform(0.3, 2.5))
    subset = {i for i in range(n) if rng.random() < 0.8}
    frac = fractional_knapsack_value(v, p, budget, subset)
    integ = integral_knapsack_value(v, p, budget, subset)
    assert frac >= integ - 1e-12
    assert frac - integ <= v.max() + 1e-12
    assert frac == pytest.approx(lp_vertex_fractional(v, p, budget, subset), abs=1e-9)


def test_integral_close_to_fractional_in_large_markets():
    rng = np.random.default_rng(4)
    k = 10.0
    budget = 5.0
    for _ in range(20):
        n = 12
        v = rng.uniform(0.5, 1.5, n)
        p = rng.uniform(0.1, budget / k, n)
        subset = set(range(n))
        frac = fractional_knapsack_value(v, p, budget, subset)
        integ = integral_knapsack_value(v, p, budget, subset)
        assert integ >= (1 - 1 / k) * frac - 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_selection_monotone_in_accepting_set(seed):
    rng = np.random.default_rng(50 + seed)
    n = int(rng.integers(3, 12))
    prices = rng.uniform(0.1, 1.0, n)
    order = tuple(rng.permutation(n))
    budget = float(rng.uniform(0.5, 3.0))
    big = rng.random(n) < 0.7
    small = big & (rng.random(n) < 0.7)
    sel_big, _, _ = select_within_budget(prices, big, order, budget)
    sel_small, _, _ = select_within_budget(prices, small, order, budget)
    for i in range(n):
        if sel_big[i] and small[i]:
            assert sel_small[i]


@pytest.mark.parametrize("seed", range(4))
def test_everyone_offered_when_total_fits(seed):
    rng = np.random.default_rng(90 + seed)
    n = 6
    k = 8.0
    budget = 2.0
    prices = rng.uniform(0.05, budget / k, n)
    accepts = rng.random(n) < 0.6
    if prices[accepts].sum() > (1 - 1 / k) * budget:
        accepts[:] = False
    _, offered, _ = select_within_budget(prices, accepts, tuple(rng.permutation(n)),
                                         budget)
    assert offered.all()


def _two_lottery_menu():
    pw1 = PiecewiseLinearCDF(((0.0, 0.0), (0.2, 0.5), (0.8, 0.6), (1.0, 1.0)))
    pw2 = PiecewiseLinearCDF(((0.0, 0.0), (0.1, 0.4), (0.9, 0.5), (1.2, 1.0)))
    ic1, ic2 = ironed_curve(pw1), ironed_curve(pw2)
    q1 = 0.5 * sum(ic1.intervals[0])
    q2 = 0.5 * sum(ic2.intervals[0])
    lots = (two_price_lottery(ic1, pw1, q1), two_price_lottery(ic2, pw2, q2))
    menu = PriceMenu(lotteries=lots, quantiles=np.array([q1, q2]))
    return menu, (pw1, pw2), (ic1, ic2)


def test_derandomize_passthrough_without_lotteries():
    menu = _menu_from_prices([0.4, 0.6])
    out = derandomize_additive(menu, [U01, U01], [1.0, 1.0], 1.0, samples=100, seed=0)
    assert not out.has_lotteries
    assert [l.price_lo for l in out.lotteries] == [0.4, 0.6]


def test_reduce_lottery_pairs_preserves_spend():
    menu, dists, ics = _two_lottery_menu()
    before = sum(ic.hull_at(q) for ic, q in zip(ics, menu.quantiles))
    out = reduce_lottery_pairs(menu, dists, [1.0, 1.3])
    after = sum(ic.hull_at(q) for ic, q in zip(ics, out.quantiles))
    assert after == pytest.approx(before, abs=1e-9)
    assert len(out.randomized_agents) <= 1


def test_derandomize_two_lottery_menu_is_deterministic():
    menu, dists, _ = _two_lottery_menu()
    out = derandomize_additive(menu, dists, [1.0, 1.3], budget=1.2,
                               samples=2000, seed=9)
    assert not out.has_lotteries


def test_derandomize_picks_dominant_price():
    # lone lottery agent; the high price doubles the acceptance odds while
    # others contribute nothing, so it wins every sampled comparison
    pw = PiecewiseLinearCDF(((0.0, 0.0), (0.2, 0.5), (0.8, 0.6), (1.0, 1.0)))
    ic = ironed_curve(pw)
    a, b = ic.intervals[0]
    lot = two_price_lottery(ic, pw, 0.5 * (a + b))
    menu = PriceMenu(lotteries=(lot,), quantiles=np.array([lot.quantile]))
    out = derandomize_additive(menu, [pw], [1.0], budget=5.0, samples=500, seed=1)
    assert not out.has_lotteries
    assert out.lotteries[0].price_lo == pytest.approx(lot.price_hi)


def test_derandomize_rejects_mismatched_values():
    menu = _menu_from_prices([0.4])
    with pytest.raises(ValueError):
        derandomize_additive(menu, [U01], [1.0, 2.0], 1.0)


def test_menu_validation():
    with pytest.raises(ValueError):
        PriceMenu(lotteries=(PriceLottery(0.0, 0.0, 1.0, 0.5, 0.5),),
                  quantiles=np.array([0.5]))
    with pytest.raises(ValueError):
        PriceMenu(lotteries=(degenerate_lottery(U01, 0.5),),
                  quantiles=np.array([0.5]), ordering_policy="nope")


def test_run_requires_order_for_external_menus():
    menu = _menu_from_prices([0.5], policy="external")
    with pytest.raises(ValueError):
        run(menu, AdditiveValue((1.0,)), [0.1], 1.0, rng=0)


def test_guarantee_formulas():
    assert sequential_guarantee(100) == pytest.approx(
        (1 - 1 / math.sqrt(200 * math.pi)) * 0.99)
    assert oblivious_guarantee(100, 0.2) == pytest.approx(
        0.8 * (1 - math.exp(-0.04 * 0.8 * 100 / 12)))


@pytest.mark.parametrize("seed", range(4))
def test_run_outcome_consistency(seed):
    rng = np.random.default_rng(400 + seed)
    n = int(rng.integers(2, 7))
    dists = [Uniform(0.0, float(rng.uniform(0.5, 1.5))) for _ in range(n)]
    values = tuple(float(v) for v in rng.uniform(0.2, 2.0, n))
    budget = float(rng.uniform(0.2, 0.8)
                   * sum(ironed_curve(d).total_spend for d in dists))
    sol = solve_additive(dists, values, budget)
    from postedpricing import menu_from_solution
    menu = menu_from_solution(sol, "bang-per-buck")
    vf = AdditiveValue(values)
    for _ in range(50):
        costs = [float(d.inverse_cdf(rng.random())) for d in dists]
        out = run(menu, vf, costs, budget, rng=rng)
        assert set(out.selected) <= set(out.offers_made)
        assert out.total_spend <= budget
        for i in range(n):
            if i in out.selected:
                assert out.payments[i] == out.realized_prices[i]
                assert costs[i] <= out.realized_prices[i]
            else:
                assert out.payments[i] == 0.0
            if i in out.offers_made and costs[i] <= out.realized_prices[i]:
                assert i in out.selected
        assert out.value == pytest.approx(vf.evaluate(out.selected))
