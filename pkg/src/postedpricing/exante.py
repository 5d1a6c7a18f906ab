"""Solvers for the ex ante relaxation: optimal acceptance probabilities under
an expected-spend budget.

Three routes, by value-function shape:
  * additive   -- Lagrangian relaxation of the budget constraint with a
                  binary search on the multiplier, plus a water-filling
                  top-up so the budget binds exactly;
  * symmetric  -- a single shared quantile found by inverting the shared
                  (ironed) cost curve at spend B/n;
  * submodular -- a reduction to cardinality-constrained greedy over equal
                  spend increments of each agent's cost curve.

Solvers are pure functions of their inputs and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DEFAULT_GRID, ironed_curve, two_price_lottery
from .values import (AdditiveValue, SymmetricValue, ValueFunction,
                     concave_hull_sizes)

_BIND_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class ExAnteSolution:
    """Optimal acceptance probabilities with their realizing price offers."""

    quantiles: np.ndarray
    lotteries: tuple          # one PriceLottery per agent
    expected_spend: float
    objective: float
    objective_stderr: float
    solver_meta: dict

    @property
    def n(self) -> int:
        return len(self.quantiles)


@dataclass(frozen=True, eq=False)
class IncrementTable:
    """Per-agent quantile increments of equal spend on the ironed curve.

    deltas[i, j] is the j-th quantile increase of agent i costing budget/m
    (possibly less for the increment that saturates the curve, and zero
    afterwards).  In noisy mode deltas are shrunk within a (1 - 1/n^3)
    bracket of exact_deltas.
    """

    deltas: np.ndarray
    exact_deltas: np.ndarray
    cumulative: np.ndarray
    step_spend: float
    noisy: bool


def _hulls(dists, grid_size):
    return [ironed_curve(d, grid_size) for d in dists]


def _lottery_menu(hulls, dists, quantiles):
    return tuple(two_price_lottery(h, d, float(q))
                 for h, d, q in zip(hulls, dists, quantiles))


def lagrangian_quantiles(dists, values, lam: float,
                         grid_size: int = DEFAULT_GRID) -> np.ndarray:
    """Per-agent largest quantile whose marginal (ironed) cost is <= v_i / lam.

    lam = 0 selects everyone at the top of the support.
    """
    if lam < 0:
        raise ValueError("multiplier must be nonnegative")
    values = np.asarray(values, dtype=float)
    hulls = _hulls(dists, grid_size)
    if lam == 0.0:
        return np.ones(len(hulls))
    out = np.empty(len(hulls))
    for i, h in enumerate(hulls):
        if values[i] <= 0.0:
            out[i] = 0.0
            continue
        count = int(np.searchsorted(h.slopes, values[i] / lam, side="right"))
        out[i] = h.quantiles[count]
    return out


def _spend_for_lambda(hulls, values, lam):
    total = 0.0
    for h, v in zip(hulls, values):
        if v <= 0.0:
            continue
        count = int(np.searchsorted(h.slopes, v / lam, side="right"))
        total += float(h.hull[count])
    return total


def solve_additive(dists, values, budget: float,
                   grid_size: int = DEFAULT_GRID) -> ExAnteSolution:
    """Spend-optimal quantiles for per-agent values under an expected budget.

    Binary searches the Lagrangian multiplier until the expected spend
    brackets the budget, then advances the marginal agents along their
    current hull segments (splitting ties at equal spend rates) until the
    budget binds.  On irregular inputs the marginal quantile lands inside an
    ironed interval and is realized by a two-price lottery.
    """
    values = np.asarray(values, dtype=float)
    if budget <= 0:
        raise ValueError("budget must be positive")
    if np.any(values < 0):
        raise ValueError("agent values must be nonnegative")
    hulls = _hulls(dists, grid_size)
    n = len(hulls)
    if len(values) != n:
        raise ValueError("one value per distribution required")
    grid = hulls[0].quantiles
    nseg = len(grid) - 1

    full_spend = sum(h.total_spend for h in hulls)
    if full_spend <= budget + _BIND_TOL * max(1.0, budget):
        q = np.ones(n)
        meta = {"lambda": 0.0, "budget": budget}
        return _finish_solution(hulls, dists, values, q, meta)

    # grow an upper bracket, then bisect: spend is nonincreasing in lambda
    lam_hi = 1.0
    for _ in range(400):
        if _spend_for_lambda(hulls, values, lam_hi) <= budget:
            break
        lam_hi *= 4.0
    else:
        raise RuntimeError("could not bracket the budget multiplier")
    lam_lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lam_lo + lam_hi)
        if mid in (lam_lo, lam_hi):
            break
        if _spend_for_lambda(hulls, values, mid) > budget:
            lam_lo = mid
        else:
            lam_hi = mid

    seg = np.empty(n, dtype=int)
    pos = np.empty(n)
    spend_i = np.empty(n)
    for i, h in enumerate(hulls):
        count = 0 if values[i] <= 0 else int(
            np.searchsorted(h.slopes, values[i] / lam_hi, side="right"))
        seg[i] = count
        pos[i] = grid[count]
        spend_i[i] = h.hull[count]

    # water-fill the pivotal agents until the budget binds
    run_ends = [h.slope_run_ends for h in hulls]
    scale = max(1.0, budget)
    for _ in range(200_000):
        remaining = budget - spend_i.sum()
        if remaining <= _BIND_TOL * scale:
            break
        active = [i for i in range(n) if seg[i] < nseg and values[i] > 0]
        if not active:
            break
        ratios = np.array([hulls[i].slopes[seg[i]] / values[i] for i in active])
        r_star = ratios.min()
        group = [i for i, r in zip(active, ratios) if r <= r_star + 1e-12 * (1.0 + r_star)]
        advanced_free = False
        for i in list(group):
            if hulls[i].slopes[seg[i]] == 0.0:
                end = int(run_ends[i][seg[i]])
                seg[i] = end
                pos[i] = grid[end]
                advanced_free = True
                group.remove(i)
        if advanced_free and not group:
            continue
        caps = np.array([hulls[i].hull[run_ends[i][seg[i]]] - spend_i[i] for i in group])
        share = remaining / len(group)
        step = min(share, caps.min())
        if step <= 0:
            break
        for i in group:
            h = hulls[i]
            end = int(run_ends[i][seg[i]])
            spend_i[i] += step
            if spend_i[i] >= h.hull[end] - 1e-15 * scale:
                spend_i[i] = float(h.hull[end])
                seg[i] = end
                pos[i] = grid[end]
            else:
                pos[i] += step / h.slopes[seg[i]]
    else:
        raise RuntimeError("budget water-fill failed to converge")

    meta = {"lambda": float(lam_hi), "budget": budget}
    return _finish_solution(hulls, dists, values, pos, meta)


def _finish_solution(hulls, dists, values, quantiles, meta):
    quantiles = np.clip(np.asarray(quantiles, dtype=float), 0.0, 1.0)
    spend = float(sum(h.hull_at(q) for h, q in zip(hulls, quantiles)))
    objective = float(np.dot(values, quantiles))
    lotteries = _lottery_menu(hulls, dists, quantiles)
    quantiles.flags.writeable = False
    return ExAnteSolution(quantiles=quantiles, lotteries=lotteries,
                          expected_spend=spend, objective=objective,
                          objective_stderr=0.0, solver_meta=meta)


def solve_symmetric(dist, g, budget: float, grid_size: int = DEFAULT_GRID) -> ExAnteSolution:
    """Common quantile for identical agents with a size-based value function.

    The budget binds at the largest shared quantile with n * hull(q) <= B;
    the objective is the size hull evaluated at the expected set size n * q.
    """
    vf = g if isinstance(g, SymmetricValue) else SymmetricValue(tuple(g))
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    n = vf.n
    h = ironed_curve(dist, grid_size)
    q = h.inverse_spend(budget / n)
    hull_sizes = concave_hull_sizes(vf)
    objective = float(hull_sizes(n * q))
    quantiles = np.full(n, q)
    lot = two_price_lottery(h, dist, q)
    quantiles.flags.writeable = False
    return ExAnteSolution(quantiles=quantiles, lotteries=tuple([lot] * n),
                          expected_spend=float(n * h.hull_at(q)),
                          objective=objective, objective_stderr=0.0,
                          solver_meta={"q": float(q), "budget": budget})


def discretize(dists, budget: float, m: int, noisy: bool = False, seed=None,
               grid_size: int = DEFAULT_GRID) -> IncrementTable:
    """Split each agent's ironed curve into m quantile increments of spend B/m.

    Increments are found by inverting the piecewise-linear hull at the
    cumulative spend targets j * B/m; once an agent's quantile reaches 1 the
    remaining increments are zero.  Noisy mode shrinks each increment by an
    independent factor in [1 - 1/n^3, 1].
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    n = len(dists)
    rng = np.random.default_rng(seed)
    step = budget / m
    exact = np.zeros((n, m))
    for i, d in enumerate(dists):
        h = ironed_curve(d, grid_size)
        prev = 0.0
        for j in range(m):
            cum = h.inverse_spend(min((j + 1) * step, h.total_spend))
            exact[i, j] = max(cum - prev, 0.0)
            prev = cum
    if noisy:
        deltas = exact * (1.0 - rng.random((n, m)) / n ** 3)
    else:
        deltas = exact.copy()
    cumulative = np.cumsum(deltas, axis=1)
    for arr in (deltas, exact, cumulative):
        arr.flags.writeable = False
    return IncrementTable(deltas=deltas, exact_deltas=exact,
                          cumulative=cumulative, step_spend=step, noisy=noisy)


def greedy_submodular(dists, vf: ValueFunction, budget: float, m: int | None = None,
                      marginal_mode: str = "auto", samples: int = 10_000,
                      seed=None, noisy: bool = False,
                      appendix_schedule: bool = False,
                      grid_size: int = DEFAULT_GRID) -> ExAnteSolution:
    """Greedy over equal-spend quantile increments for submodular objectives.

    Each of the m steps adds the increment with the largest marginal value
    (exact for additive/symmetric objectives, sampled otherwise), breaking
    ties by lowest agent index.  Within one agent, increments are taken in
    order since they shrink along the convex hull.
    """
    n = len(dists)
    if vf.n != n:
        raise ValueError("value function and distribution count disagree")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if m is None:
        m = n * n
    if m < n:
        raise ValueError("need at least one increment per agent (m >= n)")
    if marginal_mode == "auto":
        marginal_mode = "exact" if isinstance(vf, (AdditiveValue, SymmetricValue)) else "sampled"
    if marginal_mode not in ("exact", "sampled"):
        raise ValueError("marginal_mode must be 'exact' or 'sampled'")
    if marginal_mode == "exact" and not isinstance(vf, (AdditiveValue, SymmetricValue)):
        raise ValueError("exact marginals are only available for additive/symmetric objectives")
    if appendix_schedule:
        # worst-case sample schedule with accuracy parameter 1/n
        samples = int(math.ceil(10.0 * n ** 4 * (1.0 + math.log(max(n, 2)))))

    ss = np.random.SeedSequence(seed)
    noise_ss, marg_ss, obj_ss = ss.spawn(3)
    table = discretize(dists, budget, m, noisy=noisy,
                       seed=np.random.default_rng(noise_ss), grid_size=grid_size)
    hulls = _hulls(dists, grid_size)
    marg_rng = np.random.default_rng(marg_ss)

    q = np.zeros(n)
    next_j = np.zeros(n, dtype=int)
    selection = []
    values_arr = vf.as_array() if isinstance(vf, AdditiveValue) else None
    for _ in range(m):
        best_i, best_gain = -1, 0.0
        base_value = vf.multilinear(q)[0] if (marginal_mode == "exact"
                                              and values_arr is None) else None
        for i in range(n):
            j = next_j[i]
            if j >= m:
                continue
            d = float(table.deltas[i, j])
            if d <= 0.0:
                continue
            if marginal_mode == "exact":
                if values_arr is not None:
                    gain = values_arr[i] * d
                else:
                    q_new = q.copy()
                    q_new[i] = min(q_new[i] + d, 1.0)
                    gain = vf.multilinear(q_new)[0] - base_value
            else:
                gain = vf.marginal_estimate(q, i, d, samples=samples, seed=marg_rng)
            if gain > best_gain:
                best_i, best_gain = i, gain
        if best_i < 0 or best_gain <= 0.0:
            break
        j = next_j[best_i]
        q[best_i] = min(q[best_i] + float(table.deltas[best_i, j]), 1.0)
        next_j[best_i] += 1
        selection.append((best_i, int(j)))

    if isinstance(vf, (AdditiveValue, SymmetricValue)):
        objective, obj_stderr = vf.multilinear(q)
    else:
        objective, obj_stderr = vf.multilinear(q, samples=samples,
                                               seed=np.random.default_rng(obj_ss))
    spend = float(sum(h.hull_at(qi) for h, qi in zip(hulls, q)))
    lotteries = _lottery_menu(hulls, dists, q)
    q.flags.writeable = False
    meta = {"m": m, "marginal_mode": marginal_mode, "samples": samples,
            "noisy": noisy, "selection_order": tuple(selection), "budget": budget}
    return ExAnteSolution(quantiles=q, lotteries=lotteries, expected_spend=spend,
                          objective=float(objective), objective_stderr=float(obj_stderr),
                          solver_meta=meta)


def solve_ex_ante(dists, vf: ValueFunction, budget: float, **kwargs) -> ExAnteSolution:
    """Dispatch to the solver matching the value function shape."""
    if isinstance(vf, AdditiveValue):
        grid = kwargs.get("grid_size", DEFAULT_GRID)
        return solve_additive(dists, vf.as_array(), budget, grid_size=grid)
    if isinstance(vf, SymmetricValue) and len(set(dists)) == 1:
        return solve_symmetric(dists[0], vf, budget,
                               grid_size=kwargs.get("grid_size", DEFAULT_GRID))
    return greedy_submodular(dists, vf, budget, **kwargs)
