"""Single-agent cost priors: CDFs, virtual costs, cost curves, and ironing.

Cost distributions live on a bounded support [support_lo, support_hi].  The
cost curve of a distribution maps an acceptance probability q to the expected
spend q * F^{-1}(q) of posting the price F^{-1}(q).  Irregular distributions
(non-convex cost curves) are handled by taking the lower convex hull of the
curve; interior quantiles of a hull segment are implemented with a two-price
lottery.

All objects here are immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_GRID = 10_001   # uniform quantile grid, step 1e-4
CONTACT_TOL = 1e-9      # hull-vs-curve contact detection
SOLVER_TOL = 1e-6       # equality tolerance for solver-facing checks


class UndefinedVirtualCostError(ValueError):
    """Virtual cost c + F(c)/f(c) evaluated where the density vanishes."""


def _maybe_scalar(x, arr):
    out = np.asarray(arr)
    return float(out) if np.isscalar(x) or getattr(x, "ndim", 1) == 0 else out


class CostDistribution:
    """Base class for one-agent cost priors on a finite support.

    Subclasses implement cdf / inverse_cdf / density; everything is
    vectorized over numpy arrays and clamps cost arguments to the support.
    """

    support_lo: float
    support_hi: float

    def cdf(self, c):
        raise NotImplementedError

    def inverse_cdf(self, q):
        raise NotImplementedError

    def density(self, c):
        raise NotImplementedError

    def virtual_cost(self, c):
        """c + F(c)/f(c); raises UndefinedVirtualCostError on zero density."""
        arr = np.clip(np.asarray(c, dtype=float), self.support_lo, self.support_hi)
        f = np.asarray(self.density(arr))
        if np.any(f <= 0.0):
            raise UndefinedVirtualCostError(
                f"virtual cost undefined at zero-density point of {self!r}")
        return _maybe_scalar(c, arr + np.asarray(self.cdf(arr)) / f)

    def sample(self, rng, size=None):
        """Draw costs by inverse-transform sampling."""
        return self.inverse_cdf(rng.random(size))

    def _clamp(self, c):
        return np.clip(np.asarray(c, dtype=float), self.support_lo, self.support_hi)


@dataclass(frozen=True)
class Uniform(CostDistribution):
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError("uniform support must be finite with lo < hi")
        if self.lo < 0:
            raise ValueError("costs must be nonnegative")

    @property
    def support_lo(self):
        return self.lo

    @property
    def support_hi(self):
        return self.hi

    def cdf(self, c):
        arr = self._clamp(c)
        return _maybe_scalar(c, (arr - self.lo) / (self.hi - self.lo))

    def inverse_cdf(self, q):
        arr = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        return _maybe_scalar(q, self.lo + arr * (self.hi - self.lo))

    def density(self, c):
        arr = self._clamp(c)
        return _maybe_scalar(c, np.full_like(arr, 1.0 / (self.hi - self.lo)))


@dataclass(frozen=True)
class TruncatedExponential(CostDistribution):
    """Exponential with given rate, truncated and renormalized to [lo, hi]."""

    rate: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if not math.isfinite(self.hi) or self.hi <= self.lo or self.lo < 0:
            raise ValueError("support must be finite with 0 <= lo < hi")

    @property
    def support_lo(self):
        return self.lo

    @property
    def support_hi(self):
        return self.hi

    @property
    def _mass(self):
        # total untruncated mass on [lo, hi]
        return -math.expm1(-self.rate * (self.hi - self.lo))

    def cdf(self, c):
        arr = self._clamp(c)
        return _maybe_scalar(c, -np.expm1(-self.rate * (arr - self.lo)) / self._mass)

    def inverse_cdf(self, q):
        arr = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        out = self.lo - np.log1p(-arr * self._mass) / self.rate
        return _maybe_scalar(q, np.clip(out, self.lo, self.hi))

    def density(self, c):
        arr = self._clamp(c)
        return _maybe_scalar(c, self.rate * np.exp(-self.rate * (arr - self.lo)) / self._mass)


@dataclass(frozen=True)
class PiecewiseLinearCDF(CostDistribution):
    """CDF interpolated linearly through (cost, F) breakpoints.

    Breakpoint costs must be strictly increasing; F must be nondecreasing
    with F = 0 at the first breakpoint and F = 1 at the last.  Plateaus
    (repeated F values) are allowed: the density is zero there and the
    inverse CDF returns the leftmost (cheapest) cost achieving the quantile.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple((float(c), float(F)) for c, F in self.points)
        object.__setattr__(self, "points", pts)
        cs = [c for c, _ in pts]
        Fs = [F for _, F in pts]
        if len(pts) < 2:
            raise ValueError("need at least two breakpoints")
        if any(b <= a for a, b in zip(cs, cs[1:])):
            raise ValueError("breakpoint costs must be strictly increasing")
        if any(b < a for a, b in zip(Fs, Fs[1:])):
            raise ValueError("CDF values must be nondecreasing")
        if abs(Fs[0]) > 1e-12 or abs(Fs[-1] - 1.0) > 1e-12:
            raise ValueError("CDF must run from 0 to 1 over the support")
        if cs[0] < 0:
            raise ValueError("costs must be nonnegative")

    @property
    def support_lo(self):
        return self.points[0][0]

    @property
    def support_hi(self):
        return self.points[-1][0]

    def _arrays(self):
        pts = np.asarray(self.points, dtype=float)
        return pts[:, 0], pts[:, 1]

    def cdf(self, c):
        cs, Fs = self._arrays()
        arr = self._clamp(c)
        return _maybe_scalar(c, np.interp(arr, cs, Fs))

    def inverse_cdf(self, q):
        cs, Fs = self._arrays()
        arr = np.atleast_1d(np.clip(np.asarray(q, dtype=float), 0.0, 1.0))
        idx = np.searchsorted(Fs, arr, side="left")
        idx = np.minimum(idx, len(Fs) - 1)
        out = np.empty_like(arr)
        exact = Fs[idx] == arr
        out[exact] = cs[idx[exact]]
        interp = ~exact
        if np.any(interp):
            j = idx[interp]
            # F[j-1] < q < F[j] on these entries, so the segment has slope > 0
            frac = (arr[interp] - Fs[j - 1]) / (Fs[j] - Fs[j - 1])
            out[interp] = cs[j - 1] + frac * (cs[j] - cs[j - 1])
        return _maybe_scalar(q, out.reshape(np.shape(q)))

    def density(self, c):
        cs, Fs = self._arrays()
        arr = np.atleast_1d(self._clamp(c))
        seg = np.clip(np.searchsorted(cs, arr, side="right") - 1, 0, len(cs) - 2)
        slope = (Fs[seg + 1] - Fs[seg]) / (cs[seg + 1] - cs[seg])
        return _maybe_scalar(c, slope.reshape(np.shape(c)))


def empirical_from_sample(sample) -> PiecewiseLinearCDF:
    """Piecewise-linear interpolated CDF of an observed cost sample.

    Duplicate observations are collapsed; F at each distinct cost is the
    fraction of the sample at or below it, rescaled so the CDF spans [0, 1]
    over [min(sample), max(sample)].
    """
    xs = np.sort(np.asarray(sample, dtype=float))
    if xs.size < 2 or xs[0] == xs[-1]:
        raise ValueError("need at least two distinct sample values")
    if xs[0] < 0:
        raise ValueError("costs must be nonnegative")
    ranks = np.linspace(0.0, 1.0, xs.size)
    # keep the highest rank per distinct value so the CDF stays a function
    pts = {}
    for x, r in zip(xs, ranks):
        pts[float(x)] = float(r)
    items = sorted(pts.items())
    items[0] = (items[0][0], 0.0)
    items[-1] = (items[-1][0], 1.0)
    return PiecewiseLinearCDF(tuple(items))


# ---------------------------------------------------------------------------
# Cost curves and ironing
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CostCurve:
    """Expected-payment curve q -> q * F^{-1}(q) on a uniform quantile grid."""

    quantiles: np.ndarray
    spend: np.ndarray
    regular: bool
    dist: CostDistribution

    def spend_at(self, q):
        return _maybe_scalar(q, np.interp(q, self.quantiles, self.spend))


@dataclass(frozen=True, eq=False)
class IronedCurve:
    """Lower convex hull of a cost curve with its ironed intervals.

    `slopes` holds the hull slope of each grid segment (the marginal cost of
    acceptance probability); convexity makes the array nondecreasing.
    `intervals` lists maximal (a, b) quantile pairs where the hull lies
    strictly below the curve.
    """

    quantiles: np.ndarray
    curve: np.ndarray
    hull: np.ndarray
    slopes: np.ndarray
    intervals: tuple
    dist: CostDistribution

    def hull_at(self, q):
        return _maybe_scalar(q, np.interp(q, self.quantiles, self.hull))

    def curve_at(self, q):
        return _maybe_scalar(q, np.interp(q, self.quantiles, self.curve))

    @property
    def total_spend(self) -> float:
        return float(self.hull[-1])

    def inverse_spend(self, s: float) -> float:
        """Largest quantile whose hull spend does not exceed s."""
        H = self.hull
        if s >= H[-1]:
            return 1.0
        if s <= H[0]:
            s = H[0]
        j = int(np.searchsorted(H, s, side="right")) - 1
        if j >= len(H) - 1:
            return 1.0
        q0, q1 = self.quantiles[j], self.quantiles[j + 1]
        if H[j + 1] == H[j]:
            return float(q1)
        return float(q0 + (s - H[j]) / (H[j + 1] - H[j]) * (q1 - q0))

    def interval_containing(self, q: float):
        """The ironed interval (a, b) with a < q < b, or None."""
        starts = [a for a, _ in self.intervals]
        k = bisect.bisect_right(starts, q) - 1
        if k >= 0:
            a, b = self.intervals[k]
            if a < q < b:
                return (a, b)
        return None

    @property
    def slope_run_ends(self) -> np.ndarray:
        """For each segment, the first later segment with a larger slope."""
        return np.searchsorted(self.slopes, self.slopes, side="right")


def build_cost_curve(dist: CostDistribution, grid_size: int = DEFAULT_GRID) -> CostCurve:
    """Tabulate q * F^{-1}(q) on a uniform grid and flag discrete convexity."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    q = np.linspace(0.0, 1.0, grid_size)
    spend = q * np.asarray(dist.inverse_cdf(q), dtype=float)
    spend[0] = 0.0
    scale = max(1.0, float(spend[-1]))
    second = spend[2:] - 2.0 * spend[1:-1] + spend[:-2]
    regular = bool(np.all(second >= -CONTACT_TOL * scale))
    q.flags.writeable = False
    spend.flags.writeable = False
    return CostCurve(quantiles=q, spend=spend, regular=regular, dist=dist)


def _lower_hull_vertices(x: np.ndarray, y: np.ndarray) -> list:
    """Indices of the lower convex hull of points sorted by x (monotone chain)."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def iron(curve: CostCurve) -> IronedCurve:
    """Lower convex hull of the curve grid with ironed-interval bookkeeping."""
    q, P = curve.quantiles, curve.spend
    verts = _lower_hull_vertices(q, P)
    hull = np.interp(q, q[verts], P[verts])
    hull = np.minimum(hull, P)  # guard interpolation round-off
    slopes = np.diff(hull) / np.diff(q)
    slopes = np.maximum.accumulate(slopes)  # enforce convexity against jitter
    scale = max(1.0, float(P[-1]))
    below = hull < P - CONTACT_TOL * scale
    intervals = []
    i = 0
    n = len(q)
    while i < n:
        if below[i]:
            j = i
            while j + 1 < n and below[j + 1]:
                j += 1
            # the grid endpoints always touch, so i-1 and j+1 are in range
            intervals.append((float(q[i - 1]), float(q[j + 1])))
            i = j + 1
        i += 1
    hull.flags.writeable = False
    slopes.flags.writeable = False
    return IronedCurve(quantiles=q, curve=P, hull=hull, slopes=slopes,
                       intervals=tuple(intervals), dist=curve.dist)


@lru_cache(maxsize=None)
def ironed_curve(dist: CostDistribution, grid_size: int = DEFAULT_GRID) -> IronedCurve:
    """Cached build_cost_curve + iron; distributions hash by value."""
    return iron(build_cost_curve(dist, grid_size))


# ---------------------------------------------------------------------------
# Price lotteries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriceLottery:
    """Offer price_lo with probability prob_lo, else price_hi.

    q_lo and q_hi are the acceptance probabilities F(price_lo), F(price_hi);
    the induced overall acceptance probability is the target quantile.
    """

    price_lo: float
    price_hi: float
    prob_lo: float
    q_lo: float
    q_hi: float

    def __post_init__(self):
        if not 0.0 <= self.prob_lo <= 1.0:
            raise ValueError("prob_lo must lie in [0, 1]")
        if self.price_lo > self.price_hi + 1e-12:
            raise ValueError("price_lo must not exceed price_hi")

    @property
    def degenerate(self) -> bool:
        return self.prob_lo >= 1.0 or self.price_lo == self.price_hi

    @property
    def quantile(self) -> float:
        return self.prob_lo * self.q_lo + (1.0 - self.prob_lo) * self.q_hi

    @property
    def expected_spend(self) -> float:
        return (self.prob_lo * self.q_lo * self.price_lo
                + (1.0 - self.prob_lo) * self.q_hi * self.price_hi)

    @property
    def max_price(self) -> float:
        return self.price_lo if self.degenerate else max(self.price_lo, self.price_hi)

    def realize(self, u: float) -> float:
        return self.price_lo if u < self.prob_lo else self.price_hi


def degenerate_lottery(dist: CostDistribution, q: float) -> PriceLottery:
    p = float(dist.inverse_cdf(q))
    return PriceLottery(price_lo=p, price_hi=p, prob_lo=1.0, q_lo=q, q_hi=q)


def two_price_lottery(ic: IronedCurve, dist: CostDistribution, q: float) -> PriceLottery:
    """Lottery achieving acceptance probability q at expected spend hull(q).

    Quantiles where the hull touches the curve get a single deterministic
    price F^{-1}(q); quantiles strictly inside an ironed interval (a, b) mix
    the endpoint prices with weight (b - q)/(b - a) on the lower one.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("quantile must lie in [0, 1]")
    interval = ic.interval_containing(q)
    if interval is None:
        return degenerate_lottery(dist, q)
    a, b = interval
    prob_lo = (b - q) / (b - a)
    return PriceLottery(price_lo=float(dist.inverse_cdf(a)),
                        price_hi=float(dist.inverse_cdf(b)),
                        prob_lo=prob_lo, q_lo=a, q_hi=b)
