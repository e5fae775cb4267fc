"""Price-deviation paths driven by trading strategies.

Deviation values follow the left-continuous convention: the value stored at a
node is the pre-trade deviation, and the post-terminal value D_{T+} is kept
separately in ``ImpactPath.terminal``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import PreconditionError
from .liquidity import LiquidityProfile, TimeGrid

DEFAULT_EVAL_NODES = 10_000


@dataclass(frozen=True, eq=False)
class DiscreteStrategy:
    """Impulse trades ``trades[n]`` executed at ``grid.times[n]``."""

    grid: TimeGrid
    trades: np.ndarray

    def __post_init__(self):
        trades = np.asarray(self.trades, dtype=float)
        if trades.shape != (self.grid.N + 1,):
            raise PreconditionError(
                f"expected {self.grid.N + 1} trades for this grid, got shape {trades.shape}")
        if not np.all(np.isfinite(trades)):
            raise PreconditionError("trades must be finite")
        object.__setattr__(self, "trades", trades)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def target(self) -> float:
        return float(self.trades.sum())

    def require_nonnegative(self, what="trades"):
        if np.any(self.trades < 0):
            raise PreconditionError(f"{what} must be nonnegative")

    def scaled(self, a: float) -> "DiscreteStrategy":
        return DiscreteStrategy(self.grid, a * self.trades)


@dataclass(frozen=True, eq=False)
class ContinuousStrategy:
    """Impulse at 0, trading rate on (0, T), impulse at T.

    The rate is a dense tabulation ``(times, rates)`` covering [0, T] and is
    linearly interpolated between nodes.
    """

    initial: float
    times: np.ndarray
    rates: np.ndarray
    terminal: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if times.ndim != 1 or times.shape != rates.shape or len(times) < 2:
            raise PreconditionError("rate tabulation needs matching 1-d times/rates (>= 2 nodes)")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise PreconditionError("rate tabulation must start at 0 and increase strictly")
        if not (np.all(np.isfinite(rates)) and np.isfinite(self.initial) and np.isfinite(self.terminal)):
            raise PreconditionError("strategy entries must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "initial", float(self.initial))
        object.__setattr__(self, "terminal", float(self.terminal))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def rate_at(self, t):
        return np.interp(t, self.times, self.rates)

    def continuous_volume(self) -> float:
        """Shares bought through the rate, by composite Simpson on the tabulation."""
        return float(simpson(self.rates, x=self.times))

    def total(self) -> float:
        return self.initial + self.continuous_volume() + self.terminal

    def require_nonnegative(self):
        if self.initial < 0 or self.terminal < 0 or np.any(self.rates < 0):
            raise PreconditionError("one-sided evaluation needs a nonnegative strategy")

    def discretize(self, grid: TimeGrid) -> DiscreteStrategy:
        """Lump the rate onto the nodes of ``grid`` (mass preserving, O(dt)).

        The volume of each cell of the piecewise-linear rate goes half to each
        endpoint; the impulses stay at the first and last node.
        """
        if abs(grid.horizon - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise PreconditionError("grid and strategy horizons differ")
        cum = _cumulative_linear(self.times, self.rates, grid.times)
        mass = np.diff(cum)
        trades = np.zeros(grid.N + 1)
        trades[:-1] += 0.5 * mass
        trades[1:] += 0.5 * mass
        trades[0] += self.initial
        trades[-1] += self.terminal
        return DiscreteStrategy(grid, trades)


def _cumulative_linear(nodes, values, at):
    """int_0^s of the piecewise-linear interpolant, evaluated at each s in ``at``."""
    slope = np.diff(values) / np.diff(nodes)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(nodes))])
    i = np.clip(np.searchsorted(nodes, at, side="right") - 1, 0, len(nodes) - 2)
    ds = at - nodes[i]
    return cum[i] + values[i] * ds + 0.5 * slope[i] * ds * ds


@dataclass(frozen=True, eq=False)
class ImpactPath:
    """Pre-trade deviations at ``times`` plus the post-terminal value D_{T+}."""

    times: np.ndarray
    values: np.ndarray
    terminal: float

    def with_terminal(self) -> np.ndarray:
        return np.append(self.values, self.terminal)


def _recursion(K, decay, trades, start, extra=None):
    """D_{n+1} = (D_n + K_n xi_n [+ extra_n]) * a_n; returns node values and D_{T+}."""
    jumps = K * trades if extra is None else K * trades + extra
    n = len(trades)
    out = np.empty(n)
    d = float(start)
    for i in range(n - 1):
        out[i] = d
        d = (d + jumps[i]) * decay[i]
    out[-1] = d
    return out, d + jumps[-1]


def one_sided_impact(profile: LiquidityProfile, strategy: DiscreteStrategy, delta0: float) -> ImpactPath:
    """Ask-side temporary deviation for a pure buying schedule (gamma excluded)."""
    if delta0 < 0:
        raise PreconditionError("delta0 must be >= 0")
    strategy.require_nonnegative()
    grid = strategy.grid
    values, term = _recursion(grid.K, grid.decay, strategy.trades, delta0)
    return ImpactPath(grid.times, values, term)


def zero_spread_impact(profile: LiquidityProfile, strategy: DiscreteStrategy, delta0: float) -> ImpactPath:
    """Deviation of the common bid/ask when spread is zero; signed trades."""
    grid = strategy.grid
    values, term = _recursion(grid.K, grid.decay, strategy.trades, delta0)
    return ImpactPath(grid.times, values, term)


def two_sided_impact(profile: LiquidityProfile, buys: DiscreteStrategy, sells: DiscreteStrategy,
                     D0: float, Dtilde0: float) -> tuple[ImpactPath, ImpactPath]:
    """Ask and bid deviations in the dynamic-spread model.

    A buy of size xi at s moves the ask by (gamma + K_s e^{-int_s^t rho}) xi and
    the bid by gamma (1 - e^{-int_s^t rho}) xi; sells act symmetrically.  Both
    deviations split into a permanent part gamma*(own - opposite cumulative
    volume) and a decaying part.
    """
    if D0 < 0 or Dtilde0 < 0:
        raise PreconditionError("initial deviations must be >= 0")
    if not buys.grid.same_as(sells.grid):
        raise PreconditionError("buys and sells must live on the same grid")
    buys.require_nonnegative("buys")
    sells.require_nonnegative("sells")
    grid = buys.grid
    g = profile.gamma
    xi, xs = buys.trades, sells.trades
    # cumulative volume strictly before each node
    cum_b = np.concatenate([[0.0], np.cumsum(xi)[:-1]])
    cum_s = np.concatenate([[0.0], np.cumsum(xs)[:-1]])

    e_ask, t_ask = _recursion(grid.K, grid.decay, xi, D0, extra=g * xs)
    e_bid, t_bid = _recursion(grid.K, grid.decay, xs, Dtilde0, extra=g * xi)
    ask = ImpactPath(grid.times, g * (cum_b - cum_s) + e_ask, g * (xi.sum() - xs.sum()) + t_ask)
    bid = ImpactPath(grid.times, g * (cum_s - cum_b) + e_bid, g * (xs.sum() - xi.sum()) + t_bid)
    return ask, bid


def _eval_nodes(profile, strategy: ContinuousStrategy, n_eval):
    if abs(strategy.horizon - profile.horizon) > 1e-12 * max(1.0, profile.horizon):
        raise PreconditionError("strategy and profile horizons differ")
    if n_eval is None:
        return strategy.times.copy()
    return np.linspace(0.0, profile.horizon, int(n_eval) + 1)


def continuous_impact(profile: LiquidityProfile, strategy: ContinuousStrategy, delta0: float,
                      n_eval: int | None = DEFAULT_EVAL_NODES) -> tuple[ImpactPath, np.ndarray]:
    """Deviation path of a continuous strategy on an evaluation grid.

    Each cell carries the exact decay factor; the rate's kernel integral
    int K_s e^{-int_s^{u} rho} r_s ds over a cell uses the trapezoid rule, so
    the node values are second-order accurate.  ``n_eval=None`` evaluates on
    the strategy's own tabulation.  Returns the path (``values[0]`` is the
    pre-trade value delta0, ``values[i>0]`` the continuous part, last entry
    D_T before the terminal impulse) and the rate at the evaluation nodes.
    """
    u = _eval_nodes(profile, strategy, n_eval)
    K = profile.K(u)
    a = profile.decay_factor(u[:-1], u[1:])
    r = strategy.rate_at(u)
    h = np.diff(u)
    inflow = 0.5 * h * (K[:-1] * a * r[:-1] + K[1:] * r[1:])
    values = np.empty_like(u)
    values[0] = delta0
    d = delta0 + K[0] * strategy.initial
    for i in range(len(u) - 1):
        d = d * a[i] + inflow[i]
        values[i + 1] = d
    return ImpactPath(u, values, d + K[-1] * strategy.terminal), r
