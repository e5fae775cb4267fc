"""Execution costs in the one-sided, dynamic-spread and zero-spread models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, trapezoid

from .errors import PreconditionError, UnsupportedProfileError
from .impact import (
    DEFAULT_EVAL_NODES,
    ContinuousStrategy,
    DiscreteStrategy,
    continuous_impact,
    one_sided_impact,
    two_sided_impact,
    zero_spread_impact,
)
from .liquidity import LiquidityProfile


@dataclass(frozen=True)
class CostBreakdown:
    unaffected: float
    permanent: float
    temporary: float

    @property
    def total(self) -> float:
        return self.unaffected + self.permanent + self.temporary

    def as_dict(self) -> dict:
        return {"unaffected": self.unaffected, "permanent": self.permanent,
                "temporary": self.temporary, "total": self.total}


def _discrete_sum(K, path, trades) -> float:
    return float(np.sum((path.values + 0.5 * K * trades) * trades))


def _continuous_cost(profile, strategy: ContinuousStrategy, delta0, n_eval) -> float:
    path, rate = continuous_impact(profile, strategy, delta0, n_eval)
    u = path.times
    K0, KT = profile.K(0.0), profile.K(profile.horizon)
    d = path.values.copy()
    d[0] = delta0 + K0 * strategy.initial
    cost = (delta0 + 0.5 * K0 * strategy.initial) * strategy.initial
    cost += trapezoid(d * rate, x=u)
    cost += (path.values[-1] + 0.5 * KT * strategy.terminal) * strategy.terminal
    return float(cost)


def temp_cost(profile: LiquidityProfile, strategy, delta0: float = 0.0,
              n_eval: int | None = DEFAULT_EVAL_NODES) -> float:
    """Temporary-impact cost sum_n (D_n + K_n xi_n / 2) xi_n of a buying schedule.

    ``strategy`` may be a ``DiscreteStrategy`` or a ``ContinuousStrategy``; the
    latter is evaluated on ``n_eval`` uniform cells.
    """
    if delta0 < 0:
        raise PreconditionError("delta0 must be >= 0")
    if isinstance(strategy, ContinuousStrategy):
        strategy.require_nonnegative()
        return _continuous_cost(profile, strategy, delta0, n_eval)
    path = one_sided_impact(profile, strategy, delta0)
    return _discrete_sum(strategy.grid.K, path, strategy.trades)


def zero_spread_cost(profile: LiquidityProfile, strategy, delta0: float = 0.0,
                     n_eval: int | None = DEFAULT_EVAL_NODES) -> float:
    """Cost (minus proceeds) of a signed net strategy in the zero-spread model."""
    if isinstance(strategy, ContinuousStrategy):
        return _continuous_cost(profile, strategy, delta0, n_eval)
    path = zero_spread_impact(profile, strategy, delta0)
    return _discrete_sum(strategy.grid.K, path, strategy.trades)


def total_cost_dynamic_spread(profile: LiquidityProfile, buys: DiscreteStrategy, sells: DiscreteStrategy,
                              D0: float = 0.0, Dtilde0: float = 0.0, A0: float = 0.0,
                              B0: float = 0.0) -> float:
    """Total cost of buying ``buys`` and selling ``sells`` with a trading-dependent spread.

    Uses constant unaffected quotes A0 >= B0; a martingale unaffected price
    would only add a strategy-independent constant in expectation.
    """
    if B0 > A0:
        raise PreconditionError("need B0 <= A0")
    ask, bid = two_sided_impact(profile, buys, sells, D0, Dtilde0)
    spread_coef = profile.gamma + buys.grid.K   # 1/q_n
    xb, xs = buys.trades, sells.trades
    paid = np.sum((A0 + ask.values + 0.5 * spread_coef * xb) * xb)
    received = np.sum((B0 - bid.values - 0.5 * spread_coef * xs) * xs)
    return float(paid - received)


def cost_decomposition(profile: LiquidityProfile, buys: DiscreteStrategy, delta0: float = 0.0,
                       A0: float = 0.0) -> CostBreakdown:
    """Split the cost of a buying schedule into unaffected, permanent and temporary parts."""
    buys.require_nonnegative("buys")
    x = buys.target
    return CostBreakdown(A0 * x, 0.5 * profile.gamma * x * x, temp_cost(profile, buys, delta0))


def _identity_integrand(profile, u, d):
    K = profile.K(u)
    dK, _ = profile.K_derivatives(u)
    return (dK + 2 * profile.resilience(u) * K) * d * d / (K * K)


def cost_via_impact_identity(profile: LiquidityProfile, strategy, delta0: float = 0.0,
                             n_eval: int = DEFAULT_EVAL_NODES) -> float:
    """Cost from the deviation path alone:

        1/2 [ D_{T+}^2 / K_T - delta0^2 / K_0 + int (K' + 2 rho K) D^2 / K^2 dt ].

    Independent of the direct sums in ``temp_cost``/``zero_spread_cost``.  For a
    discrete schedule the integral is split at trade nodes (D jumps there and
    decays smoothly in between) and each cell gets composite Simpson with about
    ``n_eval / N`` sub-intervals.
    """
    if not profile.differentiable:
        raise UnsupportedProfileError("the identity needs a differentiable K (>= 3 table nodes)")
    K0, KT = profile.K(0.0), profile.K(profile.horizon)

    if isinstance(strategy, ContinuousStrategy):
        path, _ = continuous_impact(profile, strategy, delta0, n_eval)
        d = path.values.copy()
        d[0] = delta0 + K0 * strategy.initial
        integral = simpson(_identity_integrand(profile, path.times, d), x=path.times)
        return float(0.5 * (path.terminal ** 2 / KT - delta0 ** 2 / K0 + integral))

    grid = strategy.grid
    path = zero_spread_impact(profile, strategy, delta0)
    post = path.values + grid.K * strategy.trades          # D just after each node
    m = max(2, math.ceil(n_eval / grid.N))
    m += m % 2
    frac = np.linspace(0.0, 1.0, m + 1)
    t0, t1 = grid.times[:-1], grid.times[1:]
    u = t0[:, None] + (t1 - t0)[:, None] * frac[None, :]
    u[:, -1] = t1                                           # keep cell ends exact
    d = post[:-1, None] * profile.decay_factor(np.broadcast_to(t0[:, None], u.shape), u)
    f = _identity_integrand(profile, u, d)
    w = np.ones(m + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    integral = np.sum(f @ w * (t1 - t0) / (3 * m))
    return float(0.5 * (path.terminal ** 2 / KT - delta0 ** 2 / K0 + integral))
