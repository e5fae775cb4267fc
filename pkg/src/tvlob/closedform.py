"""Closed-form results for the zero-spread model and the regime classifier.

Everything here is driven by f = (K' + rho K) / (K' + 2 rho K).  When
K' + 2 rho K > 0 the optimal zero-spread strategy keeps the deviation
proportional to f on (0, T]; its buy-only version is also optimal with a
dynamic spread whenever it never sells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .cost import zero_spread_cost
from .errors import (
    ClosedFormUnavailableError,
    ConditionViolatedError,
    InternalConsistencyError,
    PreconditionError,
    UnsupportedProfileError,
)
from .impact import ContinuousStrategy, DiscreteStrategy
from .liquidity import LiquidityProfile, TimeGrid

DEFAULT_SAMPLES = 10_000
DEFAULT_PANELS = 10_000
BOUNDARY_TOL = 1e-9
WITNESS_HALVINGS = 60


class Regime(str, Enum):
    PRICE_MANIPULATION = "PriceManipulation"
    TRANSACTION_TRIGGERED = "TransactionTriggered"
    CLEAN = "Clean"
    BOUNDARY = "Boundary"


def _sample_times(profile: LiquidityProfile, samples: int) -> np.ndarray:
    if samples < 2:
        raise PreconditionError("need at least 2 samples")
    return np.union1d(np.linspace(0.0, profile.horizon, int(samples)), profile.table_nodes())


def _f_data(profile, t):
    """K, K'+2 rho K, f, f', rho at times t (f and f' are nan where the denominator vanishes)."""
    K = profile.K(t)
    dK, d2K = profile.K_derivatives(t)
    rho = profile.resilience(t)
    drho = profile.resilience_derivative(t)
    num = dK + rho * K
    den = dK + 2 * rho * K
    dnum = d2K + drho * K + rho * dK
    dden = d2K + 2 * drho * K + 2 * rho * dK
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(den > 0, num / den, np.nan)
        fp = np.where(den > 0, (dnum * den - num * dden) / den**2, np.nan)
    return K, den, f, fp, rho


def _ttpm_tolerance(fp, rho, f):
    return 1e-12 * max(1.0, float(np.nanmax(np.abs(fp))), float(np.nanmax(np.abs(rho * f))))


@dataclass(frozen=True, eq=False)
class FProfile:
    """f and f' tabulated on ``times``; ``valid`` is False if K' + 2 rho K <= 0 somewhere."""

    times: np.ndarray
    f: np.ndarray
    fprime: np.ndarray
    denominator: np.ndarray
    valid: bool
    first_violation: float | None = None


def f_profile(profile: LiquidityProfile, samples: int = DEFAULT_SAMPLES, strict: bool = True) -> FProfile:
    """Tabulate f and f' at ``samples`` uniform times (plus table nodes).

    With ``strict`` a violated denominator condition raises
    ``ConditionViolatedError`` carrying the first violating time.
    """
    if not profile.differentiable:
        raise UnsupportedProfileError("f needs a differentiable K")
    t = _sample_times(profile, samples)
    _, den, f, fp, _ = _f_data(profile, t)
    bad = np.flatnonzero(den <= 0)
    first = float(t[bad[0]]) if len(bad) else None
    if strict and first is not None:
        raise ConditionViolatedError(f"K' + 2 rho K <= 0 at t = {first}", t=first)
    return FProfile(t, f, fp, den, first is None, first)


# -- round trips and classification ----------------------------------------------

def round_trip_witness(profile: LiquidityProfile, t: float, eps: float) -> tuple[DiscreteStrategy, float]:
    """Buy one share at ``t`` and sell it at ``t + eps`` in the zero-spread model.

    The schedule lives on the grid {0, t, t+eps, T}; its cost is
    (K_t + K_{t+eps}) / 2 - K_t exp(-int_t^{t+eps} rho).
    """
    T = profile.horizon
    if eps <= 0 or t < 0 or t + eps > T * (1 + 1e-12):
        raise PreconditionError("need eps > 0 and 0 <= t < t + eps <= T")
    s = min(t + eps, T)
    # nodes closer than round-off to 0 or T would give a decay factor of exactly 1
    snap = 1e-12 * T
    t = 0.0 if t < snap else t
    s = T if T - s < snap else s
    if s - t < snap:
        raise PreconditionError("eps is below the time resolution")
    nodes = np.unique([0.0, t, s, T])
    grid = TimeGrid.from_nodes(profile, nodes)
    trades = np.zeros(len(nodes))
    trades[np.searchsorted(nodes, t)] += 1.0
    trades[np.searchsorted(nodes, s)] -= 1.0
    strategy = DiscreteStrategy(grid, trades)
    return strategy, zero_spread_cost(profile, strategy, 0.0)


def round_trip_cost(profile: LiquidityProfile, t: float, eps: float) -> float:
    Kt, Ks = profile.K(t), profile.K(t + eps)
    return float(0.5 * (Kt + Ks) - Kt * profile.decay_factor(t, t + eps))


@dataclass(frozen=True, eq=False)
class ManipulationVerdict:
    regime: Regime
    t: float | None = None
    witness_eps: float | None = None
    witness_cost: float | None = None
    witness: DiscreteStrategy | None = field(default=None, repr=False)
    min_denominator: float = math.nan
    finite_difference_mode: bool = False

    def as_dict(self) -> dict:
        return {"regime": self.regime.value, "t": self.t, "witness_eps": self.witness_eps,
                "witness_cost": self.witness_cost, "min_denominator": self.min_denominator,
                "finite_difference_mode": self.finite_difference_mode}


def _find_witness(profile, t):
    T = profile.horizon
    eps = min(0.1 * T, T - t)
    for _ in range(WITNESS_HALVINGS + 1):
        if eps <= 0:
            break
        strategy, cost = round_trip_witness(profile, t, eps)
        if cost < 0:
            return eps, cost, strategy
        eps *= 0.5
    return None


def classify_manipulation(profile: LiquidityProfile, samples: int = DEFAULT_SAMPLES) -> ManipulationVerdict:
    """Zero-spread manipulation regime of a profile, decided on sampled times.

    PriceManipulation when K' + 2 rho K < 0 somewhere (a profitable round trip
    is searched for and attached), TransactionTriggered when f_0 < 0 or
    f' + rho f < 0 somewhere, Boundary when min(K' + 2 rho K) is within 1e-9
    of zero, Clean otherwise.  A violation strictly between samples can be
    missed.
    """
    if not profile.differentiable:
        raise UnsupportedProfileError("classification needs a differentiable K")
    times = _sample_times(profile, samples)
    _, den, f, fp, rho = _f_data(profile, times)
    gmin = float(den.min())
    common = {"min_denominator": gmin, "finite_difference_mode": profile.finite_difference_mode}
    if abs(gmin) <= BOUNDARY_TOL:
        return ManipulationVerdict(Regime.BOUNDARY, **common)
    if gmin < 0:
        bad = times[den < 0]
        t_bad = float(bad[0])
        # a round trip needs room after t; fall back to the last interior sample
        t_w = t_bad if t_bad < profile.horizon else float(times[-2])
        found = _find_witness(profile, t_w)
        if found is None:
            return ManipulationVerdict(Regime.PRICE_MANIPULATION, t_bad, **common)
        eps, cost, strategy = found
        return ManipulationVerdict(Regime.PRICE_MANIPULATION, t_w, eps, cost, strategy, **common)
    drift = fp + rho * f
    tol = _ttpm_tolerance(fp, rho, f)
    if f[0] < -1e-12:
        return ManipulationVerdict(Regime.TRANSACTION_TRIGGERED, 0.0, **common)
    if np.any(drift < -tol):
        return ManipulationVerdict(Regime.TRANSACTION_TRIGGERED, float(times[drift < -tol][0]), **common)
    return ManipulationVerdict(Regime.CLEAN, **common)


# -- optimal strategies ---------------------------------------------------------

class ClosedFormSolution(NamedTuple):
    strategy: ContinuousStrategy
    value: float
    delta_updown: float


def _quad_nodes(profile, panels):
    if panels < 1:
        raise PreconditionError("panels must be >= 1")
    return np.linspace(0.0, profile.horizon, 2 * int(panels) + 1)


def zero_spread_optimal(profile: LiquidityProfile, delta: float, x: float,
                        panels: int = DEFAULT_PANELS) -> ClosedFormSolution:
    """Optimal zero-spread strategy, its value and the level delta_updown.

    Integrals use composite Simpson with ``panels`` double intervals; the rate
    is tabulated on the same 2*panels + 1 nodes.
    """
    if not profile.differentiable:
        raise UnsupportedProfileError("closed form needs a differentiable K")
    t = _quad_nodes(profile, panels)
    K, den, f, fp, rho = _f_data(profile, t)
    check = np.union1d(t, profile.table_nodes())
    _, den_check, *_ = _f_data(profile, check)
    if np.any(den_check <= 0):
        t_bad = float(check[den_check <= 0][0])
        raise ConditionViolatedError(f"K' + 2 rho K <= 0 at t = {t_bad}", t=t_bad)
    K0, KT = K[0], K[-1]
    c = simpson((fp + rho * f) / K, x=t) + f[0] / K0 + (1 - f[-1]) / KT
    if not c > 0:
        raise InternalConsistencyError(f"normalising constant c = {c} is not positive")
    du = (x + delta / K0) / c
    value = du * du * (simpson(den * f * f / (2 * K * K), x=t) + 1 / (2 * KT)) - delta * delta / (2 * K0)
    strategy = ContinuousStrategy(du * f[0] / K0 - delta / K0, t, du * (fp + rho * f) / K,
                                  du * (1 - f[-1]) / KT)
    return ClosedFormSolution(strategy, float(value), float(du))


def check_no_ttpm(profile: LiquidityProfile, samples: int = DEFAULT_SAMPLES):
    """Raise ``ConditionViolatedError`` unless K'+2 rho K > 0, f_0 >= 0 and f'+rho f >= 0 on samples."""
    fp_ = f_profile(profile, samples)
    rho = profile.resilience(fp_.times)
    drift = fp_.fprime + rho * fp_.f
    if fp_.f[0] < -1e-12:
        raise ConditionViolatedError("f_0 < 0", t=0.0)
    bad = np.flatnonzero(drift < -_ttpm_tolerance(fp_.fprime, rho, fp_.f))
    if len(bad):
        raise ConditionViolatedError(f"f' + rho f < 0 at t = {fp_.times[bad[0]]}", t=float(fp_.times[bad[0]]))


def _cumulative_drift(profile, extra_t, panels):
    """Nodes (uniform plus ``extra_t``), f there, and int_0^t (f' + rho f)/K on the nodes."""
    nodes = np.union1d(_quad_nodes(profile, panels), np.atleast_1d(extra_t))
    K, den, f, fp, rho = _f_data(profile, nodes)
    cum = cumulative_simpson((fp + rho * f) / K, x=nodes, initial=0.0)
    return nodes, K, f, cum


def continuous_barrier(profile: LiquidityProfile, t, panels: int = DEFAULT_PANELS,
                       samples: int = DEFAULT_SAMPLES):
    """Continuous-time wait/buy barrier of the dynamic-spread model.

    c(t) = (int_t^T (f'+rho f)/K ds + (1 - f_T)/K_T) / f_t for t < T, inf where
    f_t = 0, and c(T) = 0.  Requires the no-transaction-triggered-manipulation
    condition on the sampled times.
    """
    check_no_ttpm(profile, samples)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    t_arr = profile._check_t(t_arr)
    nodes, K, f, cum = _cumulative_drift(profile, t_arr, panels)
    idx = np.searchsorted(nodes, t_arr)
    numer = cum[-1] - cum[idx] + (1 - f[-1]) / K[-1]
    ft = f[idx]
    with np.errstate(divide="ignore"):
        out = np.where(ft > 0, numer / np.where(ft > 0, ft, 1.0), np.inf)
    out = np.where(t_arr >= profile.horizon, 0.0, out)
    return float(out[0]) if np.ndim(t) == 0 else out


def chi(profile: LiquidityProfile, t, panels: int = DEFAULT_PANELS):
    """chi(t) = int_0^t (f'+rho f)/K + f_0/K_0 + (1 - f_t)/K_t; positive whenever f is defined."""
    f_profile(profile, 2 * panels + 1)
    t_arr = profile._check_t(np.atleast_1d(np.asarray(t, dtype=float)))
    nodes, K, f, cum = _cumulative_drift(profile, t_arr, panels)
    idx = np.searchsorted(nodes, t_arr)
    out = cum[idx] + f[0] / K[0] + (1 - f[idx]) / K[idx]
    return float(out[0]) if np.ndim(t) == 0 else out


def dynamic_spread_optimal(profile: LiquidityProfile, delta: float, x: float,
                           panels: int = DEFAULT_PANELS, samples: int = DEFAULT_SAMPLES) -> ClosedFormSolution:
    """Closed-form optimum with a dynamic spread, valid for delta <= x / c(0).

    Outside that range (or when the no-manipulation condition fails) the
    closed form does not apply and ``ClosedFormUnavailableError`` is raised;
    use ``dp.solve`` instead.
    """
    if x < 0 or delta < 0:
        raise PreconditionError("x and delta must be >= 0")
    try:
        check_no_ttpm(profile, samples)
    except ConditionViolatedError as exc:
        raise ClosedFormUnavailableError(f"closed form not applicable: {exc}") from exc
    c0 = continuous_barrier(profile, 0.0, panels, samples)
    if delta > 0 and not delta * c0 <= x:
        raise ClosedFormUnavailableError(f"delta = {delta} exceeds x / c(0) = {x / c0}; use the dp solver")
    sol = zero_spread_optimal(profile, delta, x, panels)
    s = sol.strategy
    # remove round-off sized negatives so the schedule is a valid buy program
    buy = ContinuousStrategy(max(s.initial, 0.0), s.times, np.maximum(s.rates, 0.0), max(s.terminal, 0.0))
    return ClosedFormSolution(buy, sol.value, sol.delta_updown)


def infinite_barrier_check(profile: LiquidityProfile, t: float, samples: int = DEFAULT_SAMPLES) -> bool:
    """Sufficient test for c(t) = inf in the dynamic-spread model.

    True if K'_t + rho_t K_t < 0, or if K_t exp(-int_t^s rho) > K_s for some
    sampled s in (t, T].  A False answer does not prove the barrier is finite.
    """
    T = profile.horizon
    t = float(profile._check_t(t))
    if t >= T:
        return False
    dK, _ = profile.K_derivatives(t)
    Kt = profile.K(t)
    if dK + profile.resilience(t) * Kt < 0:
        return True
    later = np.linspace(t, T, int(samples))[1:]
    nodes = profile.table_nodes()
    later = np.union1d(later, nodes[nodes > t])
    return bool(np.any(Kt * profile.decay_factor(np.full_like(later, t), later) > profile.K(later)))


# -- literal example formulas ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalyticExample:
    """Closed forms for the constant / exponential / straight-line families.

    ``rate`` and ``barrier`` are callables of t.  ``thresholds`` holds the
    regime interval endpoints of the family parameter (nu or m).
    """

    family: str
    regime: Regime
    initial: float
    rate: Callable
    terminal: float
    barrier: Callable
    thresholds: dict
    delta_updown: float
    value: float

    def to_strategy(self, T: float, nodes: int = 2 * DEFAULT_PANELS + 1) -> ContinuousStrategy:
        t = np.linspace(0.0, T, nodes)
        return ContinuousStrategy(self.initial, t, self.rate(t), self.terminal)


def _barrier_fn(expr, T):
    def barrier(t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= T, 0.0, expr(np.minimum(t, T)))
        return out[()] if out.ndim == 0 else out
    return barrier


def _wait_until_T(family, regime, thresholds, profile, x, delta):
    T = profile.horizon
    KT = profile.K(T)
    value = (delta * profile.decay_factor(0.0, T) + 0.5 * KT * x) * x
    return AnalyticExample(family, regime, 0.0, lambda t: np.zeros_like(np.asarray(t, dtype=float)), float(x),
                           _barrier_fn(lambda t: np.full_like(t, np.inf), T), thresholds, math.nan, float(value))


def _regime_from(p, upper, lower):
    """Clean from ``upper`` on, TTPM in between, PM below ``lower``; Boundary at ``lower``."""
    if p == lower:
        return Regime.BOUNDARY
    if p >= upper:
        return Regime.CLEAN
    return Regime.TRANSACTION_TRIGGERED if p > lower else Regime.PRICE_MANIPULATION


def analytic_example(profile: LiquidityProfile, x: float, delta: float = 0.0) -> AnalyticExample:
    """Dynamic-spread optimum of the three example families from their explicit formulas.

    The formulas are stated for delta = 0.  Because the optimal strategy is
    linear in x + delta/K_0 apart from the -delta/K_0 shift of the first
    impulse, delta > 0 is handled by substitution.  Raises
    ``ClosedFormUnavailableError`` where no closed form is known (the
    straight-line gap range, or delta beyond x / c(0)).
    """
    if profile.family not in ("constant", "exponential", "straight-line") or np.ndim(profile.rho) != 0:
        raise PreconditionError("analytic examples need a constant, exponential or straight-line K "
                                "with constant rho")
    if x < 0 or delta < 0:
        raise PreconditionError("x and delta must be >= 0")
    rho, T = profile.rho, profile.horizon
    kappa = float(profile.params["kappa"])
    xe = x + delta / kappa
    fam = profile.family
    nu = profile.exp_rate / rho if fam == "exponential" else 0.0
    m = float(profile.params["m"]) if fam == "straight-line" else 0.0

    if fam == "constant" or (fam == "exponential" and nu == 0.0) or (fam == "straight-line" and m == 0.0):
        thresholds = {}
        if fam == "exponential":
            thresholds = {"clean_min": -1.0, "pm_max": -2.0, "infinite_barrier_max": -1.0}
        elif fam == "straight-line":
            thresholds = _line_thresholds(kappa, rho, T)
        d0 = xe / (rho * T + 2)
        res = (d0 - delta / kappa, lambda t: np.full_like(np.asarray(t, dtype=float), d0 * rho), d0,
               _barrier_fn(lambda t: (1 + rho * (T - t)) / kappa, T), 2 * kappa * xe / (rho * T + 2))
        return _finish(fam, Regime.CLEAN, thresholds, res, xe, delta, kappa, x)

    if fam == "exponential":
        thresholds = {"clean_min": -1.0, "pm_max": -2.0, "infinite_barrier_max": -1.0}
        regime = _regime_from(nu, -1.0, -2.0)
        if nu < -1:
            return _wait_until_T(fam, regime, thresholds, profile, x, delta)
        E = math.exp(-nu * rho * T)
        den = (nu + 1) ** 2 - E
        d0 = xe * nu * (nu + 1) / den
        res = (d0 - delta / kappa,
               lambda t: d0 * rho * np.exp(-nu * rho * np.asarray(t, dtype=float)),
               xe * nu * E / den,
               _barrier_fn(lambda t: ((nu + 1) * np.exp(-nu * rho * t) - E) / (kappa * nu * (nu + 1))
                           if nu != -1 else np.full_like(t, np.inf), T),
               xe * kappa * nu * (nu + 2) / den)
        return _finish(fam, regime, thresholds, res, xe, delta, kappa, x)

    thresholds = _line_thresholds(kappa, rho, T)
    regime = _regime_from(m, thresholds["ttpm_max"], thresholds["pm_max"])
    if m < thresholds["infinite_barrier_max"]:
        return _wait_until_T(fam, regime, thresholds, profile, x, delta)
    if m < thresholds["ttpm_max"]:
        raise ClosedFormUnavailableError(
            f"no closed form for m in [{thresholds['infinite_barrier_max']}, {thresholds['ttpm_max']}); "
            "use the dp solver")
    kr = kappa * rho
    mt = 2 * m + kr * math.log((m + 2 * kr + 2 * m * rho * T) / (m + 2 * kr))

    def rate(t):
        t = np.asarray(t, dtype=float)
        return 2 * m * kappa * rho**2 * (2 * kr + m * (3 + 2 * rho * t)) * xe / ((m + 2 * kr + 2 * m * rho * t) ** 2 * mt)

    def barrier(t):
        s = m + 2 * kr + 2 * m * rho * t
        return rho * (2 * m - s * np.log(s / (m + 2 * kr + 2 * m * rho * T))) / (2 * m * (m + kr + m * rho * t))

    res = (2 * m * (m + kr) * xe / ((m + 2 * kr) * mt) - delta / kappa, rate,
           2 * m * kr * xe / ((m + 2 * kr + 2 * m * rho * T) * mt), _barrier_fn(barrier, T),
           2 * m * kappa * xe / mt)
    return _finish(fam, regime, thresholds, res, xe, delta, kappa, x)


def _line_thresholds(kappa, rho, T):
    th = {
        "positive_min": -kappa / T,
        "pm_max": -2 * rho * kappa / (1 + 2 * rho * T),
        "ttpm_max": -2 * rho * kappa / (3 + 2 * rho * T),
        "infinite_barrier_max": -(kappa / T) * (1 - math.exp(-rho * T)),
    }
    if not (th["positive_min"] < th["pm_max"] < th["ttpm_max"]
            and th["positive_min"] < th["infinite_barrier_max"] < th["ttpm_max"]):
        raise InternalConsistencyError(f"straight-line thresholds out of order: {th}")
    return th


def _finish(fam, regime, thresholds, res, xe, delta, kappa, x):
    initial, rate, terminal, barrier, du = res
    if initial < -1e-12 * max(1.0, x):
        c0 = float(barrier(0.0))
        raise ClosedFormUnavailableError(f"delta = {delta} exceeds x / c(0) = {x / c0}; use the dp solver")
    # value = du^2 c / 2 - delta^2 / (2 K_0) with c = (x + delta/K_0) / du
    value = 0.5 * du * xe - delta * delta / (2 * kappa)
    return AnalyticExample(fam, regime, float(max(initial, 0.0)), rate, float(terminal), barrier,
                           thresholds, float(du), float(value))
