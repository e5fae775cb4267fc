"""Time-varying liquidity profiles: price impact K(t), resilience rho(t), gamma.

A profile is immutable once built.  Parametric families carry analytic
derivatives; tabulated inputs are linearly interpolated and differentiated by
central differences (``finite_difference_mode`` is then True).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError, PreconditionError, ProfileError

FAMILIES = ("constant", "exponential", "straight-line", "quadratic", "tabulated")

# slack for floating-point round-off when callers compute t = s + eps etc.
_T_SLACK = 1e-12


def _as_table(table, name: str, horizon: float) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ProfileError(f"{name}: expected at least two (t, value) pairs", field=name)
    t, v = arr[:, 0].copy(), arr[:, 1].copy()
    if not np.all(np.isfinite(arr)):
        raise ProfileError(f"{name}: table entries must be finite", field=name)
    if np.any(np.diff(t) <= 0):
        raise ProfileError(f"{name}: table times must be strictly increasing", field=name)
    if t[0] != 0.0 or not np.isclose(t[-1], horizon, rtol=0, atol=_T_SLACK * max(1.0, horizon)):
        raise ProfileError(f"{name}: table must start at 0 and end at the horizon {horizon}", field=name)
    t[-1] = horizon
    if np.any(v <= 0):
        raise ProfileError(f"{name}: all tabulated values must be > 0", field=name)
    return t, v


def _table_derivatives(t, nodes, values):
    """Central differences with the local table spacing; one-sided at the ends."""
    t = np.asarray(t, dtype=float)
    horizon = nodes[-1]
    idx = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, len(nodes) - 2)
    h = nodes[idx + 1] - nodes[idx]

    def f(s):
        return np.interp(s, nodes, values)

    has_left = t - h >= -_T_SLACK
    has_right = t + h <= horizon + _T_SLACK
    central = has_left & has_right
    f0 = f(t)
    # secant over [t-h, t+h] clipped to [0, T]: central inside, one-sided at the ends
    tp, tm = np.minimum(t + h, horizon), np.maximum(t - h, 0.0)
    fp, fm = f(tp), f(tm)
    d1 = (fp - fm) / (tp - tm)

    d2 = (fp - 2 * f0 + fm) / h**2
    fwd = t + 2 * h <= horizon + _T_SLACK
    bwd = t - 2 * h >= -_T_SLACK
    d2_fwd = (f(np.minimum(t + 2 * h, horizon)) - 2 * fp + f0) / h**2
    d2_bwd = (f0 - 2 * fm + f(np.maximum(t - 2 * h, 0.0))) / h**2
    d2 = np.where(central, d2, np.where(fwd, d2_fwd, np.where(bwd, d2_bwd, 0.0)))
    return d1, d2


@dataclass(frozen=True, eq=False)
class LiquidityProfile:
    """Deterministic liquidity data on ``[0, horizon]``.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    params : mapping
        ``constant``: ``kappa``; ``exponential``: ``kappa``, ``nu`` and optional
        ``rate`` (defaults to the constant resilience, so K = kappa*exp(nu*rho*t));
        ``straight-line``: ``kappa``, ``m``; ``quadratic``: ``c0``, ``c1``, ``c2``
        (K = c0 + c1 t + c2 t^2); ``tabulated``: ``table`` of (t, K) pairs.
    rho : float or sequence of (t, rho) pairs
        Resilience per unit time.
    horizon : float
        Trading horizon T.
    gamma : float
        Permanent impact coefficient.
    """

    family: str
    params: Mapping[str, Any]
    rho: Any
    horizon: float
    gamma: float = 0.0
    _k_table: Any = field(default=None, init=False, repr=False)
    _rho_table: Any = field(default=None, init=False, repr=False)
    _rho_cum: Any = field(default=None, init=False, repr=False)

    def __post_init__(self):
        T = float(self.horizon)
        if not np.isfinite(T) or T <= 0:
            raise ProfileError("horizon must be a finite number > 0", field="horizon")
        object.__setattr__(self, "horizon", T)
        g = float(self.gamma)
        if not np.isfinite(g) or g < 0:
            raise ProfileError("gamma must be >= 0", field="gamma")
        object.__setattr__(self, "gamma", g)
        if self.family not in FAMILIES:
            raise ProfileError(f"unknown family {self.family!r}; expected one of {FAMILIES}",
                               field="family")
        object.__setattr__(self, "params", dict(self.params))
        self._validate_rho()
        self._validate_K()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, kappa, rho, horizon, gamma=0.0):
        return cls("constant", {"kappa": kappa}, rho, horizon, gamma)

    @classmethod
    def exponential(cls, kappa, nu, rho, horizon, gamma=0.0, rate=None):
        params = {"kappa": kappa, "nu": nu}
        if rate is not None:
            params["rate"] = rate
        return cls("exponential", params, rho, horizon, gamma)

    @classmethod
    def straight_line(cls, kappa, m, rho, horizon, gamma=0.0):
        return cls("straight-line", {"kappa": kappa, "m": m}, rho, horizon, gamma)

    @classmethod
    def quadratic(cls, c0, c1, c2, rho, horizon, gamma=0.0):
        return cls("quadratic", {"c0": c0, "c1": c1, "c2": c2}, rho, horizon, gamma)

    @classmethod
    def tabulated(cls, table, rho, horizon, gamma=0.0):
        return cls("tabulated", {"table": table}, rho, horizon, gamma)

    def _param(self, name):
        try:
            value = float(self.params[name])
        except KeyError:
            raise ProfileError(f"{self.family} profile requires parameter {name!r}",
                               field=f"params.{name}") from None
        except (TypeError, ValueError):
            raise ProfileError(f"parameter {name!r} must be a number", field=f"params.{name}") from None
        if not np.isfinite(value):
            raise ProfileError(f"parameter {name!r} must be finite", field=f"params.{name}")
        return value

    def _validate_rho(self):
        if np.ndim(self.rho) == 0:
            r = float(self.rho)
            if not np.isfinite(r) or r <= 0:
                raise ProfileError("rho must be > 0", field="rho")
            object.__setattr__(self, "rho", r)
            return
        t, v = _as_table(self.rho, "rho", self.horizon)
        slope = np.diff(v) / np.diff(t)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
        object.__setattr__(self, "_rho_table", (t, v, slope))
        object.__setattr__(self, "_rho_cum", cum)

    def _validate_K(self):
        T = self.horizon
        fam = self.family
        if fam == "constant":
            if self._param("kappa") <= 0:
                raise ProfileError("kappa must be > 0", field="params.kappa")
        elif fam == "exponential":
            if self._param("kappa") <= 0:
                raise ProfileError("kappa must be > 0", field="params.kappa")
            self._param("nu")
            if "rate" in self.params:
                self._param("rate")
            elif self._rho_table is not None:
                raise ProfileError("exponential family with tabulated rho needs params.rate",
                                   field="params.rate")
        elif fam == "straight-line":
            kappa, m = self._param("kappa"), self._param("m")
            if kappa <= 0:
                raise ProfileError("kappa must be > 0", field="params.kappa")
            if kappa + m * T <= 0:
                raise ProfileError(f"straight-line K must stay positive: need m > -kappa/T = {-kappa / T}",
                                   field="params.m")
        elif fam == "quadratic":
            c0, c1, c2 = self._param("c0"), self._param("c1"), self._param("c2")
            cand = [0.0, T]
            if c2 != 0.0 and 0.0 < -c1 / (2 * c2) < T:
                cand.append(-c1 / (2 * c2))
            if min(c0 + c1 * s + c2 * s * s for s in cand) <= 0:
                raise ProfileError("quadratic K must be > 0 on [0, T]", field="params")
        else:
            if "table" not in self.params:
                raise ProfileError("tabulated profile requires params.table", field="params.table")
            object.__setattr__(self, "_k_table", _as_table(self.params["table"], "params.table", T))

    # -- evaluation -------------------------------------------------------------

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        slack = _T_SLACK * max(1.0, self.horizon)
        if np.any(~np.isfinite(t)) or np.any(t < -slack) or np.any(t > self.horizon + slack):
            raise DomainError(f"time outside [0, {self.horizon}]")
        return np.clip(t, 0.0, self.horizon)

    @property
    def finite_difference_mode(self) -> bool:
        """True when derivatives come from finite differences of a table."""
        return self.family == "tabulated" or self._rho_table is not None

    @property
    def differentiable(self) -> bool:
        return self._k_table is None or len(self._k_table[0]) >= 3

    @property
    def exp_rate(self) -> float:
        """Exponent multiplier ``nu * rate`` of the exponential family."""
        rate = self._param("rate") if "rate" in self.params else self.rho
        return self._param("nu") * rate

    def K(self, t):
        """Price impact per share K(t)."""
        t = self._check_t(t)
        fam = self.family
        if fam == "constant":
            out = np.full_like(t, self._param("kappa"))
        elif fam == "exponential":
            out = self._param("kappa") * np.exp(self.exp_rate * t)
        elif fam == "straight-line":
            out = self._param("kappa") + self._param("m") * t
        elif fam == "quadratic":
            out = self._param("c0") + t * (self._param("c1") + self._param("c2") * t)
        else:
            out = np.interp(t, *self._k_table)
        return out[()] if out.ndim == 0 else out

    def K_derivatives(self, t):
        """Return ``(K'(t), K''(t))``."""
        t = self._check_t(t)
        fam = self.family
        zero = np.zeros_like(t)
        if fam == "constant":
            d1, d2 = zero, zero
        elif fam == "exponential":
            r = self.exp_rate
            k = self._param("kappa") * np.exp(r * t)
            d1, d2 = r * k, r * r * k
        elif fam == "straight-line":
            d1, d2 = zero + self._param("m"), zero
        elif fam == "quadratic":
            c1, c2 = self._param("c1"), self._param("c2")
            d1, d2 = c1 + 2 * c2 * t, zero + 2 * c2
        else:
            d1, d2 = _table_derivatives(t, *self._k_table)
        if t.ndim == 0:
            return float(d1), float(d2)
        return d1, d2

    def resilience(self, t):
        """Resilience rate rho(t)."""
        t = self._check_t(t)
        if self._rho_table is None:
            out = np.full_like(t, self.rho)
        else:
            out = np.interp(t, *self._rho_table[:2])
        return out[()] if out.ndim == 0 else out

    def resilience_derivative(self, t):
        t = self._check_t(t)
        if self._rho_table is None:
            out = np.zeros_like(t)
        else:
            out, _ = _table_derivatives(t, *self._rho_table[:2])
        return out[()] if np.ndim(out) == 0 else out

    def integrated_resilience(self, t):
        """int_0^t rho(u) du (exact for piecewise-linear rho)."""
        t = self._check_t(t)
        if self._rho_table is None:
            out = self.rho * t
        else:
            nodes, vals, slope = self._rho_table
            i = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, len(nodes) - 2)
            dt = t - nodes[i]
            out = self._rho_cum[i] + vals[i] * dt + 0.5 * slope[i] * dt * dt
        return out[()] if np.ndim(out) == 0 else out

    def decay_factor(self, s, t):
        """exp(-int_s^t rho(u) du) for s <= t."""
        s, t = np.broadcast_arrays(self._check_t(s), self._check_t(t))
        if np.any(s > t):
            raise DomainError("decay_factor requires s <= t")
        if self._rho_table is None:
            out = np.exp(-self.rho * (t - s))
        else:
            out = np.exp(-(self.integrated_resilience(t) - self.integrated_resilience(s)))
        return out[()] if np.ndim(out) == 0 else out

    def table_nodes(self) -> np.ndarray:
        """All tabulation nodes of K and rho (empty for fully parametric profiles)."""
        parts = [tab[0] for tab in (self._k_table, self._rho_table) if tab is not None]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0)

    def describe(self) -> dict:
        """Plain-data echo of the profile (for summaries)."""
        params = {k: (np.asarray(v).tolist() if k == "table" else float(v))
                  for k, v in self.params.items()}
        rho = self.rho if self._rho_table is None else np.column_stack(self._rho_table[:2]).tolist()
        return {"family": self.family, "params": params, "rho": rho,
                "horizon": self.horizon, "gamma": self.gamma}


def eval_K(profile: LiquidityProfile, t):
    return profile.K(t)


def eval_K_derivatives(profile: LiquidityProfile, t):
    return profile.K_derivatives(t)


def decay_factor(profile: LiquidityProfile, s, t):
    return profile.decay_factor(s, t)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Trading times ``0 = t_0 < ... < t_N = T`` with per-step decay factors.

    ``decay[j] = exp(-int_{t_j}^{t_{j+1}} rho)`` and ``K[n] = K(t_n)``.
    """

    times: np.ndarray
    decay: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        if len(self.times) < 2:
            raise PreconditionError("a grid needs N >= 1 (at least two nodes)")
        if np.any(np.diff(self.times) <= 0):
            raise PreconditionError("grid nodes must be strictly increasing")
        if len(self.decay) != len(self.times) - 1 or len(self.K) != len(self.times):
            raise PreconditionError("grid arrays have inconsistent lengths")
        if np.any(self.decay <= 0) or np.any(self.decay >= 1):
            raise PreconditionError("decay factors must lie in (0, 1)")

    @classmethod
    def from_nodes(cls, profile: LiquidityProfile, nodes: Sequence[float]) -> "TimeGrid":
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise PreconditionError("a grid needs at least two nodes")
        T = profile.horizon
        if nodes[0] != 0.0 or abs(nodes[-1] - T) > _T_SLACK * max(1.0, T):
            raise PreconditionError(f"grid must start at 0 and end at T={T}")
        nodes[-1] = T
        if np.any(np.diff(nodes) <= 0):
            raise PreconditionError("grid nodes must be strictly increasing")
        decay = profile.decay_factor(nodes[:-1], nodes[1:])
        return cls(nodes, np.atleast_1d(decay), np.atleast_1d(profile.K(nodes)))

    @classmethod
    def uniform(cls, profile: LiquidityProfile, N: int) -> "TimeGrid":
        if int(N) != N or N < 1:
            raise PreconditionError("N must be an integer >= 1")
        return cls.from_nodes(profile, np.linspace(0.0, profile.horizon, int(N) + 1))

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (len(self.times) == len(other.times)
                                 and np.array_equal(self.times, other.times))
