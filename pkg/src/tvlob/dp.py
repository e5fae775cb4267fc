"""Backward induction for the discrete-time buying problem.

The value function is tracked in ratio coordinates y = x / delta,
V(t_n, y) = U(t_n, 1, y), and is piecewise quadratic in y.  One backward step
minimises L(eta) = (1 + 2 K_n a_n^2 V_{n+1}(eta / a_n)) / (1 + K_n eta)^2,
whose derivative numerator is affine on every piece, so the barrier (the
minimiser) comes from a linear root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalConsistencyError, PreconditionError
from .impact import DiscreteStrategy
from .liquidity import LiquidityProfile, TimeGrid

# breakpoints closer than this (relative to 1 + y) are merged
MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PiecewiseQuadraticVF:
    """V(y) = alpha_i y^2 + beta_i y + gamma_i on (y_{i-1}, y_i], y_0 = 0, y_M = inf.

    ``breakpoints`` holds the finite y_1 < ... < y_{M-1}.
    """

    breakpoints: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def n_pieces(self) -> int:
        return len(self.alpha)

    def piece_index(self, y):
        return np.searchsorted(self.breakpoints, y, side="left")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        i = self.piece_index(y)
        out = (self.alpha[i] * y + self.beta[i]) * y + self.gamma[i]
        return out[()] if out.ndim == 0 else out

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        i = self.piece_index(y)
        out = 2 * self.alpha[i] * y + self.beta[i]
        return out[()] if out.ndim == 0 else out

    def homogeneous(self, delta: float, x: float) -> float:
        """delta^2 V(x / delta), evaluated without forming the ratio.

        For delta = 0 this is the limit x^2 * alpha of the unbounded piece.
        """
        i = self.n_pieces - 1 if delta == 0 else int(self.piece_index(x / delta))
        return float(self.alpha[i] * x * x + self.beta[i] * x * delta + self.gamma[i] * delta * delta)

    def invariant_violations(self, tol: float = 1e-9) -> list[str]:
        """Return human-readable descriptions of broken structural properties."""
        bad = []
        a, b, g, y = self.alpha, self.beta, self.gamma, self.breakpoints
        if len(y) != len(a) - 1 or len(b) != len(a) or len(g) != len(a):
            return ["inconsistent array lengths"]
        if np.any(np.diff(y) <= 0) or (len(y) and y[0] <= 0):
            bad.append("breakpoints not strictly increasing in (0, inf)")
        if np.any(a <= 0) or np.any(b <= 0):
            bad.append("alpha and beta must be positive")
        if np.any(4 * a * g + b - b * b < -1e-12 * np.maximum(1.0, b * b)):
            bad.append("4 alpha gamma + beta - beta^2 >= 0 violated")
        left = np.concatenate([[0.0], y])
        if np.any(left * b + 2 * g < -1e-12 * np.maximum(1.0, left * b)):
            bad.append("y_{i-1} beta_i + 2 gamma_i >= 0 violated")
        if len(y):
            v_l = (a[:-1] * y + b[:-1]) * y + g[:-1]
            v_r = (a[1:] * y + b[1:]) * y + g[1:]
            s_l = 2 * a[:-1] * y + b[:-1]
            s_r = 2 * a[1:] * y + b[1:]
            if np.any(np.abs(v_l - v_r) > tol * np.maximum(1.0, np.abs(v_l))):
                bad.append("value not continuous at a breakpoint")
            if np.any(np.abs(s_l - s_r) > tol * np.maximum(1.0, np.abs(s_l))):
                bad.append("slope not continuous at a breakpoint")
        return bad

    def validate(self, tol: float = 1e-9):
        bad = self.invariant_violations(tol)
        if bad:
            raise InternalConsistencyError("; ".join(bad))


def terminal_vf(profile: LiquidityProfile, grid: TimeGrid) -> PiecewiseQuadraticVF:
    """V(T, y) = y + K_T y^2 / 2 (buy everything that is left)."""
    return PiecewiseQuadraticVF(np.empty(0), np.array([0.5 * grid.K[-1]]), np.array([1.0]), np.array([0.0]))


def _l_coefficients(vf, K, a):
    slope = 2 * vf.alpha - K * vf.beta * a
    icpt = vf.beta * a - 2 * K * vf.gamma * a * a - 1.0
    return slope, icpt


def barrier_step(vf_next: PiecewiseQuadraticVF, K: float, a: float) -> tuple[float, int]:
    """Minimiser of L and the index of the piece (of V_{n+1}) that contains it.

    Returns ``(inf, M)`` when L is decreasing everywhere.
    """
    slope, icpt = _l_coefficients(vf_next, K, a)
    hi = a * vf_next.breakpoints
    l_hi = slope[:-1] * hi + icpt[:-1]
    crossing = np.flatnonzero(l_hi >= 0)
    if len(crossing):
        i = int(crossing[0])
    elif slope[-1] > 0:
        i = vf_next.n_pieces - 1
    else:
        # l < 0 on the whole unbounded piece: never trade
        return np.inf, vf_next.n_pieces
    lo = 0.0 if i == 0 else hi[i - 1]
    if slope[i] * lo + icpt[i] >= 0:
        return lo, i
    root = -icpt[i] / slope[i]
    upper = hi[i] if i < len(hi) else np.inf
    return float(min(max(root, lo), upper)), i


def backstep(vf_next: PiecewiseQuadraticVF, K: float, a: float,
             validate: bool = True) -> tuple[PiecewiseQuadraticVF, float]:
    """One dynamic-programming step: returns ``(V(t_n, .), c_n)``."""
    if not (K > 0 and 0 < a < 1):
        raise PreconditionError("need K_n > 0 and a_n in (0, 1)")
    if validate:
        vf_next.validate()
    c, i = barrier_step(vf_next, K, a)

    # pieces of V_{n+1}(./a) rescaled: (alpha, a beta, a^2 gamma), breakpoints a y
    alpha, beta, gamma = vf_next.alpha, a * vf_next.beta, a * a * vf_next.gamma
    bps = a * vf_next.breakpoints
    if np.isinf(c):
        return PiecewiseQuadraticVF(bps, alpha.copy(), beta, gamma), np.inf

    lval = (1.0 + 2 * K * (alpha[i] * c * c + beta[i] * c + gamma[i])) / (1.0 + K * c) ** 2
    top = (0.5 * K * lval, lval, (lval - 1.0) / (2 * K))
    if c <= 0.0:
        return PiecewiseQuadraticVF(np.empty(0), *(np.array([v]) for v in top)), 0.0

    keep = i + 1                      # pieces 0..i survive (piece i up to c)
    kept_bps = bps[:i]
    if i > 0 and c - kept_bps[-1] <= MERGE_TOL * (1.0 + c):
        keep -= 1                     # sliver piece: merge into the neighbour
        kept_bps = kept_bps[:-1]
    new = PiecewiseQuadraticVF(
        np.append(kept_bps, c),
        np.append(alpha[:keep], top[0]),
        np.append(beta[:keep], top[1]),
        np.append(gamma[:keep], top[2]),
    )
    return new, float(c)


@dataclass(frozen=True, eq=False)
class Barrier:
    """Wait/buy boundary c_n at each grid node (c_N = 0, inf = never buy)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.grid.N + 1 or self.values[-1] != 0.0:
            raise InternalConsistencyError("barrier must have N+1 entries with c_N = 0")


@dataclass(frozen=True, eq=False)
class SolveResult:
    profile: LiquidityProfile
    grid: TimeGrid
    barrier: Barrier
    value_functions: list = field(repr=False)
    diagnostics: dict = field(default_factory=dict)


def solve(profile: LiquidityProfile, grid: TimeGrid, validate: bool = True) -> SolveResult:
    """Backward induction over ``grid``; returns the barrier and V(t_n, .) for every n."""
    if np.any(grid.K <= 0):
        raise PreconditionError("K must be positive at every grid node")
    N = grid.N
    vfs = [None] * (N + 1)
    vfs[N] = terminal_vf(profile, grid)
    c = np.zeros(N + 1)
    pieces = np.zeros(N + 1, dtype=int)
    pieces[N] = 1
    dropped = 0
    for n in range(N - 1, -1, -1):
        vfs[n], c[n] = backstep(vfs[n + 1], grid.K[n], grid.decay[n], validate=validate)
        pieces[n] = vfs[n].n_pieces
        dropped += vfs[n + 1].n_pieces + (0 if np.isinf(c[n]) else 1) - pieces[n]
    if validate:
        vfs[0].validate()
    steps_back = N - np.arange(N + 1)
    diagnostics = {
        "max_pieces": int(pieces.max()),
        "pieces": pieces.tolist(),
        "dropped_breakpoints": int(dropped),
        "piece_bound_exceeded": bool(np.any(pieces > steps_back + 2)),
    }
    return SolveResult(profile, grid, Barrier(grid, c), vfs, diagnostics)


def extract_strategy(result: SolveResult, x: float, delta0: float = 0.0) -> DiscreteStrategy:
    """Forward pass: trade down to the barrier whenever x_n / delta_n exceeds it."""
    if x < 0 or delta0 < 0:
        raise PreconditionError("x and delta0 must be >= 0")
    grid = result.grid
    c = result.barrier.values
    trades = np.zeros(grid.N + 1)
    remaining, d = float(x), float(delta0)
    for n in range(grid.N):
        if np.isfinite(c[n]) and remaining > 0:
            xi = max(0.0, (remaining - c[n] * d) / (1.0 + grid.K[n] * c[n]))
            xi = min(xi, remaining)
            trades[n] = xi
            remaining -= xi
            d += grid.K[n] * xi
        d *= grid.decay[n]
    trades[-1] = max(remaining, 0.0)
    return DiscreteStrategy(grid, trades)


def dp_value(result: SolveResult, n: int, delta: float, x: float) -> float:
    """U^N(t_n, delta, x) = delta^2 V(t_n, x / delta) (leading-coefficient limit at delta = 0)."""
    if delta < 0 or x < 0:
        raise PreconditionError("delta and x must be >= 0")
    vf = result.value_functions[n]
    if vf is None:
        raise PreconditionError(f"value function at node {n} was not kept")
    return vf.homogeneous(delta, x)
