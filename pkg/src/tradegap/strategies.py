"""Simple and almost-simple trading strategies in the bond/risky-asset market.

Holdings between two trade times are functions of the Brownian level at the
earlier trade time, stored as interval partitions with one coefficient pair
``(bond, risky)`` per cell. A strategy is either

* ``financing="explicit"``: both legs come from the level rules, or
* ``financing="self"``: the risky leg comes from the rules and the bond leg
  is whatever keeps every rebalance exactly funded, starting from
  ``initial_capital``. This bond leg is path dependent, so such strategies
  are evaluated along simulated paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .economy import Equilibrium, MarketModel, asset_price, solve_equilibrium, walras_net_trade
from .errors import DomainError
from .mathkit import NormalLaw, PathEnsemble, brent_root, expand_bracket, expect_on_interval, gauss_hermite_rule, generate_paths, normal_cdf
from .partition import Stage, TabulatedConditional, quadratic_value

FINANCING_MODES = ("explicit", "self")


@dataclass(frozen=True, eq=False)
class LevelRule:
    """Piecewise-constant map ``level -> (bond, risky)``.

    Cell ``k`` is ``(b[k-1], b[k]]`` with ``b[-1] = -inf`` and ``b[L-1] = +inf``.
    """

    boundaries: np.ndarray
    coefficients: np.ndarray
    bound: float = 1e6

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.boundaries, dtype=float))
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if b.ndim != 1 or (b.size and not np.all(np.isfinite(b))):
            raise DomainError("cell boundaries must be a finite 1-d sequence")
        if np.any(np.diff(b) <= 0):
            raise DomainError("cell boundaries must be strictly increasing (cells may not overlap)")
        if c.shape != (b.size + 1, 2):
            raise DomainError(f"expected {b.size + 1} coefficient pairs, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.abs(c).max(initial=0) > self.bound:
            raise DomainError(f"coefficients must be finite and bounded by {self.bound:g}")
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def constant(cls, bond: float, risky: float) -> "LevelRule":
        return cls(np.empty(0), [[bond, risky]])

    @property
    def n_cells(self) -> int:
        return self.coefficients.shape[0]

    def edges(self) -> np.ndarray:
        return np.concatenate(([-np.inf], self.boundaries, [np.inf]))

    def cell_index(self, x) -> np.ndarray:
        return np.searchsorted(self.boundaries, np.asarray(x, dtype=float), side="left")

    def __call__(self, x) -> np.ndarray:
        return self.coefficients[self.cell_index(x)]


class PriceTable:
    """Risky-asset prices ``S1(t, x)`` along paths, tabulated once per time."""

    def __init__(self, model: MarketModel, n: int = 6001):
        self.model = model
        self.n = n
        self._tables: dict[float, TabulatedConditional] = {}

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        model = self.model
        if t >= model.T:
            return np.asarray(model.g(x), dtype=float)
        if x.size <= 64 or t == 0:
            return np.asarray(asset_price(model, 1, t, x), dtype=float)
        if t not in self._tables:
            half = (model.quadrature.truncation_width + 2) * math.sqrt(model.T)
            self._tables[t] = TabulatedConditional(model.g, t, model.T, model.quadrature, half, self.n)
        return self._tables[t](x)


def _check_times(times, T=None) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise DomainError("a strategy needs trade times 0 = t0 < ... < tN = T with N >= 1")
    if times[0] != 0:
        raise DomainError(f"first trade time must be 0, got {times[0]!r}")
    if np.any(np.diff(times) <= 0):
        raise DomainError("trade times must be strictly increasing")
    if T is not None and abs(times[-1] - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"last trade time must equal the horizon {T!r}, got {times[-1]!r}")
    return times


@dataclass(frozen=True, eq=False)
class SimpleStrategy:
    """Finitely many trades at ``trade_times[:-1]``; ``rules[i]`` applies on ``(t_i, t_{i+1}]``."""

    trade_times: np.ndarray
    rules: tuple
    financing: str = "explicit"
    initial_capital: float | None = None

    def __post_init__(self):
        times = _check_times(self.trade_times)
        times.setflags(write=False)
        object.__setattr__(self, "trade_times", times)
        rules = tuple(self.rules)
        if len(rules) != times.size - 1:
            raise DomainError(f"need one level rule per trading interval: {times.size - 1} intervals, {len(rules)} rules")
        if not all(isinstance(r, LevelRule) for r in rules):
            raise DomainError("rules must be LevelRule instances")
        object.__setattr__(self, "rules", rules)
        if self.financing not in FINANCING_MODES:
            raise DomainError(f"financing must be one of {FINANCING_MODES}, got {self.financing!r}")
        if self.initial_capital is not None and not math.isfinite(self.initial_capital):
            raise DomainError("initial_capital must be finite")

    @classmethod
    def static(cls, bond: float, risky: float, T: float) -> "SimpleStrategy":
        return cls(np.array([0.0, T]), (LevelRule.constant(bond, risky),))

    @property
    def N(self) -> int:
        return len(self.rules)

    @property
    def horizon(self) -> float:
        return float(self.trade_times[-1])

    def holdings(self, levels: np.ndarray, prices: np.ndarray) -> np.ndarray:
        """Holdings after each trade, shape ``(n, N, 2)``, from levels/prices at ``t_0..t_{N-1}``."""
        levels = np.atleast_2d(levels)
        out = np.stack([rule(levels[:, i]) for i, rule in enumerate(self.rules)], axis=1)
        if self.financing == "self":
            out = np.array(out, copy=True)
            risky = out[:, :, 1]
            first = out[:, 0, 0] if self.initial_capital is None else self.initial_capital - risky[:, 0] * prices[:, 0]
            out[:, 0, 0] = first
            for i in range(1, self.N):
                out[:, i, 0] = out[:, i - 1, 0] + (risky[:, i - 1] - risky[:, i]) * prices[:, i]
        return out


def evaluate_along_paths(strategy: SimpleStrategy, paths: PathEnsemble, model: MarketModel, prices: PriceTable | None = None):
    if abs(paths.horizon - strategy.horizon) > 1e-12 * max(1.0, model.T) or abs(model.T - strategy.horizon) > 1e-12 * max(1.0, model.T):
        raise DomainError("strategy, path grid and model must share the horizon")
    cols = paths.index_of(strategy.trade_times)
    levels = paths.values[:, cols]
    prices = prices or PriceTable(model)
    S = np.column_stack([prices(float(t), levels[:, i]) for i, t in enumerate(strategy.trade_times)])
    theta = strategy.holdings(levels[:, :-1], S[:, :-1])
    return levels, S, theta


def dividend(holdings, x_T, model: MarketModel):
    """Terminal dividend ``phi0 * 1 + phi1 * g(x_T)``."""
    phi = np.asarray(holdings, dtype=float)
    out = phi[..., 0] + phi[..., 1] * np.asarray(model.g(x_T), dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def gains_process(strategy: SimpleStrategy, paths: PathEnsemble, model: MarketModel, prices: PriceTable | None = None) -> np.ndarray:
    """Capital gains ``sum_i theta_i . (S(t_{i+1}) - S(t_i))`` per path (the bond price is constant)."""
    _, S, theta = evaluate_along_paths(strategy, paths, model, prices)
    return np.sum(theta[:, :, 1] * np.diff(S, axis=1), axis=1)


class WealthDecomposition(NamedTuple):
    initial_value: np.ndarray
    terminal_dividend: np.ndarray
    gains: np.ndarray
    injections: np.ndarray

    def identity_residual(self) -> np.ndarray:
        """``terminal - initial - gains - injections``; zero up to round-off."""
        return self.terminal_dividend - self.initial_value - self.gains - self.injections


def wealth_decomposition(strategy: SimpleStrategy, paths: PathEnsemble, model: MarketModel,
                         prices: PriceTable | None = None) -> WealthDecomposition:
    _, S, theta = evaluate_along_paths(strategy, paths, model, prices)
    initial = theta[:, 0, 0] + theta[:, 0, 1] * S[:, 0]
    terminal = theta[:, -1, 0] + theta[:, -1, 1] * S[:, -1]
    gains = np.sum(theta[:, :, 1] * np.diff(S, axis=1), axis=1)
    jumps = np.diff(theta, axis=1)
    injections = np.sum(jumps[:, :, 0] + jumps[:, :, 1] * S[:, 1:-1], axis=1)
    return WealthDecomposition(initial, terminal, gains, injections)


class SelfFinancingCheck(NamedTuple):
    passed: bool
    max_residual: float
    method: str


def _representatives(rule: LevelRule, extra: np.ndarray, half: float) -> list[np.ndarray]:
    """Levels standing in for each cell: clipped endpoints, midpoint and foreign breakpoints."""
    reps = []
    for lo, hi in zip(rule.edges()[:-1], rule.edges()[1:]):
        a, b = max(lo, -half), min(hi, half)
        if a > b:
            a = b = hi if hi < -half else lo
        inside = extra[(extra > lo) & (extra <= hi)]
        reps.append(np.unique(np.concatenate(([a, b, 0.5 * (a + b)], inside))))
    return reps


def is_self_financing(strategy: SimpleStrategy, model: MarketModel, tol: float = 1e-9,
                      paths: PathEnsemble | None = None) -> SelfFinancingCheck:
    """Check that every rebalance costs nothing: ``theta_old . S(t_i) = theta_new . S(t_i)``.

    Explicit strategies without paths are checked cell by cell at
    representative levels; otherwise the check runs along paths (a default
    4096-path ensemble on the trade grid when none is given).
    """
    if strategy.N == 1:
        return SelfFinancingCheck(True, 0.0, "no rebalancing")
    if paths is None and strategy.financing == "explicit":
        worst = 0.0
        times = strategy.trade_times
        for i in range(1, strategy.N):
            old, new = strategy.rules[i - 1], strategy.rules[i]
            t = float(times[i])
            half = model.quadrature.truncation_width * math.sqrt(t)
            old_coef = old.coefficients if times[i - 1] > 0 else old(np.array([0.0]))
            for k, reps in enumerate(_representatives(new, old.boundaries, half)):
                s = np.asarray(asset_price(model, 1, t, reps), dtype=float)
                diff = old_coef - new.coefficients[k]
                worst = max(worst, float(np.abs(diff[:, :1] + diff[:, 1:] * s).max()))
        return SelfFinancingCheck(worst <= tol, worst, "cell-wise")
    if paths is None:
        paths = generate_paths(model.T, strategy.trade_times, 4096, seed=0)
    _, S, theta = evaluate_along_paths(strategy, paths, model)
    jumps = np.diff(theta, axis=1)
    residual = np.abs(jumps[:, :, 0] + jumps[:, :, 1] * S[:, 1:-1])
    worst = float(residual.max(initial=0.0))
    return SelfFinancingCheck(worst <= tol, worst, "path-wise")


@dataclass(frozen=True)
class FeasibilityReport:
    """Terminal-wealth check of ``div theta(T) + e`` for consumer 1."""

    worst_violation: float
    violation_probability: float
    l2_distance_to_target: float
    mean_violation: float
    method: str

    @property
    def feasible(self) -> bool:
        return self.worst_violation >= 0


def _negative_intervals(v: Callable, grid: np.ndarray, limits: tuple[float, float]) -> list[tuple[float, float]]:
    """Maximal intervals where ``v < 0``, located from grid sign changes and tail limits."""
    vals = v(grid)
    neg = vals < 0
    out = []
    start = None
    if neg[0]:
        if limits[0] < 0:
            start = -np.inf
        else:
            try:
                lo, hi = expand_bracket(v, grid[0], -1.0)
                start = brent_root(v, lo, hi)
            except DomainError:
                start = -np.inf
    for j in range(1, grid.size):
        if neg[j] and not neg[j - 1]:
            start = brent_root(v, grid[j - 1], grid[j])
        elif neg[j - 1] and not neg[j]:
            out.append((start, brent_root(v, grid[j - 1], grid[j])))
            start = None
    if neg[-1]:
        if limits[1] < 0:
            end = np.inf
        else:
            try:
                lo, hi = expand_bracket(v, grid[-1], 1.0)
                end = brent_root(v, lo, hi)
            except DomainError:
                end = np.inf
        out.append((start, end))
    elif limits[1] < 0:
        # dips below zero only beyond the grid
        lo, hi = expand_bracket(v, grid[-1], 1.0)
        out.append((brent_root(v, lo, hi), np.inf))
    if not neg[0] and limits[0] < 0:
        lo, hi = expand_bracket(v, grid[0], -1.0)
        out.insert(0, (-np.inf, brent_root(v, lo, hi)))
    return out


def default_feasibility_grid(model: MarketModel, n: int = 2001) -> np.ndarray:
    """Levels of ``B(T)`` over ``[-w sqrt(T), w sqrt(T)]`` plus the critical level 0."""
    half = model.quadrature.truncation_width * math.sqrt(model.T)
    return np.unique(np.concatenate((np.linspace(-half, half, n), [0.0])))


def terminal_feasibility(strategy: SimpleStrategy, model: MarketModel, grid=None, *,
                         eq: Equilibrium | None = None, paths: PathEnsemble | None = None) -> FeasibilityReport:
    """Evaluate consumer 1's terminal wealth ``div theta(T) + e`` and the distance to the net trade.

    Explicit strategies are evaluated exactly over the product law of
    ``(B(t_{N-1}), B(T))``; self-financed ones (or any strategy when ``paths``
    is given) empirically over paths.
    """
    eq = eq or solve_equilibrium(model)
    z = walras_net_trade(model, eq)
    if paths is not None or strategy.financing == "self":
        if paths is None:
            paths = generate_paths(model.T, strategy.trade_times, 4096, seed=0)
        levels, S, theta = evaluate_along_paths(strategy, paths, model)
        x_T = levels[:, -1]
        div = theta[:, -1, 0] + theta[:, -1, 1] * S[:, -1]
        wealth = div + model.f(x_T)
        return FeasibilityReport(
            worst_violation=float(wealth.min()),
            violation_probability=float(np.mean(wealth < 0)),
            l2_distance_to_target=float(np.sqrt(np.mean((div - z(x_T)) ** 2))),
            mean_violation=float(np.mean(np.maximum(-wealth, 0.0))),
            method="path-wise",
        )

    grid = default_feasibility_grid(model) if grid is None else np.unique(np.asarray(grid, dtype=float))
    s = float(strategy.trade_times[-2])
    rule = strategy.rules[-1]
    stage = Stage(s, model.T, model.g, model.f, z, model.g.limits(), model.f.limits(), model.quadrature)
    edges = rule.edges()
    reachable = np.ones(rule.n_cells, dtype=bool) if s > 0 else (np.arange(rule.n_cells) == rule.cell_index(0.0))
    law = NormalLaw(0.0, s) if s > 0 else None
    sigma = math.sqrt(model.T - s)
    zn, zw = gauss_hermite_rule(model.quadrature.node_count)

    worst = np.inf
    prob = 0.0
    mean_viol = 0.0
    dist2 = 0.0
    for k in np.flatnonzero(reachable):
        alpha = rule.coefficients[k]
        lo, hi = edges[k], edges[k + 1]
        worst = min(worst, float(stage.feasibility_values(alpha, grid).min()))
        dist2 += float(quadratic_value(alpha, stage.cell_moments(lo, hi)))

        def v(x, alpha=alpha):
            return alpha[0] + alpha[1] * np.asarray(model.g(x), dtype=float) + np.asarray(model.f(x), dtype=float)

        (alo, ahi), (elo, ehi) = model.g.limits(), model.f.limits()
        lim_hi = ehi + alpha[0] + (alpha[1] * ahi if math.isfinite(ahi) else (math.copysign(math.inf, alpha[1]) if alpha[1] else 0.0))
        bad = _negative_intervals(v, grid, (alpha[0] + alpha[1] * alo + elo, lim_hi))
        if not bad:
            continue

        def mass(y, bad=bad):
            y = np.asarray(y, dtype=float)
            return sum(normal_cdf((b - y) / sigma) - normal_cdf((a - y) / sigma) for a, b in bad)

        def shortfall(y, v=v):
            y = np.atleast_1d(np.asarray(y, dtype=float))
            return np.maximum(-v(y[:, None] + sigma * zn), 0.0) @ zw

        if law is None:
            prob += float(mass(0.0))
            mean_viol += float(shortfall(0.0)[0])
        else:
            prob += float(expect_on_interval(mass, law, lo, hi, model.quadrature))
            mean_viol += float(expect_on_interval(shortfall, law, lo, hi, model.quadrature))
    return FeasibilityReport(
        worst_violation=float(worst),
        violation_probability=min(max(prob, 0.0), 1.0),
        l2_distance_to_target=math.sqrt(max(dist2, 0.0)),
        mean_violation=mean_viol,
        method="cell-wise",
    )


@dataclass(frozen=True, eq=False)
class AlmostSimpleStrategy:
    """Trade times ``time_at(0) = 0 < time_at(1) < ...`` accumulating only at the horizon.

    ``length`` is the number of trade times when the schedule is finite.
    """

    horizon: float
    time_at: Callable[[int], float]
    rule_at: Callable[[int], LevelRule]
    length: int | None = None
    financing: str = "explicit"
    initial_capital: float | None = None

    def __post_init__(self):
        if self.time_at(0) != 0:
            raise DomainError("first trade time must be 0")
        if self.length is not None and self.length < 1:
            raise DomainError("a finite schedule needs at least one trade time")

    def times(self, k: int) -> np.ndarray:
        n = k if self.length is None else min(k, self.length)
        out = np.array([self.time_at(i) for i in range(n)], dtype=float)
        if np.any(np.diff(out) <= 0) or out[-1] >= self.horizon:
            raise DomainError("trade times must increase strictly and stay below the horizon")
        return out

    def count_before(self, t: float, limit: int = 1_000_000) -> int:
        """Number of trade times in ``[0, t]``; raises if it exceeds ``limit`` for ``t < T``."""
        n = 0
        while (self.length is None or n < self.length) and self.time_at(n) <= t:
            n += 1
            if n > limit:
                raise DomainError(f"more than {limit} trade times before t={t!r}")
        return n


def geometric_schedule(T: float, ratio: float = 0.5) -> Callable[[int], float]:
    """``t_i = T (1 - ratio**i)``."""
    return lambda i: T * (1.0 - ratio ** i)


# text serialization ---------------------------------------------------------

_HEADER = "tradegap-simple-strategy 1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps_strategy(strategy: SimpleStrategy) -> str:
    lines = [_HEADER, f"financing {strategy.financing}",
             "initial_capital " + ("none" if strategy.initial_capital is None else repr(float(strategy.initial_capital))),
             "trade_times " + _fmt(strategy.trade_times)]
    for i, rule in enumerate(strategy.rules):
        lines.append(f"interval {i} cells {rule.n_cells}")
        lines.append("boundaries " + _fmt(rule.boundaries))
        for bond, risky in rule.coefficients:
            lines.append("cell " + _fmt((bond, risky)))
    return "\n".join(lines) + "\n"


def loads_strategy(text: str) -> SimpleStrategy:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != _HEADER:
        raise DomainError("not a serialized simple strategy")
    it = iter(lines[1:])

    def field_(name):
        key, _, rest = next(it).partition(" ")
        if key != name:
            raise DomainError(f"expected '{name}' line, found '{key}'")
        return rest

    try:
        financing = field_("financing")
        cap = field_("initial_capital")
        times = [float(v) for v in field_("trade_times").split()]
        rules = []
        for i in range(len(times) - 1):
            head = field_("interval").split()
            if int(head[0]) != i or head[1] != "cells":
                raise DomainError(f"malformed interval header {head}")
            n_cells = int(head[2])
            bounds = [float(v) for v in field_("boundaries").split()]
            coefs = [[float(v) for v in field_("cell").split()] for _ in range(n_cells)]
            rules.append(LevelRule(np.array(bounds), np.array(coefs)))
    except StopIteration:
        raise DomainError("serialized strategy is truncated") from None
    return SimpleStrategy(np.array(times), tuple(rules), financing, None if cap == "none" else float(cap))
