"""Discrete delta hedges of the Walrasian net trade and how their feasibility degrades."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .economy import Equilibrium, MarketModel, asset_price, walras_net_trade
from .errors import DomainError
from .mathkit import PathEnsemble, conditional_expectation, expect_terminal
from .strategies import (AlmostSimpleStrategy, LevelRule, PriceTable, SimpleStrategy, evaluate_along_paths)

SCHEMES = ("uniform", "geometric-near-T")
CSV_HEADER = ("N", "l2_error", "viol_prob", "worst_viol", "mean_viol")
_SLOPE_FLOOR = 1e-12


def schedule(N: int, scheme: str, T: float) -> np.ndarray:
    """Trade times ``t_0 = 0 < ... < t_N = T``.

    The geometric scheme shrinks steps by a constant ratio so the last step
    is ``2**-10`` times the first.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if scheme == "uniform":
        return np.linspace(0.0, T, int(N) + 1)
    if scheme == "geometric-near-T":
        if N == 1:
            return np.array([0.0, T])
        r = 2.0 ** (-10.0 / N)
        i = np.arange(N + 1)
        out = T * (1 - r ** i) / (1 - r ** N)
        out[-1] = T
        return out
    raise DomainError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def ensemble_grid(Ns, scheme: str, T: float) -> np.ndarray:
    """Smallest time grid containing every schedule in ``Ns``."""
    return np.unique(np.concatenate([schedule(n, scheme, T) for n in Ns]))


@dataclass(frozen=True, eq=False)
class HedgePlan:
    N: int
    scheme: str
    trade_times: np.ndarray
    level_grids: tuple
    values: tuple
    deltas: tuple
    initial_capital: float
    strategy: SimpleStrategy
    target: Callable = field(repr=False)

    def terminal_mismatch(self, model: MarketModel) -> float:
        """``max |V(T, x) - z(x)|`` on the last level grid (zero by definition of ``V(T, .)``)."""
        x = self.level_grids[-1]
        return float(np.abs(conditional_value(self.target, model, model.T, x) - self.target(x)).max())


def conditional_value(target: Callable, model: MarketModel, t: float, x):
    """``V(t, x) = E[z(B(T)) | B(t) = x]``."""
    if t >= model.T:
        return np.asarray(target(np.asarray(x, dtype=float)), dtype=float)
    return conditional_expectation(target, t, x, model.T, model.quadrature)


def build_hedge(model: MarketModel, eq: Equilibrium, N: int, scheme: str = "uniform", *,
                target: Callable | None = None, level_points: int = 1201) -> HedgePlan:
    """Self-financing discretisation of the replicating strategy for ``target``.

    Risky holdings on ``(t_i, t_{i+1}]`` are the delta ``dV/dx / dS1/dx`` at
    ``(t_i, B(t_i))``, read off a level grid; bond holdings are whatever funds
    each rebalance, starting from ``V(0, 0)``.
    """
    z = target or walras_net_trade(model, eq)
    T = model.T
    times = schedule(N, scheme, T)
    h = 1e-4 * math.sqrt(T)
    w = model.quadrature.truncation_width
    grids, values, deltas, rules = [], [], [], []
    for t in times[:-1]:
        t = float(t)
        x = np.array([0.0]) if t == 0 else np.linspace(-w * math.sqrt(t), w * math.sqrt(t), level_points)
        up, down = x + h, x - h
        dV = conditional_value(z, model, t, up) - conditional_value(z, model, t, down)
        dS = np.asarray(asset_price(model, 1, t, up), dtype=float) - np.asarray(asset_price(model, 1, t, down), dtype=float)
        ok = np.abs(dS) >= _SLOPE_FLOOR * 2 * h
        if not np.any(ok):
            raise DomainError(f"asset price is flat at every level at t={t!r}; delta undefined")
        delta = np.zeros_like(x)
        delta[ok] = dV[ok] / dS[ok]
        if not np.all(ok):
            # clamp to the nearest level where the delta is defined
            near = np.abs(x[ok][None, :] - x[~ok][:, None]).argmin(axis=1)
            delta[~ok] = delta[ok][near]
        grids.append(x)
        values.append(conditional_value(z, model, t, x))
        deltas.append(delta)
        coefs = np.column_stack((np.zeros_like(delta), delta))
        rules.append(LevelRule(0.5 * (x[1:] + x[:-1]), coefs))
    capital = expect_terminal(z, model.terminal_law(), model.quadrature)
    strategy = SimpleStrategy(times, tuple(rules), financing="self", initial_capital=capital)
    return HedgePlan(int(N), scheme, times, tuple(grids), tuple(values), tuple(deltas), capital, strategy, z)


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    l2_error: float
    viol_prob: float
    worst_viol: float
    mean_viol: float
    self_financing_residual: float = 0.0


@dataclass
class ConvergenceTable:
    rows: list

    def __post_init__(self):
        ns = [r.N for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError("rows must be keyed by strictly increasing N")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def loglog_slope(self) -> float:
        """Least-squares slope of ``log l2_error`` against ``log N``."""
        if len(self.rows) < 2:
            return math.nan
        return float(np.polyfit(np.log(self.column("N")), np.log(self.column("l2_error")), 1)[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.N] + [repr(float(getattr(r, k))) for k in CSV_HEADER[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTable":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise DomainError(f"unexpected CSV header {header}")
        return cls([ConvergenceRow(int(row[0]), *map(float, row[1:])) for row in reader if row])


def measure_convergence(model: MarketModel, eq: Equilibrium, Ns, ensemble: PathEnsemble, scheme: str = "uniform", *,
                        target: Callable | None = None, chunk: int = 8192) -> ConvergenceTable:
    """Terminal-dividend error and consumer 1's wealth violations for each rebalance count."""
    Ns = [int(n) for n in Ns]
    if any(b <= a for a, b in zip(Ns, Ns[1:])) or not Ns:
        raise DomainError("Ns must be a non-empty strictly increasing list")
    if abs(ensemble.horizon - model.T) > 1e-12 * max(1.0, model.T):
        raise DomainError("ensemble horizon differs from the model horizon")
    for n in Ns:
        ensemble.index_of(schedule(n, scheme, model.T))
    z = target or walras_net_trade(model, eq)
    prices = PriceTable(model)
    rows = []
    for n in Ns:
        plan = build_hedge(model, eq, n, scheme, target=z)
        sq = viol = short = 0.0
        worst = np.inf
        residual = 0.0
        for lo in range(0, ensemble.n_paths, chunk):
            part = PathEnsemble(ensemble.times, ensemble.values[lo:lo + chunk], ensemble.seed, ensemble.algorithm)
            levels, S, theta = evaluate_along_paths(plan.strategy, part, model, prices)
            jumps = np.diff(theta, axis=1)
            if jumps.size:
                residual = max(residual, float(np.abs(jumps[:, :, 0] + jumps[:, :, 1] * S[:, 1:-1]).max()))
            x_T = levels[:, -1]
            div = theta[:, -1, 0] + theta[:, -1, 1] * S[:, -1]
            wealth = div + model.f(x_T)
            sq += float(np.sum((div - z(x_T)) ** 2))
            viol += float(np.sum(wealth < 0))
            short += float(np.sum(np.maximum(-wealth, 0.0)))
            worst = min(worst, float(wealth.min()))
        m = ensemble.n_paths
        rows.append(ConvergenceRow(n, math.sqrt(sq / m), viol / m, worst, short / m, residual))
    return ConvergenceTable(rows)


def truncate_almost_simple(strategy: AlmostSimpleStrategy, k: int) -> SimpleStrategy:
    """Keep the first ``k`` trade times (``t_0 = 0`` included) and hold the last portfolio to the horizon."""
    if int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    times = strategy.times(int(k))
    rules = tuple(strategy.rule_at(i) for i in range(times.size))
    return SimpleStrategy(np.append(times, strategy.horizon), rules, strategy.financing, strategy.initial_capital)
