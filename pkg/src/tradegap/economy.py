"""The two-consumer Brownian exchange economy and its Walrasian equilibrium.

Consumer 1 owns ``(1, f(B(T)))`` and consumer 2 owns ``(3, 4 - f(B(T)))``;
both have the same strictly concave felicity ``u`` and no discounting. There
is no aggregate risk, so each consumer smooths terminal consumption
perfectly; consumer 1 ends up with ``(a, a)`` where the budget identity gives
``a = (1 + gamma) / 2`` with ``gamma = E[f(B(T))]``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import ClassVar

import numpy as np
from scipy import special

from .errors import DomainError, InternalConsistencyError, ModelValidityError
from .mathkit import (
    DEFAULT_QUADRATURE,
    NormalLaw,
    QuadratureConfig,
    brent_root,
    conditional_expectation,
    expand_bracket,
    expect_terminal,
)

AGGREGATE = 4.0  # aggregate endowment at both dates


class FunctionSpec:
    """A smooth scalar function of the Brownian level, vectorised over numpy arrays."""

    family: ClassVar[str] = ""
    bounded: ClassVar[bool] = True

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def limits(self) -> tuple[float, float]:
        """Values at ``-inf`` and ``+inf`` (either may be ``inf``)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"family": self.family, **asdict(self)}

    def invert(self, level: float, branch: str = "increasing", tol: float = 1e-13) -> float:
        """Solve ``self(x) = level`` for a monotone increasing function."""
        if branch != "increasing":
            raise DomainError(f"{self.family} has only an increasing branch")
        lo, hi = self.limits()
        if not lo < level < hi:
            raise DomainError(f"level {level!r} outside the range ({lo}, {hi}) of {self.family}")

        def gap(x):
            return float(self(np.asarray(x))) - level

        a, b = expand_bracket(gap, 0.0, -1.0 if gap(0.0) > 0 else 1.0)
        return brent_root(gap, a, b, tol)


@dataclass(frozen=True)
class GaussianBump(FunctionSpec):
    """``base + (peak - base) * exp(-x**2 / (2 width**2))``."""

    base: float = 1.0
    peak: float = 3.5
    width: float = 0.4
    family: ClassVar[str] = "gaussian_bump"

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError("gaussian_bump width must be positive")
        if not self.peak > self.base:
            raise DomainError("gaussian_bump peak must exceed its base")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.base + (self.peak - self.base) * np.exp(-0.5 * (x / self.width) ** 2)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return -(self.peak - self.base) * x / self.width**2 * np.exp(-0.5 * (x / self.width) ** 2)

    def limits(self):
        return (self.base, self.base)

    def invert(self, level, branch="increasing", tol=1e-13):
        """Solve ``f(x) = level`` on the ``"increasing"`` (x < 0) or ``"decreasing"`` (x > 0) branch."""
        if not self.base < level < self.peak:
            raise DomainError(f"level {level!r} outside ({self.base}, {self.peak})")
        if branch not in ("increasing", "decreasing"):
            raise DomainError(f"unknown branch {branch!r}")

        def gap(x):
            return float(self(np.asarray(x))) - level

        a, b = expand_bracket(gap, 0.0, -1.0 if branch == "increasing" else 1.0, start=self.width)
        return brent_root(gap, a, b, tol)


@dataclass(frozen=True)
class Logistic(FunctionSpec):
    """``1 / (1 + exp(-(x - loc) / scale))``: increasing, limits 0 and 1."""

    loc: float = 0.0
    scale: float = 1.0
    family: ClassVar[str] = "logistic"

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("logistic scale must be positive")

    def __call__(self, x):
        return special.expit((np.asarray(x, dtype=float) - self.loc) / self.scale)

    def derivative(self, x):
        s = self(x)
        return s * (1.0 - s) / self.scale

    def limits(self):
        return (0.0, 1.0)


@dataclass(frozen=True)
class Exponential(FunctionSpec):
    """``scale * exp(rate * x)``: increasing, convex, limits 0 and +inf."""

    scale: float = 1.0
    rate: float = 1.0
    family: ClassVar[str] = "exponential"
    bounded: ClassVar[bool] = False

    def __post_init__(self):
        if not (self.scale > 0 and self.rate > 0):
            raise DomainError("exponential scale and rate must be positive")

    def __call__(self, x):
        return self.scale * np.exp(self.rate * np.asarray(x, dtype=float))

    def derivative(self, x):
        return self.rate * self(x)

    def limits(self):
        return (0.0, math.inf)


@dataclass(frozen=True)
class TableFunction(FunctionSpec):
    """Piecewise-linear interpolation of a table, constant beyond its ends."""

    xs: tuple = (0.0, 1.0)
    ys: tuple = (0.0, 1.0)
    family: ClassVar[str] = "custom-table"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or len(self.ys) != xs.size or np.any(np.diff(xs) <= 0):
            raise DomainError("custom-table needs matching xs/ys with strictly increasing xs")
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.ys)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        slopes = np.diff(self.ys) / np.diff(self.xs)
        k = np.clip(np.searchsorted(self.xs, x) - 1, 0, len(slopes) - 1)
        inside = (x > self.xs[0]) & (x < self.xs[-1])
        return np.where(inside, slopes[k], 0.0)

    def limits(self):
        return (self.ys[0], self.ys[-1])

    def to_dict(self):
        return {"family": self.family, "xs": list(self.xs), "ys": list(self.ys)}


FAMILIES = {cls.family: cls for cls in (GaussianBump, Logistic, Exponential, TableFunction)}


def function_from_dict(data: dict) -> FunctionSpec:
    data = dict(data)
    family = data.pop("family", None)
    if family not in FAMILIES:
        raise DomainError(f"unknown function family {family!r}; expected one of {sorted(FAMILIES)}")
    try:
        return FAMILIES[family](**data)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {family}: {exc}") from None


@dataclass(frozen=True)
class Felicity:
    """Strictly concave period utility: ``log``, ``crra`` (param = relative risk aversion) or ``cara``."""

    family: str = "log"
    param: float = 1.0

    def __post_init__(self):
        if self.family not in ("log", "crra", "cara"):
            raise DomainError(f"unknown felicity family {self.family!r}")
        if not self.param > 0:
            raise DomainError("felicity parameter must be positive")

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        if self.family == "log" or (self.family == "crra" and self.param == 1):
            return np.log(c)
        if self.family == "crra":
            return c ** (1 - self.param) / (1 - self.param)
        return -np.exp(-self.param * c) / self.param

    def marginal(self, c):
        c = np.asarray(c, dtype=float)
        if self.family == "log":
            return 1.0 / c
        if self.family == "crra":
            return c ** (-self.param)
        return np.exp(-self.param * c)

    def to_dict(self):
        return {"family": self.family, "param": self.param}


@dataclass(frozen=True)
class MarketModel:
    horizon: float = 1.0
    endowment: FunctionSpec = field(default_factory=GaussianBump)
    asset: FunctionSpec = field(default_factory=Logistic)
    felicity: Felicity = field(default_factory=Felicity)
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be positive, got {self.horizon!r}")

    @property
    def T(self) -> float:
        return self.horizon

    @property
    def f(self) -> FunctionSpec:
        return self.endowment

    @property
    def g(self) -> FunctionSpec:
        return self.asset

    def terminal_law(self, t: float | None = None) -> NormalLaw:
        return NormalLaw(0.0, self.horizon if t is None else t)

    def with_asset(self, asset: FunctionSpec) -> "MarketModel":
        return replace(self, asset=asset)

    def to_dict(self) -> dict:
        q = self.quadrature
        return {
            "horizon": self.horizon,
            "endowment": self.endowment.to_dict(),
            "asset": self.asset.to_dict(),
            "felicity": self.felicity.to_dict(),
            "quadrature": {
                "node_count": q.node_count,
                "truncation_width": q.truncation_width,
                "absolute_tolerance": q.absolute_tolerance,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarketModel":
        data = dict(data or {})
        unknown = set(data) - {"horizon", "endowment", "asset", "felicity", "quadrature"}
        if unknown:
            raise DomainError(f"unknown model keys: {sorted(unknown)}")
        kwargs = {}
        if "horizon" in data:
            kwargs["horizon"] = float(data["horizon"])
        if "endowment" in data:
            kwargs["endowment"] = function_from_dict(data["endowment"])
        if "asset" in data:
            kwargs["asset"] = function_from_dict(data["asset"])
        if "felicity" in data:
            kwargs["felicity"] = Felicity(**data["felicity"])
        if "quadrature" in data:
            kwargs["quadrature"] = QuadratureConfig(**data["quadrature"])
        return cls(**kwargs)


@dataclass(frozen=True)
class Equilibrium:
    a: float
    a0: float
    gamma: float
    state_price: float
    foc_residual: float
    budget_residuals: tuple[float, float]
    state_price_normalization: str = (
        "date-0 good is numeraire; every date-T state has price density "
        "u'(a)/u'(a0) = 1 because consumption is equal across dates"
    )

    @property
    def consumptions(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (self.a0, self.a), (AGGREGATE - self.a0, AGGREGATE - self.a)


def gamma(model: MarketModel) -> float:
    """Expected terminal endowment of consumer 1, ``E[f(B(T))]``; must be below 2."""
    value = expect_terminal(model.f, model.terminal_law(), model.quadrature)
    if not value < 2:
        raise ModelValidityError(f"condition gamma = E[f(B(T))] < 2 violated: gamma = {value:.10g}")
    return value


def validate_model(model: MarketModel) -> None:
    """Check every condition the economy places on ``f``; raise naming the first failure."""
    f = model.f
    f0 = float(f(0.0))
    if not f0 > 3:
        raise ModelValidityError(f"condition f(0) > 3 violated: f(0) = {f0:.10g}")
    lo, hi = f.limits()
    if lo != 1 or hi != 1:
        raise ModelValidityError(f"condition lim f = 1 at both ends violated: limits = ({lo}, {hi})")
    width = model.quadrature.truncation_width * math.sqrt(model.T)
    grid = np.linspace(-width, width, 4001)
    values = f(grid)
    if not np.all(values < AGGREGATE):
        raise ModelValidityError(f"condition f < 4 violated: max f = {values.max():.10g} (consumer 2 endowment must stay positive)")
    if not np.all(values > 0):
        raise ModelValidityError("condition f > 0 violated")
    left, right = grid < 0, grid > 0
    if not (np.all(np.diff(values[left]) > -1e-15) and np.all(np.diff(values[right]) < 1e-15)):
        raise ModelValidityError("condition f increasing on (-inf, 0) and decreasing on (0, inf) violated")
    gamma(model)


def solve_equilibrium(model: MarketModel, tol: float = 1e-9) -> Equilibrium:
    """Unique Walrasian equilibrium, solved numerically and checked against ``a = (1+gamma)/2``.

    Unknowns are consumer 1's date-0 consumption ``c0`` and date-T
    consumption ``c`` (state independent). For each ``c0`` the equal-MRS
    condition fixes ``c``; the budget of consumer 1 then pins down ``c0``.
    """
    gam = gamma(model)
    u = model.felicity
    eps = 1e-12

    def mrs_gap(c, c0):
        return float(u.marginal(c) / u.marginal(c0) - u.marginal(AGGREGATE - c) / u.marginal(AGGREGATE - c0))

    def terminal_given(c0):
        return brent_root(lambda c: mrs_gap(c, c0), eps, AGGREGATE - eps, tol=1e-15)

    def budget_gap(c0):
        c = terminal_given(c0)
        price = float(u.marginal(c) / u.marginal(c0))
        return c0 + price * c - (1.0 + price * gam)

    a0 = brent_root(budget_gap, eps, AGGREGATE - eps, tol=1e-15)
    a = terminal_given(a0)
    price = float(u.marginal(a) / u.marginal(a0))
    foc = abs(mrs_gap(a, a0))
    budget1 = a0 + price * a - (1.0 + price * gam)
    budget2 = (AGGREGATE - a0) + price * (AGGREGATE - a) - (3.0 + price * (AGGREGATE - gam))
    if foc > tol:
        raise InternalConsistencyError(f"first-order condition residual {foc:.3e} exceeds {tol:.1e}")
    if max(abs(budget1), abs(budget2)) > 1e-8:
        raise InternalConsistencyError(f"budget residuals ({budget1:.3e}, {budget2:.3e}) exceed 1e-8")
    if abs(a - (1 + gam) / 2) > 1e-8 or abs(a - a0) > 1e-8:
        raise InternalConsistencyError(f"solved a={a!r}, a0={a0!r} disagree with (1+gamma)/2={(1 + gam) / 2!r}")
    if not a < 2:
        raise InternalConsistencyError(f"equilibrium consumption a={a!r} is not below 2")
    return Equilibrium(a=a, a0=a0, gamma=gam, state_price=price, foc_residual=foc,
                       budget_residuals=(budget1, budget2))


@dataclass(frozen=True)
class NetTrade:
    """Consumer 1's Walrasian net trade ``x -> a - f(x)`` as a function of ``B(T)``."""

    a: float
    endowment: FunctionSpec

    def __call__(self, x):
        return self.a - self.endowment(x)


def walras_net_trade(model: MarketModel, eq: Equilibrium) -> NetTrade:
    return NetTrade(eq.a, model.f)


def asset_price(model: MarketModel, asset_index: int, t: float, x0):
    """Risk-neutral (``Q = P``) price ``E[A_j | B(t) = x0]``; vectorised over ``x0``."""
    if asset_index not in (0, 1):
        raise DomainError(f"asset_index must be 0 or 1, got {asset_index!r}")
    if not (0 <= t <= model.T):
        raise DomainError(f"price time t={t!r} outside [0, {model.T!r}]")
    x0 = np.asarray(x0, dtype=float)
    if asset_index == 0:
        return np.ones_like(x0) if x0.ndim else 1.0
    if t == model.T:
        out = model.g(x0)
        return out if x0.ndim else float(out)
    return conditional_expectation(model.g, t, x0, model.T, model.quadrature)
