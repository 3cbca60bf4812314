"""Gaussian numerics on the Brownian clock.

Every law here is parametrised by its *variance*, measured in units of
Brownian time: ``B(t) ~ N(0, t)`` and ``B(T) - B(t) ~ N(0, T - t)``.

Integrands are vectorised callables: they receive a numpy array of
abscissae (of any shape) and must return an array that broadcasts to it.
An integrand passed to :func:`expect_terminal` should be bounded by a
polynomial-times-exponential envelope that is square integrable against the
law; the Gauss-Hermite rule is exact for polynomials and converges
geometrically for entire integrands of that kind. Integrands with kinks or
jumps are detected by the envelope check and routed to an adaptive rule on
the truncated window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import BracketError, DomainError, QuadratureError

ScalarFunction = Callable[[np.ndarray], np.ndarray]

RNG_ALGORITHM = "numpy Philox4x64-10; SeedSequence(seed).spawn() stream per 4096-path block"
PATH_BLOCK = 4096

# Relative floor added to the absolute tolerance in the envelope check, so that
# large-magnitude integrands are not sent to the fallback for round-off alone.
_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class NormalLaw:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise DomainError(f"NormalLaw variance must be positive and finite, got {self.variance!r}")
        if not math.isfinite(self.mean):
            raise DomainError(f"NormalLaw mean must be finite, got {self.mean!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class QuadratureConfig:
    node_count: int = 128
    truncation_width: float = 8.0
    absolute_tolerance: float = 1e-9

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 16:
            raise DomainError(f"node_count must be an integer >= 16, got {self.node_count!r}")
        if not self.truncation_width >= 6:
            raise DomainError(f"truncation_width must be >= 6, got {self.truncation_width!r}")
        if not self.absolute_tolerance > 0:
            raise DomainError(f"absolute_tolerance must be > 0, got {self.absolute_tolerance!r}")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Sampled Brownian levels ``values[p, k] = B(times[k])`` for path ``p``."""

    times: np.ndarray
    values: np.ndarray
    seed: int
    algorithm: str = RNG_ALGORITHM

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def index_of(self, times) -> np.ndarray:
        """Column indices of ``times`` in the grid; raises if any time is missing."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        idx = np.searchsorted(self.times, times)
        idx = np.clip(idx, 0, len(self.times) - 1)
        for j, t in enumerate(times):
            # accept the neighbour on either side within round-off
            for k in (idx[j], max(idx[j] - 1, 0)):
                if abs(self.times[k] - t) <= 1e-12 * max(1.0, abs(t)):
                    idx[j] = k
                    break
            else:
                raise DomainError(f"time {t!r} is not on the path grid")
        return idx

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.index_of(t)[0]]


def normal_pdf(x, law: NormalLaw = NormalLaw()):
    z = (np.asarray(x, dtype=float) - law.mean) / law.std
    return np.exp(-0.5 * z * z) / (law.std * math.sqrt(2 * math.pi))


def normal_cdf(x, law: NormalLaw = NormalLaw()):
    """Cumulative distribution function; accepts ``±inf``."""
    return special.ndtr((np.asarray(x, dtype=float) - law.mean) / law.std)


@lru_cache(maxsize=32)
def gauss_hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``z`` and weights ``w`` with ``sum(w * h(z)) ~= E[h(Z)]``, Z standard normal."""
    x, w = np.polynomial.hermite.hermgauss(n)
    z = math.sqrt(2.0) * x
    w = w / math.sqrt(math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@lru_cache(maxsize=8)
def _legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _evaluate(h: ScalarFunction, x: np.ndarray) -> np.ndarray:
    y = np.asarray(h(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, np.broadcast_shapes(y.shape, x.shape))
    if not np.all(np.isfinite(y)):
        bad = np.argwhere(~np.isfinite(y))[0]
        node = x[tuple(bad[-x.ndim:])] if x.ndim else float(x)
        raise QuadratureError(f"integrand is not finite at node x={float(node)!r} (value {y[tuple(bad)]!r})")
    return y


def _accepts(fine, coarse, tol):
    return np.abs(fine - coarse) <= tol + _REL_FLOOR * np.abs(fine)


def _adaptive(h: ScalarFunction, law: NormalLaw, cfg: QuadratureConfig) -> float:
    lo = law.mean - cfg.truncation_width * law.std
    hi = law.mean + cfg.truncation_width * law.std

    def integrand(x):
        return float(_evaluate(h, np.asarray(x, dtype=float))) * float(normal_pdf(x, law))

    value, _ = integrate.quad(integrand, lo, hi, epsabs=cfg.absolute_tolerance, epsrel=0.0, limit=500)
    return value


@lru_cache(maxsize=16)
def composite_normal_rule(width: float, panels: int, nodes: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and density-weighted weights of composite Gauss-Legendre for ``N(0, 1)`` on ``[-width, width]``."""
    xg, wg = _legendre_rule(nodes)
    edges = np.linspace(-width, width, panels + 1)
    half = 0.5 * np.diff(edges)
    u = ((0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * xg).reshape(-1)
    weights = (half[:, None] * wg).reshape(-1) * np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
    u.setflags(write=False)
    weights.setflags(write=False)
    return u, weights


def _composite(h: ScalarFunction, means: np.ndarray, std: float, cfg: QuadratureConfig, panels: int) -> np.ndarray:
    """Composite 16-point Gauss-Legendre on ``mean ± truncation_width * std`` for each mean."""
    u, weights = composite_normal_rule(cfg.truncation_width, panels)
    return _evaluate(h, means[:, None] + std * u) @ weights


def expect_terminal(h: ScalarFunction, law: NormalLaw = NormalLaw(), cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``E[h(X)]`` for ``X ~ law``.

    Gauss-Hermite with ``cfg.node_count`` nodes, accepted when it agrees with
    the half-size rule to within ``cfg.absolute_tolerance``; otherwise the
    integral is recomputed adaptively on ``mean ± truncation_width * std``.
    Raises :class:`QuadratureError` if ``h`` is not finite at a node.
    """
    z, w = gauss_hermite_rule(cfg.node_count)
    fine = float(w @ _evaluate(h, law.mean + law.std * z))
    z2, w2 = gauss_hermite_rule(cfg.node_count // 2)
    coarse = float(w2 @ _evaluate(h, law.mean + law.std * z2))
    if _accepts(fine, coarse, cfg.absolute_tolerance):
        return fine
    return _adaptive(h, law, cfg)


def conditional_expectation(h: ScalarFunction, t: float, x0, T: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """``E[h(B(T)) | B(t) = x0]``, vectorised over ``x0``.

    Equals ``expect_terminal(y -> h(x0 + y), NormalLaw(0, T - t))``.
    """
    if not (0 <= t < T):
        raise DomainError(f"conditional expectation needs 0 <= t < T, got t={t!r}, T={T!r}")
    sigma = math.sqrt(T - t)
    x0 = np.asarray(x0, dtype=float)
    flat = x0.reshape(-1)
    z, w = gauss_hermite_rule(cfg.node_count)
    z2, w2 = gauss_hermite_rule(cfg.node_count // 2)
    out = np.empty_like(flat)
    chunk = max(1, (1 << 20) // cfg.node_count)
    for start in range(0, flat.size, chunk):
        xs = flat[start:start + chunk, None]
        fine = _evaluate(h, xs + sigma * z) @ w
        coarse = _evaluate(h, xs + sigma * z2) @ w2
        ok = _accepts(fine, coarse, cfg.absolute_tolerance)
        if not np.all(ok):
            # second stage: vectorised composite rule at two resolutions
            bad = np.flatnonzero(~ok)
            means = xs[bad, 0]
            c_fine = _composite(h, means, sigma, cfg, 128)
            c_coarse = _composite(h, means, sigma, cfg, 64)
            fine[bad] = c_fine
            for j in bad[~_accepts(c_fine, c_coarse, cfg.absolute_tolerance)]:
                fine[j] = _adaptive(h, NormalLaw(xs[j, 0], T - t), cfg)
        out[start:start + chunk] = fine
    return out.reshape(x0.shape) if x0.ndim else float(out[0])


def expect_on_interval(h, law: NormalLaw, lo: float, hi: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE,
                       nodes_per_panel: int = 16):
    """``E[h(X); lo < X <= hi]`` by composite Gauss-Legendre.

    The interval is clipped to ``mean ± truncation_width * std`` and split into
    panels no wider than half a standard deviation. ``h`` may return extra
    leading axes (one row per moment); the result then has those axes.
    """
    w_width = cfg.truncation_width * law.std
    a = max(lo, law.mean - w_width)
    b = min(hi, law.mean + w_width)
    if not a < b:
        probe = np.asarray(h(np.array([law.mean])), dtype=float)
        return np.zeros(probe.shape[:-1]) if probe.ndim > 1 else 0.0
    panels = max(1, math.ceil((b - a) / (0.5 * law.std)))
    xg, wg = _legendre_rule(nodes_per_panel)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * xg[None, :]).reshape(-1)
    weights = (half[:, None] * wg[None, :]).reshape(-1) * normal_pdf(x, law)
    y = np.asarray(h(x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise QuadratureError("integrand is not finite on the interval")
    return y @ weights


def tail_expectation(h: ScalarFunction, law: NormalLaw, level: float, side: str = "upper",
                     cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``E[h(X) | X >= level]`` (``side="upper"``) or ``E[h(X) | X <= level]``.

    Both numerator and tail mass are scaled by the density at the level, so
    the ratio stays accurate far into the tails.
    """
    if side not in ("upper", "lower"):
        raise DomainError(f"side must be 'upper' or 'lower', got {side!r}")
    sign = 1.0 if side == "upper" else -1.0
    u0 = sign * (level - law.mean) / law.std

    def integrand(s):
        x = law.mean + sign * law.std * (u0 + s)
        return math.exp(-0.5 * s * (s + 2 * u0)) * float(_evaluate(h, np.asarray(x)))

    # beyond s_max the Gaussian factor underflows, so the integral is finite-range
    s_max = -u0 + math.sqrt(u0 * u0 + 2 * 745.0)
    if u0 >= 0:
        numerator, _ = integrate.quad(integrand, 0.0, s_max, epsabs=0.0, epsrel=1e-12, limit=500)
    else:
        # bulk of the mass sits at s ~ -u0 > 0; split there to help the adaptive rule
        split = -u0
        first, _ = integrate.quad(integrand, 0.0, split, epsabs=0.0, epsrel=1e-12, limit=500)
        second, _ = integrate.quad(integrand, split, s_max, epsabs=0.0, epsrel=1e-12, limit=500)
        numerator = first + second
    mills = math.sqrt(math.pi / 2) * special.erfcx(u0 / math.sqrt(2))
    return numerator / mills


def brent_root(h: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of ``h`` in ``[lo, hi]`` (Brent's method via :func:`scipy.optimize.brentq`)."""
    flo, fhi = float(h(lo)), float(h(hi))
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]: h(lo)={flo!r}, h(hi)={fhi!r}")
    return float(optimize.brentq(lambda x: float(h(x)), lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def expand_bracket(h: Callable[[float], float], anchor: float, direction: float, start: float = 1.0,
                   limit: float = 1e6) -> tuple[float, float]:
    """Grow ``[anchor, anchor + direction * step]`` until ``h`` changes sign."""
    f0 = float(h(anchor))
    step = start
    while step <= limit:
        other = anchor + direction * step
        if f0 * float(h(other)) <= 0:
            return (anchor, other) if direction > 0 else (other, anchor)
        step *= 2
    raise BracketError(f"no sign change found moving from {anchor!r} in direction {direction!r}")


def _check_grid(T: float, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise DomainError("path grid needs at least the two points 0 and T")
    if grid[0] != 0.0:
        raise DomainError(f"path grid must start at 0, got {grid[0]!r}")
    if abs(grid[-1] - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"path grid must end at T={T!r}, got {grid[-1]!r}")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("path grid must be strictly increasing")
    grid = grid.copy()
    grid[-1] = T
    return grid


def generate_paths(T: float, grid, n_paths: int, seed: int) -> PathEnsemble:
    """Brownian levels on ``grid`` for ``n_paths`` independent paths.

    Paths are produced in blocks of ``PATH_BLOCK``; block ``b`` draws from its
    own Philox stream spawned from ``SeedSequence(seed)``, so the ensemble is
    identical however the blocks are scheduled.
    """
    grid = _check_grid(T, grid)
    if int(n_paths) != n_paths or n_paths < 1:
        raise DomainError(f"n_paths must be a positive integer, got {n_paths!r}")
    n_paths = int(n_paths)
    scale = np.sqrt(np.diff(grid))
    n_blocks = -(-n_paths // PATH_BLOCK)
    streams = np.random.SeedSequence(int(seed)).spawn(n_blocks)
    values = np.zeros((n_paths, grid.size))
    for b, ss in enumerate(streams):
        rng = np.random.Generator(np.random.Philox(ss))
        lo = b * PATH_BLOCK
        hi = min(n_paths, lo + PATH_BLOCK)
        incr = rng.standard_normal((hi - lo, grid.size - 1)) * scale
        np.cumsum(incr, axis=1, out=values[lo:hi, 1:])
    return PathEnsemble(times=grid, values=values, seed=int(seed))


def monte_carlo_expectation(h: ScalarFunction, law: NormalLaw, n_draws: int, seed: int) -> tuple[float, float]:
    """Plain Monte Carlo estimate of ``E[h(X)]`` and its standard error."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    x = law.mean + law.std * rng.standard_normal(int(n_draws))
    y = _evaluate(h, x)
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(n_draws))
