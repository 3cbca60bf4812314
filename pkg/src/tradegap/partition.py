"""Cell-wise evaluation of payoffs that are piecewise in an earlier Brownian level.

A *stage* fixes a partition time ``s`` and an evaluation time ``u > s``.
Candidate payoffs have the form ``alpha0[l] + alpha1[l] * A(B(u))`` on the
cell ``{B(s) in (b[l-1], b[l]]}``. Everything the certification and
feasibility code needs reduces to six cell moments

    P, E[A], E[A^2], E[Z], E[A Z], E[Z^2]      (each restricted to the cell)

where ``Z`` is the target payoff, and to the set of coefficient pairs that
keep ``alpha0 + alpha1 * A(x) + E(x) >= 0`` for every reachable ``x``. Since
``B(u) - B(s)`` has full support, every ``x`` is reachable from every cell,
so that set is the same convex polygon for all cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import DomainError
from .mathkit import (
    DEFAULT_QUADRATURE,
    NormalLaw,
    QuadratureConfig,
    _legendre_rule,
    composite_normal_rule,
    conditional_expectation,
    expect_on_interval,
    normal_pdf,
)

MOMENT_NAMES = ("P", "A", "AA", "Z", "AZ", "ZZ")
FEASIBILITY_TOL = 1e-9


def quadratic_value(alpha: np.ndarray, moments: np.ndarray) -> np.ndarray:
    """``E[(alpha0 + alpha1 A - Z)^2; cell]`` for stacked ``alpha (..., 2)`` and ``moments (..., 6)``."""
    a0, a1 = alpha[..., 0], alpha[..., 1]
    P, A, AA, Z, AZ, ZZ = np.moveaxis(moments, -1, 0)
    return a0 * a0 * P + 2 * a0 * a1 * A + a1 * a1 * AA - 2 * a0 * Z - 2 * a1 * AZ + ZZ


@dataclass(frozen=True)
class Stage:
    """Partition at ``B(s)``; asset ``A``, endowment ``E`` and target ``Z`` are functions of ``B(u)``."""

    s: float
    u: float
    asset: Callable
    endowment: Callable
    target: Callable
    asset_limits: tuple[float, float]
    endowment_limits: tuple[float, float]
    cfg: QuadratureConfig = DEFAULT_QUADRATURE

    def __post_init__(self):
        if not (0 <= self.s < self.u):
            raise DomainError(f"stage needs 0 <= s < u, got s={self.s!r}, u={self.u!r}")

    @property
    def window(self) -> float:
        """Half-width of the level window at the partition time."""
        return self.cfg.truncation_width * math.sqrt(self.s)

    def inner_moments(self, y) -> np.ndarray:
        """Conditional moments given ``B(s) = y``; shape ``(6, len(y))``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        # composite rule rather than Gauss-Hermite: the integrands have features
        # much narrower than the increment spread when s is small
        z, w = composite_normal_rule(self.cfg.truncation_width, 4 * math.ceil(self.cfg.truncation_width))
        sigma = math.sqrt(self.u - self.s)
        out = np.empty((6, y.size))
        chunk = max(1, (1 << 19) // z.size)
        for start in range(0, y.size, chunk):
            x = y[start:start + chunk, None] + sigma * z
            a = np.asarray(self.asset(x), dtype=float)
            t = np.asarray(self.target(x), dtype=float)
            out[0, start:start + chunk] = 1.0
            out[1, start:start + chunk] = a @ w
            out[2, start:start + chunk] = (a * a) @ w
            out[3, start:start + chunk] = t @ w
            out[4, start:start + chunk] = (a * t) @ w
            out[5, start:start + chunk] = (t * t) @ w
        return out

    def cell_moments(self, lo: float, hi: float) -> np.ndarray:
        """Exact (quadrature) moments of the cell ``lo < B(s) <= hi``."""
        if not lo < hi:
            return np.zeros(6)
        if self.s == 0:
            return self.inner_moments([0.0])[:, 0] if lo < 0 <= hi else np.zeros(6)
        return np.asarray(expect_on_interval(self.inner_moments, NormalLaw(0.0, self.s), lo, hi, self.cfg))

    def partition_moments(self, boundaries) -> np.ndarray:
        edges = np.concatenate(([-np.inf], np.asarray(boundaries, dtype=float), [np.inf]))
        return np.array([self.cell_moments(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])])

    def evaluation_grid(self, n: int = 1601, extra=()) -> np.ndarray:
        """Levels of ``B(u)`` used for feasibility checks (tail probes at the window ends)."""
        half = self.cfg.truncation_width * math.sqrt(self.u)
        grid = np.concatenate((np.linspace(-half, half, n), [0.0], np.asarray(extra, dtype=float)))
        return np.unique(grid)

    def feasibility_values(self, alpha: np.ndarray, grid: np.ndarray) -> np.ndarray:
        """``alpha0 + alpha1 A(x) + E(x)`` on the grid and at both limits; shape ``(..., len(grid) + 2)``."""
        alpha = np.asarray(alpha, dtype=float)
        a0, a1 = alpha[..., 0:1], alpha[..., 1:2]
        inner = a0 + a1 * np.asarray(self.asset(grid)) + np.asarray(self.endowment(grid))
        (alo, ahi), (elo, ehi) = self.asset_limits, self.endowment_limits
        left = a0 + a1 * alo + elo
        if math.isinf(ahi):
            right = np.where(a1 > 0, np.inf, np.where(a1 < 0, -np.inf, a0 + ehi))
        else:
            right = a0 + a1 * ahi + ehi
        return np.concatenate((left, inner, right), axis=-1)


class FeasibleRegion:
    """Convex polygon of coefficient pairs ``(alpha0, alpha1)`` allowed in every cell.

    With ``constrained=False`` the polygon is just the coefficient box, which
    is the diagnostic (feasibility switched off) mode.
    """

    def __init__(self, stage: Stage, grid: np.ndarray, box: float = 100.0, constrained: bool = True):
        self.box = float(box)
        self.constrained = constrained
        poly = np.array([[-box, -box], [box, -box], [box, box], [-box, box]], dtype=float)
        if constrained:
            # half-planes  n . alpha >= c
            (alo, ahi), (elo, ehi) = stage.asset_limits, stage.endowment_limits
            normals = [np.column_stack((np.ones_like(grid), np.asarray(stage.asset(grid), dtype=float)))]
            offsets = [-np.asarray(stage.endowment(grid), dtype=float)]
            normals.append(np.array([[1.0, alo]]))
            offsets.append(np.array([-elo]))
            if math.isinf(ahi):
                normals.append(np.array([[0.0, 1.0]]))
                offsets.append(np.array([0.0]))
            else:
                normals.append(np.array([[1.0, ahi]]))
                offsets.append(np.array([-ehi]))
            for n, c in zip(np.concatenate(normals), np.concatenate(offsets)):
                poly = _clip(poly, n, c)
                if len(poly) == 0:
                    raise DomainError("feasible coefficient region is empty")
        self.vertices = poly
        self._edge_dir = np.roll(poly, -1, axis=0) - poly

    def contains(self, alpha: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        rel = alpha[..., None, :] - self.vertices
        cross = self._edge_dir[:, 0] * rel[..., 1] - self._edge_dir[:, 1] * rel[..., 0]
        return np.all(cross >= -tol * (1 + np.abs(alpha).max(axis=-1, keepdims=True)), axis=-1)

    def minimize(self, moments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minimise the cell quadratic over the polygon for each row of ``moments (n, 6)``.

        Returns ``(values, alphas)``. Cells of zero mass get ``alpha = (0, 0)``
        projected into the region.
        """
        m = np.atleast_2d(np.asarray(moments, dtype=float))
        P, A, AA, Z, AZ, ZZ = m.T
        n = m.shape[0]
        best_val = np.full(n, np.inf)
        best_alpha = np.zeros((n, 2))

        det = P * AA - A * A
        scale = np.maximum(P * AA, 1e-300)
        regular = det > 1e-13 * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            free = np.column_stack(((AA * Z - A * AZ) / det, (P * AZ - A * Z) / det))
        inside = regular & self.contains(np.where(regular[:, None], free, 0.0))
        if np.any(inside):
            best_alpha[inside] = free[inside]
            best_val[inside] = quadratic_value(free[inside], m[inside])

        todo = ~inside
        if np.any(todo):
            mm = m[todo]
            p = self.vertices[None, :, :]
            d = self._edge_dir[None, :, :]
            P_, A_, AA_, Z_, AZ_ = (mm[:, k, None] for k in range(5))
            # q(p + tau d) = dHd tau^2 + 2 (pHd - r.d) tau + const
            dHd = P_ * d[..., 0] ** 2 + 2 * A_ * d[..., 0] * d[..., 1] + AA_ * d[..., 1] ** 2
            pHd = P_ * p[..., 0] * d[..., 0] + A_ * (p[..., 0] * d[..., 1] + p[..., 1] * d[..., 0]) + AA_ * p[..., 1] * d[..., 1]
            rd = Z_ * d[..., 0] + AZ_ * d[..., 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = np.where(dHd > 0, (rd - pHd) / dHd, 0.0)
            tau = np.clip(np.nan_to_num(tau), 0.0, 1.0)
            cand = p + tau[..., None] * d
            vals = quadratic_value(cand, mm[:, None, :])
            k = np.argmin(vals, axis=1)
            rows = np.arange(mm.shape[0])
            best_val[todo] = vals[rows, k]
            best_alpha[todo] = cand[rows, k]

        empty = P <= 0
        if np.any(empty):
            zero = np.zeros(2)
            best_alpha[empty] = zero if self.contains(zero) else self.vertices.mean(axis=0)
            best_val[empty] = 0.0
        return np.maximum(best_val, 0.0), best_alpha


def _clip(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Intersect a convex polygon with ``normal . alpha >= offset``."""
    side = poly @ normal - offset
    if np.all(side >= 0):
        return poly
    if np.all(side < 0):
        return np.empty((0, 2))
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        si, sj = side[i], side[j]
        if si >= 0:
            out.append(poly[i])
        if (si >= 0) != (sj >= 0):
            tau = si / (si - sj)
            out.append(poly[i] + tau * (poly[j] - poly[i]))
    out = np.array(out)
    # drop near-duplicate vertices
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(out, axis=0)) > 1e-14, axis=1)
    if len(out) > 1 and np.all(np.abs(out[-1] - out[0]) <= 1e-14):
        keep[-1] = False
    return out[keep]


class MomentTable:
    """Cumulative cell moments ``C(b) = E[moments; B(s) <= b]`` for fast partition search.

    Built once per stage on a uniform grid over the level window with
    Gauss-Legendre increments and interpolated by cubic Hermite splines whose
    slopes are the exact densities, so arbitrary boundaries are cheap.
    """

    def __init__(self, stage: Stage, n_grid: int = 4001, nodes: int = 8):
        if stage.s <= 0:
            raise DomainError("moment tables need a positive partition time")
        self.stage = stage
        half = stage.window
        law = NormalLaw(0.0, stage.s)
        y = np.linspace(-half, half, n_grid)
        xg, wg = _legendre_rule(nodes)
        mid = 0.5 * (y[1:] + y[:-1])
        h = 0.5 * np.diff(y)
        pts = (mid[:, None] + h[:, None] * xg).reshape(-1)
        wts = (h[:, None] * wg).reshape(-1) * normal_pdf(pts, law)
        incr = (stage.inner_moments(pts) * wts).reshape(6, n_grid - 1, nodes).sum(axis=2)
        cum = np.zeros((6, n_grid))
        np.cumsum(incr, axis=1, out=cum[:, 1:])
        slope = stage.inner_moments(y) * normal_pdf(y, law)
        self.lo, self.hi = -half, half
        self.total = cum[:, -1].copy()
        self._spline = CubicHermiteSpline(y, cum.T, slope.T)

    def cumulative(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        out = self._spline(np.clip(b, self.lo, self.hi))
        out = np.where((b <= self.lo)[..., None], 0.0, out)
        return np.where((b >= self.hi)[..., None], self.total, out)

    def cells(self, boundaries) -> np.ndarray:
        edges = np.concatenate(([-np.inf], np.asarray(boundaries, dtype=float), [np.inf]))
        c = self.cumulative(edges)
        return np.diff(c, axis=0)


class TabulatedConditional:
    """``y -> E[h(B(T)) | B(t) = y]`` cached on a grid, spline-interpolated inside it.

    Levels outside the grid are evaluated exactly.
    """

    def __init__(self, h: Callable, t: float, T: float, cfg: QuadratureConfig, half_width: float, n: int = 6001):
        self.h, self.t, self.T, self.cfg = h, t, T, cfg
        self.lo, self.hi = -half_width, half_width
        y = np.linspace(self.lo, self.hi, n)
        self._spline = CubicSpline(y, conditional_expectation(h, t, y, T, cfg))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = self._spline(y)
        outside = (y < self.lo) | (y > self.hi)
        if np.any(outside):
            out = np.array(out, copy=True)
            out[outside] = conditional_expectation(self.h, self.t, y[outside], self.T, self.cfg)
        return out
