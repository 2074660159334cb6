"""Price optimization under exponential demand with a Gaussian belief over theta.

All policies price one request: given the sensitivity design w, the cost c
(the seat's opportunity cost), price bounds, and the posterior mean/covariance
of theta, they return a price in [p_lb, p_ub].  The slope m = mu' w must be
negative (demand decreasing in price); s2 = w' Sigma w measures slope
uncertainty.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import PolicyError
from .specfun import std_normal_cdf, std_normal_pdf, std_normal_quantile

__all__ = [
    "PricingContext",
    "UcbConfig",
    "greedy_price",
    "expected_margin_taylor",
    "expected_margin_tn",
    "grid_optimize",
    "thompson_price",
    "ucb_taylor_price",
    "ucb_tn_price",
]

log = logging.getLogger(__name__)

_DEGENERATE_VAR = 1e-18


@dataclass(frozen=True)
class PricingContext:
    w: np.ndarray
    cost: float
    p_lb: float
    p_ub: float
    mu_theta: np.ndarray
    sigma_theta: np.ndarray

    def __post_init__(self) -> None:
        if not self.p_lb <= self.p_ub:
            raise PolicyError(f"price bounds out of order: [{self.p_lb}, {self.p_ub}]")
        w = np.asarray(self.w, dtype=float)
        if np.asarray(self.mu_theta).shape != w.shape:
            raise PolicyError("mu_theta and w dimensions differ")
        if np.asarray(self.sigma_theta).shape != (w.size, w.size):
            raise PolicyError("sigma_theta shape does not match w")

    @property
    def slope(self) -> float:
        """m = mu' w, the posterior-mean price coefficient."""
        return float(np.asarray(self.mu_theta) @ np.asarray(self.w))

    @property
    def slope_var(self) -> float:
        """s2 = w' Sigma w, the posterior variance of the price coefficient."""
        w = np.asarray(self.w, dtype=float)
        return float(w @ np.asarray(self.sigma_theta) @ w)

    def clamp(self, price: float) -> float:
        return min(max(self.p_lb, price), self.p_ub)


@dataclass(frozen=True)
class UcbConfig:
    """Quantile-seeking configuration; xi is the standard normal quantile of alpha."""

    quantile: float

    def __post_init__(self) -> None:
        if not 0.0 < self.quantile < 1.0:
            raise PolicyError(f"quantile must lie in (0, 1), got {self.quantile!r}")

    @property
    def xi(self) -> float:
        return std_normal_quantile(self.quantile)


def _require_negative_slope(m: float) -> None:
    if m >= 0.0:
        raise PolicyError(f"posterior mean slope must be negative, got {m!r}")


def greedy_price(ctx: PricingContext) -> float:
    """Plug-in optimum clamp(c - 1/(mu'w)); closed form of the mean-margin problem."""
    m = ctx.slope
    _require_negative_slope(m)
    return ctx.clamp(ctx.cost - 1.0 / m)


def expected_margin_taylor(p: float, ctx: PricingContext) -> float:
    """(p-c) exp(p m) (1 + p^2 s2 / 2): second-order expansion around the mean."""
    m = ctx.slope
    s2 = ctx.slope_var
    return (p - ctx.cost) * np.exp(p * m) * (1.0 + 0.5 * p * p * s2)


def expected_margin_tn(p: float, ctx: PricingContext) -> float:
    """Exact expected margin when the slope is normal truncated to (-inf, 0)."""
    m = ctx.slope
    s2 = ctx.slope_var
    if s2 <= _DEGENERATE_VAR:
        raise PolicyError("slope variance is degenerate; use the plug-in margin")
    _require_negative_slope(m)
    s = np.sqrt(s2)
    ratio = std_normal_cdf((-m - p * s2) / s) / std_normal_cdf(-m / s)
    return (p - ctx.cost) * np.exp(p * m + 0.5 * p * p * s2) * ratio


def grid_optimize(ctx: PricingContext, margin: str = "tn", grid_points: int = 1001) -> float:
    """Argmax of the chosen margin over an even grid; ties go to the lower price."""
    if grid_points < 2:
        raise PolicyError("grid_points must be >= 2")
    fns = {"taylor": expected_margin_taylor, "tn": expected_margin_tn}
    if margin not in fns:
        raise PolicyError(f"unknown margin approximation {margin!r}")
    grid = np.linspace(ctx.p_lb, ctx.p_ub, grid_points)
    values = np.array([fns[margin](p, ctx) for p in grid])
    return float(grid[int(np.argmax(values))])


def thompson_price(ctx: PricingContext, rng: np.random.Generator,
                   max_attempts: int = 1000) -> float:
    """Sample theta from the posterior (rejecting nonnegative slopes) and price greedily."""
    _require_negative_slope(ctx.slope)
    sigma = np.asarray(ctx.sigma_theta, dtype=float)
    if float(np.abs(sigma).max(initial=0.0)) <= _DEGENERATE_VAR:
        return greedy_price(ctx)
    # symmetric PSD square root; tolerant of semi-definite posteriors
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    mu = np.asarray(ctx.mu_theta, dtype=float)
    w = np.asarray(ctx.w, dtype=float)
    for _ in range(max_attempts):
        draw = mu + root @ rng.standard_normal(mu.shape[0])
        slope = float(draw @ w)
        if slope < 0.0:
            return ctx.clamp(ctx.cost - 1.0 / slope)
    raise PolicyError("posterior mass overwhelmingly violates the negative-slope support")


def _ucb_taylor_value(p: np.ndarray | float, ctx: PricingContext, xi: float):
    m = ctx.slope
    s = np.sqrt(max(ctx.slope_var, 0.0))
    return (p - ctx.cost) * np.exp(p * m) * (1.0 + xi * p * s)


def ucb_taylor_price(ctx: PricingContext, ucb: UcbConfig, grid_points: int = 100001) -> float:
    """Maximize the first-order UCB (p-c)e^{pm}(1 + xi p s).

    Stationary points solve a quadratic; with the log-concavity precondition
    p_lb > c violated, falls back to a dense grid search over the same
    objective.
    """
    m = ctx.slope
    _require_negative_slope(m)
    xi = ucb.xi
    s = np.sqrt(max(ctx.slope_var, 0.0))
    if ctx.p_lb <= ctx.cost:
        log.warning("ucb_taylor_price: p_lb <= cost violates the concavity "
                    "precondition; using grid search")
        grid = np.linspace(ctx.p_lb, ctx.p_ub, grid_points)
        return float(grid[int(np.argmax(_ucb_taylor_value(grid, ctx, xi)))])
    c = ctx.cost
    candidates = [ctx.p_lb, ctx.p_ub]
    a2 = m * xi * s
    a1 = 2.0 * xi * s + m - m * c * xi * s
    a0 = 1.0 - m * c - xi * s * c
    if abs(a2) > 0.0:
        disc = a1 * a1 - 4.0 * a2 * a0
        if disc >= 0.0:
            r = np.sqrt(disc)
            for root in ((-a1 + r) / (2.0 * a2), (-a1 - r) / (2.0 * a2)):
                if ctx.p_lb <= root <= ctx.p_ub:
                    candidates.append(float(root))
    elif abs(a1) > 0.0:
        root = -a0 / a1
        if ctx.p_lb <= root <= ctx.p_ub:
            candidates.append(float(root))
    values = [_ucb_taylor_value(p, ctx, xi) for p in candidates]
    return float(candidates[int(np.argmax(values))])


def ucb_tn_price(ctx: PricingContext, ucb: UcbConfig) -> float:
    """Closed-form maximizer of the truncated-normal quantile margin.

    The quantile-adjusted slope m + s * Z^{-1}(alpha * Z(-m/s)) must stay
    negative; otherwise the requested quantile has no finite optimum.
    """
    m = ctx.slope
    _require_negative_slope(m)
    s2 = ctx.slope_var
    if s2 <= _DEGENERATE_VAR:
        return greedy_price(ctx)
    s = np.sqrt(s2)
    inner = ucb.quantile * std_normal_cdf(-m / s)
    adjusted = m + s * std_normal_quantile(inner)
    if adjusted >= 0.0:
        raise PolicyError("quantile pushes the adjusted slope nonnegative; "
                          "no finite optimum for this UCB level")
    return ctx.clamp(ctx.cost - 1.0 / adjusted)
