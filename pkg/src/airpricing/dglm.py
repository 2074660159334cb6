"""Sequential Bayesian dynamic Poisson GLM over the orthogonalized regression.

State is the joint mean/covariance of (theta, beta).  Each observation is
processed in wall-clock order through four steps:

1. evolve: inflate the covariance blockwise by (1 - delta)/delta;
2. prior predictive moments of the log rate, e = H'mu (+ offset) and
   l = H'(Sigma + Upsilon)H;
3. a conjugate gamma step mapping (e, l, y) to posterior log-rate moments
   (q, nu), either by matching gamma log-moments (digamma/trigamma Newton
   inversion) or by a Laplace approximation with a Lambert-W closed form;
4. a linear Bayes regression of the state on the log-rate update.

Only first and second moments are tracked; no distributional family is
assumed for the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ConvergenceError, DataError, DomainError
from .specfun import (SpecFunTolerance, digamma, lambert_w0, log_lambert_w0_exp,
                      tetragamma, trigamma)

__all__ = [
    "PosteriorState",
    "ObservationStep",
    "GammaBelief",
    "FitTrace",
    "FitResult",
    "default_prior",
    "evolve",
    "prior_predictive_moments",
    "gamma_moment_match",
    "conjugate_posterior_moments",
    "laplace_update",
    "linear_bayes_update",
    "fit_sequence",
    "save_posterior",
    "load_posterior",
    "save_trace_csv",
]

_L_FLOOR = 1e-12
_B_FLOOR = 1e-300
# route through the log-space Lambert solve well before exp() degrades:
# the direct W0(l * exp(y*l + e)) path loses ~|arg|*eps relative accuracy
_LOG_SPACE_CUTOFF = 30.0
_DEFAULT_TOL = SpecFunTolerance()

Mode = Literal["moment_match", "laplace"]
OffsetMode = Literal["fixed_offset", "learned_coefficient"]


@dataclass
class PosteriorState:
    """Mean and covariance over the stacked (theta, beta) parameter vector."""

    mu: np.ndarray
    sigma: np.ndarray
    dim_theta: int
    discount_theta: float = 1.0
    discount_beta: float = 1.0
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d):
            raise DomainError("sigma shape does not match mu")
        if not 0 <= self.dim_theta <= d:
            raise DomainError("dim_theta out of range")
        for delta in (self.discount_theta, self.discount_beta):
            if not 0.0 < delta <= 1.0:
                raise DomainError("discount factors must lie in (0, 1]")
        if not self.names:
            self.names = tuple(f"theta[{i}]" for i in range(self.dim_theta)) + \
                tuple(f"beta[{i}]" for i in range(d - self.dim_theta))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def dim_beta(self) -> int:
        return self.dim - self.dim_theta

    @property
    def mu_theta(self) -> np.ndarray:
        return self.mu[:self.dim_theta]

    @property
    def sigma_theta(self) -> np.ndarray:
        return self.sigma[:self.dim_theta, :self.dim_theta]

    def check_valid(self, tol: float = 1e-8) -> None:
        """Raise unless sigma is symmetric and PSD up to tol * trace."""
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-10, rtol=0):
            raise DomainError("sigma is not symmetric")
        floor = -tol * max(float(np.trace(self.sigma)), 1e-30)
        if float(np.linalg.eigvalsh(self.sigma).min()) < floor:
            raise DomainError("sigma has a significantly negative eigenvalue")

    def copy(self) -> "PosteriorState":
        return replace(self, mu=self.mu.copy(), sigma=self.sigma.copy())


def default_prior(dim_theta: int, dim_beta: int = 0, variance: float = 10.0,
                  discount_theta: float = 1.0, discount_beta: float = 1.0,
                  names: tuple[str, ...] = ()) -> PosteriorState:
    """Zero-mean prior with an isotropic covariance, the simulation default."""
    d = dim_theta + dim_beta
    return PosteriorState(mu=np.zeros(d), sigma=variance * np.eye(d),
                          dim_theta=dim_theta, discount_theta=discount_theta,
                          discount_beta=discount_beta, names=names)


@dataclass(frozen=True)
class ObservationStep:
    """Regressors and response for one observation.

    h_theta is the price deviation times the sensitivity design; h_beta holds
    the learned-coefficient volume regressors (possibly empty); offset is the
    fixed-coefficient part of the log rate (log of the expected bookings in
    fixed-offset mode, zero otherwise).
    """

    h_theta: np.ndarray
    h_beta: np.ndarray
    y: int
    offset: float = 0.0

    def stacked(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.h_theta, dtype=float),
                               np.asarray(self.h_beta, dtype=float)])


@dataclass(frozen=True)
class GammaBelief:
    shape: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("gamma shape and rate must be > 0")


def evolve(state: PosteriorState) -> PosteriorState:
    """Add the blockwise discount noise to the covariance; the mean is untouched."""
    dt, db = state.discount_theta, state.discount_beta
    if dt == 1.0 and db == 1.0:
        return state.copy()
    sigma = state.sigma.copy()
    k = state.dim_theta
    if dt < 1.0:
        sigma[:k, :k] += state.sigma[:k, :k] * ((1.0 - dt) / dt)
    if db < 1.0 and state.dim_beta:
        sigma[k:, k:] += state.sigma[k:, k:] * ((1.0 - db) / db)
    return replace(state, mu=state.mu.copy(), sigma=sigma)


def prior_predictive_moments(state: PosteriorState, step: ObservationStep) -> tuple[float, float]:
    """Mean and variance of the log rate before seeing the response."""
    h = step.stacked()
    if h.shape[0] != state.dim:
        raise DataError(f"regressor dimension {h.shape[0]} != state dimension {state.dim}")
    e = float(h @ state.mu) + step.offset
    l = float(h @ state.sigma @ h)
    return e, max(l, _L_FLOOR)


def gamma_moment_match(e: float, l: float,
                       tol: SpecFunTolerance = _DEFAULT_TOL) -> GammaBelief:
    """Gamma(a, b) whose log moments match (e, l): psi(a) - log b = e, psi'(a) = l."""
    if not l > 0:
        raise DomainError(f"log-rate variance must be > 0, got {l!r}")
    a = max(1.0 / l, 0.1)
    for _ in range(tol.max_iterations):
        f = trigamma(a) - l
        if abs(f) <= 1e-12 * max(1.0, l):
            break
        step = f / tetragamma(a)
        a_new = a - step
        if a_new <= 0:
            a_new = 0.5 * a  # trigamma decreasing: overshoot past 0 means root is left of a
        if abs(a_new - a) <= 1e-15 * a_new:
            a = a_new
            break
        a = a_new
    else:
        raise ConvergenceError(f"gamma moment matching did not converge for l={l!r}")
    b = math.exp(min(digamma(a) - e, 700.0))
    return GammaBelief(shape=a, rate=max(b, _B_FLOOR))


def conjugate_posterior_moments(belief: GammaBelief, y: int) -> tuple[float, float]:
    """Log moments of Gamma(a + y, b + 1), the Poisson-conjugate posterior."""
    if y < 0:
        raise DomainError("y must be a nonnegative count")
    a = belief.shape + y
    q = digamma(a) - math.log1p(belief.rate)
    nu = trigamma(a)
    return q, nu


def laplace_update(e: float, l: float, y: int,
                   tol: SpecFunTolerance = _DEFAULT_TOL) -> tuple[float, float]:
    """Closed-form Laplace step: posterior mode and curvature of the log rate.

    q solves y - exp(q) - (q - e)/l = 0 via the principal Lambert W branch;
    computation moves to log space when the W argument would overflow.
    """
    if not l > 0:
        raise DomainError(f"log-rate variance must be > 0, got {l!r}")
    if y < 0:
        raise DomainError("y must be a nonnegative count")
    log_l = math.log(l)
    z = y * l + e
    if z + log_l > _LOG_SPACE_CUTOFF:
        q = log_lambert_w0_exp(z + log_l, tol) - log_l
    else:
        arg = l * math.exp(z)
        if arg < 1e-300:
            q = z  # W0(x) ~ x for tiny x, so q = log(exp(z)) exactly to double precision
        else:
            q = math.log(lambert_w0(arg, tol) / l)
    # polish in working precision so the score y - e^q - (q - e)/l, evaluated
    # exactly as written, lands on the best representable root
    for _ in range(3):
        g = y - math.exp(q) - (q - e) / l
        step = g / (math.exp(q) + 1.0 / l)
        q += step
        if step == 0.0:
            break
    t = q + log_l
    nu = l * math.exp(-t) if t > _LOG_SPACE_CUTOFF else l / (1.0 + math.exp(t))
    return q, nu


def linear_bayes_update(state: PosteriorState, step: ObservationStep,
                        q: float, nu: float, e: float, l: float) -> PosteriorState:
    """Regress the state on the log-rate update; state must already be evolved."""
    h = step.stacked()
    rh = state.sigma @ h
    mu = state.mu + rh * ((q - e) / l)
    sigma = state.sigma - np.outer(rh, rh) * ((1.0 - nu / l) / l)
    sigma = 0.5 * (sigma + sigma.T)
    return replace(state, mu=mu, sigma=sigma)


@dataclass
class FitTrace:
    """Posterior snapshots taken at the end of each wall-clock week."""

    weeks: list[int] = field(default_factory=list)
    mu: list[np.ndarray] = field(default_factory=list)
    sigma_diag: list[np.ndarray] = field(default_factory=list)
    names: tuple[str, ...] = ()

    def append(self, week: int, state: PosteriorState) -> None:
        self.weeks.append(int(week))
        self.mu.append(state.mu.copy())
        self.sigma_diag.append(np.diag(state.sigma).copy())

    def mu_matrix(self) -> np.ndarray:
        return np.vstack(self.mu) if self.mu else np.zeros((0, len(self.names)))


@dataclass
class FitResult:
    state: PosteriorState
    trace: FitTrace
    n_observations: int


def _steps_from_dataset(dataset, preds, offset_mode: OffsetMode, multiscale: bool):
    n = len(dataset)
    p_hat = np.asarray(preds.p_hat, dtype=float)
    y_hat = np.asarray(preds.y_hat, dtype=float)
    if p_hat.shape[0] != n or y_hat.shape[0] != n:
        raise DataError("nuisance predictions are not aligned with the dataset")
    if np.any(y_hat <= 0):
        raise DataError("expected-bookings predictions must be positive")
    log_y_hat = np.log(y_hat)
    u_term = None
    if multiscale:
        if preds.u_hat is None:
            raise DataError("multiscale fitting requires group-level predictions")
        u_hat = np.asarray(preds.u_hat, dtype=float)
        if u_hat.shape[0] != n or np.any(~np.isfinite(u_hat)) or np.any(u_hat <= 0):
            raise DataError("group-level predictions must be positive and aligned")
        u_term = np.log(u_hat)
    prices = dataset.prices
    bookings = dataset.bookings
    h_theta = (prices - p_hat)[:, None] * dataset.w
    if offset_mode == "fixed_offset":
        offsets = log_y_hat
        h_beta_cols = [u_term] if multiscale else []
        beta_names = ("beta[log_u]",) if multiscale else ()
    elif offset_mode == "learned_coefficient":
        offsets = np.zeros(n)
        h_beta_cols = [log_y_hat] + ([u_term] if multiscale else [])
        beta_names = ("beta[log_y]",) + (("beta[log_u]",) if multiscale else ())
    else:
        raise DomainError(f"unknown offset_mode {offset_mode!r}")
    h_beta = np.column_stack(h_beta_cols) if h_beta_cols else np.zeros((n, 0))
    return h_theta, h_beta, offsets, bookings.astype(int), beta_names


def fit_sequence(dataset, preds, prior: PosteriorState, *,
                 mode: Mode = "moment_match",
                 offset_mode: OffsetMode = "fixed_offset",
                 multiscale: bool = False,
                 tol: SpecFunTolerance = _DEFAULT_TOL,
                 check_every: int = 0) -> FitResult:
    """Run the sequential update over a dataset sorted by observation time.

    The prior's dimensions must match the design: dim_theta = dataset.w width,
    dim_beta = number of learned volume coefficients for the chosen mode.
    """
    h_theta, h_beta, offsets, ys, beta_names = _steps_from_dataset(
        dataset, preds, offset_mode, multiscale)
    dim_theta = h_theta.shape[1]
    dim_beta = h_beta.shape[1]
    if prior.dim_theta != dim_theta or prior.dim_beta != dim_beta:
        raise DataError(f"prior dims ({prior.dim_theta}, {prior.dim_beta}) do not match "
                        f"design dims ({dim_theta}, {dim_beta})")
    if not np.all(np.isfinite(h_theta)) or not np.all(np.isfinite(offsets)):
        raise DataError("non-finite regressors")

    state = prior.copy()
    trace = FitTrace(names=prior.names)
    weeks = dataset.weeks
    n = len(dataset)
    if n == 0:
        return FitResult(state=state, trace=trace, n_observations=0)
    h_all = np.hstack([h_theta, h_beta])
    mu = state.mu.copy()
    sigma = state.sigma.copy()
    dt, db = state.discount_theta, state.discount_beta
    discounting = dt < 1.0 or (db < 1.0 and dim_beta > 0)
    use_laplace = {"laplace": True, "moment_match": False}[mode]

    prev_week = int(weeks[0])
    for j in range(n):
        wk = int(weeks[j])
        if wk != prev_week:
            trace.append(prev_week, PosteriorState(mu, sigma, dim_theta, dt, db, prior.names))
            prev_week = wk
        if discounting:
            if dt < 1.0:
                sigma[:dim_theta, :dim_theta] *= 1.0 / dt
            if db < 1.0 and dim_beta:
                sigma[dim_theta:, dim_theta:] *= 1.0 / db
        h = h_all[j]
        sh = sigma @ h
        l = float(h @ sh)
        if l < _L_FLOOR:
            l = _L_FLOOR
        e = float(h @ mu) + offsets[j]
        y = int(ys[j])
        if use_laplace:
            q, nu = laplace_update(e, l, y, tol)
        else:
            belief = gamma_moment_match(e, l, tol)
            q, nu = conjugate_posterior_moments(belief, y)
        mu = mu + sh * ((q - e) / l)
        sigma = sigma - np.outer(sh, sh) * ((1.0 - nu / l) / l)
        sigma = 0.5 * (sigma + sigma.T)
        if check_every and (j + 1) % check_every == 0:
            PosteriorState(mu, sigma, dim_theta, dt, db, prior.names).check_valid()

    final = PosteriorState(mu=mu, sigma=sigma, dim_theta=dim_theta,
                           discount_theta=dt, discount_beta=db, names=prior.names)
    trace.append(prev_week, final)
    return FitResult(state=final, trace=trace, n_observations=n)


def save_posterior(state: PosteriorState, path: str | Path, *,
                   kind: str = "two-stage", mode: str = "moment_match",
                   offset_mode: str = "fixed_offset",
                   extra: dict[str, str] | None = None) -> None:
    """Structured-text export of a posterior (names, mu, full sigma, flags)."""
    path = Path(path)
    lines = ["format = posterior-v1",
             f"kind = {kind}",
             f"mode = {mode}",
             f"offset_mode = {offset_mode}",
             f"dim_theta = {state.dim_theta}",
             f"dim_beta = {state.dim_beta}",
             f"discount_theta = {state.discount_theta!r}",
             f"discount_beta = {state.discount_beta!r}",
             "names = " + " ".join(state.names),
             "mu = " + " ".join(repr(float(v)) for v in state.mu)]
    for i in range(state.dim):
        lines.append(f"sigma_{i} = " + " ".join(repr(float(v)) for v in state.sigma[i]))
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {val}")
    path.write_text("\n".join(lines) + "\n")


def load_posterior(path: str | Path) -> tuple[PosteriorState, dict[str, str]]:
    """Parse a posterior export; returns the state and the raw key/value meta."""
    path = Path(path)
    meta: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {line_no}: expected 'key = value'")
        key, val = line.split("=", 1)
        meta[key.strip()] = val.strip()
    if meta.get("format") != "posterior-v1":
        raise DataError(f"{path}: not a posterior export")
    dim_theta = int(meta["dim_theta"])
    dim_beta = int(meta["dim_beta"])
    names = tuple(meta["names"].split())
    mu = np.array([float(v) for v in meta["mu"].split()])
    d = dim_theta + dim_beta
    if mu.shape[0] != d or len(names) != d:
        raise DataError(f"{path}: inconsistent dimensions")
    sigma = np.array([[float(v) for v in meta[f"sigma_{i}"].split()] for i in range(d)])
    state = PosteriorState(mu=mu, sigma=sigma, dim_theta=dim_theta,
                           discount_theta=float(meta.get("discount_theta", "1.0")),
                           discount_beta=float(meta.get("discount_beta", "1.0")),
                           names=names)
    return state, meta


def save_trace_csv(trace: FitTrace, path: str | Path) -> None:
    """Per-week posterior trace: week_index, parameter_name, mu, sigma_diag."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("week_index,parameter_name,mu,sigma_diag\n")
        for wk, mu, sd in zip(trace.weeks, trace.mu, trace.sigma_diag):
            for name, m, s in zip(trace.names, mu, sd):
                fh.write(f"{wk},{name},{float(m)!r},{float(s)!r}\n")
