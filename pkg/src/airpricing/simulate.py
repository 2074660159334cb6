"""Synthetic airline sales-transaction generator with a confounded pricing policy.

Each flight departure sells a fixed seat inventory over a 365-day booking
horizon split into contiguous time frames (TF).  Customers arrive as a Poisson
stream whose rate varies by week-of-year, day-of-week, point-of-sale and TF,
and buy when an exponentially distributed willingness-to-pay clears the offered
price.  Offered prices are the sum of a dynamic-programming bid price (marginal
value of a seat), the demand-optimal markup 1/theta, and daily Gaussian noise,
so price and demand share seasonal drivers: the data is deliberately
confounded.

The recorded history covers exactly the num_departure_days wall-clock days on
which flights depart; bookings made before that window (for the earliest
flights) deplete inventory but are not emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "ArrivalRateSpec",
    "GroundTruthConfig",
    "BidPriceTable",
    "TransactionRecord",
    "SimulationOracle",
    "ground_truth_optimal_price",
    "solve_bid_prices",
    "generate_history",
    "generate_history_with_oracle",
    "default_theta_table",
]

# Mean willingness-to-pay (currency) per (pos, tf); theta = 1 / alpha.
_DEFAULT_ALPHA = (
    (150.0, 150.0, 175.0, 185.0, 195.0, 200.0, 210.0, 230.0, 250.0, 300.0),
    (175.0, 190.0, 195.0, 200.0, 210.0, 220.0, 240.0, 260.0, 290.0, 320.0),
)

_WEEKS_PER_YEAR = 52
_YEAR_DAYS = 7 * _WEEKS_PER_YEAR  # calendar cycles every 364 days (52 exact weeks)


def default_theta_table() -> np.ndarray:
    return 1.0 / np.asarray(_DEFAULT_ALPHA)


def _default_pos_tf_weights() -> np.ndarray:
    # POS 0 books mostly in the middle of the horizon, POS 1 close to departure;
    # early time frames are quiet for both.
    return np.array([
        [0.4, 0.7, 1.1, 1.5, 1.7, 1.7, 1.5, 1.1, 0.8, 0.6],
        [0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.25, 1.5, 1.75, 2.0],
    ])


@dataclass(frozen=True)
class ArrivalRateSpec:
    """Daily Poisson arrival rate, factored into calendar and segment effects."""

    base_rate: float = 0.33
    woy_amplitude: float = 0.35
    woy_peak_week: int = 26
    dow_multipliers: tuple[float, ...] = (0.9, 0.95, 1.0, 1.05, 1.1, 1.2, 0.8)
    pos_tf_weights: np.ndarray = field(default_factory=_default_pos_tf_weights)

    def validate(self, n_pos: int, n_tf: int) -> None:
        if not self.base_rate > 0:
            raise ConfigError("base_rate must be > 0")
        if not abs(self.woy_amplitude) < 1:
            raise ConfigError("woy_amplitude must satisfy |amp| < 1 to keep rates positive")
        if len(self.dow_multipliers) != 7 or any(m <= 0 for m in self.dow_multipliers):
            raise ConfigError("dow_multipliers must be 7 positive values")
        w = np.asarray(self.pos_tf_weights)
        if w.shape != (n_pos, n_tf):
            raise ConfigError(f"pos_tf_weights shape {w.shape} != ({n_pos}, {n_tf})")
        if np.any(w < 0):
            raise ConfigError("pos_tf_weights must be >= 0")

    def seasonal(self, woy: int | np.ndarray) -> float | np.ndarray:
        return 1.0 + self.woy_amplitude * np.cos(
            2.0 * np.pi * (np.asarray(woy) - self.woy_peak_week) / _WEEKS_PER_YEAR)

    def rate(self, woy: int, dow: int, pos: int, tf: int) -> float:
        return (self.base_rate * float(self.seasonal(woy))
                * self.dow_multipliers[dow]
                * float(np.asarray(self.pos_tf_weights)[pos, tf]))


def _default_tf_boundaries(horizon_days: int = 365, n_tf: int = 10) -> tuple[int, ...]:
    return tuple(i * horizon_days // n_tf for i in range(n_tf))


@dataclass(frozen=True)
class GroundTruthConfig:
    """Everything the simulator needs; also the source of oracle quantities."""

    capacity: int = 100
    horizon_days: int = 365
    tf_boundaries: tuple[int, ...] = field(default_factory=_default_tf_boundaries)
    theta_table: np.ndarray = field(default_factory=default_theta_table)
    arrival_spec: ArrivalRateSpec = field(default_factory=ArrivalRateSpec)
    price_noise_sd: float = 20.0
    num_departure_days: int = 730
    rng_seed: int = 0
    sub_steps_per_day: int | None = None  # None: chosen from the peak daily rate
    max_substep_arrival_prob: float = 0.1

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if self.horizon_days < 1 or self.num_departure_days < 1:
            raise ConfigError("horizon_days and num_departure_days must be >= 1")
        if self.price_noise_sd < 0:
            raise ConfigError("price_noise_sd must be >= 0")
        tb = self.tf_boundaries
        if tb[0] != 0 or any(a >= b for a, b in zip(tb, tb[1:])) or tb[-1] >= self.horizon_days:
            raise ConfigError("tf_boundaries must start at 0, increase strictly, "
                              "and stay below horizon_days")
        theta = np.asarray(self.theta_table, dtype=float)
        if theta.ndim != 2 or theta.shape[1] != len(tb):
            raise ConfigError("theta_table must be (n_pos, n_tf) with n_tf = len(tf_boundaries)")
        if np.any(theta <= 0):
            raise ConfigError("all theta values must be > 0")
        self.arrival_spec.validate(*theta.shape)
        if self.sub_steps_per_day is not None and self.sub_steps_per_day < 1:
            raise ConfigError("sub_steps_per_day must be >= 1")

    @property
    def n_pos(self) -> int:
        return np.asarray(self.theta_table).shape[0]

    @property
    def n_tf(self) -> int:
        return len(self.tf_boundaries)

    def tf_of_day(self, booking_day: int | np.ndarray) -> int | np.ndarray:
        idx = np.searchsorted(self.tf_boundaries, booking_day, side="right") - 1
        return idx if isinstance(booking_day, np.ndarray) else int(idx)


def wall_day_of(departure_id: int, booking_day: int, horizon_days: int) -> int:
    """Wall-clock day of a booking; departures happen on day departure_id."""
    return departure_id - (horizon_days - 1) + booking_day


def woy_of_wall(wall: int | np.ndarray) -> int | np.ndarray:
    return (np.asarray(wall) % _YEAR_DAYS) // 7 if isinstance(wall, np.ndarray) else (wall % _YEAR_DAYS) // 7


def dow_of_wall(wall: int | np.ndarray) -> int | np.ndarray:
    return np.asarray(wall) % 7 if isinstance(wall, np.ndarray) else wall % 7


@dataclass(frozen=True)
class TransactionRecord:
    """One (departure, booking-day, point-of-sale) observation."""

    departure_id: int
    booking_day: int
    obs_index: int
    woy: int
    dow: int
    pos: int
    tf: int
    avg_price: float
    bookings: int


@dataclass(frozen=True)
class BidPriceTable:
    """Expected-future-revenue table V[sub_step, remaining_seats] for one departure."""

    values: np.ndarray
    sub_steps_per_day: int

    def marginal(self, sub_step: int, seats: int) -> float:
        """Opportunity cost of selling one of `seats` remaining at `sub_step`."""
        if seats < 1:
            raise DomainError("marginal value needs at least one remaining seat")
        return float(self.values[sub_step, seats] - self.values[sub_step, seats - 1])

    def day_start_bids(self) -> np.ndarray:
        """(horizon, capacity+1) marginal values at the start of each day."""
        n = self.sub_steps_per_day
        v = self.values[:-1:n]
        out = np.zeros_like(v)
        out[:, 1:] = v[:, 1:] - v[:, :-1]
        return out


def ground_truth_optimal_price(bid: float, theta: float) -> float:
    """Margin-maximizing price for exponential demand: bid + 1/theta."""
    if not theta > 0:
        raise DomainError(f"theta must be > 0, got {theta!r}")
    return bid + 1.0 / theta


def _day_profiles(cfg: GroundTruthConfig, departure_id: int) -> np.ndarray:
    """Arrival rate per (pos, booking day) for one departure date."""
    days = np.arange(cfg.horizon_days)
    wall = departure_id - (cfg.horizon_days - 1) + days
    woy = woy_of_wall(wall)
    dow = dow_of_wall(wall)
    tf = cfg.tf_of_day(days)
    spec = cfg.arrival_spec
    seasonal = spec.seasonal(woy)
    dowm = np.asarray(spec.dow_multipliers)[dow]
    weights = np.asarray(spec.pos_tf_weights)[:, tf]  # (n_pos, horizon)
    return spec.base_rate * seasonal[None, :] * dowm[None, :] * weights


def _choose_sub_steps(cfg: GroundTruthConfig, total_day_rates: np.ndarray) -> int:
    if cfg.sub_steps_per_day is not None:
        n = cfg.sub_steps_per_day
    else:
        peak = float(total_day_rates.max(initial=0.0))
        n = max(1, math.ceil(peak / cfg.max_substep_arrival_prob))
    if total_day_rates.size and float(total_day_rates.max()) / n > 1.0:
        raise ConfigError("per-sub-step arrival probability exceeds 1; "
                          "increase sub_steps_per_day")
    return n


def _backward_induction(p_arr: np.ndarray, theta_day: np.ndarray, n_sub: int,
                        capacity: int, keep_full: bool):
    """Shared DP stepper.

    p_arr, theta_day: (M, horizon) per-sub-step arrival probability and blended
    theta per day for M departure profiles.  Returns (day_bids, full_v) where
    day_bids[m, d, s] is the start-of-day marginal seat value and full_v (only
    for keep_full, M must be 1) is the complete V[sub_step, seats] table.
    """
    m, horizon = p_arr.shape
    n_steps = horizon * n_sub
    v = np.zeros((m, capacity + 1))
    day_bids = np.zeros((m, horizon, capacity + 1))
    full_v = np.zeros((n_steps + 1, capacity + 1)) if keep_full else None
    inv_theta = 1.0 / theta_day
    for k in range(n_steps - 1, -1, -1):
        day = k // n_sub
        lam = p_arr[:, day][:, None]
        th = theta_day[:, day][:, None]
        delta = v[:, 1:] - v[:, :-1]
        q = np.exp(-th * delta - 1.0)
        sold = q * (delta + inv_theta[:, day][:, None] + v[:, :-1]) + (1.0 - q) * v[:, 1:]
        new = np.empty_like(v)
        new[:, 0] = 0.0
        new[:, 1:] = lam * sold + (1.0 - lam) * v[:, 1:]
        v = new
        if keep_full:
            full_v[k] = v[0]
        if k % n_sub == 0:
            day_bids[:, day, 1:] = v[:, 1:] - v[:, :-1]
    return day_bids, full_v


def _blend_theta(cfg: GroundTruthConfig, rates: np.ndarray) -> np.ndarray:
    """Arrival-weighted mean of theta across points of sale, per day."""
    days = np.arange(rates.shape[-1])
    tf = cfg.tf_of_day(days)
    theta = np.asarray(cfg.theta_table, dtype=float)[:, tf]  # (n_pos, horizon)
    total = rates.sum(axis=0)
    num = (rates * theta).sum(axis=0)
    return np.where(total > 0, num / np.where(total > 0, total, 1.0), theta.mean(axis=0))


def solve_bid_prices(cfg: GroundTruthConfig, departure_profile: np.ndarray) -> BidPriceTable:
    """Backward-induction value table for one departure.

    departure_profile: (n_pos, horizon_days) daily arrival rates.
    """
    rates = np.asarray(departure_profile, dtype=float)
    if rates.shape != (cfg.n_pos, cfg.horizon_days):
        raise ConfigError(f"departure_profile shape {rates.shape} != "
                          f"({cfg.n_pos}, {cfg.horizon_days})")
    total = rates.sum(axis=0)
    n_sub = _choose_sub_steps(cfg, total)
    p_arr = (total / n_sub)[None, :]
    theta_day = _blend_theta(cfg, rates)[None, :]
    _, full_v = _backward_induction(p_arr, theta_day, n_sub, cfg.capacity, keep_full=True)
    return BidPriceTable(values=full_v, sub_steps_per_day=n_sub)


@dataclass(frozen=True)
class SimulationOracle:
    """Generator-side quantities aligned with the emitted records.

    noiseless_price: the recorded price with its Gaussian noise removed.
    expected_bookings: daily arrival rate x acceptance probability at the
    noiseless start-of-day price (capacity effects ignored).
    arrivals: customers who actually requested a price that day.
    """

    noiseless_price: np.ndarray
    expected_bookings: np.ndarray
    arrivals: np.ndarray


def _simulate(cfg: GroundTruthConfig) -> tuple[list[TransactionRecord], SimulationOracle]:
    n_pos, n_tf = cfg.n_pos, cfg.n_tf
    horizon = cfg.horizon_days
    theta = np.asarray(cfg.theta_table, dtype=float)
    n_profiles = min(_YEAR_DAYS, cfg.num_departure_days)

    profiles = np.stack([_day_profiles(cfg, d) for d in range(n_profiles)])  # (P, n_pos, H)
    totals = profiles.sum(axis=1)
    n_sub = _choose_sub_steps(cfg, totals)
    p_arr = totals / n_sub
    theta_days = np.stack([_blend_theta(cfg, profiles[p]) for p in range(n_profiles)])
    day_bids, _ = _backward_induction(p_arr, theta_days, n_sub, cfg.capacity, keep_full=False)

    tf_by_day = np.asarray(cfg.tf_of_day(np.arange(horizon)))
    last_wall = cfg.num_departure_days - 1

    dep_col: list[int] = []
    day_col: list[int] = []
    pos_col: list[int] = []
    price_col: list[float] = []
    book_col: list[int] = []
    oracle_price: list[float] = []
    oracle_rate: list[float] = []
    oracle_arrivals: list[int] = []

    for dep in range(cfg.num_departure_days):
        prof = dep % _YEAR_DAYS if cfg.num_departure_days > _YEAR_DAYS else dep
        rng = np.random.default_rng([cfg.rng_seed, dep])
        eps = rng.normal(0.0, cfg.price_noise_sd, size=(n_pos, horizon))
        counts = rng.binomial(n_sub, np.minimum(profiles[prof] / n_sub, 1.0))
        bids = day_bids[prof]
        first_day = max(0, (horizon - 1) - dep)  # earlier days predate the history window
        seats = cfg.capacity
        for day in range(horizon):
            if seats == 0:
                break
            tf = tf_by_day[day]
            s_start = seats
            # one quote per (day, pos), priced off start-of-day inventory
            quote = [bids[day, s_start] + 1.0 / theta[p, tf] + eps[p, day]
                     for p in range(n_pos)]
            k_by_pos = counts[:, day]
            total_k = int(k_by_pos.sum())
            books = [0] * n_pos
            arrivals_seen = [0] * n_pos
            if total_k:
                pos_seq = np.repeat(np.arange(n_pos), k_by_pos)
                if total_k > 1:
                    pos_seq = rng.permutation(pos_seq)
                wtp = rng.exponential(scale=1.0 / theta[pos_seq, tf])
                for i in range(total_k):
                    if seats == 0:
                        break
                    p = int(pos_seq[i])
                    arrivals_seen[p] += 1
                    if wtp[i] >= quote[p]:
                        books[p] += 1
                        seats -= 1
            if day < first_day:
                continue  # simulated for inventory, but outside the recorded window
            for p in range(n_pos):
                dep_col.append(dep)
                day_col.append(day)
                pos_col.append(p)
                price_col.append(quote[p])
                book_col.append(books[p])
                oracle_price.append(quote[p] - eps[p, day])
                oracle_rate.append(profiles[prof, p, day]
                                   * math.exp(-theta[p, tf] * bids[day, s_start] - 1.0))
                oracle_arrivals.append(int(arrivals_seen[p]))

    dep_arr = np.asarray(dep_col)
    day_arr = np.asarray(day_col)
    wall = dep_arr - (horizon - 1) + day_arr
    assert wall.size == 0 or (wall.min() >= 0 and wall.max() <= last_wall)
    tie = np.random.default_rng([cfg.rng_seed, 0x7FFFFFFF]).random(len(dep_col))
    order = np.lexsort((tie, wall))

    records: list[TransactionRecord] = []
    for rank, i in enumerate(order):
        w = int(wall[i])
        records.append(TransactionRecord(
            departure_id=int(dep_arr[i]), booking_day=int(day_arr[i]), obs_index=rank,
            woy=int(woy_of_wall(w)), dow=int(dow_of_wall(w)), pos=int(pos_col[i]),
            tf=int(tf_by_day[day_arr[i]]), avg_price=float(price_col[i]),
            bookings=int(book_col[i])))
    oracle = SimulationOracle(
        noiseless_price=np.asarray(oracle_price)[order],
        expected_bookings=np.maximum(np.asarray(oracle_rate)[order], 1e-12),
        arrivals=np.asarray(oracle_arrivals)[order],
    )
    return records, oracle


def generate_history(cfg: GroundTruthConfig) -> list[TransactionRecord]:
    """Simulate the recorded transaction history for the configured fleet."""
    records, _ = _simulate(cfg)
    return records


def generate_history_with_oracle(cfg: GroundTruthConfig) -> tuple[list[TransactionRecord], SimulationOracle]:
    """Like generate_history, but also returns generator-side oracle columns."""
    return _simulate(cfg)
