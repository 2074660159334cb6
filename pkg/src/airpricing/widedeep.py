"""One-stage estimator: a wide linear price block plus a small dense network.

The log rate is price * (wide' W) + deep(X), where deep is a single hidden
ReLU layer feeding one output unit.  Both parts train jointly on the Poisson
negative log likelihood with hand-derived gradients and Adam; the price
sensitivity estimates are read directly off the wide weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "WideDeepNet",
    "TrainConfig",
    "TrainLogEntry",
    "forward",
    "poisson_nll",
    "backward",
    "init_net",
    "train",
    "extract_theta",
    "save_theta",
    "load_theta",
    "save_training_log_csv",
]


@dataclass
class WideDeepNet:
    wide: np.ndarray       # (w_dim,) price-sensitivity coefficients
    deep_w1: np.ndarray    # (hidden, x_dim)
    deep_b1: np.ndarray    # (hidden,)
    deep_w2: np.ndarray    # (hidden,)
    deep_b2: float

    def copy(self) -> "WideDeepNet":
        return WideDeepNet(self.wide.copy(), self.deep_w1.copy(), self.deep_b1.copy(),
                           self.deep_w2.copy(), float(self.deep_b2))

    def blocks(self) -> dict[str, np.ndarray | float]:
        return {"wide": self.wide, "deep_w1": self.deep_w1, "deep_b1": self.deep_b1,
                "deep_w2": self.deep_w2, "deep_b2": self.deep_b2}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 500
    patience_epochs: int = 20
    validation_fraction: float = 0.15
    hidden_units: int = 50
    weight_decay: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.patience_epochs < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("invalid training configuration")


def init_net(x_dim: int, w_dim: int, hidden: int, rng: np.random.Generator) -> WideDeepNet:
    """Zero wide block (neutral price effect at start), uniform Glorot deep blocks."""
    s1 = np.sqrt(6.0 / (x_dim + hidden))
    s2 = np.sqrt(6.0 / (hidden + 1))
    return WideDeepNet(
        wide=np.zeros(w_dim),
        deep_w1=rng.uniform(-s1, s1, size=(hidden, x_dim)),
        deep_b1=np.zeros(hidden),
        deep_w2=rng.uniform(-s2, s2, size=hidden),
        deep_b2=0.0,
    )


def forward(net: WideDeepNet, price: np.ndarray, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Log rate for a batch: price * (wide'W) + w2'relu(w1 X + b1) + b2."""
    price = np.atleast_1d(np.asarray(price, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if w.shape[1] != net.wide.shape[0] or x.shape[1] != net.deep_w1.shape[1]:
        raise DataError("design dimensions do not match the network")
    z1 = x @ net.deep_w1.T + net.deep_b1
    h = np.maximum(z1, 0.0)
    return price * (w @ net.wide) + h @ net.deep_w2 + net.deep_b2


def poisson_nll(log_rate: np.ndarray | float, y: np.ndarray | int) -> np.ndarray | float:
    """exp(log_rate) - y * log_rate, dropping the constant log y! term."""
    return np.exp(log_rate) - np.asarray(y) * np.asarray(log_rate)


def backward(net: WideDeepNet, price: np.ndarray, w: np.ndarray, x: np.ndarray,
             y: np.ndarray) -> dict[str, np.ndarray | float]:
    """Gradients of the mean Poisson NLL over the batch for every block.

    The ReLU subgradient at exactly zero is taken as zero.
    """
    price = np.asarray(price, dtype=float)
    if price.size == 0:
        raise DataError("backward needs a nonempty batch")
    n = price.shape[0]
    z1 = x @ net.deep_w1.T + net.deep_b1
    h = np.maximum(z1, 0.0)
    log_rate = price * (w @ net.wide) + h @ net.deep_w2 + net.deep_b2
    r = np.exp(log_rate) - y  # d NLL / d log_rate
    g_wide = (r * price) @ w / n
    g_w2 = r @ h / n
    g_b2 = float(r.mean())
    m = (r[:, None] * (z1 > 0.0)) * net.deep_w2
    g_w1 = m.T @ x / n
    g_b1 = m.mean(axis=0)
    return {"wide": g_wide, "deep_w1": g_w1, "deep_b1": g_b1, "deep_w2": g_w2,
            "deep_b2": g_b2}


@dataclass(frozen=True)
class TrainLogEntry:
    epoch: int
    train_nll: float
    val_nll: float
    is_best: bool


@dataclass
class _Adam:
    """Per-block Adam state."""

    lr: float
    b1: float
    b2: float
    eps: float
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, net: WideDeepNet, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for key, g in grads.items():
            g = np.asarray(g, dtype=float)
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = self.b1 * self.m[key] + (1.0 - self.b1) * g
            self.v[key] = self.b2 * self.v[key] + (1.0 - self.b2) * g * g
            update = self.lr * (self.m[key] / c1) / (np.sqrt(self.v[key] / c2) + self.eps)
            cur = getattr(net, key)
            if np.isscalar(cur) or np.ndim(cur) == 0:
                setattr(net, key, float(cur - update))
            else:
                cur -= update


def train(dataset, cfg: TrainConfig = TrainConfig()) -> tuple[WideDeepNet, list[TrainLogEntry]]:
    """Adam training with early stopping on flight-level validation NLL.

    Flights (departure ids), not rows, are held out for validation; training
    returns the parameters of the best validation epoch.
    """
    price = dataset.prices
    w = dataset.w
    x = dataset.x
    y = dataset.bookings
    n = len(dataset)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.rng_seed)
    flights = np.unique([r.departure_id for r in dataset.records])
    n_val = max(1, int(round(cfg.validation_fraction * flights.size)))
    if n_val >= flights.size:
        raise DataError("validation split leaves no training flights")
    val_flights = set(rng.choice(flights, size=n_val, replace=False).tolist())
    is_val = np.array([r.departure_id in val_flights for r in dataset.records])
    tr_idx = np.where(~is_val)[0]
    va_idx = np.where(is_val)[0]

    net = init_net(x.shape[1], w.shape[1], cfg.hidden_units, rng)
    adam = _Adam(lr=cfg.learning_rate, b1=cfg.adam_beta1, b2=cfg.adam_beta2,
                 eps=cfg.adam_eps)
    best = net.copy()
    best_nll = float(np.mean(poisson_nll(forward(net, price[va_idx], w[va_idx], x[va_idx]),
                                         y[va_idx])))
    log: list[TrainLogEntry] = []
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(tr_idx)
        for start in range(0, order.size, cfg.batch_size):
            bi = order[start:start + cfg.batch_size]
            grads = backward(net, price[bi], w[bi], x[bi], y[bi])
            if cfg.weight_decay:
                for key, g in grads.items():
                    grads[key] = g + cfg.weight_decay * np.asarray(getattr(net, key))
            adam.step(net, grads)
        train_nll = float(np.mean(poisson_nll(forward(net, price[tr_idx], w[tr_idx], x[tr_idx]),
                                              y[tr_idx])))
        val_nll = float(np.mean(poisson_nll(forward(net, price[va_idx], w[va_idx], x[va_idx]),
                                            y[va_idx])))
        improved = val_nll < best_nll
        log.append(TrainLogEntry(epoch=epoch, train_nll=train_nll, val_nll=val_nll,
                                 is_best=improved))
        if improved:
            best_nll = val_nll
            best = net.copy()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience_epochs:
                break
    return best, log


def extract_theta(net: WideDeepNet) -> np.ndarray:
    """The price-sensitivity estimates are the wide weights, verbatim."""
    return net.wide.copy()


def save_theta(theta: np.ndarray, names: tuple[str, ...], path: str | Path,
               extra: dict[str, str] | None = None) -> None:
    """Structured-text export of a point estimate (no covariance)."""
    path = Path(path)
    lines = ["format = theta-v1", "kind = direct",
             "names = " + " ".join(names),
             "theta = " + " ".join(repr(float(v)) for v in theta)]
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {val}")
    path.write_text("\n".join(lines) + "\n")


def load_theta(path: str | Path) -> tuple[np.ndarray, tuple[str, ...], dict[str, str]]:
    path = Path(path)
    meta: dict[str, str] = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        meta[key.strip()] = val.strip()
    if meta.get("format") != "theta-v1":
        raise DataError(f"{path}: not a theta export")
    names = tuple(meta["names"].split())
    theta = np.array([float(v) for v in meta["theta"].split()])
    if len(names) != theta.shape[0]:
        raise DataError(f"{path}: inconsistent dimensions")
    return theta, names, meta


def save_training_log_csv(log: list[TrainLogEntry], path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("epoch,train_nll,val_nll,is_best\n")
        for entry in log:
            fh.write(f"{entry.epoch},{entry.train_nll!r},{entry.val_nll!r},"
                     f"{int(entry.is_best)}\n")
