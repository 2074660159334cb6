"""Combo-level sensitivity extraction and error metrics against ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import FeatureSchema, all_combo_designs

__all__ = [
    "ComboEstimate",
    "combo_sensitivities",
    "attach_truth",
    "mape",
    "wmape",
    "booking_weights_by_combo",
]


@dataclass
class ComboEstimate:
    """Effective sensitivity and mean willingness-to-pay for one (pos, tf) cell.

    b = theta' W(pos, tf) is expected negative; alpha = -1/b is the implied
    mean willingness-to-pay.  ape is filled once a true alpha is attached.
    """

    pos: int
    tf: int
    b: float
    alpha: float | None
    true_alpha: float | None = None
    ape: float | None = None

    @property
    def valid(self) -> bool:
        return self.alpha is not None


def combo_sensitivities(theta_hat: np.ndarray,
                        schema: FeatureSchema = FeatureSchema()) -> list[ComboEstimate]:
    """Evaluate b = theta' W on every (pos, tf) design row.

    Combos with nonnegative b are flagged (alpha undefined) rather than
    silently dropped.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    designs = all_combo_designs(schema)
    some_w = next(iter(designs.values()))
    if theta_hat.shape != some_w.shape:
        raise DataError(f"theta dimension {theta_hat.shape} does not match the "
                        f"design dimension {some_w.shape}")
    out = []
    for (pos, tf), w in sorted(designs.items()):
        b = float(theta_hat @ w)
        alpha = -1.0 / b if b < 0 else None
        out.append(ComboEstimate(pos=pos, tf=tf, b=b, alpha=alpha))
    return out


def attach_truth(estimates: list[ComboEstimate], theta_table: np.ndarray) -> list[ComboEstimate]:
    """Fill true_alpha = 1/theta_true and ape per combo, in place."""
    theta_table = np.asarray(theta_table, dtype=float)
    for est in estimates:
        true_alpha = 1.0 / theta_table[est.pos, est.tf]
        est.true_alpha = float(true_alpha)
        if est.alpha is not None:
            est.ape = float(100.0 * abs(est.alpha - true_alpha) / true_alpha)
    return estimates


def mape(estimates: list[ComboEstimate]) -> float:
    """Unweighted mean APE; invalid combos count with their APE undefined -> error."""
    if not estimates:
        raise DataError("mape of an empty estimate list")
    apes = []
    for est in estimates:
        if est.ape is None:
            raise DataError(f"combo (pos={est.pos}, tf={est.tf}) has no APE "
                            "(missing truth or nonnegative sensitivity)")
        apes.append(est.ape)
    return float(np.mean(apes))


def wmape(estimates: list[ComboEstimate], weights: dict[tuple[int, int], float]) -> float:
    """Booking-weighted mean APE; weights are normalized to sum to one."""
    if not estimates:
        raise DataError("wmape of an empty estimate list")
    w = np.array([weights.get((est.pos, est.tf), 0.0) for est in estimates], dtype=float)
    if np.any(w < 0):
        raise DataError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise DataError("weights sum to zero")
    w /= total
    apes = []
    for est in estimates:
        if est.ape is None:
            raise DataError(f"combo (pos={est.pos}, tf={est.tf}) has no APE")
        apes.append(est.ape)
    return float(np.asarray(apes) @ w)


def booking_weights_by_combo(dataset) -> dict[tuple[int, int], float]:
    """Realized bookings per (pos, tf), the weights used for wmape."""
    out: dict[tuple[int, int], float] = {}
    for rec in dataset.records:
        key = (rec.pos, rec.tf)
        out[key] = out.get(key, 0.0) + rec.bookings
    return out
