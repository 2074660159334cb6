"""Feature engineering and dataset I/O.

Builds the two design vectors used throughout the pipeline:

* the full nonparametric feature vector X (intercept, one-hot POS/TF/DOW,
  Fourier-of-week terms) consumed by the first-stage regressors and by the
  deep part of the one-stage network, and
* the compact price-sensitivity design W (intercept plus dropped-first-level
  POS and TF indicators) whose coefficients are the quantities of interest.

Also owns the transaction CSV schema shared with the simulator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, SchemaError
from .simulate import TransactionRecord

__all__ = [
    "FeatureSchema",
    "FeatureVector",
    "ElasticityDesign",
    "Dataset",
    "fourier_seasonality",
    "encode_features",
    "decode_features",
    "build_elasticity_design",
    "elasticity_design_names",
    "feature_names",
    "all_combo_designs",
    "load_csv",
    "save_csv",
    "shuffle_concurrent",
]

CSV_COLUMNS = ("departure_id", "booking_day", "obs_index", "woy", "dow",
               "pos", "tf", "avg_price", "bookings")
GROUP_COLUMN = "group_id"


@dataclass(frozen=True)
class FeatureSchema:
    """Cardinalities and layout options for the feature encodings."""

    n_pos: int = 2
    n_tf: int = 10
    n_dow: int = 7
    n_woy: int = 52
    fourier_frequencies: int = 2
    horizon_days: int = 365
    # optional continuous booking-day polynomial block appended to W
    w_dbd_degree: int = 0

    @property
    def x_dim(self) -> int:
        return 1 + self.n_pos + self.n_tf + self.n_dow + 2 * self.fourier_frequencies

    @property
    def w_dim(self) -> int:
        return 1 + (self.n_pos - 1) + (self.n_tf - 1) + self.w_dbd_degree


@dataclass(frozen=True)
class FeatureVector:
    """Encoded row of X with its named block layout."""

    values: np.ndarray
    layout: tuple[str, ...]


@dataclass(frozen=True)
class ElasticityDesign:
    """Encoded row of W: intercept plus dropped-first-level indicators."""

    values: np.ndarray
    layout: tuple[str, ...]


def fourier_seasonality(woy: int, schema: FeatureSchema = FeatureSchema()) -> list[float]:
    """Fourier terms of the week-of-year: [sin, cos] for each frequency."""
    if not 0 <= woy < schema.n_woy:
        raise DataError(f"woy out of range [0, {schema.n_woy}): {woy!r}")
    out: list[float] = []
    for k in range(1, schema.fourier_frequencies + 1):
        ang = 2.0 * math.pi * k * woy / schema.n_woy
        out.append(math.sin(ang))
        out.append(math.cos(ang))
    return out


def feature_names(schema: FeatureSchema) -> tuple[str, ...]:
    names = ["intercept"]
    names += [f"pos={p}" for p in range(schema.n_pos)]
    names += [f"tf={t}" for t in range(schema.n_tf)]
    names += [f"dow={d}" for d in range(schema.n_dow)]
    for k in range(1, schema.fourier_frequencies + 1):
        names += [f"woy_sin{k}", f"woy_cos{k}"]
    return tuple(names)


def _check_categories(record: TransactionRecord, schema: FeatureSchema) -> None:
    if not 0 <= record.pos < schema.n_pos:
        raise DataError(f"unknown pos category {record.pos!r} (n_pos={schema.n_pos})")
    if not 0 <= record.tf < schema.n_tf:
        raise DataError(f"unknown tf category {record.tf!r} (n_tf={schema.n_tf})")
    if not 0 <= record.dow < schema.n_dow:
        raise DataError(f"unknown dow category {record.dow!r} (n_dow={schema.n_dow})")


def encode_features(record: TransactionRecord, schema: FeatureSchema = FeatureSchema()) -> FeatureVector:
    """Full one-hot + Fourier encoding used by the nonparametric stage."""
    _check_categories(record, schema)
    v = np.zeros(schema.x_dim)
    v[0] = 1.0
    v[1 + record.pos] = 1.0
    v[1 + schema.n_pos + record.tf] = 1.0
    v[1 + schema.n_pos + schema.n_tf + record.dow] = 1.0
    v[1 + schema.n_pos + schema.n_tf + schema.n_dow:] = fourier_seasonality(record.woy, schema)
    return FeatureVector(values=v, layout=feature_names(schema))


def decode_features(vec: FeatureVector, schema: FeatureSchema = FeatureSchema()) -> dict[str, int]:
    """Recover the categorical fields from an encoded feature vector."""
    v = vec.values
    pos = int(np.argmax(v[1:1 + schema.n_pos]))
    tf = int(np.argmax(v[1 + schema.n_pos:1 + schema.n_pos + schema.n_tf]))
    dow = int(np.argmax(v[1 + schema.n_pos + schema.n_tf:1 + schema.n_pos + schema.n_tf + schema.n_dow]))
    f0 = 1 + schema.n_pos + schema.n_tf + schema.n_dow
    ang = math.atan2(v[f0], v[f0 + 1])
    woy = int(round(ang * schema.n_woy / (2.0 * math.pi))) % schema.n_woy
    return {"pos": pos, "tf": tf, "dow": dow, "woy": woy}


def elasticity_design_names(schema: FeatureSchema) -> tuple[str, ...]:
    names = ["intercept"]
    names += [f"pos={p}" for p in range(1, schema.n_pos)]
    names += [f"tf={t}" for t in range(1, schema.n_tf)]
    names += [f"dbd^{k}" for k in range(1, schema.w_dbd_degree + 1)]
    return tuple(names)


def build_elasticity_design(record: TransactionRecord,
                            schema: FeatureSchema = FeatureSchema()) -> ElasticityDesign:
    """Price-sensitivity design W: POS 0 / TF 0 are the reference levels."""
    _check_categories(record, schema)
    v = np.zeros(schema.w_dim)
    v[0] = 1.0
    if record.pos >= 1:
        v[record.pos] = 1.0
    if record.tf >= 1:
        v[schema.n_pos - 1 + record.tf] = 1.0
    if schema.w_dbd_degree > 0:
        u = record.booking_day / max(1, schema.horizon_days - 1)
        base = 1 + (schema.n_pos - 1) + (schema.n_tf - 1)
        for k in range(1, schema.w_dbd_degree + 1):
            v[base + k - 1] = u ** k
    return ElasticityDesign(values=v, layout=elasticity_design_names(schema))


def combo_design(pos: int, tf: int, schema: FeatureSchema = FeatureSchema()) -> np.ndarray:
    """W row for a (pos, tf) combination, without the optional DBD block."""
    rec = TransactionRecord(departure_id=0, booking_day=0, obs_index=0,
                            woy=0, dow=0, pos=pos, tf=tf, avg_price=1.0, bookings=0)
    return build_elasticity_design(rec, replace(schema, w_dbd_degree=0)).values


def all_combo_designs(schema: FeatureSchema = FeatureSchema()) -> dict[tuple[int, int], np.ndarray]:
    return {(p, t): combo_design(p, t, schema)
            for p in range(schema.n_pos) for t in range(schema.n_tf)}


@dataclass
class Dataset:
    """Transaction records sorted by observation time plus their X/W matrices."""

    records: list[TransactionRecord]
    x: np.ndarray
    w: np.ndarray
    schema: FeatureSchema
    market_id: str = "sim"
    group_ids: list[str] | None = None
    wall_days: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def prices(self) -> np.ndarray:
        return np.array([r.avg_price for r in self.records])

    @property
    def bookings(self) -> np.ndarray:
        return np.array([r.bookings for r in self.records], dtype=float)

    @property
    def obs_index(self) -> np.ndarray:
        return np.array([r.obs_index for r in self.records], dtype=int)

    @classmethod
    def from_records(cls, records: Iterable[TransactionRecord],
                     schema: FeatureSchema = FeatureSchema(),
                     market_id: str = "sim",
                     group_ids: Sequence[str] | None = None) -> "Dataset":
        recs = sorted(records, key=lambda r: r.obs_index)
        if group_ids is not None:
            if len(group_ids) != len(recs):
                raise DataError("group_ids length does not match record count")
            order = np.argsort([r.obs_index for r in records], kind="stable")
            group_ids = [group_ids[i] for i in order]
        x = np.empty((len(recs), schema.x_dim))
        w = np.empty((len(recs), schema.w_dim))
        for i, r in enumerate(recs):
            x[i] = encode_features(r, schema).values
            w[i] = build_elasticity_design(r, schema).values
        wall = np.array([r.departure_id - (schema.horizon_days - 1) + r.booking_day
                         for r in recs], dtype=int)
        return cls(records=recs, x=x, w=w, schema=schema, market_id=market_id,
                   group_ids=list(group_ids) if group_ids is not None else None,
                   wall_days=wall)

    @property
    def weeks(self) -> np.ndarray:
        """Wall-clock week index of each record, zeroed at the history start."""
        if len(self.wall_days) == 0:
            return np.zeros(0, dtype=int)
        return (self.wall_days - self.wall_days.min()) // 7


def _parse_row(row: Sequence[str], line_no: int, has_group: bool,
               schema: FeatureSchema) -> tuple[TransactionRecord, str | None]:
    expected = len(CSV_COLUMNS) + (1 if has_group else 0)
    if len(row) != expected:
        raise SchemaError(f"line {line_no}: expected {expected} fields, got {len(row)}")
    try:
        dep = int(row[0]); day = int(row[1]); obs = int(row[2])
        woy = int(row[3]); dow = int(row[4]); pos = int(row[5]); tf = int(row[6])
        price = float(row[7]); bookings = int(row[8])
    except ValueError as exc:
        raise SchemaError(f"line {line_no}: {exc}") from exc
    checks = ((0 <= woy < schema.n_woy, "woy"), (0 <= dow < schema.n_dow, "dow"),
              (0 <= pos < schema.n_pos, "pos"), (0 <= tf < schema.n_tf, "tf"),
              (bookings >= 0, "bookings"), (day >= 0, "booking_day"))
    for ok, name in checks:
        if not ok:
            raise SchemaError(f"line {line_no}: {name} out of range")
    rec = TransactionRecord(departure_id=dep, booking_day=day, obs_index=obs,
                            woy=woy, dow=dow, pos=pos, tf=tf,
                            avg_price=price, bookings=bookings)
    return rec, (row[9] if has_group else None)


def load_csv(path: str | Path, schema: FeatureSchema = FeatureSchema(),
             market_id: str = "sim") -> Dataset:
    """Load a transaction CSV; records are re-sorted by obs_index."""
    path = Path(path)
    records: list[TransactionRecord] = []
    groups: list[str] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required") from None
        if tuple(header[:len(CSV_COLUMNS)]) != CSV_COLUMNS:
            raise SchemaError(f"{path}: unexpected header {header!r}")
        has_group = len(header) == len(CSV_COLUMNS) + 1 and header[-1] == GROUP_COLUMN
        if len(header) > len(CSV_COLUMNS) and not has_group:
            raise SchemaError(f"{path}: unexpected extra columns {header[len(CSV_COLUMNS):]!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            rec, grp = _parse_row(row, line_no, has_group, schema)
            records.append(rec)
            if has_group:
                groups.append(grp)
    return Dataset.from_records(records, schema, market_id=market_id,
                                group_ids=groups if groups else None)


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset in observation order; floats use shortest round-trip repr."""
    path = Path(path)
    has_group = dataset.group_ids is not None
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS + ((GROUP_COLUMN,) if has_group else ()))
        for i, r in enumerate(dataset.records):
            row = [r.departure_id, r.booking_day, r.obs_index, r.woy, r.dow,
                   r.pos, r.tf, repr(r.avg_price), r.bookings]
            if has_group:
                row.append(dataset.group_ids[i])
            writer.writerow(row)


def shuffle_concurrent(dataset: Dataset, seed: int) -> Dataset:
    """Reassign obs_index with a fresh random tie-break among records that
    share a wall-clock day; ordering across days is preserved."""
    rng = np.random.default_rng(seed)
    tie = rng.random(len(dataset))
    order = np.lexsort((tie, dataset.wall_days))
    recs = [replace(dataset.records[i], obs_index=rank)
            for rank, i in enumerate(order)]
    groups = ([dataset.group_ids[i] for i in order]
              if dataset.group_ids is not None else None)
    return Dataset.from_records(recs, dataset.schema, market_id=dataset.market_id,
                                group_ids=groups)
