"""Feature encodings, design vectors, and CSV round-trips."""

import numpy as np
import pytest

from airpricing import features as feat
from airpricing.errors import DataError, SchemaError
from airpricing.simulate import TransactionRecord


def rec(pos=0, tf=0, dow=0, woy=0, dep=10, day=5, obs=0, price=200.0, bookings=1):
    return TransactionRecord(departure_id=dep, booking_day=day, obs_index=obs,
                             woy=woy, dow=dow, pos=pos, tf=tf,
                             avg_price=price, bookings=bookings)


class TestFourier:
    def test_week_zero(self):
        assert feat.fourier_seasonality(0) == pytest.approx([0.0, 1.0, 0.0, 1.0])

    def test_quarter_period(self):
        assert feat.fourier_seasonality(13) == pytest.approx([1.0, 0.0, 0.0, -1.0], abs=1e-12)

    def test_half_period(self):
        assert feat.fourier_seasonality(26) == pytest.approx([0.0, -1.0, 0.0, 1.0], abs=1e-12)

    def test_range_error(self):
        with pytest.raises(DataError):
            feat.fourier_seasonality(52)
        with pytest.raises(DataError):
            feat.fourier_seasonality(-1)

    def test_values_bounded(self):
        for woy in range(52):
            assert all(abs(v) <= 1.0 for v in feat.fourier_seasonality(woy))


class TestEncodeFeatures:
    def test_reference_record(self):
        fv = feat.encode_features(rec(pos=0, tf=0, dow=0, woy=0))
        v = fv.values
        assert v[0] == 1.0
        assert v[1] == 1.0 and v[2] == 0.0            # pos one-hot
        assert v[3] == 1.0 and np.all(v[4:13] == 0)   # tf one-hot
        assert v[13] == 1.0 and np.all(v[14:20] == 0)  # dow one-hot
        assert v[20:] == pytest.approx([0.0, 1.0, 0.0, 1.0])

    def test_last_levels(self):
        fv = feat.encode_features(rec(pos=1, tf=9, dow=6, woy=26))
        v = fv.values
        assert v[2] == 1.0 and v[12] == 1.0 and v[19] == 1.0
        assert v[20:] == pytest.approx([0.0, -1.0, 0.0, 1.0], abs=1e-12)

    def test_dimension(self):
        schema = feat.FeatureSchema()
        assert feat.encode_features(rec(), schema).values.shape[0] == schema.x_dim == 24

    def test_one_hot_blocks_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            r = rec(pos=int(rng.integers(2)), tf=int(rng.integers(10)),
                    dow=int(rng.integers(7)), woy=int(rng.integers(52)))
            v = feat.encode_features(r).values
            assert v[1:3].sum() == 1.0 and v[3:13].sum() == 1.0 and v[13:20].sum() == 1.0

    def test_roundtrip_decode(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            r = rec(pos=int(rng.integers(2)), tf=int(rng.integers(10)),
                    dow=int(rng.integers(7)), woy=int(rng.integers(52)))
            got = feat.decode_features(feat.encode_features(r))
            assert got == {"pos": r.pos, "tf": r.tf, "dow": r.dow, "woy": r.woy}

    def test_unknown_category(self):
        with pytest.raises(DataError):
            feat.encode_features(rec(pos=2))
        with pytest.raises(DataError):
            feat.encode_features(rec(tf=10))

    def test_deterministic_layout(self):
        a = feat.encode_features(rec(pos=1, tf=4, dow=2, woy=31)).values
        b = feat.encode_features(rec(pos=1, tf=4, dow=2, woy=31)).values
        assert a.tobytes() == b.tobytes()


class TestElasticityDesign:
    def test_reference_levels(self):
        v = feat.build_elasticity_design(rec(pos=0, tf=0)).values
        assert v[0] == 1.0 and np.all(v[1:] == 0.0)

    def test_active_levels(self):
        v = feat.build_elasticity_design(rec(pos=1, tf=3)).values
        assert v[0] == 1.0 and v[1] == 1.0 and v[1 + 3] == 1.0
        assert v.sum() == 3.0

    def test_dimension(self):
        assert feat.FeatureSchema().w_dim == 11  # 1 + (2-1) + (10-1)
        assert feat.build_elasticity_design(rec()).values.shape[0] == 11

    def test_at_most_one_indicator_per_block(self):
        for pos in range(2):
            for tf in range(10):
                v = feat.build_elasticity_design(rec(pos=pos, tf=tf)).values
                assert v[1:2].sum() in (0.0, 1.0)
                assert v[2:11].sum() in (0.0, 1.0)

    def test_optional_dbd_block(self):
        schema = feat.FeatureSchema(w_dbd_degree=2)
        assert schema.w_dim == 13
        v = feat.build_elasticity_design(rec(day=182), schema).values
        u = 182 / 364
        assert v[11] == pytest.approx(u)
        assert v[12] == pytest.approx(u * u)

    def test_dbd_off_by_default(self):
        assert feat.FeatureSchema().w_dbd_degree == 0


class TestDatasetCsv:
    def _records(self, n=40, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        for i in range(n):
            out.append(rec(pos=int(rng.integers(2)), tf=int(rng.integers(10)),
                           dow=int(rng.integers(7)), woy=int(rng.integers(52)),
                           dep=int(rng.integers(400)), day=int(rng.integers(365)),
                           obs=i, price=float(rng.uniform(100, 400)),
                           bookings=int(rng.integers(4))))
        return out

    def test_roundtrip(self, tmp_path):
        ds = feat.Dataset.from_records(self._records())
        path = tmp_path / "t.csv"
        feat.save_csv(ds, path)
        loaded = feat.load_csv(path)
        assert loaded.records == ds.records
        assert np.array_equal(loaded.x, ds.x)
        assert np.array_equal(loaded.w, ds.w)

    def test_sorted_on_load(self, tmp_path):
        recs = self._records()
        ds = feat.Dataset.from_records(recs)
        path = tmp_path / "t.csv"
        # write deliberately shuffled
        shuffled = feat.Dataset.from_records(recs)
        shuffled.records = list(reversed(shuffled.records))
        feat.save_csv(shuffled, path)
        loaded = feat.load_csv(path)
        assert [r.obs_index for r in loaded.records] == sorted(r.obs_index for r in recs)

    def test_out_of_range_field_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("departure_id,booking_day,obs_index,woy,dow,pos,tf,avg_price,bookings\n"
                        "0,0,0,0,9,0,0,100.0,0\n")
        with pytest.raises(SchemaError, match="line 2.*dow"):
            feat.load_csv(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("departure_id,booking_day,obs_index,woy,dow,pos,tf,avg_price,bookings\n")
        ds = feat.load_csv(path)
        assert len(ds) == 0

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(SchemaError):
            feat.load_csv(path)

    def test_group_column_roundtrip(self, tmp_path):
        recs = self._records(10)
        ds = feat.Dataset.from_records(recs, group_ids=["g0"] * 10)
        path = tmp_path / "g.csv"
        feat.save_csv(ds, path)
        loaded = feat.load_csv(path)
        assert loaded.group_ids == ["g0"] * 10

    def test_wall_days(self):
        ds = feat.Dataset.from_records([rec(dep=364, day=364, obs=0)])
        assert ds.wall_days[0] == 364  # departure day itself
        ds2 = feat.Dataset.from_records([rec(dep=0, day=364, obs=0)])
        assert ds2.wall_days[0] == 0

    def test_shuffle_concurrent_preserves_day_order(self):
        recs = self._records(60, seed=3)
        ds = feat.Dataset.from_records(recs)
        shuffled = feat.shuffle_concurrent(ds, seed=11)
        walls = shuffled.wall_days
        assert np.all(np.diff(walls) >= 0)
        # same multiset of (departure, day, pos)
        key = lambda r: (r.departure_id, r.booking_day, r.pos)
        assert sorted(map(key, shuffled.records)) == sorted(map(key, ds.records))
