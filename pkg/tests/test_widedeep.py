"""Forward/backward correctness of the joint wide-linear/deep regression."""

import numpy as np
import pytest

from airpricing import widedeep as wd
from airpricing.errors import DataError
from airpricing.features import Dataset, FeatureSchema
from airpricing.simulate import TransactionRecord


def zero_net(x_dim=24, w_dim=11, hidden=8):
    return wd.WideDeepNet(wide=np.zeros(w_dim),
                          deep_w1=np.zeros((hidden, x_dim)),
                          deep_b1=np.zeros(hidden),
                          deep_w2=np.zeros(hidden),
                          deep_b2=0.0)


def random_net(rng, x_dim=24, w_dim=11, hidden=8):
    net = wd.init_net(x_dim, w_dim, hidden, rng)
    net.wide = rng.normal(scale=0.001, size=w_dim)
    net.deep_b1 = rng.normal(scale=0.2, size=hidden)
    net.deep_b2 = float(rng.normal())
    return net


def random_batch(rng, n=16, x_dim=24, w_dim=11):
    price = rng.uniform(100, 400, size=n)
    w = rng.normal(size=(n, w_dim))
    x = rng.normal(size=(n, x_dim))
    y = rng.poisson(1.0, size=n).astype(float)
    return price, w, x, y


class TestForward:
    def test_zero_net(self):
        net = zero_net()
        rng = np.random.default_rng(0)
        price, w, x, _ = random_batch(rng)
        assert np.allclose(wd.forward(net, price, w, x), 0.0)

    def test_wide_only_arithmetic(self):
        net = zero_net()
        net.wide[0] = -0.005
        w = np.zeros((1, 11)); w[0, 0] = 1.0
        x = np.zeros((1, 24))
        out = wd.forward(net, np.array([200.0]), w, x)
        assert out[0] == pytest.approx(-1.0)

    def test_against_straight_line_reimplementation(self):
        rng = np.random.default_rng(1)
        net = random_net(rng)
        price, w, x, _ = random_batch(rng)
        got = wd.forward(net, price, w, x)
        for i in range(len(price)):
            acc = price[i] * float(w[i] @ net.wide)
            hidden = np.array([max(0.0, float(net.deep_w1[h] @ x[i]) + net.deep_b1[h])
                               for h in range(net.deep_w2.shape[0])])
            acc += float(hidden @ net.deep_w2) + net.deep_b2
            assert got[i] == pytest.approx(acc, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            wd.forward(zero_net(), np.ones(2), np.ones((2, 5)), np.ones((2, 24)))

    def test_additivity_price_slope_lives_in_wide(self):
        rng = np.random.default_rng(2)
        net = random_net(rng)
        price, w, x, _ = random_batch(rng)
        base = wd.forward(net, price, w, x)
        bumped = wd.forward(net, price + 1.0, w, x)
        slope = bumped - base
        x2 = x + rng.normal(size=x.shape)
        slope2 = wd.forward(net, price + 1.0, w, x2) - wd.forward(net, price, w, x2)
        assert np.allclose(slope, slope2)


class TestPoissonNll:
    def test_zero_zero(self):
        assert wd.poisson_nll(0.0, 0) == pytest.approx(1.0)

    def test_minimum_at_log_y(self):
        y = 4
        at_min = wd.poisson_nll(np.log(y), y)
        assert at_min == pytest.approx(4 - 4 * np.log(4))
        for lr in (np.log(y) - 0.1, np.log(y) + 0.1):
            assert wd.poisson_nll(lr, y) > at_min

    def test_gradient_identity(self):
        lr, y = 0.7, 3
        h = 1e-7
        numeric = (wd.poisson_nll(lr + h, y) - wd.poisson_nll(lr - h, y)) / (2 * h)
        assert numeric == pytest.approx(np.exp(lr) - y, abs=1e-6)


class TestBackward:
    def test_finite_difference_all_blocks(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 3:
            net = random_net(rng, hidden=6)
            price, w, x, y = random_batch(rng, n=12)
            z1 = x @ net.deep_w1.T + net.deep_b1
            if np.abs(z1).min() < 1e-3:
                continue  # a ReLU kink inside the finite-difference window
            if np.abs(wd.forward(net, price, w, x)).max() > 4.0:
                continue  # huge rates drown the numeric oracle in rounding
            checked += 1
            grads = wd.backward(net, price, w, x, y)

            def loss(n2):
                return float(np.mean(wd.poisson_nll(wd.forward(n2, price, w, x), y)))

            for block in ("wide", "deep_w1", "deep_b1", "deep_w2", "deep_b2"):
                g = np.atleast_1d(np.asarray(grads[block], dtype=float))
                flat = g.ravel()
                for idx in range(flat.size):
                    n2 = net.copy()
                    arr = np.atleast_1d(np.asarray(getattr(n2, block), dtype=float))
                    shape = arr.shape
                    arr = arr.ravel()
                    h = 1e-5
                    arr[idx] += h
                    setattr(n2, block, arr.reshape(shape) if shape else float(arr[0]))
                    up = loss(n2)
                    arr[idx] -= 2 * h
                    setattr(n2, block, arr.reshape(shape) if shape else float(arr[0]))
                    down = loss(n2)
                    numeric = (up - down) / (2 * h)
                    assert flat[idx] == pytest.approx(numeric, rel=1e-4, abs=1e-7), block

    def test_duplicate_record_means_are_stable(self):
        rng = np.random.default_rng(4)
        net = random_net(rng)
        price, w, x, y = random_batch(rng, n=6)
        g1 = wd.backward(net, price, w, x, y)
        dup = slice(None)
        g2 = wd.backward(net, np.tile(price, 2), np.tile(w, (2, 1)),
                         np.tile(x, (2, 1)), np.tile(y, 2))
        for k in g1:
            assert np.allclose(np.asarray(g1[k]), np.asarray(g2[k]))

    def test_dead_relu_zero_gradient(self):
        net = zero_net(hidden=2)
        net.deep_b1 = np.array([-5.0, -5.0])   # never active
        net.deep_w2 = np.array([1.0, 1.0])
        rng = np.random.default_rng(5)
        price, w, x, y = random_batch(rng, n=8)
        x = np.abs(x) * 0  # all zeros: z1 = b1 < 0 everywhere
        grads = wd.backward(net, price, w, x, y)
        assert np.allclose(grads["deep_w1"], 0.0)
        assert np.allclose(grads["deep_b1"], 0.0)

    def test_empty_batch(self):
        with pytest.raises(DataError):
            wd.backward(zero_net(), np.zeros(0), np.zeros((0, 11)), np.zeros((0, 24)),
                        np.zeros(0))


def tiny_dataset(n_flights=20, days=6, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    i = 0
    for dep in range(360, 360 + n_flights):
        for day in range(359, 359 + days):
            recs.append(TransactionRecord(
                departure_id=dep, booking_day=day, obs_index=i,
                woy=int(rng.integers(0, 52)), dow=int(rng.integers(0, 7)),
                pos=int(rng.integers(0, 2)), tf=9,
                avg_price=float(rng.uniform(150, 300)),
                bookings=int(rng.poisson(1.0))))
            i += 1
    return Dataset.from_records(recs, FeatureSchema())


class TestTrain:
    def test_deterministic_log(self):
        ds = tiny_dataset()
        cfg = wd.TrainConfig(max_epochs=5, patience_epochs=5, batch_size=32, rng_seed=7)
        net1, log1 = wd.train(ds, cfg)
        net2, log2 = wd.train(ds, cfg)
        assert log1 == log2
        assert np.array_equal(net1.wide, net2.wide)

    def test_zero_learning_rate_keeps_parameters(self):
        ds = tiny_dataset()
        cfg = wd.TrainConfig(learning_rate=0.0, max_epochs=3, patience_epochs=5,
                             rng_seed=1)
        net, _ = wd.train(ds, cfg)
        assert np.allclose(net.wide, 0.0)  # wide starts at zero and never moves

    def test_best_checkpoint_sequence_nonincreasing(self):
        ds = tiny_dataset(seed=2)
        cfg = wd.TrainConfig(max_epochs=30, patience_epochs=10, batch_size=64, rng_seed=3)
        _, log = wd.train(ds, cfg)
        best = [entry.val_nll for entry in log if entry.is_best]
        assert all(a > b for a, b in zip(best, best[1:])) or len(best) <= 1

    def test_single_record_rate_converges_to_count(self):
        # one flight in training, one in validation; no early stop pressure
        recs = [TransactionRecord(departure_id=400, booking_day=100, obs_index=0,
                                  woy=3, dow=2, pos=0, tf=2, avg_price=1.0, bookings=5),
                TransactionRecord(departure_id=401, booking_day=100, obs_index=1,
                                  woy=3, dow=2, pos=0, tf=2, avg_price=1.0, bookings=5)]
        ds = Dataset.from_records(recs, FeatureSchema())
        cfg = wd.TrainConfig(learning_rate=0.05, max_epochs=2000, patience_epochs=2000,
                             batch_size=2, validation_fraction=0.5, rng_seed=0,
                             hidden_units=4)
        net, _ = wd.train(ds, cfg)
        lam = np.exp(wd.forward(net, ds.prices[:1], ds.w[:1], ds.x[:1]))[0]
        assert lam == pytest.approx(5.0, abs=1e-3)

    def test_no_validation_flights_error(self):
        recs = [TransactionRecord(departure_id=1, booking_day=0, obs_index=0, woy=0,
                                  dow=0, pos=0, tf=0, avg_price=100.0, bookings=0)]
        ds = Dataset.from_records(recs, FeatureSchema())
        with pytest.raises(DataError):
            wd.train(ds, wd.TrainConfig(validation_fraction=0.9))


class TestExtractTheta:
    def test_passthrough(self):
        net = zero_net()
        net.wide = np.arange(11.0)
        theta = wd.extract_theta(net)
        assert np.array_equal(theta, np.arange(11.0))
        theta[0] = 99.0
        assert net.wide[0] == 0.0  # copy, not a view

    def test_zero_net_zero_theta(self):
        assert np.allclose(wd.extract_theta(zero_net()), 0.0)

    def test_combo_effective_sensitivity_is_linear(self):
        from airpricing.metrics import combo_sensitivities
        net = zero_net()
        rng = np.random.default_rng(6)
        net.wide = -np.abs(rng.normal(scale=0.005, size=11))
        ests1 = combo_sensitivities(wd.extract_theta(net))
        ests2 = combo_sensitivities(2.0 * wd.extract_theta(net))
        for a, b in zip(ests1, ests2):
            assert b.b == pytest.approx(2.0 * a.b)


class TestThetaIO:
    def test_roundtrip(self, tmp_path):
        theta = np.array([-0.005, 0.001, -0.0002])
        path = tmp_path / "theta.txt"
        wd.save_theta(theta, ("a", "b", "c"), path, extra={"seed": "3"})
        loaded, names, meta = wd.load_theta(path)
        assert np.allclose(loaded, theta)
        assert names == ("a", "b", "c")
        assert meta["seed"] == "3"

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "x.txt"
        path.write_text("format = other\n")
        with pytest.raises(DataError):
            wd.load_theta(path)

    def test_training_log_csv(self, tmp_path):
        log = [wd.TrainLogEntry(1, 2.0, 3.0, True), wd.TrainLogEntry(2, 1.5, 2.9, True)]
        path = tmp_path / "log.csv"
        wd.save_training_log_csv(log, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_nll,val_nll,is_best"
        assert len(lines) == 3
