"""Report directory contents: tables, plot-ready CSVs, and rendered figures."""

import numpy as np
import pytest

from airpricing import metrics, report
from airpricing.dglm import FitTrace
from airpricing.features import Dataset, FeatureSchema
from airpricing.simulate import TransactionRecord, default_theta_table


def small_dataset(n_weeks=6, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    i = 0
    for wall in range(n_weeks * 7):
        for pos in (0, 1):
            recs.append(TransactionRecord(
                departure_id=364 + wall, booking_day=364, obs_index=i,
                woy=(wall % 364) // 7, dow=wall % 7, pos=pos,
                tf=int(rng.integers(0, 10)), avg_price=float(rng.uniform(150, 320)),
                bookings=int(rng.poisson(0.5))))
            i += 1
    return Dataset.from_records(recs, FeatureSchema())


def estimates():
    rng = np.random.default_rng(1)
    theta = -np.abs(rng.normal(scale=0.004, size=11)) - 0.001
    ests = metrics.combo_sensitivities(theta, FeatureSchema())
    return metrics.attach_truth(ests, default_theta_table())


def small_trace(n_weeks=6):
    trace = FitTrace(names=tuple(f"theta[{i}]" for i in range(11)))
    rng = np.random.default_rng(2)
    for wk in range(n_weeks):
        mu = -np.abs(rng.normal(scale=0.004, size=11)) - 0.001
        trace.append(wk, __import__("airpricing").dglm.PosteriorState(
            mu=mu, sigma=np.eye(11) * 0.1, dim_theta=11))
    return trace


class TestBuildReport:
    def test_files_written(self, tmp_path):
        ds = small_dataset()
        files = report.build_report(
            tmp_path / "rep", estimates_by_method={"two-stage": estimates()},
            dataset=ds, traces={"two-stage": small_trace()},
            theta_table=default_theta_table())
        names = {f.name for f in files}
        assert {"sensitivity_table.csv", "booking_trends.csv", "price_distribution.csv",
                "summary.txt", "trace_two-stage.csv", "booking_trends.png",
                "price_distribution.png", "convergence_two-stage.png"} <= names

    def test_table_one_row_per_combo(self, tmp_path):
        files = report.build_report(tmp_path / "rep",
                                    estimates_by_method={"m": estimates()},
                                    render_figures=False)
        table = next(f for f in files if f.name == "sensitivity_table.csv")
        lines = table.read_text().strip().splitlines()
        assert len(lines) == 1 + 20

    def test_booking_trend_rows_weeks_times_pos(self, tmp_path):
        ds = small_dataset(n_weeks=6)
        files = report.build_report(tmp_path / "rep",
                                    estimates_by_method={"m": estimates()},
                                    dataset=ds, render_figures=False)
        trends = next(f for f in files if f.name == "booking_trends.csv")
        lines = trends.read_text().strip().splitlines()
        assert len(lines) == 1 + 6 * 2

    def test_empty_trace_header_only(self, tmp_path):
        files = report.build_report(tmp_path / "rep",
                                    estimates_by_method={"m": estimates()},
                                    traces={"m": FitTrace(names=("a",))},
                                    render_figures=False)
        trace = next(f for f in files if f.name == "trace_m.csv")
        assert trace.read_text() == "week_index,parameter_name,mu,sigma_diag\n"

    def test_summary_contains_metrics(self, tmp_path):
        ds = small_dataset()
        files = report.build_report(tmp_path / "rep",
                                    estimates_by_method={"m": estimates()},
                                    dataset=ds, render_figures=False)
        summary = next(f for f in files if f.name == "summary.txt")
        text = summary.read_text()
        assert "MAPE" in text and "wMAPE" in text

    def test_no_truth_no_metrics(self, tmp_path):
        ests = metrics.combo_sensitivities(-0.004 * np.ones(11), FeatureSchema())
        files = report.build_report(tmp_path / "rep", estimates_by_method={"m": ests},
                                    render_figures=False)
        summary = next(f for f in files if f.name == "summary.txt")
        assert "no truth" in summary.read_text()

    def test_side_by_side_methods(self, tmp_path):
        files = report.build_report(tmp_path / "rep",
                                    estimates_by_method={"a": estimates(),
                                                         "b": estimates()},
                                    render_figures=False)
        table = next(f for f in files if f.name == "sensitivity_table.csv")
        header = table.read_text().splitlines()[0]
        assert "alpha_a" in header and "alpha_b" in header


class TestSummarize:
    def test_weekly_totals(self):
        ds = small_dataset(n_weeks=3)
        summary = report.summarize_dataset(ds)
        assert summary.n_weeks == 3
        total = sum(summary.weekly_bookings.values())
        assert total == sum(r.bookings for r in ds.records)

    def test_price_stats_ordered(self):
        ds = small_dataset()
        summary = report.summarize_dataset(ds)
        for (pos, tf), (mean, p10, p50, p90) in summary.price_stats.items():
            assert p10 <= p50 <= p90
