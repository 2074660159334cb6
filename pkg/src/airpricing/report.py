"""Report assembly: comparison tables, plot-ready CSVs, and rendered figures.

Everything is written into one report directory: a sensitivity comparison
table, per-method posterior traces, weekly booking trends and per-segment
price distributions (each as CSV plus a rendered PNG), and a plain-text
summary with the error metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dglm import FitTrace
from .features import Dataset, FeatureSchema, all_combo_designs
from .metrics import ComboEstimate, booking_weights_by_combo, mape, wmape

__all__ = ["DatasetSummary", "summarize_dataset", "build_report"]

_PRICE_QUANTILES = (0.1, 0.5, 0.9)


@dataclass
class DatasetSummary:
    """Weekly booking trends and per-(pos, tf) price distribution stats."""

    weekly_bookings: dict[tuple[int, int], float] = field(default_factory=dict)  # (week, pos)
    price_stats: dict[tuple[int, int], tuple[float, ...]] = field(default_factory=dict)
    n_weeks: int = 0
    n_pos: int = 2


def summarize_dataset(dataset: Dataset) -> DatasetSummary:
    summary = DatasetSummary(n_pos=dataset.schema.n_pos)
    weeks = dataset.weeks
    summary.n_weeks = int(weeks.max()) + 1 if len(weeks) else 0
    for rec, wk in zip(dataset.records, weeks):
        key = (int(wk), rec.pos)
        summary.weekly_bookings[key] = summary.weekly_bookings.get(key, 0.0) + rec.bookings
    prices: dict[tuple[int, int], list[float]] = {}
    for rec in dataset.records:
        prices.setdefault((rec.pos, rec.tf), []).append(rec.avg_price)
    for key, vals in prices.items():
        arr = np.asarray(vals)
        summary.price_stats[key] = (float(arr.mean()),
                                    *(float(np.quantile(arr, q)) for q in _PRICE_QUANTILES))
    return summary


def _write_table_csv(path: Path, estimates_by_method: dict[str, list[ComboEstimate]],
                     with_truth: bool) -> None:
    methods = list(estimates_by_method)
    grid = sorted({(e.pos, e.tf) for ests in estimates_by_method.values() for e in ests})
    header = ["pos", "tf"]
    if with_truth:
        header.append("alpha_true")
    for m in methods:
        header += [f"alpha_{m}", f"ape_{m}"]
    lines = [",".join(header)]
    by_method = {m: {(e.pos, e.tf): e for e in ests}
                 for m, ests in estimates_by_method.items()}
    for pos, tf in grid:
        row = [str(pos), str(tf)]
        if with_truth:
            truth = next((by_method[m][(pos, tf)].true_alpha for m in methods
                          if by_method[m][(pos, tf)].true_alpha is not None), None)
            row.append("" if truth is None else repr(truth))
        for m in methods:
            est = by_method[m][(pos, tf)]
            row.append("" if est.alpha is None else repr(est.alpha))
            row.append("" if est.ape is None else repr(est.ape))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _write_booking_trends(path: Path, summary: DatasetSummary) -> None:
    lines = ["week,pos,bookings"]
    for week in range(summary.n_weeks):
        for pos in range(summary.n_pos):
            val = summary.weekly_bookings.get((week, pos), 0.0)
            lines.append(f"{week},{pos},{val!r}")
    path.write_text("\n".join(lines) + "\n")


def _write_price_distribution(path: Path, summary: DatasetSummary) -> None:
    lines = ["pos,tf,mean,p10,p50,p90"]
    for (pos, tf), stats in sorted(summary.price_stats.items()):
        lines.append(f"{pos},{tf}," + ",".join(repr(s) for s in stats))
    path.write_text("\n".join(lines) + "\n")


def _render_booking_trends(path: Path, summary: DatasetSummary) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(summary.n_pos, 1, figsize=(9, 2.8 * summary.n_pos),
                             sharex=True, squeeze=False)
    weeks = np.arange(summary.n_weeks)
    for pos in range(summary.n_pos):
        vals = [summary.weekly_bookings.get((int(w), pos), 0.0) for w in weeks]
        ax = axes[pos, 0]
        ax.plot(weeks, vals, lw=1.2)
        ax.set_ylabel("bookings/week")
        ax.set_title(f"POS {pos}")
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("week")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_price_distribution(path: Path, summary: DatasetSummary) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, summary.n_pos, figsize=(5.5 * summary.n_pos, 3.6),
                             squeeze=False)
    for pos in range(summary.n_pos):
        tfs = sorted(t for (p, t) in summary.price_stats if p == pos)
        mean = [summary.price_stats[(pos, t)][0] for t in tfs]
        lo = [summary.price_stats[(pos, t)][1] for t in tfs]
        hi = [summary.price_stats[(pos, t)][3] for t in tfs]
        ax = axes[0, pos]
        ax.fill_between(tfs, lo, hi, alpha=0.25, label="p10-p90")
        ax.plot(tfs, mean, marker="o", label="mean")
        ax.set_xlabel("time frame")
        ax.set_ylabel("price")
        ax.set_title(f"POS {pos}")
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _trace_alphas(trace: FitTrace, schema: FeatureSchema) -> dict[tuple[int, int], np.ndarray]:
    designs = all_combo_designs(schema)
    mus = trace.mu_matrix()[:, :schema.w_dim]
    out = {}
    for key, w in designs.items():
        b = mus @ w
        with np.errstate(divide="ignore"):
            alpha = np.where(b < 0, -1.0 / b, np.nan)
        out[key] = alpha
    return out


def _render_convergence(path: Path, trace: FitTrace, schema: FeatureSchema,
                        theta_table: np.ndarray | None) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    alphas = _trace_alphas(trace, schema)
    weeks = np.asarray(trace.weeks)
    n_pos = schema.n_pos
    fig, axes = plt.subplots(n_pos, 1, figsize=(9.5, 3.2 * n_pos), sharex=True,
                             squeeze=False)
    cmap = plt.get_cmap("tab10")
    for pos in range(n_pos):
        ax = axes[pos, 0]
        for tf in range(schema.n_tf):
            color = cmap(tf % 10)
            ax.plot(weeks, alphas[(pos, tf)], color=color, lw=1.0, label=f"TF {tf}")
            if theta_table is not None:
                ax.axhline(1.0 / theta_table[pos, tf], color=color, ls="--", lw=0.6,
                           alpha=0.6)
        ax.set_ylabel("mean willingness-to-pay")
        ax.set_title(f"POS {pos}")
        ax.grid(alpha=0.3)
        if pos == 0:
            ax.legend(ncol=5, fontsize=8)
    axes[-1, 0].set_xlabel("week")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def build_report(out_dir: str | Path, *,
                 estimates_by_method: dict[str, list[ComboEstimate]],
                 dataset: Dataset | None = None,
                 traces: dict[str, FitTrace] | None = None,
                 schema: FeatureSchema = FeatureSchema(),
                 theta_table: np.ndarray | None = None,
                 render_figures: bool = True) -> list[Path]:
    """Write the report directory; returns the list of files created."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    with_truth = any(e.true_alpha is not None
                     for ests in estimates_by_method.values() for e in ests)

    table = out_dir / "sensitivity_table.csv"
    _write_table_csv(table, estimates_by_method, with_truth)
    written.append(table)

    summary_lines = []
    if dataset is not None:
        weights = booking_weights_by_combo(dataset)
        summary = summarize_dataset(dataset)
        trends = out_dir / "booking_trends.csv"
        _write_booking_trends(trends, summary)
        written.append(trends)
        price_csv = out_dir / "price_distribution.csv"
        _write_price_distribution(price_csv, summary)
        written.append(price_csv)
        if render_figures:
            fig1 = out_dir / "booking_trends.png"
            _render_booking_trends(fig1, summary)
            written.append(fig1)
            fig2 = out_dir / "price_distribution.png"
            _render_price_distribution(fig2, summary)
            written.append(fig2)
    else:
        weights = None

    for method, ests in estimates_by_method.items():
        if with_truth and all(e.ape is not None for e in ests):
            line = f"{method}: MAPE {mape(ests):.3f}%"
            if weights:
                line += f"  wMAPE {wmape(ests, weights):.3f}%"
            summary_lines.append(line)
        else:
            summary_lines.append(f"{method}: no truth attached; APE columns omitted")

    if traces:
        from .dglm import save_trace_csv
        for method, trace in traces.items():
            tpath = out_dir / f"trace_{method}.csv"
            save_trace_csv(trace, tpath)
            written.append(tpath)
            if render_figures and trace.weeks:
                fpath = out_dir / f"convergence_{method}.png"
                _render_convergence(fpath, trace, schema, theta_table)
                written.append(fpath)

    summary_path = out_dir / "summary.txt"
    summary_path.write_text("\n".join(summary_lines) + "\n")
    written.append(summary_path)
    return written
