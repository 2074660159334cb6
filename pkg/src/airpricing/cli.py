"""Command-line pipeline: simulate -> fit-first-stage -> fit-two-stage /
fit-direct -> evaluate -> price.

Every subcommand reads an optional key/value config file, accepts repeated
`--set section.key=value` overrides, writes a provenance sidecar next to each
artifact, and is a deterministic function of (inputs, config, seed).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import configio, dglm, forest, metrics, policy, report, widedeep
from .errors import ConfigError, DataError, ToolkitError
from .features import (Dataset, FeatureSchema, all_combo_designs,
                       elasticity_design_names, load_csv, save_csv)
from .simulate import (ArrivalRateSpec, GroundTruthConfig, default_theta_table,
                       generate_history)

__all__ = ["main"]


def _get(cfg: dict[str, str], key: str, cast, default):
    if key not in cfg:
        return default
    try:
        return cast(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {cfg[key]!r}") from exc


def _get_list(cfg: dict[str, str], key: str, default):
    if key not in cfg:
        return default
    try:
        return tuple(float(v.strip()) for v in cfg[key].split(","))
    except ValueError as exc:
        raise ConfigError(f"bad list for {key}: {cfg[key]!r}") from exc


def build_theta_table(cfg: dict[str, str]) -> np.ndarray:
    table = default_theta_table().copy()
    for key, val in cfg.items():
        if key.startswith("sim.theta."):
            parts = key.split(".")
            if len(parts) != 4:
                raise ConfigError(f"theta override must be sim.theta.POS.TF, got {key!r}")
            p, t = int(parts[2]), int(parts[3])
            if not (0 <= p < table.shape[0] and 0 <= t < table.shape[1]):
                raise ConfigError(f"theta override out of range: {key!r}")
            table[p, t] = float(val)
    return table


def build_ground_truth_config(cfg: dict[str, str], seed: int | None = None) -> GroundTruthConfig:
    theta = build_theta_table(cfg)
    n_pos, n_tf = theta.shape
    weights = []
    default_weights = ArrivalRateSpec().pos_tf_weights
    for p in range(n_pos):
        w = _get_list(cfg, f"arrival.weights.{p}", tuple(default_weights[p]))
        weights.append(w)
    spec = ArrivalRateSpec(
        base_rate=_get(cfg, "arrival.base_rate", float, ArrivalRateSpec.base_rate),
        woy_amplitude=_get(cfg, "arrival.woy_amplitude", float, ArrivalRateSpec.woy_amplitude),
        woy_peak_week=_get(cfg, "arrival.woy_peak_week", int, ArrivalRateSpec.woy_peak_week),
        dow_multipliers=_get_list(cfg, "arrival.dow_multipliers",
                                  ArrivalRateSpec.dow_multipliers),
        pos_tf_weights=np.asarray(weights),
    )
    horizon = _get(cfg, "sim.horizon_days", int, 365)
    boundaries = cfg.get("sim.tf_boundaries")
    if boundaries is not None:
        tf_boundaries = tuple(int(v.strip()) for v in boundaries.split(","))
    else:
        tf_boundaries = tuple(i * horizon // n_tf for i in range(n_tf))
    sub_steps = _get(cfg, "sim.sub_steps_per_day", int, 0)
    return GroundTruthConfig(
        capacity=_get(cfg, "sim.capacity", int, 100),
        horizon_days=horizon,
        tf_boundaries=tf_boundaries,
        theta_table=theta,
        arrival_spec=spec,
        price_noise_sd=_get(cfg, "sim.price_noise_sd", float, 20.0),
        num_departure_days=_get(cfg, "sim.num_departure_days", int, 730),
        rng_seed=seed if seed is not None else _get(cfg, "sim.rng_seed", int, 0),
        sub_steps_per_day=sub_steps or None,
    )


def build_schema(cfg: dict[str, str]) -> FeatureSchema:
    return FeatureSchema(
        n_pos=_get(cfg, "schema.n_pos", int, 2),
        n_tf=_get(cfg, "schema.n_tf", int, 10),
        horizon_days=_get(cfg, "sim.horizon_days", int, 365),
        w_dbd_degree=_get(cfg, "schema.w_dbd_degree", int, 0),
    )


def _load_effective(args) -> dict[str, str]:
    cfg = configio.read_config(getattr(args, "config", None))
    return configio.apply_overrides(cfg, getattr(args, "set", []) or [])


def cmd_simulate(args) -> int:
    cfg = _load_effective(args)
    gt = build_ground_truth_config(cfg, seed=args.seed)
    records = generate_history(gt)
    schema = FeatureSchema(n_pos=gt.n_pos, n_tf=gt.n_tf, horizon_days=gt.horizon_days)
    dataset = Dataset.from_records(records, schema)
    save_csv(dataset, args.out)
    configio.write_provenance(args.out, cfg, gt.rng_seed)
    print(f"simulated {len(records)} records over {gt.num_departure_days} departures "
          f"-> {args.out}")
    return 0


def cmd_fit_first_stage(args) -> int:
    cfg = _load_effective(args)
    schema = build_schema(cfg)
    dataset = load_csv(args.transactions, schema)
    plan = forest.CrossFitPlan.build(len(dataset),
                                     n_folds=args.folds, shuffle_seed=args.seed)
    fc = forest.ForestConfig(
        n_trees=_get(cfg, "firststage.n_trees", int, 10),
        max_depth=_get(cfg, "firststage.max_depth", int, 12),
        min_leaf_size=_get(cfg, "firststage.min_leaf_size", int, 5),
        seed=args.seed,
    )
    preds = forest.cross_fit(dataset, plan, fc)
    forest.save_predictions_csv(preds, args.out)
    configio.write_provenance(args.out, cfg, args.seed)
    print(f"cross-fitted {plan.n_folds} folds over {len(dataset)} records -> {args.out}")
    return 0


def _check_alignment(dataset: Dataset, preds: forest.NuisancePredictions) -> None:
    if preds.obs_index is None or len(preds.p_hat) != len(dataset):
        raise DataError("predictions do not cover the transaction records")
    if not np.array_equal(np.asarray(preds.obs_index), dataset.obs_index):
        raise DataError("predictions obs_index does not align with the transactions")


def cmd_fit_two_stage(args) -> int:
    cfg = _load_effective(args)
    schema = build_schema(cfg)
    dataset = load_csv(args.transactions, schema)
    preds = forest.load_predictions_csv(args.predictions)
    _check_alignment(dataset, preds)
    multiscale = bool(args.multiscale)
    dim_beta = (1 if multiscale else 0) if args.offset_mode == "fixed_offset" else \
        (2 if multiscale else 1)
    names = tuple(f"theta[{n}]" for n in elasticity_design_names(schema))
    if args.offset_mode == "learned_coefficient":
        names += ("beta[log_y]",)
    if multiscale:
        names += ("beta[log_u]",)
    prior = dglm.default_prior(schema.w_dim, dim_beta,
                               variance=args.prior_variance,
                               discount_theta=args.discount_theta,
                               discount_beta=args.discount_beta,
                               names=names)
    result = dglm.fit_sequence(dataset, preds, prior, mode=args.mode,
                               offset_mode=args.offset_mode, multiscale=multiscale)
    dglm.save_posterior(result.state, args.out, kind="two-stage", mode=args.mode,
                        offset_mode=args.offset_mode,
                        extra={"n_pos": str(schema.n_pos), "n_tf": str(schema.n_tf)})
    configio.write_provenance(args.out, cfg, args.seed)
    if args.trace_out:
        dglm.save_trace_csv(result.trace, args.trace_out)
    print(f"fitted {result.n_observations} observations -> {args.out}")
    return 0


def cmd_fit_direct(args) -> int:
    cfg = _load_effective(args)
    schema = build_schema(cfg)
    dataset = load_csv(args.transactions, schema)
    names = elasticity_design_names(schema)
    truth = build_theta_table(cfg) if args.with_truth else None
    mapes = []
    out = Path(args.out)
    for run in range(args.runs):
        seed = args.seed + run
        tc = widedeep.TrainConfig(
            learning_rate=_get(cfg, "direct.learning_rate", float, 1e-3),
            batch_size=_get(cfg, "direct.batch_size", int, 256),
            max_epochs=_get(cfg, "direct.max_epochs", int, 500),
            patience_epochs=_get(cfg, "direct.patience_epochs", int, 20),
            validation_fraction=_get(cfg, "direct.validation_fraction", float, 0.15),
            hidden_units=_get(cfg, "direct.hidden_units", int, 50),
            rng_seed=seed,
        )
        net, log = widedeep.train(dataset, tc)
        theta = widedeep.extract_theta(net)
        path = out if args.runs == 1 else out.with_name(f"{out.stem}_run{run}{out.suffix}")
        widedeep.save_theta(theta, names, path, extra={"seed": str(seed)})
        if args.log_out:
            lpath = Path(args.log_out)
            if args.runs > 1:
                lpath = lpath.with_name(f"{lpath.stem}_run{run}{lpath.suffix}")
            widedeep.save_training_log_csv(log, lpath)
        if truth is not None:
            ests = metrics.attach_truth(metrics.combo_sensitivities(theta, schema), truth)
            mapes.append(metrics.mape(ests))
        print(f"run {run}: trained {len(log)} epochs (seed {seed}) -> {path}")
    configio.write_provenance(args.out, cfg, args.seed)
    if mapes:
        print(f"mean MAPE over {len(mapes)} runs: {float(np.mean(mapes)):.3f}%")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_effective(args)
    schema = build_schema(cfg)
    dataset = load_csv(args.transactions, schema)
    truth = build_theta_table(cfg) if args.with_truth else None
    estimates_by_method: dict[str, list[metrics.ComboEstimate]] = {}
    traces: dict[str, dglm.FitTrace] = {}
    for spec_item in args.posterior or []:
        name, path = _parse_named(spec_item)
        state, _ = dglm.load_posterior(path)
        theta = state.mu[:schema.w_dim]
        estimates_by_method[name] = metrics.combo_sensitivities(theta, schema)
    for spec_item in args.direct_theta or []:
        name, path = _parse_named(spec_item)
        theta, _, _ = widedeep.load_theta(path)
        estimates_by_method[name] = metrics.combo_sensitivities(theta, schema)
    if not estimates_by_method:
        raise ConfigError("evaluate needs at least one --posterior or --direct-theta")
    if truth is not None:
        for ests in estimates_by_method.values():
            metrics.attach_truth(ests, truth)
    for spec_item in args.trace or []:
        name, path = _parse_named(spec_item)
        traces[name] = _load_trace_csv(path)
    files = report.build_report(args.out, estimates_by_method=estimates_by_method,
                                dataset=dataset, traces=traces or None, schema=schema,
                                theta_table=truth,
                                render_figures=not args.no_figures)
    configio.write_provenance(Path(args.out) / "report", cfg, None)
    print(f"wrote {len(files)} report files under {args.out}")
    return 0


def _parse_named(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"expected NAME=PATH, got {item!r}")
    name, path = item.split("=", 1)
    return name.strip(), path.strip()


def _load_trace_csv(path: str | Path) -> dglm.FitTrace:
    import csv as _csv

    trace = dglm.FitTrace()
    rows: dict[int, dict[str, tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header != ["week_index", "parameter_name", "mu", "sigma_diag"]:
            raise DataError(f"{path}: unexpected trace header {header!r}")
        for row in reader:
            week = int(row[0])
            rows.setdefault(week, {})[row[1]] = (float(row[2]), float(row[3]))
    names: tuple[str, ...] = ()
    for week in sorted(rows):
        entries = rows[week]
        if not names:
            names = tuple(entries)
            trace.names = names
        trace.weeks.append(week)
        trace.mu.append(np.array([entries[n][0] for n in names]))
        trace.sigma_diag.append(np.array([entries[n][1] for n in names]))
    return trace


def cmd_price(args) -> int:
    state, meta = dglm.load_posterior(args.posterior)
    n_pos = int(meta.get("n_pos", 2))
    n_tf = int(meta.get("n_tf", 10))
    schema = FeatureSchema(n_pos=n_pos, n_tf=n_tf)
    designs = all_combo_designs(schema)
    if (args.pos, args.tf) not in designs:
        raise ConfigError(f"(pos={args.pos}, tf={args.tf}) outside the design "
                          f"({n_pos} POS, {n_tf} TF)")
    w = designs[(args.pos, args.tf)]
    ctx = policy.PricingContext(w=w, cost=args.cost, p_lb=args.p_lb, p_ub=args.p_ub,
                                mu_theta=state.mu_theta, sigma_theta=state.sigma_theta)
    rng = np.random.default_rng(args.seed)
    ucb = policy.UcbConfig(quantile=args.quantile)
    if args.policy == "greedy":
        price = policy.greedy_price(ctx)
    elif args.policy == "taylor":
        price = policy.grid_optimize(ctx, margin="taylor", grid_points=args.grid_points)
    elif args.policy == "tn":
        price = policy.grid_optimize(ctx, margin="tn", grid_points=args.grid_points)
    elif args.policy == "thompson":
        price = policy.thompson_price(ctx, rng)
    elif args.policy == "ucb-taylor":
        price = policy.ucb_taylor_price(ctx, ucb)
    elif args.policy == "ucb-tn":
        price = policy.ucb_tn_price(ctx, ucb)
    else:
        raise ConfigError(f"unknown policy {args.policy!r}")
    print(f"{price:.6f}")
    if args.curve_out:
        grid = np.linspace(args.p_lb, args.p_ub, args.grid_points)
        with open(args.curve_out, "w") as fh:
            fh.write("price,margin_taylor,margin_tn\n")
            for p in grid:
                taylor = policy.expected_margin_taylor(p, ctx)
                try:
                    tn = policy.expected_margin_tn(p, ctx)
                except ToolkitError:
                    tn = float("nan")
                fh.write(f"{float(p)!r},{float(taylor)!r},{float(tn)!r}\n")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key/value config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config entry (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airpricing",
        description="Simulation, price-sensitivity estimation, and pricing policies "
                    "for airline-style transaction data.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="generate a synthetic transaction history")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("fit-first-stage", help="cross-fitted price/bookings regressors")
    _add_common(p)
    p.add_argument("--transactions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_first_stage)

    p = subs.add_parser("fit-two-stage", help="sequential Bayesian GLM on the reduced form")
    _add_common(p)
    p.add_argument("--transactions", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-out", default=None)
    p.add_argument("--mode", choices=["moment_match", "laplace"], default="moment_match")
    p.add_argument("--offset-mode", choices=["fixed_offset", "learned_coefficient"],
                   default="fixed_offset")
    p.add_argument("--multiscale", action="store_true")
    p.add_argument("--prior-variance", type=float, default=10.0)
    p.add_argument("--discount-theta", type=float, default=1.0)
    p.add_argument("--discount-beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_two_stage)

    p = subs.add_parser("fit-direct", help="joint wide-linear/deep Poisson regression")
    _add_common(p)
    p.add_argument("--transactions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log-out", default=None)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-truth", action="store_true",
                   help="report MAPE against the configured sensitivity table")
    p.set_defaults(func=cmd_fit_direct)

    p = subs.add_parser("evaluate", help="comparison tables, trend CSVs, figures")
    _add_common(p)
    p.add_argument("--transactions", required=True)
    p.add_argument("--posterior", action="append", metavar="NAME=PATH")
    p.add_argument("--direct-theta", action="append", metavar="NAME=PATH")
    p.add_argument("--trace", action="append", metavar="NAME=PATH")
    p.add_argument("--out", required=True)
    p.add_argument("--with-truth", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("price", help="price one request from a posterior export")
    p.add_argument("--posterior", required=True)
    p.add_argument("--pos", type=int, required=True)
    p.add_argument("--tf", type=int, required=True)
    p.add_argument("--cost", type=float, required=True)
    p.add_argument("--p-lb", type=float, default=0.0)
    p.add_argument("--p-ub", type=float, default=10000.0)
    p.add_argument("--policy", default="greedy",
                   choices=["greedy", "taylor", "tn", "thompson", "ucb-taylor", "ucb-tn"])
    p.add_argument("--quantile", type=float, default=0.9)
    p.add_argument("--grid-points", type=int, default=1001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve-out", default=None)
    p.set_defaults(func=cmd_price)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
