"""Price-sensitivity estimation and dynamic pricing toolkit.

Pipeline: simulate confounded airline-style transactions, estimate
feature-dependent price sensitivity either directly (joint wide-linear/deep
Poisson regression) or robustly in two stages (cross-fitted forests plus a
sequential Bayesian Poisson GLM), then price requests under greedy, Thompson
sampling, or UCB policies.
"""

from .dglm import (FitResult, FitTrace, GammaBelief, ObservationStep,
                   PosteriorState, conjugate_posterior_moments, default_prior,
                   evolve, fit_sequence, gamma_moment_match, laplace_update,
                   linear_bayes_update, load_posterior, prior_predictive_moments,
                   save_posterior)
from .errors import (ConfigError, ConvergenceError, DataError, DomainError,
                     PolicyError, SchemaError, ToolkitError)
from .features import (Dataset, ElasticityDesign, FeatureSchema, FeatureVector,
                       all_combo_designs, build_elasticity_design, encode_features,
                       fourier_seasonality, load_csv, save_csv)
from .forest import (CrossFitPlan, ForestConfig, NuisancePredictions,
                     RegressionForest, aggregate_group, cross_fit, fit_forest,
                     fit_group_model)
from .metrics import (ComboEstimate, attach_truth, booking_weights_by_combo,
                      combo_sensitivities, mape, wmape)
from .policy import (PricingContext, UcbConfig, expected_margin_taylor,
                     expected_margin_tn, greedy_price, grid_optimize,
                     thompson_price, ucb_taylor_price, ucb_tn_price)
from .report import build_report, summarize_dataset
from .simulate import (ArrivalRateSpec, BidPriceTable, GroundTruthConfig,
                       SimulationOracle, TransactionRecord, generate_history,
                       generate_history_with_oracle, ground_truth_optimal_price,
                       solve_bid_prices)
from .specfun import (SpecFunTolerance, digamma, lambert_w0, std_normal_cdf,
                      std_normal_pdf, std_normal_quantile, trigamma)
from .widedeep import (TrainConfig, WideDeepNet, backward, extract_theta, forward,
                       poisson_nll, train)

__version__ = "0.1.0"
