"""Worst-case regret analysis for aggregating two binary-signal expert forecasts."""

__version__ = "0.1.0"

from .aggregators import (
    KWW,
    ArithmeticMean,
    AveragePrior,
    Constant,
    FollowExpert,
    GeneralizedLogOdds,
    HeuristicPrior,
    Known,
    LogOdds,
    PrecisionWeighted,
    PriorMean,
    SimpleAverage,
    aggregate,
    parse_spec,
    spec_from_dict,
    spec_to_dict,
)
from .certificates import (
    build_known_marginal_certificate,
    build_unknown_state_certificate,
    build_xor_certificate,
    lower_bound_gap_report,
    verify_certificate,
)
from .env import (
    BinaryCIEnvironment,
    BlackwellEnvironment,
    MixtureEnvironment,
    Signal,
    SignalProfile,
    bayes_forecast,
    prior_mean,
    report,
)
from .regret import expected_regret, mixture_regret, optimal_pointwise_response
from .search import (
    Mode,
    SearchConfig,
    SearchDomain,
    blackwell_worst_case,
    optimize_aggregator,
    sweep_alpha,
    worst_case_regret,
)
