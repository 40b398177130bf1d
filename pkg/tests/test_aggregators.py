import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from robustagg.aggregators import (
    KWW,
    ArithmeticMean,
    AveragePrior,
    BoundaryForecast,
    Constant,
    FollowExpert,
    GeneralizedLogOdds,
    HeuristicPrior,
    Known,
    LogOdds,
    MissingPriorMean,
    PrecisionWeighted,
    PriorMean,
    SimpleAverage,
    SpecError,
    heuristic_prior,
    label,
    logit,
    parse_spec,
    precision,
    spec_from_dict,
    spec_to_dict,
)

interior = st.floats(1e-6, 1 - 1e-6, allow_nan=False)
unit = st.floats(0.0, 1.0, allow_nan=False)


def expit(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_log_odds_value():
    # closed form: odds multiply with exponent alpha
    x1, x2, a = 0.3, 0.8, 0.585
    odds = ((x1 / (1 - x1)) * (x2 / (1 - x2))) ** a
    assert LogOdds(a)(x1, x2) == pytest.approx(odds / (1 + odds), abs=1e-15)


def test_log_odds_center_and_alpha_zero():
    assert LogOdds(0.585)(0.5, 0.5) == 0.5
    assert LogOdds(0.0)(0.1, 0.95) == 0.5


def test_log_odds_extremes():
    assert LogOdds(0.6)(0.0, 0.7) == 0.0
    assert LogOdds(0.6)(1.0, 0.3) == 1.0
    assert LogOdds(0.6)(0.0, 1.0) == 0.5      # opposite certainties cancel
    assert LogOdds(0.0)(0.0, 1.0) == 0.5      # zero weight on an infinite logit


def test_logit_extended():
    assert logit(0.0) == -math.inf and logit(1.0) == math.inf
    assert logit(0.5) == 0.0


def test_gen_log_odds_reduces_to_log_odds():
    for x1, x2, mu in [(0.2, 0.7, 0.4), (0.9, 0.6, 0.3)]:
        assert GeneralizedLogOdds(0.656, 0.0)(x1, x2, mu) == pytest.approx(LogOdds(0.656)(x1, x2), abs=1e-15)


def test_gen_log_odds_value():
    a, g, x1, x2, mu = 0.656089, 0.498268, 0.3, 0.9, 0.6
    z = a * (math.log(x1 / (1 - x1)) + math.log(x2 / (1 - x2))) - g * math.log(mu / (1 - mu))
    assert GeneralizedLogOdds(a, g)(x1, x2, mu) == pytest.approx(expit(z), abs=1e-14)
    assert GeneralizedLogOdds(a, g, mu=0.6)(x1, x2) == pytest.approx(expit(z), abs=1e-14)
    with pytest.raises(MissingPriorMean):
        GeneralizedLogOdds(a, g)(x1, x2)


def test_average_prior_is_bayes_with_mean_prior():
    x1, x2 = 0.3, 0.6
    m = 0.45
    num = x1 * x2 / m
    den = num + (1 - x1) * (1 - x2) / (1 - m)
    assert AveragePrior()(x1, x2) == pytest.approx(num / den, abs=1e-15)


def test_heuristic_prior_breakpoint():
    assert heuristic_prior(0.5, 0.5) == pytest.approx(0.49)
    assert heuristic_prior(0.6, 0.5) == pytest.approx(0.49 * 1.1 + 0.02)


def test_kww_value():
    x1, x2, lam = 0.2, 0.7, 0.8
    m = 0.45
    hi = (1 - m) ** (2 * lam - 1) * x1 * x2
    lo = m ** (2 * lam - 1) * (1 - x1) * (1 - x2)
    assert KWW(lam)(x1, x2) == pytest.approx(hi / (hi + lo), abs=1e-15)


def test_kww_half_is_log_odds_one():
    x = np.linspace(0.01, 0.99, 50)
    a, b = np.meshgrid(x, x)
    assert np.max(np.abs(KWW(0.5)(a, b) - LogOdds(1.0)(a, b))) < 1e-12


def test_kww_one_equals_average_prior_on_random_pairs():
    rng = np.random.default_rng(7)
    x1, x2 = rng.random(10_000), rng.random(10_000)
    assert np.max(np.abs(KWW(1.0)(x1, x2) - AveragePrior()(x1, x2))) <= 1e-12


def test_precision():
    assert precision(0.5) == 4.0
    with pytest.raises(BoundaryForecast):
        precision(0.0)


def test_precision_weighted_close_and_far():
    x1, x2 = 0.3, 0.5
    f1, f2 = 1 / (0.3 * 0.7), 4.0
    assert PrecisionWeighted()(x1, x2) == pytest.approx((f1 * x1 + f2 * x2) / (f1 + f2))
    x1, x2 = 0.1, 0.6
    w1, w2 = math.sqrt(1 / (0.1 * 0.9)), math.sqrt(1 / (0.6 * 0.4))
    assert PrecisionWeighted()(x1, x2) == pytest.approx((w1 * x1 + w2 * x2) / (w1 + w2))


def test_precision_weighted_boundaries():
    pw = PrecisionWeighted()
    assert pw(1.0, 0.3) == 1.0
    assert pw(0.4, 0.0) == 0.0
    assert pw(0.0, 1.0) == 0.5
    assert pw(1.0, 1.0) == 1.0


def test_constant_and_follow():
    assert Constant(0.5)(0.1, 0.9) == 0.5
    assert FollowExpert(2)(0.1, 0.9) == 0.9
    assert FollowExpert(1)(0.1, 0.9) == 0.1
    with pytest.raises(SpecError):
        FollowExpert(3)
    assert PriorMean()(0.1, 0.2, 0.37) == 0.37
    with pytest.raises(MissingPriorMean):
        PriorMean()(0.1, 0.2)


def test_known_policy():
    assert Known(0.3).resolve(0.1, 0.9, None) == 0.3
    assert Known().resolve(0.1, 0.9, 0.6) == 0.6
    assert ArithmeticMean().resolve(0.1, 0.9, 0.6) == 0.5
    assert AveragePrior(Known()).uses_env_mean
    assert not AveragePrior(Known(0.3)).uses_env_mean
    assert not KWW(0.8).uses_env_mean


ALL = [LogOdds(0.585), GeneralizedLogOdds(0.6, 0.4), GeneralizedLogOdds(0.6, 0.4, 0.3),
       SimpleAverage(), AveragePrior(), AveragePrior(Known(0.4)), AveragePrior(Known()),
       HeuristicPrior(), KWW(0.8), KWW(0.8, Known()), PrecisionWeighted(), Constant(0.25),
       PriorMean(), FollowExpert(1)]


@pytest.mark.parametrize("spec", ALL, ids=label)
def test_spec_roundtrip(spec):
    d = spec_to_dict(spec)
    assert spec_from_dict(json.loads(json.dumps(d))) == spec
    assert parse_spec(json.dumps(d)) == spec


@pytest.mark.parametrize("spec", ALL, ids=label)
def test_vectorized_matches_scalar(spec):
    rng = np.random.default_rng(3)
    x1, x2, mu = rng.random(20), rng.random(20), rng.random(20)
    vec = np.asarray(spec(x1, x2, mu))
    for i in range(20):
        assert vec[i] == pytest.approx(float(spec(float(x1[i]), float(x2[i]), float(mu[i]))), abs=1e-15)


def test_parse_spec_from_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"rule": "kww", "lambda": 0.8, "mu_policy": {"known": 0.4}}')
    assert parse_spec(str(p)) == KWW(0.8, Known(0.4))


@pytest.mark.parametrize("bad", [
    {"rule": "nope"}, {"alpha": 0.5}, {"rule": "log_odds"}, {"rule": "log_odds", "alpha": 2},
    {"rule": "kww", "lambda": 0.5, "mu_policy": "weird"}, {"rule": "gen_log_odds", "alpha": 0.5, "gamma": 3},
    {"rule": "log_odds", "alpha": "x"},
])
def test_bad_specs(bad):
    with pytest.raises(SpecError):
        spec_from_dict(bad)


def test_malformed_json():
    with pytest.raises(SpecError):
        parse_spec("{not json")


# --- properties ----------------------------------------------------------------

@settings(max_examples=400, deadline=None)
@given(unit, unit, unit)
def test_log_odds_symmetric(a, x1, x2):
    assert LogOdds(a)(x1, x2) == LogOdds(a)(x2, x1)


@settings(max_examples=400, deadline=None)
@given(unit, interior, interior)
def test_log_odds_complement(a, x1, x2):
    assert LogOdds(a)(1 - x1, 1 - x2) == pytest.approx(1 - LogOdds(a)(x1, x2), abs=1e-12)


@settings(max_examples=400, deadline=None)
@given(st.floats(0.01, 1.0), interior, interior, interior)
def test_log_odds_monotone(a, x1, y1, x2):
    lo, hi = sorted((x1, y1))
    assume(hi - lo > 1e-9)
    assert LogOdds(a)(lo, x2) <= LogOdds(a)(hi, x2)


@settings(max_examples=300, deadline=None)
@given(interior, interior)
def test_outputs_in_unit_interval(x1, x2):
    for spec in ALL:
        v = float(spec(x1, x2, 0.5))
        assert 0.0 <= v <= 1.0


def test_monotone_on_grid():
    x = np.linspace(0.0, 1.0, 101)
    a, b = np.meshgrid(x, x, indexing="ij")
    for alpha in (0.25, 0.585, 1.0):
        out = LogOdds(alpha)(a, b)
        assert np.all(np.diff(out, axis=0) >= -1e-15)
        assert np.all(np.diff(out, axis=1) >= -1e-15)
