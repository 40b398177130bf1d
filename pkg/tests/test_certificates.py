import dataclasses
import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from robustagg.aggregators import LogOdds, SimpleAverage
from robustagg.certificates import (
    HH,
    LL,
    KNOWN_ZERO_ONE_LB,
    UNKNOWN_STATE_LB,
    CertificateMismatch,
    build_known_marginal_certificate,
    build_unknown_state_certificate,
    build_xor_certificate,
    joint_regret,
    lower_bound_gap_report,
    marginal_gap,
    verify_certificate,
)
from robustagg.env import Signal, bayes_forecast, joint_signal_prob, prior_mean

from oracle import brute_regret, frac_params


def test_unknown_state_certificate_verifies():
    cert = build_unknown_state_certificate()
    rep = verify_certificate(cert, 1e-12)
    assert rep.passed
    assert rep.max_deviation < 1e-14
    assert abs(rep.value - 31 / 1326) < 1e-12
    assert sorted(set(cert.expected_responder.values())) == [7 / 78, 0.5, 71 / 78]


def test_unknown_state_value_exact_rational():
    # same mixture in exact arithmetic with the rational responder
    a = frac_params(0, "5/6", "1/2", 1, 1, "1/4", "1/4")
    b = frac_params("1/6", 1, "1/2", "3/4", "3/4", 0, 0)
    lo, hi = Fraction(1, 6), Fraction(5, 6)

    def responder(x1, x2):
        if x1 == x2 == lo:
            return Fraction(7, 78)
        if x1 == x2 == hi:
            return Fraction(71, 78)
        return Fraction(1, 2)

    total = (brute_regret(responder, a) + brute_regret(responder, b)) / 2
    assert total == Fraction(31, 1326)


def test_unknown_state_prior_means_differ():
    (_, a), (_, b) = build_unknown_state_certificate().mixture
    assert prior_mean(b) - prior_mean(a) > 0.1
    assert prior_mean(a) == pytest.approx(5 / 12)


def test_known_marginal_certificate_verifies():
    cert = build_known_marginal_certificate()
    rep = verify_certificate(cert, 1e-12)
    assert rep.passed
    assert abs(rep.value - (5 * math.sqrt(5) - 11) / 8) < 1e-12
    (_, a), (_, b) = cert.mixture
    assert marginal_gap(a, b) <= 1e-14


def test_known_marginal_examples():
    (_, a), (_, b) = build_known_marginal_certificate().mixture
    s = math.sqrt(5)
    assert joint_signal_prob(a, LL) == pytest.approx((1 + s) / 8, abs=1e-15)
    assert joint_signal_prob(b, LL) == pytest.approx((1 + s) / 8, abs=1e-15)
    assert bayes_forecast(a, HH) == pytest.approx((15 - 5 * s) / 4, abs=1e-15)


def test_perturbed_value_is_rejected():
    cert = build_unknown_state_certificate()
    bad = dataclasses.replace(cert, closed_form_value=cert.closed_form_value + 1e-6)
    with pytest.raises(CertificateMismatch) as info:
        verify_certificate(bad, 1e-12)
    assert info.value.field == "value"


def test_perturbed_responder_is_rejected():
    cert = build_known_marginal_certificate()
    table = dict(cert.expected_responder)
    key = next(iter(table))
    table[key] += 1e-9
    with pytest.raises(CertificateMismatch) as info:
        verify_certificate(dataclasses.replace(cert, expected_responder=table), 1e-12)
    assert info.value.field == "responder"


def test_tol_must_be_positive():
    with pytest.raises(ValueError):
        verify_certificate(build_unknown_state_certificate(), 0.0)


def test_xor_structure():
    x = build_xor_certificate()
    for expert in (1, 2):
        for s in Signal:
            assert x.report(expert, s) == 0.5
    assert x.bayes(LL) == 0.0 and x.bayes(HH) == 0.0
    assert joint_regret(lambda a, b, mu: 0.5, x) == 0.25


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0, allow_nan=False))
def test_xor_every_aggregator_at_least_quarter(c):
    x = build_xor_certificate()
    assert joint_regret(lambda a, b, mu: c, x) >= 0.25 - 1e-12


@pytest.mark.parametrize("spec", [LogOdds(0.585), SimpleAverage()])
def test_xor_named_rules(spec):
    assert joint_regret(spec, build_xor_certificate()) >= 0.25 - 1e-12


def test_joint_structure_rows_checked():
    from robustagg.certificates import JointStructure
    with pytest.raises(ValueError):
        JointStructure((0.0, 1.0), (0.5, 0.5), ({LL: 0.7}, {HH: 1.0}))


def test_gap_report():
    r = lower_bound_gap_report()
    assert r["separation"]
    assert r["separation_margin"] > 5e-4
    lowers = {(row.setting, row.structures): row.lower for row in r["rows"]}
    assert lowers[("unknown", "CI")] == pytest.approx(0.0233786, abs=1e-7)
    assert lowers[("known01", "CI")] == pytest.approx(0.0225424, abs=1e-7)
    assert UNKNOWN_STATE_LB == pytest.approx(31 / 1326)
    assert KNOWN_ZERO_ONE_LB == pytest.approx(0.022542, abs=1e-6)


def test_certificate_json_has_expression_tags():
    for cert, tag in ((build_unknown_state_certificate(), "31/1326"),
                      (build_known_marginal_certificate(), "(5*sqrt(5)-11)/8")):
        d = json.loads(json.dumps(cert.to_dict()))
        assert d["closed_form_expr"] == tag
        assert d["closed_form_value"] == cert.closed_form_value
