import math
from fractions import Fraction

import numpy as np
import pytest

from robustagg.aggregators import (
    KWW,
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
    label,
)
from robustagg.env import (
    BinaryCIEnvironment,
    BlackwellEnvironment,
    MixtureEnvironment,
    lift_aggregator,
    prior_mean,
    rescale_to_unit,
)
from robustagg.regret import (
    AmbiguousReportMatching,
    RegretReport,
    batch_regret,
    blackwell_regret,
    blackwell_regret_batch,
    ci_regret_batch,
    expected_regret,
    expected_regret_via_outcomes,
    mixture_regret,
    optimal_pointwise_response,
)

from oracle import brute_regret, frac_params

VARIANTS = [LogOdds(0.585), LogOdds(0.0), LogOdds(1.0), GeneralizedLogOdds(0.656089, 0.498268),
            SimpleAverage(), AveragePrior(), AveragePrior(Known()), HeuristicPrior(), KWW(0.8),
            KWW(1.0), KWW(0.8, Known()), PrecisionWeighted(), Constant(0.5), PriorMean(),
            FollowExpert(2)]


def random_envs(n, seed, nondegenerate=False):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        v = rng.random(7)
        t1, t2 = sorted(v[:2])
        if nondegenerate and t2 - t1 < 1e-3:
            continue
        out.append(BinaryCIEnvironment(t1, t2, *v[2:]))
    return out


REPORTED_WORST = BinaryCIEnvironment.symmetric(0.21097, 1.0, 0.5673928747956352, 0.7413286213160787, 0.0)


def test_worst_instance_log_odds():
    assert expected_regret(LogOdds(0.585), REPORTED_WORST).total == pytest.approx(0.025512, abs=1e-5)


def test_bayes_identity_anchor():
    # an aggregator that happens to equal the Bayes forecast has zero regret
    env = BinaryCIEnvironment.symmetric(0.0, 1.0, 0.5, 1.0, 0.0)
    assert expected_regret(SimpleAverage(), env).total == 0.0
    env = BinaryCIEnvironment(0.0, 1.0, 0.3, 0.6, 1.0, 0.2, 0.0)
    assert expected_regret(FollowExpert(2), env).total == 0.0


def test_constant_on_unknown_state_component():
    env = BinaryCIEnvironment.symmetric(0.0, 5 / 6, 0.5, 1.0, 0.25)
    # P and Bayes targets by hand: LL 17/32 -> 5/102, others -> 5/6
    want = 17 / 32 * (0.5 - 5 / 102) ** 2 + 15 / 32 * (0.5 - 5 / 6) ** 2
    assert expected_regret(Constant(0.5), env).total == pytest.approx(want, abs=1e-15)


def test_exact_rational_simple_average():
    params = frac_params("1/7", "5/6", "2/3", "3/5", "1/4", "1/8", "1/2")
    want = brute_regret(lambda a, b: (a + b) / 2, params)
    assert isinstance(want, Fraction)
    env = BinaryCIEnvironment(*map(float, params))
    assert expected_regret(SimpleAverage(), env).total == pytest.approx(float(want), abs=1e-15)


@pytest.mark.parametrize("spec", VARIANTS, ids=label)
def test_equivalence_with_loss_definition(spec):
    worst = 0.0
    for env in random_envs(1000, seed=11):
        a = expected_regret(spec, env).total
        b = brute_regret(lambda x1, x2, mu: float(spec(x1, x2, mu)), tuple(env.as_array()), mu_arg=True)
        worst = max(worst, abs(a - b))
        assert abs(a - expected_regret_via_outcomes(spec, env)) <= 1e-12
    assert worst <= 1e-12


@pytest.mark.parametrize("spec", VARIANTS, ids=label)
def test_rescaling_identity(spec):
    worst = 0.0
    for env in random_envs(1000, seed=12, nondegenerate=True):
        unit, delta, offset = rescale_to_unit(env)
        lifted = lift_aggregator(spec, delta, offset)
        lhs = expected_regret(spec, env).total
        rhs = delta ** 2 * expected_regret(lifted, unit).total
        worst = max(worst, abs(lhs - rhs))
    assert worst <= 1e-10


@pytest.mark.parametrize("spec", VARIANTS, ids=label)
def test_batch_kernel_matches_scalar(spec):
    envs = random_envs(300, seed=13)
    params = np.array([e.as_array() for e in envs])
    fast = ci_regret_batch(spec, params)
    slow = np.array([expected_regret(spec, e).total for e in envs])
    assert np.max(np.abs(fast - slow)) <= 1e-12


def test_batch_regret_serial_matches_parallel():
    envs = random_envs(50, seed=14)
    assert batch_regret(LogOdds(0.585), envs, 1) == batch_regret(LogOdds(0.585), envs, 2)


def test_regret_report_serialization():
    rep = expected_regret(LogOdds(0.585), REPORTED_WORST)
    assert isinstance(rep, RegretReport)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "profile,prob,x1,x2,bayes,output,sq_error"
    assert len(lines) == 1 + len(rep.rows)
    d = rep.to_dict()
    assert d["total"] == rep.total
    assert math.fsum(r["prob"] for r in d["rows"]) == pytest.approx(1.0)


def test_optimal_responder_beats_perturbations():
    a = BinaryCIEnvironment.symmetric(0.0, 5 / 6, 0.5, 1.0, 0.25)
    b = BinaryCIEnvironment.symmetric(1 / 6, 1.0, 0.5, 0.75, 0.0)
    mix = MixtureEnvironment(((0.5, a), (0.5, b)))
    table = optimal_pointwise_response(mix)
    base = mixture_regret(table, mix)
    for i in range(len(table)):
        for eps in (1e-4, -1e-4):
            assert mixture_regret(table.perturbed(i, eps), mix) > base


def test_ambiguous_matching():
    a = BinaryCIEnvironment.symmetric(0.0, 1.0, 0.5, 0.75, 0.25)
    b = BinaryCIEnvironment.symmetric(0.0, 1.0 - 1e-7, 0.5, 0.75, 0.25)
    with pytest.raises(AmbiguousReportMatching):
        optimal_pointwise_response(MixtureEnvironment(((0.5, a), (0.5, b))))


def test_blackwell_follow_informed_is_zero():
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = rng.random(7)
        t1, t2 = sorted(v[:2])
        env = BlackwellEnvironment(t1, t2, *v[2:])
        assert blackwell_regret(FollowExpert(2), env) == 0.0


def test_blackwell_uniform_garbling_simple_average():
    # expert 1 learns nothing, so the average is off by |x2 - 1/2| / 2
    env = BlackwellEnvironment(0.0, 1.0, 0.5, 1.0, 0.0, 0.5, 0.5)
    assert blackwell_regret(SimpleAverage(), env) == pytest.approx(0.0625, abs=1e-15)


def test_blackwell_batch_matches_scalar():
    rng = np.random.default_rng(6)
    rows = []
    for _ in range(300):
        v = rng.random(7)
        v[:2] = np.sort(v[:2])
        rows.append(v)
    params = np.array(rows)
    for spec in (PrecisionWeighted(), SimpleAverage(), LogOdds(0.585)):
        fast = blackwell_regret_batch(spec, params)
        slow = [blackwell_regret(spec, BlackwellEnvironment.from_array(r)) for r in params]
        assert np.max(np.abs(fast - np.array(slow))) <= 1e-12


def test_prior_mean_rule_regret():
    env = BinaryCIEnvironment.symmetric(0.0, 1.0, 0.5, 1.0, 0.0)
    assert prior_mean(env) == 0.5
    assert expected_regret(PriorMean(), env).total == pytest.approx(0.25)


def test_bayes_anchor_gen_log_odds_on_unit_states():
    # with states {0, 1} and independent signals, logit(bayes) = logit x1 + logit x2 - logit mu
    anchor = GeneralizedLogOdds(1.0, 1.0)
    rng = np.random.default_rng(21)
    for _ in range(300):
        v = 0.02 + 0.96 * rng.random(5)
        env = BinaryCIEnvironment(0.0, 1.0, *v)
        assert expected_regret(anchor, env).total <= 1e-24
        assert abs(expected_regret_via_outcomes(anchor, env)) <= 1e-12


def test_degenerate_state_constant_output():
    env = BinaryCIEnvironment.symmetric(0.37, 0.37, 0.4, 0.3, 0.8)
    assert expected_regret(Constant(0.37), env).total == pytest.approx(0.0, abs=1e-30)
    assert abs(expected_regret_via_outcomes(Constant(0.37), env)) <= 1e-15


def test_mixture_linearity():
    envs = random_envs(3, seed=22)
    spec = LogOdds(0.585)
    whole = MixtureEnvironment(((0.3, envs[0]), (0.7, envs[1])))
    split = MixtureEnvironment(((0.1, envs[0]), (0.2, envs[0]), (0.7, envs[1])))
    assert mixture_regret(spec, whole) == pytest.approx(mixture_regret(spec, split), abs=1e-15)
    single = MixtureEnvironment(((1.0, envs[2]),))
    assert mixture_regret(spec, single) == expected_regret(spec, envs[2]).total


def test_single_component_responder_is_bayes():
    env = random_envs(1, seed=23)[0]
    table = optimal_pointwise_response(MixtureEnvironment(((1.0, env),)))
    assert mixture_regret(table, MixtureEnvironment(((1.0, env),))) == pytest.approx(0.0, abs=1e-30)


@pytest.mark.parametrize("eps", [1e-3, -1e-3])
def test_responder_perturbation_never_helps(eps):
    from robustagg.certificates import build_known_marginal_certificate, build_unknown_state_certificate
    for cert in (build_unknown_state_certificate(), build_known_marginal_certificate()):
        table = optimal_pointwise_response(cert.mixture)
        base = mixture_regret(table, cert.mixture)
        for i in range(len(table)):
            assert mixture_regret(table.perturbed(i, eps), cert.mixture) >= base


def test_nonnegative_on_random_envs():
    for env in random_envs(300, seed=24):
        for spec in VARIANTS:
            assert expected_regret(spec, env).total >= -1e-15


def test_blackwell_identity_garbling_precision_weighted():
    env = BlackwellEnvironment(0.1, 0.9, 0.4, 0.7, 0.2, 1.0, 0.0)
    assert blackwell_regret(PrecisionWeighted(), env) == 0.0
