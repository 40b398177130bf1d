"""Adversarial mixtures that certify lower bounds on minimax regret.

A certificate is a finite mixture of environments together with the values
its construction is supposed to produce: reports, joint profile
probabilities, Bayes targets, the best pointwise response and the resulting
mixture regret.  :func:`verify_certificate` recomputes all of them from the
raw mixture and compares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .env import (
    PROFILES,
    BinaryCIEnvironment,
    MixtureEnvironment,
    Signal,
    SignalProfile,
    bayes_forecast,
    joint_signal_prob,
    marginal_signal_prob,
    prior_mean,
    report,
)
from .regret import mixture_regret, optimal_pointwise_response

SQRT5 = math.sqrt(5.0)

LL = SignalProfile(Signal.LOW, Signal.LOW)
LH = SignalProfile(Signal.LOW, Signal.HIGH)
HL = SignalProfile(Signal.HIGH, Signal.LOW)
HH = SignalProfile(Signal.HIGH, Signal.HIGH)

UNKNOWN_STATE_LB = 31 / 1326
KNOWN_ZERO_ONE_LB = (5 * SQRT5 - 11) / 8
GENERAL_TIGHT = 0.25


class CertificateMismatch(AssertionError):
    """A recomputed quantity disagrees with the certificate."""

    def __init__(self, field_name: str, deviation: float, report: "VerificationReport"):
        super().__init__(f"certificate field {field_name!r} off by {deviation:.3g}")
        self.field = field_name
        self.deviation = deviation
        self.report = report


@dataclass(frozen=True)
class MixtureCertificate:
    name: str
    mixture: MixtureEnvironment
    expected_reports: tuple[tuple[float, float], ...]     # per component: (x_L, x_H)
    expected_joint: tuple[dict, ...]                      # per component: profile -> prob
    expected_bayes: tuple[dict, ...]                      # per component: profile -> target
    expected_responder: dict                              # report pair -> forecast
    closed_form_value: float
    closed_form_expr: str
    same_marginals: bool = False

    def to_dict(self) -> dict:
        def profiles(d):
            return {p.label(): v for p, v in d.items()}
        return {
            "name": self.name,
            "mixture": self.mixture.to_dict(),
            "expected_reports": [list(r) for r in self.expected_reports],
            "expected_joint": [profiles(d) for d in self.expected_joint],
            "expected_bayes": [profiles(d) for d in self.expected_bayes],
            "expected_responder": [[list(k), v] for k, v in self.expected_responder.items()],
            "closed_form_value": self.closed_form_value,
            "closed_form_expr": self.closed_form_expr,
        }


@dataclass(frozen=True)
class FieldCheck:
    name: str
    passed: bool
    max_deviation: float


@dataclass
class VerificationReport:
    certificate: str
    checks: list[FieldCheck] = field(default_factory=list)
    value: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> float:
        return max((c.max_deviation for c in self.checks), default=0.0)

    def to_dict(self) -> dict:
        return {
            "certificate": self.certificate,
            "passed": self.passed,
            "value": self.value,
            "checks": [{"field": c.name, "passed": c.passed, "max_deviation": c.max_deviation}
                       for c in self.checks],
        }


def build_unknown_state_certificate() -> MixtureCertificate:
    """Two uniform-prior structures with different state spaces but equal reports {1/6, 5/6}."""
    env_a = BinaryCIEnvironment.symmetric(0.0, 5 / 6, 0.5, 1.0, 1 / 4)
    env_b = BinaryCIEnvironment.symmetric(1 / 6, 1.0, 0.5, 3 / 4, 0.0)
    mix = MixtureEnvironment(((0.5, env_a), (0.5, env_b)))
    x_lo, x_hi = 1 / 6, 5 / 6
    joint_a = {LL: 17 / 32, LH: 3 / 32, HL: 3 / 32, HH: 9 / 32}
    joint_b = {LL: 9 / 32, LH: 3 / 32, HL: 3 / 32, HH: 17 / 32}
    bayes_a = {LL: 5 / 102, LH: 5 / 6, HL: 5 / 6, HH: 5 / 6}
    bayes_b = {LL: 1 / 6, LH: 1 / 6, HL: 1 / 6, HH: 97 / 102}
    responder = {(x_lo, x_lo): 7 / 78, (x_hi, x_hi): 71 / 78,
                 (x_lo, x_hi): 0.5, (x_hi, x_lo): 0.5}
    return MixtureCertificate(
        "unknown_state", mix, ((x_lo, x_hi), (x_lo, x_hi)),
        (joint_a, joint_b), (bayes_a, bayes_b), responder,
        UNKNOWN_STATE_LB, "31/1326",
    )


def build_known_marginal_certificate() -> MixtureCertificate:
    """Golden-ratio structures with different state spaces and identical report marginals."""
    lo, hi = (3 - SQRT5) / 4, (1 + SQRT5) / 4
    big, small = (SQRT5 - 1) / 2, (3 - SQRT5) / 2
    env_a = BinaryCIEnvironment.symmetric(lo, 1.0, small, hi, 0.0)
    env_b = BinaryCIEnvironment.symmetric(0.0, hi, big, 1.0, lo)
    mix = MixtureEnvironment(((0.5, env_a), (0.5, env_b)))
    same, cross = (1 + SQRT5) / 8, (3 - SQRT5) / 8
    joint = {LL: same, LH: cross, HL: cross, HH: same}
    bayes_a = {LL: lo, LH: lo, HL: lo, HH: (15 - 5 * SQRT5) / 4}
    bayes_b = {LL: (5 * SQRT5 - 11) / 4, LH: hi, HL: hi, HH: hi}
    responder = {(lo, lo): (SQRT5 - 2) / 2, (hi, hi): (4 - SQRT5) / 2,
                 (lo, hi): 0.5, (hi, lo): 0.5}
    return MixtureCertificate(
        "known_marginal", mix, ((lo, hi), (lo, hi)),
        (joint, dict(joint)), (bayes_a, bayes_b), responder,
        KNOWN_ZERO_ONE_LB, "(5*sqrt(5)-11)/8", same_marginals=True,
    )


def report_distribution(env: BinaryCIEnvironment, expert: int) -> list[tuple[float, float]]:
    """Support points and masses of one expert's report, sorted by report."""
    out = []
    for s in Signal:
        mass = marginal_signal_prob(env, expert, s)
        if mass > 0:
            out.append((report(env, expert, s), mass))
    return sorted(out)


def marginal_gap(a: BinaryCIEnvironment, b: BinaryCIEnvironment) -> float:
    """Largest difference between the two environments' per-expert report distributions."""
    gap = 0.0
    for expert in (1, 2):
        da, db = report_distribution(a, expert), report_distribution(b, expert)
        if len(da) != len(db):
            return math.inf
        for (xa, ma), (xb, mb) in zip(da, db):
            gap = max(gap, abs(xa - xb), abs(ma - mb))
    return gap


def verify_certificate(cert: MixtureCertificate, tol: float = 1e-12,
                       marginal_tol: float = 1e-14) -> VerificationReport:
    """Recompute every expected field of ``cert`` and compare within ``tol``.

    Raises :class:`CertificateMismatch` naming the first failing field;
    returns the full report when everything agrees.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rep = VerificationReport(cert.name)

    def check(name: str, deviation: float, limit: float = tol):
        rep.checks.append(FieldCheck(name, deviation <= limit, deviation))

    envs = [e for _, e in cert.mixture]
    dev = 0.0
    for env, (x_lo, x_hi) in zip(envs, cert.expected_reports):
        for expert in (1, 2):
            dev = max(dev, abs(report(env, expert, Signal.LOW) - x_lo),
                      abs(report(env, expert, Signal.HIGH) - x_hi))
    check("reports", dev)

    dev = max(abs(joint_signal_prob(env, p) - expected[p])
              for env, expected in zip(envs, cert.expected_joint) for p in PROFILES)
    check("joint", dev)

    dev = max(abs(bayes_forecast(env, p) - expected[p])
              for env, expected in zip(envs, cert.expected_bayes) for p in expected)
    check("bayes", dev)

    table = optimal_pointwise_response(cert.mixture)
    dev = 0.0 if len(table) == len(cert.expected_responder) else math.inf
    for pair, value in cert.expected_responder.items():
        try:
            dev = max(dev, abs(table.lookup(*pair) - value))
        except KeyError:
            dev = math.inf
    check("responder", dev)

    if cert.same_marginals:
        check("marginals", max(marginal_gap(envs[0], e) for e in envs[1:]), marginal_tol)

    rep.value = mixture_regret(table, cert.mixture)
    check("value", abs(rep.value - cert.closed_form_value))

    for c in rep.checks:
        if not c.passed:
            raise CertificateMismatch(c.name, c.max_deviation, rep)
    return rep


# --- the general (correlated) hard instance ------------------------------------

@dataclass(frozen=True)
class JointStructure:
    """Two states with an arbitrary (not necessarily independent) signal table.

    ``conditional[k][profile]`` is ``P(s1, s2 | theta_k)``.
    """

    thetas: tuple[float, float]
    prior: tuple[float, float]
    conditional: tuple[dict, dict]

    def __post_init__(self):
        for row in self.conditional:
            if abs(math.fsum(row.get(p, 0.0) for p in PROFILES) - 1.0) > 1e-12:
                raise ValueError("each conditional row must sum to 1")

    def joint(self, profile: SignalProfile) -> float:
        return math.fsum(w * row.get(profile, 0.0) for w, row in zip(self.prior, self.conditional))

    def report(self, expert: int, signal: Signal) -> float:
        num, den = [], []
        for theta, w, row in zip(self.thetas, self.prior, self.conditional):
            mass = math.fsum(v for p, v in row.items() if p[expert - 1] == signal)
            num.append(w * mass * theta)
            den.append(w * mass)
        return math.fsum(num) / math.fsum(den)

    def bayes(self, profile: SignalProfile) -> float:
        num = math.fsum(t * w * row.get(profile, 0.0)
                        for t, w, row in zip(self.thetas, self.prior, self.conditional))
        return num / self.joint(profile)


def build_xor_certificate() -> JointStructure:
    """Uniform {0,1} states; signals agree in state 0 and disagree in state 1."""
    return JointStructure(
        (0.0, 1.0), (0.5, 0.5),
        ({LL: 0.5, HH: 0.5, LH: 0.0, HL: 0.0}, {LL: 0.0, HH: 0.0, LH: 0.5, HL: 0.5}),
    )


def joint_regret(aggregator: Callable, structure: JointStructure) -> float:
    terms = []
    for p in PROFILES:
        prob = structure.joint(p)
        if prob <= 0:
            continue
        out = float(aggregator(structure.report(1, p.s1), structure.report(2, p.s2), None))
        terms.append(prob * (out - structure.bayes(p)) ** 2)
    return math.fsum(terms)


# --- summary ----------------------------------------------------------------

@dataclass(frozen=True)
class BoundRow:
    setting: str
    structures: str
    lower: float
    lower_source: str
    upper: float
    upper_source: str


def lower_bound_gap_report(upper_bounds: Optional[dict[str, float]] = None,
                           tol: float = 1e-12) -> dict:
    """The bound ladder: certified lower bounds against upper bounds.

    ``upper_bounds`` maps ``"unknown"``, ``"known01"``, ``"known_marginal"``
    to searched worst-case values; missing entries fall back to the
    published constants.
    """
    published = {"unknown": 0.025512, "known01": 0.022599, "known_marginal": 0.022763}
    ub = dict(published)
    sources = {k: "published" for k in published}
    for k, v in (upper_bounds or {}).items():
        ub[k] = v
        sources[k] = "search"
    unknown = verify_certificate(build_unknown_state_certificate(), tol)
    marginal = verify_certificate(build_known_marginal_certificate(), tol)
    xor = build_xor_certificate()
    xor_value = joint_regret(lambda a, b, mu: 0.5, xor)
    rows = [
        BoundRow("known01", "CI", KNOWN_ZERO_ONE_LB, "(5*sqrt(5)-11)/8 (reference constant)",
                 ub["known01"], sources["known01"]),
        BoundRow("unknown", "CI", unknown.value, "certificate 31/1326",
                 ub["unknown"], sources["unknown"]),
        BoundRow("known_marginal", "CI", marginal.value, "certificate (5*sqrt(5)-11)/8",
                 ub["known_marginal"], sources["known_marginal"]),
        BoundRow("known01", "blackwell", KNOWN_ZERO_ONE_LB, "reference constant",
                 KNOWN_ZERO_ONE_LB, "reference constant"),
        BoundRow("unknown", "blackwell", KNOWN_ZERO_ONE_LB, "reference constant",
                 KNOWN_ZERO_ONE_LB, "reference constant"),
        BoundRow("known_marginal", "blackwell", 0.0, "follow informed expert",
                 0.0, "follow informed expert"),
        BoundRow("known01", "general", xor_value, "xor certificate", GENERAL_TIGHT, "constant 1/2"),
        BoundRow("unknown", "general", xor_value, "xor certificate", GENERAL_TIGHT, "constant 1/2"),
        BoundRow("known_marginal", "general", xor_value, "xor certificate", GENERAL_TIGHT,
                 "constant 1/2"),
    ]
    return {
        "rows": rows,
        "separation": unknown.value > ub["known01"],
        "separation_margin": unknown.value - ub["known01"],
    }


def as_fraction(value: float, max_den: int = 10_000) -> Fraction:
    return Fraction(value).limit_denominator(max_den)
