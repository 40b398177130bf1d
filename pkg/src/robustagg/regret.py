"""Expected regret of an aggregator against the omniscient Bayesian forecast.

With squared loss the regret equals the expected squared gap between the
aggregator and the posterior mean of the state, so a binary-signal
environment reduces to a sum over its four signal profiles.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .env import (
    PROB_EPS,
    PROFILES,
    BinaryCIEnvironment,
    BlackwellEnvironment,
    MixtureEnvironment,
    Signal,
    SignalProfile,
    bayes_forecast,
    blackwell_joint,
    blackwell_report,
    joint_signal_prob,
    prior_mean,
    report,
)

MATCH_TOL = 1e-9
AMBIGUITY_TOL = 1e-6


class AmbiguousReportMatching(ValueError):
    """Two report pairs are too close to separate and too far to merge."""


@dataclass(frozen=True)
class RegretRow:
    profile: SignalProfile
    joint_prob: float
    x1: float
    x2: float
    bayes: float
    output: float
    sq_error: float


@dataclass(frozen=True)
class RegretReport:
    total: float
    rows: tuple[RegretRow, ...] = field(default_factory=tuple)

    CSV_HEADER = ("profile", "prob", "x1", "x2", "bayes", "output", "sq_error")

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "rows": [
                {"profile": r.profile.label(), "prob": r.joint_prob, "x1": r.x1, "x2": r.x2,
                 "bayes": r.bayes, "output": r.output, "sq_error": r.sq_error}
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.profile.label(), repr(r.joint_prob), repr(r.x1), repr(r.x2),
                             repr(r.bayes), repr(r.output), repr(r.sq_error)])
        return buf.getvalue()


def _call(aggregator: Callable, x1: float, x2: float, mu: Optional[float]) -> float:
    return float(aggregator(x1, x2, mu))


def expected_regret(aggregator: Callable, env: BinaryCIEnvironment) -> RegretReport:
    """Per-profile breakdown of ``E[(f(x1, x2) - bayes)^2]``.

    The aggregator is called as ``aggregator(x1, x2, mu)`` with ``mu`` the
    environment's prior mean; rules that do not use it ignore it.
    Zero-probability profiles are skipped.
    """
    mu = prior_mean(env)
    rows = []
    for profile in PROFILES:
        prob = joint_signal_prob(env, profile)
        if prob < PROB_EPS:
            continue
        x1 = report(env, 1, profile.s1)
        x2 = report(env, 2, profile.s2)
        target = bayes_forecast(env, profile)
        out = _call(aggregator, x1, x2, mu)
        rows.append(RegretRow(profile, prob, x1, x2, target, out, (out - target) ** 2))
    total = math.fsum(r.joint_prob * r.sq_error for r in rows)
    return RegretReport(total, tuple(rows))


def expected_regret_via_outcomes(aggregator: Callable, env: BinaryCIEnvironment) -> float:
    """Regret from its definition: loss gap summed over state, signals and outcome."""
    mu = prior_mean(env)
    terms = []
    states = ((env.theta1, env.lambda1, False), (env.theta2, env.lambda2, True))
    for profile in PROFILES:
        if joint_signal_prob(env, profile) < PROB_EPS:
            continue
        out = _call(aggregator, report(env, 1, profile.s1), report(env, 2, profile.s2), mu)
        target = bayes_forecast(env, profile)
        for theta, weight, high in states:
            p_state_sig = (weight * env.signal_prob(1, profile.s1, high)
                           * env.signal_prob(2, profile.s2, high))
            if p_state_sig == 0.0:
                continue
            for omega, p_omega in ((1.0, theta), (0.0, 1.0 - theta)):
                gap = (out - omega) ** 2 - (target - omega) ** 2
                terms.append(p_state_sig * p_omega * gap)
    return math.fsum(terms)


def mixture_regret(aggregator: Callable, mix: MixtureEnvironment) -> float:
    return math.fsum(w * expected_regret(aggregator, e).total for w, e in mix)


@dataclass(frozen=True)
class ResponseTable:
    """Forecast lookup keyed by report pair, usable as an aggregator."""

    entries: tuple[tuple[tuple[float, float], float], ...]
    tol: float = MATCH_TOL

    def lookup(self, x1: float, x2: float) -> float:
        for (a, b), value in self.entries:
            if abs(a - x1) <= self.tol and abs(b - x2) <= self.tol:
                return value
        raise KeyError((x1, x2))

    def __call__(self, x1, x2, mu=None):
        return self.lookup(float(x1), float(x2))

    def perturbed(self, index: int, eps: float) -> "ResponseTable":
        entries = list(self.entries)
        key, value = entries[index]
        entries[index] = (key, value + eps)
        return ResponseTable(tuple(entries), self.tol)

    def as_dict(self) -> dict[tuple[float, float], float]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _pair_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def optimal_pointwise_response(mix: MixtureEnvironment) -> ResponseTable:
    """Best forecast per report pair when the aggregator knows the mixture.

    Profiles from all components are grouped by the report pair they induce;
    each group's forecast is the probability-weighted mean of its Bayes
    targets, which minimises mixture regret pointwise.
    """
    groups: list[list] = []  # [pair, [weights], [weighted targets]]
    for weight, env in mix:
        for profile in PROFILES:
            prob = joint_signal_prob(env, profile)
            if prob < PROB_EPS or weight == 0.0:
                continue
            pair = (report(env, 1, profile.s1), report(env, 2, profile.s2))
            target = bayes_forecast(env, profile)
            for g in groups:
                d = _pair_distance(g[0], pair)
                if d <= MATCH_TOL:
                    g[1].append(weight * prob)
                    g[2].append(weight * prob * target)
                    break
                if d < AMBIGUITY_TOL:
                    raise AmbiguousReportMatching(
                        f"report pairs {g[0]} and {pair} differ by {d:.3g}"
                    )
            else:
                groups.append([pair, [weight * prob], [weight * prob * target]])
    entries = tuple((g[0], math.fsum(g[2]) / math.fsum(g[1])) for g in groups)
    return ResponseTable(entries)


def blackwell_regret(aggregator: Callable, env: BlackwellEnvironment) -> float:
    """``E[(f(x1, x2) - x2)^2]`` where expert 2 is the informed expert."""
    terms = []
    for profile in PROFILES:
        prob = blackwell_joint(env, profile)
        if prob < PROB_EPS:
            continue
        x1 = blackwell_report(env, 1, profile.s1)
        x2 = blackwell_report(env, 2, profile.s2)
        terms.append(prob * (_call(aggregator, x1, x2, None) - x2) ** 2)
    return math.fsum(terms)


def _regret_of(args):
    aggregator, env = args
    return expected_regret(aggregator, env).total


def batch_regret(aggregator: Callable, envs: Sequence[BinaryCIEnvironment],
                 n_workers: int = 1) -> list[float]:
    """Regret totals for many environments, in input order."""
    if n_workers <= 1:
        return [expected_regret(aggregator, e).total for e in envs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_regret_of, [(aggregator, e) for e in envs], chunksize=64))


# --- vectorised kernels used by the search ------------------------------------

def ci_profile_arrays(params: np.ndarray):
    """Joint probabilities, reports and Bayes targets for a batch of environments.

    ``params`` has shape ``(n, 7)`` in :data:`~robustagg.env.PARAM_NAMES` order
    with ``theta1 <= theta2``.  Returns ``(prob, x1, x2, bayes)``, each of shape
    ``(n, 4)`` with profiles ordered as :data:`~robustagg.env.PROFILES`.
    Entries for zero-probability profiles are finite but meaningless.
    """
    t1, t2, l2, p1, p2, q1, q2 = (params[:, i:i + 1] for i in range(7))
    l1 = 1.0 - l2
    # columns: signal LOW, HIGH
    a1 = np.concatenate([p1, 1.0 - p1], axis=1)
    a2 = np.concatenate([p2, 1.0 - p2], axis=1)
    c1 = np.concatenate([q1, 1.0 - q1], axis=1)
    c2 = np.concatenate([q2, 1.0 - q2], axis=1)

    def posterior(w_low, w_high):
        tot = w_low + w_high
        safe = np.where(tot > 0, tot, 1.0)
        w = w_high / safe
        value = t1 * (1.0 - w) + t2 * w
        return np.clip(value, t1, t2), tot

    r1, _ = posterior(l1 * a1, l2 * c1)
    r2, _ = posterior(l1 * a2, l2 * c2)
    idx1 = np.array([0, 0, 1, 1])
    idx2 = np.array([0, 1, 0, 1])
    w_low = l1 * a1[:, idx1] * a2[:, idx2]
    w_high = l2 * c1[:, idx1] * c2[:, idx2]
    bayes, prob = posterior(w_low, w_high)
    return prob, r1[:, idx1], r2[:, idx2], bayes


def ci_regret_batch(aggregator: Callable, params: np.ndarray, expose_mean: bool = True) -> np.ndarray:
    """Vectorised regret for a batch of CI environments (shape ``(n,)``)."""
    prob, x1, x2, bayes = ci_profile_arrays(params)
    mu = None
    if expose_mean:
        mu = ((1.0 - params[:, 2]) * params[:, 0] + params[:, 2] * params[:, 1])[:, None]
    out = np.asarray(aggregator(x1, x2, mu), dtype=float)
    err = np.where(prob >= PROB_EPS, prob * (out - bayes) ** 2, 0.0)
    return err.sum(axis=1)


def blackwell_regret_batch(aggregator: Callable, params: np.ndarray) -> np.ndarray:
    """Vectorised :func:`blackwell_regret`; ``params`` columns follow
    :attr:`BlackwellEnvironment.FIELDS`."""
    t1, t2, l2, rl, rh, gll, ghl = (params[:, i:i + 1] for i in range(7))
    l1 = 1.0 - l2
    a = np.concatenate([rl, 1.0 - rl], axis=1)        # informed | low state
    c = np.concatenate([rh, 1.0 - rh], axis=1)        # informed | high state
    g = np.stack([np.concatenate([gll, 1.0 - gll], axis=1),
                  np.concatenate([ghl, 1.0 - ghl], axis=1)], axis=1)  # [n, s2, s1]

    def posterior(w_low, w_high):
        tot = w_low + w_high
        safe = np.where(tot > 0, tot, 1.0)
        w = w_high / safe
        return np.clip(t1 * (1.0 - w) + t2 * w, t1, t2)

    x2 = posterior(l1 * a, l2 * c)                     # [n, s2]
    wl1 = np.einsum("ns,nsk->nk", l1 * a, g)           # [n, s1]
    wh1 = np.einsum("ns,nsk->nk", l2 * c, g)
    x1 = posterior(wl1, wh1)
    idx1 = np.array([0, 0, 1, 1])
    idx2 = np.array([0, 1, 0, 1])
    informed = l1 * a + l2 * c                         # P(s2)
    prob = informed[:, idx2] * g[:, idx2, idx1]
    out = np.asarray(aggregator(x1[:, idx1], x2[:, idx2], None), dtype=float)
    err = np.where(prob >= PROB_EPS, prob * (out - x2[:, idx2]) ** 2, 0.0)
    return err.sum(axis=1)
