"""Aggregation rules mapping a pair of reports to a single forecast.

Every rule is a frozen dataclass that is also callable as
``rule(x1, x2, mu=None)``.  Inputs may be floats or numpy arrays; the output
has the broadcast shape (a plain float for scalar inputs).  ``mu`` is the
environment's prior mean, consulted only by rules configured to use a known
prior mean without a fixed value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import expit

RATIO_CLAMP = 1e-12
PRECISION_SWITCH = 0.4


class BoundaryForecast(ValueError):
    pass


class MissingPriorMean(ValueError):
    """A rule needs the prior mean but none was supplied."""


class SpecError(ValueError):
    pass


def logit(p):
    """Log-odds with ``logit(0) = -inf`` and ``logit(1) = +inf``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(p) - np.log1p(-p)
    return _unwrap(out)


def precision(x):
    """Inverse variance ``1 / (x (1 - x))`` of an interior probability."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr <= 0) | (arr >= 1)):
        raise BoundaryForecast(f"precision undefined at {x!r}")
    return _unwrap(1.0 / (arr * (1.0 - arr)))


def _unwrap(arr):
    arr = np.asarray(arr)
    return float(arr) if arr.ndim == 0 else arr


def _weighted(weight: float, log_odds: np.ndarray) -> np.ndarray:
    # 0 * inf is taken as 0: a zero weight ignores the report entirely
    if weight == 0:
        return np.zeros_like(log_odds)
    return weight * log_odds


def _pool_log_odds(terms: list[np.ndarray]) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        z = sum(terms[1:], terms[0])
    # opposite infinities cancel
    return np.where(np.isnan(z), 0.0, z)


def _clamp(x):
    return np.clip(x, RATIO_CLAMP, 1.0 - RATIO_CLAMP)


def bayes_known_prior(mu, x1, x2):
    """Omniscient forecast on {0,1} states: ``g(mu, x1, x2)``."""
    num = x1 * x2 * (1.0 - mu)
    return num / (num + (1.0 - x1) * (1.0 - x2) * mu)


def heuristic_prior(x1, x2):
    s = np.asarray(x1, dtype=float) + np.asarray(x2, dtype=float)
    return 0.49 * s + 0.02 * (s > 1.0)


# --- prior-mean policies -----------------------------------------------------

@dataclass(frozen=True)
class ArithmeticMean:
    """Estimate the prior mean by the average of the two reports."""

    def resolve(self, x1, x2, mu):
        return (x1 + x2) / 2.0

    def to_json(self):
        return "arithmetic_mean"


@dataclass(frozen=True)
class Known:
    """A known prior mean: the fixed ``value`` if given, else the environment's."""

    value: Optional[float] = None

    def resolve(self, x1, x2, mu):
        if self.value is not None:
            return self.value
        if mu is None:
            raise MissingPriorMean("rule uses the environment prior mean, none given")
        return mu

    def to_json(self):
        return {"known": self.value}


MuPolicy = Union[ArithmeticMean, Known]


def _policy_from_json(obj) -> MuPolicy:
    if obj in (None, "arithmetic_mean"):
        return ArithmeticMean()
    if obj in ("known", "env"):
        return Known()
    if isinstance(obj, dict) and "known" in obj:
        value = obj["known"]
        return Known(None if value is None else float(value))
    raise SpecError(f"unrecognised mu_policy {obj!r}")


# --- rules -------------------------------------------------------------------

@dataclass(frozen=True)
class LogOdds:
    """Linear pooling in logit space with equal weight ``alpha`` on each report."""

    alpha: float

    def __call__(self, x1, x2, mu=None):
        z = _pool_log_odds([_weighted(self.alpha, np.asarray(logit(x1))),
                            _weighted(self.alpha, np.asarray(logit(x2)))])
        return _unwrap(expit(z))

    @property
    def uses_env_mean(self) -> bool:
        return False


@dataclass(frozen=True)
class GeneralizedLogOdds:
    """Log-odds pooling with a prior correction ``-gamma * logit(mu)``.

    ``mu=None`` means the prior mean is taken from the environment.
    """

    alpha: float
    gamma: float
    mu: Optional[float] = None

    def __call__(self, x1, x2, mu=None):
        m = Known(self.mu).resolve(x1, x2, mu)
        z = _pool_log_odds([_weighted(self.alpha, np.asarray(logit(x1))),
                            _weighted(self.alpha, np.asarray(logit(x2))),
                            _weighted(-self.gamma, np.asarray(logit(m)))])
        return _unwrap(expit(z))

    @property
    def uses_env_mean(self) -> bool:
        return self.mu is None


@dataclass(frozen=True)
class SimpleAverage:
    def __call__(self, x1, x2, mu=None):
        return _unwrap((np.asarray(x1, dtype=float) + x2) / 2.0)

    uses_env_mean = False


@dataclass(frozen=True)
class AveragePrior:
    """Bayes formula on {0,1} states with an estimated prior mean."""

    mu_policy: MuPolicy = ArithmeticMean()

    def __call__(self, x1, x2, mu=None):
        x1, x2 = _clamp(x1), _clamp(x2)
        m = _clamp(self.mu_policy.resolve(x1, x2, mu))
        return _unwrap(bayes_known_prior(m, x1, x2))

    @property
    def uses_env_mean(self) -> bool:
        return isinstance(self.mu_policy, Known) and self.mu_policy.value is None


@dataclass(frozen=True)
class HeuristicPrior:
    def __call__(self, x1, x2, mu=None):
        x1, x2 = _clamp(x1), _clamp(x2)
        m = _clamp(heuristic_prior(x1, x2))
        return _unwrap(bayes_known_prior(m, x1, x2))

    uses_env_mean = False


@dataclass(frozen=True)
class KWW:
    """Base-rate-tempered Bayes rule; ``lam=1`` recovers :class:`AveragePrior`."""

    lam: float
    mu_policy: MuPolicy = ArithmeticMean()

    def __call__(self, x1, x2, mu=None):
        x1, x2 = _clamp(x1), _clamp(x2)
        m = _clamp(self.mu_policy.resolve(x1, x2, mu))
        e = 2.0 * self.lam - 1.0
        hi = (1.0 - m) ** e * x1 * x2
        lo = m ** e * (1.0 - x1) * (1.0 - x2)
        return _unwrap(hi / (hi + lo))

    @property
    def uses_env_mean(self) -> bool:
        return isinstance(self.mu_policy, Known) and self.mu_policy.value is None


@dataclass(frozen=True)
class PrecisionWeighted:
    """Precision-weighted average, square-root weights when reports disagree by > 0.4.

    A report at 0 or 1 has infinite precision and is followed; two extreme
    reports that disagree give 0.5.
    """

    def __call__(self, x1, x2, mu=None):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        x1, x2 = np.broadcast_arrays(x1, x2)
        ext1 = (x1 <= 0.0) | (x1 >= 1.0)
        ext2 = (x2 <= 0.0) | (x2 >= 1.0)
        s1 = np.where(ext1, 0.5, x1)
        s2 = np.where(ext2, 0.5, x2)
        phi1 = 1.0 / (s1 * (1.0 - s1))
        phi2 = 1.0 / (s2 * (1.0 - s2))
        far = np.abs(x1 - x2) > PRECISION_SWITCH
        w1 = np.where(far, np.sqrt(phi1), phi1)
        w2 = np.where(far, np.sqrt(phi2), phi2)
        out = (w1 * s1 + w2 * s2) / (w1 + w2)
        out = np.where(ext1 & ~ext2, x1, out)
        out = np.where(ext2 & ~ext1, x2, out)
        out = np.where(ext1 & ext2, np.where(x1 == x2, x1, 0.5), out)
        return _unwrap(out)

    uses_env_mean = False


@dataclass(frozen=True)
class Constant:
    c: float = 0.5

    def __call__(self, x1, x2, mu=None):
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        return _unwrap(np.full(shape, float(self.c)))

    uses_env_mean = False


@dataclass(frozen=True)
class PriorMean:
    """Always output the environment's prior mean."""

    def __call__(self, x1, x2, mu=None):
        if mu is None:
            raise MissingPriorMean("prior_mean rule needs the environment prior mean")
        shape = np.broadcast(np.asarray(x1), np.asarray(x2), np.asarray(mu)).shape
        return _unwrap(np.broadcast_to(np.asarray(mu, dtype=float), shape).copy())

    uses_env_mean = True


@dataclass(frozen=True)
class FollowExpert:
    """Return one expert's report unchanged (the Blackwell benchmark when that expert is informed)."""

    expert: int = 2

    def __post_init__(self):
        if self.expert not in (1, 2):
            raise SpecError("expert must be 1 or 2")

    def __call__(self, x1, x2, mu=None):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return _unwrap((x1 if self.expert == 1 else x2).copy())

    uses_env_mean = False


AggregatorSpec = Union[LogOdds, GeneralizedLogOdds, SimpleAverage, AveragePrior,
                       HeuristicPrior, KWW, PrecisionWeighted, Constant, PriorMean,
                       FollowExpert]


def aggregate(spec: AggregatorSpec, x1, x2, mu=None):
    return spec(x1, x2, mu)


def _unit(name: str, value) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise SpecError(f"{name} must lie in [0, 1], got {value}")
    return value


def spec_from_dict(data: dict) -> AggregatorSpec:
    if not isinstance(data, dict) or "rule" not in data:
        raise SpecError("aggregator spec must be an object with a 'rule' key")
    rule = data["rule"]
    try:
        if rule == "log_odds":
            return LogOdds(_unit("alpha", data["alpha"]))
        if rule == "gen_log_odds":
            gamma = float(data["gamma"])
            if not -1.0 <= gamma <= 1.0:
                raise SpecError(f"gamma must lie in [-1, 1], got {gamma}")
            mu = data.get("mu")
            if mu in ("env", "known"):
                mu = None
            return GeneralizedLogOdds(_unit("alpha", data["alpha"]), gamma,
                                      None if mu is None else _unit("mu", mu))
        if rule == "simple_average":
            return SimpleAverage()
        if rule == "average_prior":
            return AveragePrior(_policy_from_json(data.get("mu_policy")))
        if rule == "heuristic_prior":
            return HeuristicPrior()
        if rule == "kww":
            return KWW(_unit("lambda", data["lambda"]), _policy_from_json(data.get("mu_policy")))
        if rule == "precision_weighted":
            return PrecisionWeighted()
        if rule == "constant":
            return Constant(_unit("c", data.get("c", 0.5)))
        if rule == "prior_mean":
            return PriorMean()
        if rule == "follow_expert":
            return FollowExpert(int(data.get("expert", 2)))
    except KeyError as exc:
        raise SpecError(f"rule {rule!r} needs parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"bad parameter for rule {rule!r}: {exc}") from None
    raise SpecError(f"unknown rule {rule!r}")


def spec_to_dict(spec: AggregatorSpec) -> dict:
    if isinstance(spec, LogOdds):
        return {"rule": "log_odds", "alpha": spec.alpha}
    if isinstance(spec, GeneralizedLogOdds):
        return {"rule": "gen_log_odds", "alpha": spec.alpha, "gamma": spec.gamma,
                "mu": "env" if spec.mu is None else spec.mu}
    if isinstance(spec, SimpleAverage):
        return {"rule": "simple_average"}
    if isinstance(spec, AveragePrior):
        return {"rule": "average_prior", "mu_policy": spec.mu_policy.to_json()}
    if isinstance(spec, HeuristicPrior):
        return {"rule": "heuristic_prior"}
    if isinstance(spec, KWW):
        return {"rule": "kww", "lambda": spec.lam, "mu_policy": spec.mu_policy.to_json()}
    if isinstance(spec, PrecisionWeighted):
        return {"rule": "precision_weighted"}
    if isinstance(spec, Constant):
        return {"rule": "constant", "c": spec.c}
    if isinstance(spec, PriorMean):
        return {"rule": "prior_mean"}
    if isinstance(spec, FollowExpert):
        return {"rule": "follow_expert", "expert": spec.expert}
    raise SpecError(f"not an aggregator spec: {spec!r}")


def parse_spec(text: str) -> AggregatorSpec:
    """Parse a spec from inline JSON or from a path to a JSON file."""
    text = text.strip()
    if not text.startswith("{"):
        with open(text) as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed spec JSON: {exc}") from None
    return spec_from_dict(data)


def label(spec: AggregatorSpec) -> str:
    d = spec_to_dict(spec)
    params = ", ".join(f"{k}={v}" for k, v in d.items() if k != "rule")
    return f"{d['rule']}({params})" if params else d["rule"]
