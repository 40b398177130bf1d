"""Binary-state, binary-signal information structures.

An environment has two latent states with Bernoulli means ``theta1 <= theta2``,
prior mass ``lambda2`` on the high state, and two experts who each see one of
two signals.  Expert ``i`` sees the low signal with probability ``p{i}_low``
in the low state and ``q{i}_low`` in the high state; signals are drawn
independently given the state.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import IntEnum
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

PROB_EPS = 1e-15
_VALIDATION_SLACK = 1e-12

PARAM_NAMES = ("theta1", "theta2", "lambda2", "p1_low", "p2_low", "q1_low", "q2_low")


class ZeroProbabilitySignal(ValueError):
    """The requested signal (or profile) has zero probability."""


class DegenerateStateSpace(ValueError):
    """Both states coincide, so the state space cannot be rescaled."""


class InvalidEnvironment(ValueError):
    pass


class Signal(IntEnum):
    LOW = 0
    HIGH = 1


class SignalProfile(NamedTuple):
    s1: Signal
    s2: Signal

    def label(self) -> str:
        return self.s1.name[0] + self.s2.name[0]


PROFILES: tuple[SignalProfile, ...] = tuple(
    SignalProfile(a, b) for a in Signal for b in Signal
)


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if not (-_VALIDATION_SLACK <= value <= 1 + _VALIDATION_SLACK) or math.isnan(value):
        raise InvalidEnvironment(f"{name}={value!r} is not a probability")
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class BinaryCIEnvironment:
    theta1: float
    theta2: float
    lambda2: float
    p1_low: float
    p2_low: float
    q1_low: float
    q2_low: float

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            object.__setattr__(self, name, _check_prob(name, getattr(self, name)))
        if self.theta1 > self.theta2:
            raise InvalidEnvironment(
                f"states must be sorted: theta1={self.theta1} > theta2={self.theta2}"
            )

    @property
    def lambda1(self) -> float:
        return 1.0 - self.lambda2

    @property
    def delta(self) -> float:
        return self.theta2 - self.theta1

    def signal_prob(self, expert: int, signal: Signal, high_state: bool) -> float:
        """P(signal | state) for one expert."""
        if expert == 1:
            low = self.q1_low if high_state else self.p1_low
        elif expert == 2:
            low = self.q2_low if high_state else self.p2_low
        else:
            raise ValueError(f"expert must be 1 or 2, got {expert!r}")
        return low if signal == Signal.LOW else 1.0 - low

    def swapped(self) -> "BinaryCIEnvironment":
        """Same world with the experts' roles exchanged."""
        return BinaryCIEnvironment(
            self.theta1, self.theta2, self.lambda2,
            self.p2_low, self.p1_low, self.q2_low, self.q1_low,
        )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BinaryCIEnvironment":
        missing = [n for n in PARAM_NAMES if n not in data]
        if missing:
            raise InvalidEnvironment(f"missing field(s): {', '.join(missing)}")
        extra = sorted(set(data) - set(PARAM_NAMES))
        if extra:
            raise InvalidEnvironment(f"unknown field(s): {', '.join(extra)}")
        values = {}
        for n in PARAM_NAMES:
            try:
                values[n] = float(data[n])
            except (TypeError, ValueError):
                raise InvalidEnvironment(f"{n} must be a number, got {data[n]!r}") from None
        return cls(**values)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BinaryCIEnvironment":
        return cls(*(float(v) for v in values))

    @classmethod
    def symmetric(cls, theta1, theta2, lambda2, p_low, q_low) -> "BinaryCIEnvironment":
        """Both experts draw from the same single-expert structure."""
        return cls(theta1, theta2, lambda2, p_low, p_low, q_low, q_low)


@dataclass(frozen=True)
class BlackwellEnvironment:
    """Expert 2 is informed; expert 1 sees a garbling of expert 2's signal.

    ``r_low``/``r_high`` are the informed expert's chances of the low signal in
    the low/high state.  ``g_LL``/``g_HL`` give the chance expert 1 sees the
    low signal when expert 2 saw low/high.
    """

    theta1: float
    theta2: float
    lambda2: float
    r_low: float
    r_high: float
    g_LL: float
    g_HL: float

    FIELDS = ("theta1", "theta2", "lambda2", "r_low", "r_high", "g_LL", "g_HL")

    def __post_init__(self) -> None:
        for name in self.FIELDS:
            object.__setattr__(self, name, _check_prob(name, getattr(self, name)))
        if self.theta1 > self.theta2:
            raise InvalidEnvironment("states must be sorted: theta1 > theta2")

    def informed_prob(self, signal: Signal, high_state: bool) -> float:
        low = self.r_high if high_state else self.r_low
        return low if signal == Signal.LOW else 1.0 - low

    def garble_prob(self, s1: Signal, s2: Signal) -> float:
        low = self.g_LL if s2 == Signal.LOW else self.g_HL
        return low if s1 == Signal.LOW else 1.0 - low

    def to_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in self.FIELDS}

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BlackwellEnvironment":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class MixtureEnvironment:
    components: tuple[tuple[float, BinaryCIEnvironment], ...]

    def __post_init__(self) -> None:
        comps = tuple((float(w), e) for w, e in self.components)
        if not comps:
            raise InvalidEnvironment("mixture needs at least one component")
        if any(w < 0 for w, _ in comps):
            raise InvalidEnvironment("mixture weights must be nonnegative")
        total = math.fsum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise InvalidEnvironment(f"mixture weights sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)

    def __iter__(self) -> Iterator[tuple[float, BinaryCIEnvironment]]:
        return iter(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {"components": [{"weight": w, "env": e.to_dict()} for w, e in self]}

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureEnvironment":
        try:
            comps = data["components"]
        except (KeyError, TypeError):
            raise InvalidEnvironment("mixture needs a 'components' list") from None
        return cls(tuple(
            (c["weight"], BinaryCIEnvironment.from_dict(c["env"])) for c in comps
        ))


def prior_mean(env: BinaryCIEnvironment) -> float:
    return env.lambda1 * env.theta1 + env.lambda2 * env.theta2


def _posterior_high(w_low: float, w_high: float) -> float:
    return w_high / (w_low + w_high)


def _between(theta1: float, theta2: float, weight_high: float) -> float:
    value = theta1 * (1.0 - weight_high) + theta2 * weight_high
    return min(max(value, theta1), theta2)


def marginal_signal_prob(env: BinaryCIEnvironment, expert: int, signal: Signal) -> float:
    return (env.lambda1 * env.signal_prob(expert, signal, False)
            + env.lambda2 * env.signal_prob(expert, signal, True))


def report(env: BinaryCIEnvironment, expert: int, signal: Signal) -> float:
    """Expert's posterior probability of the outcome after seeing ``signal``."""
    w_low = env.lambda1 * env.signal_prob(expert, signal, False)
    w_high = env.lambda2 * env.signal_prob(expert, signal, True)
    if w_low + w_high < PROB_EPS:
        raise ZeroProbabilitySignal(f"expert {expert} never sees {Signal(signal).name}")
    return _between(env.theta1, env.theta2, _posterior_high(w_low, w_high))


def _joint_weights(env: BinaryCIEnvironment, profile: SignalProfile) -> tuple[float, float]:
    s1, s2 = profile
    w_low = env.lambda1 * env.signal_prob(1, s1, False) * env.signal_prob(2, s2, False)
    w_high = env.lambda2 * env.signal_prob(1, s1, True) * env.signal_prob(2, s2, True)
    return w_low, w_high


def joint_signal_prob(env: BinaryCIEnvironment, profile: SignalProfile) -> float:
    w_low, w_high = _joint_weights(env, profile)
    return w_low + w_high


def bayes_forecast(env: BinaryCIEnvironment, profile: SignalProfile) -> float:
    """Posterior mean of the state given both signals (the omniscient forecast)."""
    w_low, w_high = _joint_weights(env, profile)
    if w_low + w_high < PROB_EPS:
        raise ZeroProbabilitySignal(f"profile {SignalProfile(*profile).label()} never occurs")
    return _between(env.theta1, env.theta2, _posterior_high(w_low, w_high))


def rescale_to_unit(env: BinaryCIEnvironment) -> tuple[BinaryCIEnvironment, float, float]:
    """Map the states onto {0, 1}; returns ``(unit_env, delta, offset)``.

    Reports transform as ``x = offset + delta * p`` where ``p`` is the report
    in the unit environment.
    """
    if not env.theta2 > env.theta1:
        raise DegenerateStateSpace(f"theta1 == theta2 == {env.theta1}")
    unit = BinaryCIEnvironment(
        0.0, 1.0, env.lambda2, env.p1_low, env.p2_low, env.q1_low, env.q2_low
    )
    return unit, env.theta2 - env.theta1, env.theta1


def lift_aggregator(aggregator: Callable, delta: float, offset: float) -> Callable:
    """Aggregator acting on unit-scale reports that mimics ``aggregator`` on the original scale.

    If ``aggregator`` has regret R on an environment, the returned function has
    regret ``R / delta**2`` on its unit rescaling.
    """

    def lifted(p1, p2, mu=None):
        mu_orig = None if mu is None else offset + delta * mu
        return (aggregator(offset + delta * p1, offset + delta * p2, mu_orig) - offset) / delta

    return lifted


def blackwell_joint(env: BlackwellEnvironment, profile: SignalProfile) -> float:
    s1, s2 = profile
    informed = (env.lambda2 * env.informed_prob(s2, True)
                + (1.0 - env.lambda2) * env.informed_prob(s2, False))
    return informed * env.garble_prob(s1, s2)


def blackwell_report(env: BlackwellEnvironment, expert: int, signal: Signal) -> float:
    """Posterior mean of the state for one expert in a garbled pair."""
    lam1, lam2 = 1.0 - env.lambda2, env.lambda2
    if expert == 2:
        w_low = lam1 * env.informed_prob(signal, False)
        w_high = lam2 * env.informed_prob(signal, True)
    elif expert == 1:
        w_low = sum(lam1 * env.informed_prob(s2, False) * env.garble_prob(signal, s2)
                    for s2 in Signal)
        w_high = sum(lam2 * env.informed_prob(s2, True) * env.garble_prob(signal, s2)
                     for s2 in Signal)
    else:
        raise ValueError(f"expert must be 1 or 2, got {expert!r}")
    if w_low + w_high < PROB_EPS:
        raise ZeroProbabilitySignal(f"expert {expert} never sees {Signal(signal).name}")
    return _between(env.theta1, env.theta2, _posterior_high(w_low, w_high))
