"""Model primitives: binary Markov source, wiretap erasure channel, RS policy.

All value objects validate their probabilities on construction and are
immutable afterwards, so downstream code never re-checks domains.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# Absolute tolerance for the memoryless class and the symmetric-channel branch.
EQ_TOL = 1e-12


class DomainError(ValueError):
    """A parameter lies outside its admissible domain."""


def _open_unit(name, value):
    value = float(value)
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
    return value


class CorrelationClass(str, enum.Enum):
    PERSISTENT = "Persistent"
    MEMORYLESS = "Memoryless"
    ALTERNATING = "Alternating"


@dataclass(frozen=True)
class SourceModel:
    """Binary Markov source with ``p = Pr[0 -> 1]`` and ``q = Pr[1 -> 0]``."""

    p: float
    q: float

    def __post_init__(self):
        object.__setattr__(self, "p", _open_unit("p", self.p))
        object.__setattr__(self, "q", _open_unit("q", self.q))

    @property
    def transition_matrix(self) -> np.ndarray:
        return np.array([[1.0 - self.p, self.p], [self.q, 1.0 - self.q]])

    @property
    def stationary(self) -> np.ndarray:
        return np.array(stationary_source(self))


@dataclass(frozen=True)
class ChannelPair:
    """Per-slot success probabilities of Bob's and Eve's erasure links."""

    p_s: float
    p_s_e: float

    def __post_init__(self):
        object.__setattr__(self, "p_s", _open_unit("p_s", self.p_s))
        object.__setattr__(self, "p_s_e", _open_unit("p_s_e", self.p_s_e))

    @property
    def symmetric(self) -> bool:
        return abs(self.p_s - self.p_s_e) < EQ_TOL


@dataclass(frozen=True)
class Policy:
    """Randomized stationary policy: transmit each slot with probability p_alpha."""

    p_alpha: float

    def __post_init__(self):
        value = float(self.p_alpha)
        if not (0.0 < value <= 1.0):
            raise DomainError(f"p_alpha must lie in (0, 1], got {value!r}")
        object.__setattr__(self, "p_alpha", value)


@dataclass(frozen=True)
class LambdaSet:
    """Joint reception-outcome probabilities for one slot.

    ``lambda10`` is "only Bob receives", ``lambda01`` "only Eve receives".
    ``P_A`` and ``P_B`` are Bob's and Eve's marginal success probabilities.
    """

    lambda11: float
    lambda10: float
    lambda01: float
    lambda00: float
    P_A: float = field(init=False)
    P_B: float = field(init=False)

    def __post_init__(self):
        total = self.lambda11 + self.lambda10 + self.lambda01 + self.lambda00
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"lambda values must sum to 1, got {total!r}")
        if min(self.lambda11, self.lambda10, self.lambda01, self.lambda00) <= 0.0:
            raise DomainError("lambda values must be strictly positive")
        object.__setattr__(self, "P_A", self.lambda11 + self.lambda10)
        object.__setattr__(self, "P_B", self.lambda11 + self.lambda01)


def stationary_source(src: SourceModel) -> tuple[float, float]:
    s = src.p + src.q
    return src.q / s, src.p / s


def correlation_class(src: SourceModel) -> CorrelationClass:
    s = src.p + src.q
    if abs(s - 1.0) < EQ_TOL:
        return CorrelationClass.MEMORYLESS
    return CorrelationClass.PERSISTENT if s < 1.0 else CorrelationClass.ALTERNATING


def lambda_set(pol: Policy, ch: ChannelPair) -> LambdaSet:
    pa, ps, pe = pol.p_alpha, ch.p_s, ch.p_s_e
    return LambdaSet(
        lambda11=pa * ps * pe,
        lambda10=pa * ps * (1.0 - pe),
        lambda01=pa * (1.0 - ps) * pe,
        lambda00=pa * (1.0 - ps) * (1.0 - pe) + (1.0 - pa),
    )
