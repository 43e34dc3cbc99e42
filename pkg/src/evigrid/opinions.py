"""Binomial opinions and cumulative fusion.

A binomial opinion assigns belief, disbelief, and uncertainty mass to a
binary proposition (here: "the cell is occupied") together with a prior
base rate.  The three masses always sum to one, and the projected
probability ``b + a * u`` collapses the opinion to a single number.

Fusion of two opinions about the same proposition is performed in
evidence space: an opinion maps to a pair of positive/negative evidence
counts, independent evidence adds, and the sum maps back.  This makes
cumulative fusion commutative and associative up to floating point
rounding, and guarantees that fusing real evidence never increases
uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_BASE_RATE = 0.5
DEFAULT_PRIOR_WEIGHT = 2.0

# Dogmatic opinions (u == 0) have no finite evidence representation.  They
# are nudged to this uncertainty before mapping so pipelines stay total.
DOGMATIC_EPSILON = 1e-6

_ADDITIVITY_TOL = 1e-9
_BASE_RATE_TOL = 1e-9


class DogmaticOpinionError(ValueError):
    """Raised when a dogmatic opinion reaches evidence mapping unclamped."""


class BaseRateMismatchError(ValueError):
    """Raised when fusing opinions whose base rates disagree."""


def _check_mass(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"opinion component {name} must be a finite number, got {value!r}")
    if value < -_ADDITIVITY_TOL or value > 1.0 + _ADDITIVITY_TOL:
        raise ValueError(f"opinion component {name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class BinomialOpinion:
    """Opinion (b, d, u, a) with b + d + u == 1 within 1e-9."""

    b: float
    d: float
    u: float
    a: float = DEFAULT_BASE_RATE

    def __post_init__(self):
        _check_mass("b", self.b)
        _check_mass("d", self.d)
        _check_mass("u", self.u)
        _check_mass("a", self.a)
        total = self.b + self.d + self.u
        if abs(total - 1.0) > _ADDITIVITY_TOL:
            raise ValueError(f"belief masses must sum to 1 (got {total!r})")

    @property
    def is_vacuous(self) -> bool:
        return self.u == 1.0


def vacuous(base_rate: float = DEFAULT_BASE_RATE) -> BinomialOpinion:
    """Totally uncertain opinion: all mass on u."""
    return BinomialOpinion(0.0, 0.0, 1.0, base_rate)


def projected_probability(op: BinomialOpinion) -> float:
    """Collapse an opinion to a probability: P = b + a * u."""
    return op.b + op.a * op.u


@dataclass(frozen=True)
class EvidencePair:
    """Nonnegative positive/negative evidence counts (r, s)."""

    r: float
    s: float

    def __post_init__(self):
        for name in ("r", "s"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0.0:
                raise ValueError(f"evidence count {name} must be finite and >= 0, got {value!r}")

    def __add__(self, other: "EvidencePair") -> "EvidencePair":
        return EvidencePair(self.r + other.r, self.s + other.s)


def to_evidence(
    op: BinomialOpinion,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
    clamp_dogmatic: bool = True,
) -> EvidencePair:
    """Map an opinion to evidence counts: r = W*b/u, s = W*d/u.

    Dogmatic opinions (u == 0) are clamped to ``DOGMATIC_EPSILON``
    uncertainty first, rescaling b and d so the masses still sum to one.
    Pass ``clamp_dogmatic=False`` to raise ``DogmaticOpinionError`` instead.
    """
    if prior_weight <= 0.0:
        raise ValueError(f"prior_weight must be positive, got {prior_weight}")
    b, d, u = op.b, op.d, op.u
    if u <= 0.0:
        if not clamp_dogmatic:
            raise DogmaticOpinionError(f"cannot map dogmatic opinion {op} to evidence")
        scale = (1.0 - DOGMATIC_EPSILON) / (b + d)
        b, d, u = b * scale, d * scale, DOGMATIC_EPSILON
    return EvidencePair(prior_weight * b / u, prior_weight * d / u)


def from_evidence(
    ev: EvidencePair,
    base_rate: float = DEFAULT_BASE_RATE,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
) -> BinomialOpinion:
    """Map evidence counts back to an opinion with the given base rate."""
    if prior_weight <= 0.0:
        raise ValueError(f"prior_weight must be positive, got {prior_weight}")
    total = prior_weight + ev.r + ev.s
    return BinomialOpinion(ev.r / total, ev.s / total, prior_weight / total, base_rate)


def cumulative_fuse(first: BinomialOpinion, second: BinomialOpinion) -> BinomialOpinion:
    """Fuse two opinions about the same proposition by adding evidence.

    Both inputs must share the same base rate (within 1e-9); the result
    keeps it.  The result is independent of the prior weight used for the
    round trip, since the weight cancels in the mapping.
    """
    if abs(first.a - second.a) > _BASE_RATE_TOL:
        raise BaseRateMismatchError(
            f"cannot fuse opinions with base rates {first.a} and {second.a}"
        )
    combined = to_evidence(first) + to_evidence(second)
    return from_evidence(combined, base_rate=first.a)
