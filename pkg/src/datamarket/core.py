"""Domain types shared by every stage of the marketplace.

Monetary amounts are integer counts of minor currency units so that budget
sums, GCDs and unit-price comparisons stay exact.  Candidate prices that are
not whole minor units (e.g. a bid scaled by a ratio of privacy budgets) are
carried as :class:`fractions.Fraction` and only rounded when reported.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

#: Exact rational number type used for candidate prices and ratios.
ExactRational = Fraction

MINOR_PER_MAJOR = 100
DEFAULT_DELTA = 1e-6


def as_rational(x: int | float | str | Fraction) -> Fraction:
    """Convert ``x`` to a Fraction, reading floats by their shortest repr.

    ``as_rational(0.1) == Fraction(1, 10)`` rather than the binary expansion,
    which is what a user typing ``0.1`` for a privacy budget means.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(float(x)):
            raise InputError(f"non-finite value {x!r}")
        return Fraction(repr(float(x)))
    return Fraction(x)


@dataclass(frozen=True, order=True)
class Money:
    """A non-negative amount in integer minor units (cents by default)."""

    amount: int

    def __post_init__(self):
        if isinstance(self.amount, bool) or not isinstance(self.amount, (int, np.integer)):
            raise TypeError(f"Money amount must be an integer, got {type(self.amount).__name__}")
        object.__setattr__(self, "amount", int(self.amount))
        if self.amount < 0:
            raise ValueError(f"Money cannot be negative: {self.amount}")

    @classmethod
    def zero(cls) -> Money:
        return cls(0)

    @classmethod
    def parse(cls, text: str) -> Money:
        """Parse a major-unit decimal string such as ``"12.34"``."""
        value = Fraction(text.strip()) * MINOR_PER_MAJOR
        if value.denominator != 1:
            raise InputError(f"{text!r} has more precision than one minor unit")
        return cls(int(value))

    @classmethod
    def floor(cls, value: Fraction | int) -> Money:
        """Round a non-negative exact amount (in minor units) down."""
        return cls(math.floor(value))

    def __add__(self, other: Money) -> Money:
        if not isinstance(other, Money):
            return NotImplemented
        return Money(self.amount + other.amount)

    def __sub__(self, other: Money) -> Money:
        if not isinstance(other, Money):
            return NotImplemented
        return Money(self.amount - other.amount)

    def __int__(self) -> int:
        return self.amount

    def __bool__(self) -> bool:
        return self.amount != 0

    def display(self) -> str:
        major, minor = divmod(self.amount, MINOR_PER_MAJOR)
        width = len(str(MINOR_PER_MAJOR - 1))
        return f"{major}.{minor:0{width}d}"

    def __str__(self) -> str:
        return self.display()


def money_sum(values: Iterable[Money]) -> Money:
    return Money(sum(int(v) for v in values))


class Curve(str, enum.Enum):
    LINEAR = "linear"
    CONVEX = "convex"
    CONCAVE = "concave"

    @property
    def exponent(self) -> float:
        return {"linear": 1.0, "convex": 2.0, "concave": 0.5}[self.value]


class Restriction(str, enum.Enum):
    HARD = "hard"
    NEGOTIABLE = "negotiable"


@dataclass(frozen=True)
class DataOwner:
    """One contributed sample together with its owner's privacy terms.

    ``rho`` holds the extra-compensation rate per tier; a single value is
    used for every tier.
    """

    id: int
    features: tuple[float, ...]
    label: float
    eps_prefer: float
    curve: Curve = Curve.LINEAR
    rho: tuple[float, ...] = (0.0,)
    mode: Restriction = Restriction.HARD

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        rho = (self.rho,) if isinstance(self.rho, (int, float)) else tuple(self.rho)
        object.__setattr__(self, "rho", tuple(float(r) for r in rho))
        object.__setattr__(self, "curve", Curve(self.curve))
        object.__setattr__(self, "mode", Restriction(self.mode))
        if not self.eps_prefer > 0:
            raise InputError(f"owner {self.id}: eps_prefer must be positive")
        if not self.rho or any(not (r >= 0) for r in self.rho):
            raise InputError(f"owner {self.id}: rho must be non-negative")
        if not all(math.isfinite(v) for v in self.features):
            raise InputError(f"owner {self.id}: non-finite feature")

    def rho_for(self, tier_index: int) -> float:
        """Extra-compensation rate for the 1-based tier ``tier_index``."""
        if len(self.rho) == 1:
            return self.rho[0]
        return self.rho[tier_index - 1]


@dataclass(frozen=True)
class ModelTier:
    index: int
    epsilon: float
    budget: Money
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError(f"tier {self.index}: epsilon must be positive")
        if not 0 < self.delta < 1:
            raise InputError(f"tier {self.index}: delta must lie in (0, 1)")


def validate_tiers(tiers: Sequence[ModelTier]) -> None:
    if not tiers:
        raise InputError("at least one model tier is required")
    for pos, tier in enumerate(tiers, start=1):
        if tier.index != pos:
            raise InputError(f"tier indices must be 1..M in order, got {tier.index} at position {pos}")
    eps = [as_rational(t.epsilon) for t in tiers]
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise InputError("tier epsilons must be strictly increasing")
    if len({t.delta for t in tiers}) != 1:
        raise InputError("all tiers must share one delta")


@dataclass(frozen=True)
class SurveyPoint:
    """A surveyed buyer: the tier they want and what they would pay."""

    target_model: int
    bid: Money

    def __post_init__(self):
        if self.target_model < 1:
            raise InputError("target_model is 1-based")


def validate_survey(survey: Sequence[SurveyPoint], n_tiers: int) -> None:
    for k, point in enumerate(survey):
        if not 1 <= point.target_model <= n_tiers:
            raise InputError(f"survey point {k} targets tier {point.target_model}, only {n_tiers} tiers exist")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix and label vector."""

    X: np.ndarray
    y: np.ndarray
    ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InputError(f"bad dataset shapes X{X.shape} y{y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(range(X.shape[0])))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_owners(cls, owners: Sequence[DataOwner]) -> Dataset:
        if not owners:
            return cls(np.zeros((0, 0)), np.zeros(0), ())
        X = np.array([o.features for o in owners], dtype=float)
        y = np.array([o.label for o in owners], dtype=float)
        return cls(X, y, tuple(o.id for o in owners))


def largest_remainder(shares: Sequence[Fraction], total: int) -> list[int]:
    """Round exact non-negative shares to integers summing to ``total``.

    Each share is floored; leftover units go to the largest fractional parts,
    earlier positions first on ties.
    """
    floors = [math.floor(s) for s in shares]
    leftover = total - sum(floors)
    if leftover < 0 or leftover > len(shares):
        raise ValueError("shares do not add up to the requested total")
    order = sorted(range(len(shares)), key=lambda k: (-(shares[k] - floors[k]), k))
    for k in order[:leftover]:
        floors[k] += 1
    return floors
