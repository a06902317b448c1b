from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from datamarket.core import (
    Curve,
    DataOwner,
    Dataset,
    ModelTier,
    Money,
    Restriction,
    SurveyPoint,
    as_rational,
    largest_remainder,
    money_sum,
    validate_survey,
    validate_tiers,
)
from datamarket.errors import InputError


def test_money_parse_and_display():
    assert Money.parse("12.34") == Money(1234)
    assert Money.parse("7") == Money(700)
    assert Money(5).display() == "0.05"
    assert str(Money(123456)) == "1234.56"


def test_money_rejects_sub_unit_precision_and_negatives():
    with pytest.raises(InputError):
        Money.parse("0.001")
    with pytest.raises(ValueError):
        Money(-1)
    with pytest.raises(TypeError):
        Money(1.5)


def test_money_arithmetic():
    assert Money(3) + Money(4) == Money(7)
    assert Money(9) - Money(4) == Money(5)
    assert money_sum([Money(1), Money(2), Money(3)]) == Money(6)
    assert Money.floor(Fraction(19, 2)) == Money(9)
    assert Money(1) < Money(2)


def test_as_rational_reads_decimal_repr():
    assert as_rational(0.1) == Fraction(1, 10)
    assert as_rational(3) == Fraction(3)
    with pytest.raises(InputError):
        as_rational(float("nan"))


def test_owner_validation_and_rho_broadcast():
    o = DataOwner(1, (0.5, -0.5), 1.0, 2.0, rho=0.3)
    assert o.rho == (0.3,) and o.rho_for(4) == 0.3
    per_tier = DataOwner(2, (0.0,), -1.0, 1.0, "convex", (0.1, 0.2), "negotiable")
    assert per_tier.curve is Curve.CONVEX and per_tier.mode is Restriction.NEGOTIABLE
    assert per_tier.rho_for(2) == 0.2
    with pytest.raises(InputError):
        DataOwner(3, (0.0,), 1.0, 0.0)
    with pytest.raises(InputError):
        DataOwner(3, (float("inf"),), 1.0, 1.0)
    with pytest.raises(InputError):
        DataOwner(3, (0.0,), 1.0, 1.0, rho=-0.1)


def test_tier_validation():
    tiers = [ModelTier(1, 1.0, Money(100)), ModelTier(2, 2.0, Money(100))]
    validate_tiers(tiers)
    with pytest.raises(InputError):
        validate_tiers([ModelTier(1, 2.0, Money(1)), ModelTier(2, 2.0, Money(1))])
    with pytest.raises(InputError):
        validate_tiers([ModelTier(2, 1.0, Money(1))])
    with pytest.raises(InputError):
        validate_tiers([])
    with pytest.raises(InputError):
        validate_tiers([ModelTier(1, 1.0, Money(1), 1e-5), ModelTier(2, 2.0, Money(1), 1e-6)])
    with pytest.raises(InputError):
        ModelTier(1, 0.0, Money(1))


def test_survey_validation():
    validate_survey([SurveyPoint(1, Money(5)), SurveyPoint(2, Money(1))], 2)
    with pytest.raises(InputError):
        validate_survey([SurveyPoint(3, Money(5))], 2)
    with pytest.raises(InputError):
        SurveyPoint(0, Money(1))


def test_dataset_from_owners():
    owners = [DataOwner(7, (1.0, 2.0), 1.0, 1.0), DataOwner(9, (3.0, 4.0), -1.0, 1.0)]
    ds = Dataset.from_owners(owners)
    assert len(ds) == 2 and ds.dim == 2 and ds.ids == (7, 9)
    np.testing.assert_array_equal(ds.y, [1.0, -1.0])
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 2)), np.zeros(3))


def test_largest_remainder_known_case():
    # 1/3 each of 100: the earliest share takes the spare unit
    assert largest_remainder([Fraction(100, 3)] * 3, 100) == [34, 33, 33]
    assert largest_remainder([Fraction(57, 8), Fraction(95, 8)], 19) == [7, 12]


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=12), st.integers(0, 10**6))
def test_largest_remainder_conserves_and_stays_within_one(weights, total):
    if sum(weights) == 0:
        weights = [1] * len(weights)
    exact = [Fraction(w, sum(weights)) * total for w in weights]
    out = largest_remainder(exact, total)
    assert sum(out) == total
    assert all(abs(o - e) < 1 for o, e in zip(out, exact))
