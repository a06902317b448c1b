"""End-to-end broker run: value, select, train and price every tier, then pay owners."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .allocation import (
    CompItem,
    SelectionResult,
    Solver,
    base_compensation,
    eligible_owners,
    equal_split,
    extra_rate,
    select,
)
from .core import (
    DataOwner,
    Dataset,
    ModelTier,
    Money,
    Restriction,
    SurveyPoint,
    largest_remainder,
    validate_survey,
    validate_tiers,
)
from .errors import InputError, ZeroTotalPrice
from .pricing import PriceSchedule, PricingMethod, price_all, revenue_and_affordability
from .training import DPModel, LossSpec, accuracy, excess_loss_estimate, train_dp_erm
from .valuation import ShapleyReport, accuracy_oracle, exact_shapley, monte_carlo_shapley

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    tiers: tuple[ModelTier, ...]
    loss: LossSpec = LossSpec()
    shapley_permutations: int = 50
    shapley_seed: int = 0
    solver: Solver = Solver.PSEUDO_POLY_DP
    guess_alpha: float = 0.5
    survey_size_hint: int = 0
    alpha_opt: float = 1e-8
    training_seed: int = 0
    utility_tolerance: float = 1e-6
    exact_shapley: bool = False
    in_sample_utility: bool = False
    reuse_first_tier_values: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        object.__setattr__(self, "solver", Solver(self.solver))
        validate_tiers(self.tiers)
        if self.shapley_permutations < 1:
            raise InputError("shapley_permutations must be at least 1")

    @property
    def epsilons(self) -> list[float]:
        return [t.epsilon for t in self.tiers]


@dataclass
class TierResult:
    tier: ModelTier
    eligible: tuple[int, ...]
    shapley: ShapleyReport | None
    base: dict[int, Money]
    extra: dict[int, Money]
    extra_rates: dict[int, Fraction | float]
    selection: SelectionResult | None
    model: DPModel | None
    test_accuracy: float | None
    excess_loss: float
    price: Fraction = Fraction(0)
    revenue: Fraction = Fraction(0)
    demand: int = 0
    buyers: int = 0

    @property
    def chosen(self) -> tuple[int, ...]:
        return self.selection.chosen if self.selection else ()

    @property
    def trained(self) -> bool:
        return self.model is not None


@dataclass
class CompensationRecord:
    owner_id: int
    per_tier: dict[int, tuple[Money, Money]] = field(default_factory=dict)

    @property
    def base(self) -> Money:
        return Money(sum(int(b) for b, _ in self.per_tier.values()))

    @property
    def extra(self) -> Money:
        return Money(sum(int(e) for _, e in self.per_tier.values()))

    @property
    def total(self) -> Money:
        return self.base + self.extra


@dataclass
class Allocation:
    records: dict[int, CompensationRecord]
    pools: list[Money]
    retained: Money

    @property
    def distributed(self) -> Money:
        return Money(sum(int(r.total) for r in self.records.values()))

    def total_for(self, owner_id: int) -> Money:
        rec = self.records.get(owner_id)
        return rec.total if rec else Money(0)


@dataclass
class MarketReport:
    tiers: list[TierResult]
    schedule: PriceSchedule
    revenue: Fraction
    affordability: Fraction
    opt_revenue: Money
    allocation: Allocation
    method_revenues: dict[str, Fraction]

    @property
    def budget_total(self) -> Money:
        return Money(sum(int(t.tier.budget) for t in self.tiers))

    @property
    def deficit(self) -> int:
        """Selection-time budgets minus what the revenue can pay out (positive = shortfall)."""
        return int(self.budget_total) - int(self.opt_revenue)


def allocate_final_compensation(
    prices: Sequence | PriceSchedule,
    opt_revenue: Money,
    subsets: Sequence[Sequence[int]],
    shapley: Sequence[Mapping[int, float]],
    extra_rates: Sequence[Mapping[int, Fraction | float]] | None = None,
) -> Allocation:
    """Split realized revenue across tiers by price share, then across owners.

    Tier ``m`` receives ``p_m / sum(p) * opt_revenue``.  Inside a tier an
    owner's weight is ``SV_i * (1 + r_i)`` where ``r_i`` is their extra
    compensation rate, and the weight is reported as a base part ``SV_i`` and
    an extra part ``SV_i * r_i``.  All rounding is largest-remainder, so the
    pools sum to ``opt_revenue`` and each tier's payouts sum to its pool.  A
    tier with no selected owners keeps its pool (``retained``).
    """
    if isinstance(prices, PriceSchedule):
        prices = prices.prices
    prices = [Fraction(p) for p in prices]
    total_price = sum(prices)
    if total_price <= 0:
        raise ZeroTotalPrice("prices sum to zero; revenue shares undefined")
    M = len(prices)
    if len(subsets) != M or len(shapley) != M:
        raise InputError("one subset and one Shapley map per tier expected")
    rates = extra_rates if extra_rates is not None else [{} for _ in range(M)]
    pools = largest_remainder([p / total_price * int(opt_revenue) for p in prices], int(opt_revenue))

    records: dict[int, CompensationRecord] = {}
    retained = 0
    for m in range(M):
        members = sorted(set(subsets[m]))
        if not members:
            retained += pools[m]
            continue
        sv = {i: Fraction(max(0.0, float(shapley[m].get(i, 0.0)))) for i in members}
        r = {i: Fraction(rates[m].get(i, 0)) for i in members}
        weight = {i: sv[i] * (1 + r[i]) for i in members}
        norm = sum(weight.values())
        if norm == 0:
            sv = {i: Fraction(1) for i in members}
            r = {i: Fraction(0) for i in members}
            norm = Fraction(len(members))
        shares = []
        for i in members:
            shares.append(pools[m] * sv[i] / norm)
            shares.append(pools[m] * sv[i] * r[i] / norm)
        units = largest_remainder(shares, pools[m])
        for k, i in enumerate(members):
            rec = records.setdefault(i, CompensationRecord(i))
            rec.per_tier[m + 1] = (Money(units[2 * k]), Money(units[2 * k + 1]))
    return Allocation(dict(sorted(records.items())), [Money(p) for p in pools], Money(retained))


def _tier_shapley(config, tier, ids, oracle, first_values) -> ShapleyReport:
    if config.reuse_first_tier_values and first_values is not None and set(ids) <= set(first_values.owners):
        lookup = first_values.as_dict()
        values = np.array([lookup[i] for i in ids])
        return ShapleyReport(tuple(ids), values, first_values.permutations_used, first_values.seed, "reused")
    if config.exact_shapley:
        return exact_shapley(ids, oracle)
    return monte_carlo_shapley(ids, oracle, config.shapley_permutations, config.shapley_seed)


def run_pipeline(
    config: PipelineConfig,
    owners: Sequence[DataOwner],
    eval_set: Dataset | None,
    survey: Sequence[SurveyPoint],
) -> MarketReport:
    """Run the full broker loop over every tier and settle compensation."""
    if not owners:
        raise InputError("no data owners")
    if len({o.id for o in owners}) != len(owners):
        raise InputError("owner ids must be unique")
    validate_survey(survey, len(config.tiers))
    by_id = {o.id: o for o in owners}
    pool = Dataset.from_owners(owners)
    oracle = accuracy_oracle(pool, eval_set, config.loss, config.utility_tolerance, config.in_sample_utility)
    test_set = pool if config.in_sample_utility else eval_set

    results: list[TierResult] = []
    first_values = None
    for tier in config.tiers:
        ids = [i for i in eligible_owners(owners, tier)]
        excess = excess_loss_estimate(1, pool.dim, tier.epsilon, tier.delta)
        if not ids:
            logger.info("tier %d has no eligible owners; left untrained", tier.index)
            results.append(TierResult(tier, (), None, {}, {}, {}, None, None, None, excess))
            continue
        report = _tier_shapley(config, tier, ids, oracle, first_values)
        if first_values is None:
            first_values = report
        values = np.maximum(report.values, 0.0)
        if values.sum() > 0:
            bc_list = base_compensation(values, tier.budget)
        else:
            bc_list = equal_split(len(ids), tier.budget)
        base = dict(zip(report.owners, bc_list))
        costs = eligible_owners([by_id[i] for i in report.owners], tier, base)
        extra = {i: costs[i] - base[i] for i in report.owners}
        rates = {
            i: (extra_rate(by_id[i].curve, by_id[i].rho_for(tier.index), by_id[i].eps_prefer, tier.epsilon)
                if by_id[i].mode is Restriction.NEGOTIABLE else Fraction(0))
            for i in report.owners
        }
        items = [CompItem(i, float(v), base[i], extra[i]) for i, v in zip(report.owners, values)]
        selection = select(items, tier.budget, config.solver, config.guess_alpha)

        model = acc = None
        if selection.chosen:
            train = Dataset.from_owners([by_id[i] for i in selection.chosen])
            model = train_dp_erm(
                train, config.loss, tier.epsilon, tier.delta, config.alpha_opt,
                seed=config.training_seed + tier.index, tier=tier,
            )
            if test_set is not None and len(test_set):
                acc = accuracy(model.weights, test_set)
            excess = excess_loss_estimate(len(selection.chosen), pool.dim, tier.epsilon, tier.delta)
        results.append(TierResult(tier, tuple(report.owners), report, base, extra, rates, selection, model, acc, excess))

    eps = config.epsilons
    priced = price_all(survey, eps)
    schedule = priced[PricingMethod.COMPLETE_DP]
    revenue, ratio = revenue_and_affordability(schedule, survey)
    for m, res in enumerate(results):
        res.price = schedule.prices[m]
        on_tier = [int(p.bid) for p in survey if p.target_model == m + 1]
        res.demand = len(on_tier)
        res.buyers = sum(1 for b in on_tier if res.price <= b)
        res.revenue = res.price * res.buyers

    opt_revenue = Money.floor(schedule.revenue)
    if sum(schedule.prices) > 0:
        allocation = allocate_final_compensation(
            schedule,
            opt_revenue,
            [r.chosen for r in results],
            [r.shapley.as_dict() if r.shapley else {} for r in results],
            [r.extra_rates for r in results],
        )
    else:
        allocation = Allocation({}, [Money(0)] * len(results), Money(0))
    return MarketReport(
        tiers=results,
        schedule=schedule,
        revenue=revenue,
        affordability=ratio,
        opt_revenue=opt_revenue,
        allocation=allocation,
        method_revenues={k.value: v.revenue for k, v in priced.items()},
    )
