"""Arbitrage-free tier pricing that maximizes revenue on a buyer survey.

Prices live on a finite grid of candidate points per tier:

* survey (SV) points: every surveyed bid on its own tier;
* subadditivity (SC) points: each bid scaled to every higher tier at the
  same unit price ``bid / eps``;
* monotonicity (MC) points: each bid copied to every lower tier.

Under the relaxed constraints (prices non-decreasing and unit prices
``price / eps`` non-increasing along the tiers) an optimum lies on this grid,
and a left-to-right dynamic program over tiers finds it.  Every candidate is
an exact :class:`~fractions.Fraction`.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .core import Money, SurveyPoint, as_rational, validate_survey
from .errors import EmptySolutionSpace, EmptySurvey, InputError, SearchSpaceTooLarge

MAX_SEARCH_SPACE = 10_000_000


class PointKind(str, enum.Enum):
    SV = "SV"
    SC = "SC"
    MC = "MC"


class PricingMethod(str, enum.Enum):
    COMPLETE_DP = "complete_dp"
    SURVEY_DP = "survey_dp"
    LINEAR = "linear"
    LOW = "low"
    MEDIAN = "median"
    HIGH = "high"
    BRUTE_FORCE_RRM = "rrm_bruteforce"
    BRUTE_FORCE_RM = "rm_bruteforce"
    GIVEN = "given"


@dataclass(frozen=True)
class PricePoint:
    """A candidate price on one tier.

    ``demand`` is the number of surveyed bids on this tier equal to
    ``price``; ``is_survey`` is 1 exactly when it is positive.
    """

    model_index: int
    price: Fraction
    kind: PointKind
    demand: int = 0

    @property
    def is_survey(self) -> int:
        return int(self.demand > 0)


SolutionSpace = list[list[PricePoint]]


@dataclass
class PriceSchedule:
    prices: tuple[Fraction, ...]
    revenue: Fraction
    method: PricingMethod
    feasible: bool = True
    opt_table: list[list[Fraction | None]] | None = None
    cell_updates: int = 0
    zero_demand: tuple[int, ...] = ()

    def money_prices(self) -> list[Money]:
        """Prices rounded down to whole minor units."""
        return [Money.floor(p) for p in self.prices]

    def __len__(self) -> int:
        return len(self.prices)


def _bid(point: SurveyPoint) -> Fraction:
    return as_rational(int(point.bid) if isinstance(point.bid, Money) else point.bid)


def _epsilons(epsilons: Sequence) -> list[Fraction]:
    eps = [as_rational(e) for e in epsilons]
    if not eps:
        raise InputError("at least one tier is required")
    if eps[0] <= 0 or any(b <= a for a, b in zip(eps, eps[1:])):
        raise InputError("epsilons must be positive and strictly increasing")
    return eps


def _survey_by_tier(survey: Sequence[SurveyPoint], n_tiers: int) -> list[list[Fraction]]:
    validate_survey(survey, n_tiers)
    bids: list[list[Fraction]] = [[] for _ in range(n_tiers)]
    for point in survey:
        bids[point.target_model - 1].append(_bid(point))
    return bids


def build_solution_space(survey: Sequence[SurveyPoint], epsilons: Sequence, augment: bool = True) -> SolutionSpace:
    """Candidate prices for every tier, sorted ascending.

    With ``augment=False`` only the survey points themselves are kept.
    Coinciding candidates on a tier are merged; the merged point keeps the
    survey demand of any survey point among them.
    """
    eps = _epsilons(epsilons)
    M = len(eps)
    bids = _survey_by_tier(survey, M)
    tiers: list[dict[Fraction, list]] = [{} for _ in range(M)]

    def add(tier: int, price: Fraction, kind: PointKind, demand: int) -> None:
        entry = tiers[tier].get(price)
        if entry is None:
            tiers[tier][price] = [kind, demand]
        else:
            entry[1] += demand
            if demand:
                entry[0] = PointKind.SV

    for m in range(M):
        for bid in bids[m]:
            add(m, bid, PointKind.SV, 1)
    if augment:
        for m in range(M):
            for bid in set(bids[m]):
                unit = bid / eps[m]
                for k in range(m + 1, M):
                    add(k, unit * eps[k], PointKind.SC, 0)
                for k in range(m):
                    add(k, bid, PointKind.MC, 0)
    return [
        [PricePoint(m + 1, price, kind, demand) for price, (kind, demand) in sorted(tiers[m].items())]
        for m in range(M)
    ]


def _marginal_revenue(points: Sequence[PricePoint]) -> list[Fraction]:
    """``price * (surveyed bids >= price)`` via a suffix sum of demands."""
    out = [Fraction(0)] * len(points)
    count = 0
    for j in range(len(points) - 1, -1, -1):
        count += points[j].demand
        out[j] = points[j].price * count
    return out


def _zero_schedule(M: int, method: PricingMethod, feasible: bool, cell_updates: int = 0) -> PriceSchedule:
    return PriceSchedule(tuple([Fraction(0)] * M), Fraction(0), method, feasible, None, cell_updates, tuple(range(1, M + 1)))


def maximize_revenue_dp(
    space: SolutionSpace,
    survey: Sequence[SurveyPoint],
    epsilons: Sequence,
    method: PricingMethod = PricingMethod.COMPLETE_DP,
    strategy: str = "window",
) -> PriceSchedule:
    """Optimal relaxed-arbitrage-free prices over ``space``.

    ``OPT(m, j) = MR(m, j) + max OPT(m-1, j')`` over predecessors whose price
    is at most ``p^m[j]`` and whose unit price is at least ``p^m[j]/eps^m``.
    Because both bounds move right as ``j`` grows, the feasible predecessors
    form a sliding window; ``strategy="window"`` keeps a monotone deque over
    it, ``strategy="scan"`` rescans every predecessor.  Ties pick the lowest
    price, both for the predecessor and for the final tier.

    If no complete chain of feasible cells exists the all-zero schedule is
    returned with ``feasible=False``.
    """
    eps = _epsilons(epsilons)
    M = len(eps)
    if len(space) != M:
        raise EmptySolutionSpace(f"solution space has {len(space)} tiers, expected {M}")
    if strategy not in ("window", "scan"):
        raise InputError(f"unknown strategy {strategy!r}")
    if not survey:
        return _zero_schedule(M, method, True)

    mr = [_marginal_revenue(points) for points in space]
    opt: list[list[Fraction | None]] = [list(mr[0])]
    back: list[list[int | None]] = [[None] * len(space[0])]
    updates = 0
    for m in range(1, M):
        prev_pts, prev_opt = space[m - 1], opt[m - 1]
        ratio = eps[m - 1] / eps[m]
        row: list[Fraction | None] = []
        links: list[int | None] = []
        if strategy == "scan":
            for j, point in enumerate(space[m]):
                low = point.price * ratio
                best = None
                for jp, pp in enumerate(prev_pts):
                    updates += 1
                    if prev_opt[jp] is None or pp.price > point.price or pp.price < low:
                        continue
                    if best is None or prev_opt[jp] > prev_opt[best]:
                        best = jp
                row.append(None if best is None else prev_opt[best] + mr[m][j])
                links.append(best)
        else:
            window: deque[int] = deque()
            hi = 0
            for j, point in enumerate(space[m]):
                while hi < len(prev_pts) and prev_pts[hi].price <= point.price:
                    updates += 1
                    if prev_opt[hi] is not None:
                        # strict '<' keeps the earlier (cheaper) index on ties
                        while window and prev_opt[window[-1]] < prev_opt[hi]:
                            window.pop()
                        window.append(hi)
                    hi += 1
                low = point.price * ratio
                while window and prev_pts[window[0]].price < low:
                    updates += 1
                    window.popleft()
                updates += 1
                best = window[0] if window else None
                row.append(None if best is None else prev_opt[best] + mr[m][j])
                links.append(best)
        opt.append(row)
        back.append(links)

    last = [(v, j) for j, v in enumerate(opt[-1]) if v is not None]
    if not last:
        return _zero_schedule(M, method, False, updates)
    best_value = max(v for v, _ in last)
    j = min(j for v, j in last if v == best_value)
    picks = [0] * M
    for m in range(M - 1, -1, -1):
        picks[m] = j
        if m:
            j = back[m][j]
    prices = tuple(space[m][picks[m]].price for m in range(M))
    bids = _survey_by_tier(survey, M)
    zero = tuple(m + 1 for m in range(M) if not any(b >= prices[m] for b in bids[m]))
    return PriceSchedule(prices, best_value, method, True, opt, updates, zero)


def maximize_revenue(survey: Sequence[SurveyPoint], epsilons: Sequence, strategy: str = "window") -> PriceSchedule:
    """Relaxed revenue maximization over the complete candidate grid."""
    space = build_solution_space(survey, epsilons)
    return maximize_revenue_dp(space, survey, epsilons, PricingMethod.COMPLETE_DP, strategy)


def maximize_revenue_survey_only(survey: Sequence[SurveyPoint], epsilons: Sequence) -> PriceSchedule:
    """Same dynamic program restricted to the surveyed prices of each tier."""
    space = build_solution_space(survey, epsilons, augment=False)
    return maximize_revenue_dp(space, survey, epsilons, PricingMethod.SURVEY_DP)


def revenue_and_affordability(prices: Sequence | PriceSchedule, survey: Sequence[SurveyPoint]) -> tuple[Fraction, Fraction]:
    """Revenue collected from buyers whose bid covers their tier's price, and their share."""
    if isinstance(prices, PriceSchedule):
        prices = prices.prices
    prices = [as_rational(p) for p in prices]
    validate_survey(survey, len(prices))
    revenue = Fraction(0)
    buyers = 0
    for point in survey:
        p = prices[point.target_model - 1]
        if p <= _bid(point):
            revenue += p
            buyers += 1
    ratio = Fraction(buyers, len(survey)) if survey else Fraction(0)
    return revenue, ratio


def baseline_prices(kind: PricingMethod | str, survey: Sequence[SurveyPoint], M: int) -> PriceSchedule:
    """Reference pricers: one global low/median/high price, or a linear ramp.

    The ramp runs from the lowest bid on tier 1 to the highest bid on tier M
    (falling back to the global extremes when either tier has no bids).  The
    median of an even number of bids is the lower middle one.
    """
    kind = PricingMethod(kind)
    if not survey:
        raise EmptySurvey("baseline prices need at least one survey point")
    by_tier = _survey_by_tier(survey, M)
    bids = sorted(b for tier in by_tier for b in tier)
    if kind is PricingMethod.LOW:
        prices = [bids[0]] * M
    elif kind is PricingMethod.HIGH:
        prices = [bids[-1]] * M
    elif kind is PricingMethod.MEDIAN:
        prices = [bids[(len(bids) - 1) // 2]] * M
    elif kind is PricingMethod.LINEAR:
        lo = min(by_tier[0]) if by_tier[0] else bids[0]
        hi = max(by_tier[-1]) if by_tier[-1] else bids[-1]
        if M == 1:
            prices = [lo]
        else:
            prices = [lo + (hi - lo) * Fraction(m, M - 1) for m in range(M)]
    else:
        raise InputError(f"{kind.value} is not a baseline pricer")
    revenue, _ = revenue_and_affordability(prices, survey)
    return PriceSchedule(tuple(prices), revenue, kind)


@dataclass
class ArbitrageReport:
    monotone: bool
    relaxed_subadditive: bool
    sum_subadditive: bool
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.monotone and self.relaxed_subadditive and self.sum_subadditive


def sum_triples(eps: Sequence[Fraction]) -> list[tuple[int, int, int]]:
    """Index triples ``(a, b, c)`` with ``a <= b`` and ``eps[a] + eps[b] == eps[c]``."""
    where = {e: c for c, e in enumerate(eps)}
    out = []
    for a in range(len(eps)):
        for b in range(a, len(eps)):
            c = where.get(eps[a] + eps[b])
            if c is not None:
                out.append((a, b, c))
    return out


def cover_cost(prices: Sequence[Fraction], eps: Sequence[Fraction], target: Fraction) -> Fraction | None:
    """Cheapest bundle of the given tiers (repeats allowed) whose budgets sum to at least ``target``.

    This is what a buyer pays by composing cheaper models instead of buying
    one with budget ``target``.  Returns None when ``prices`` is empty.
    """
    if not prices:
        return None
    n = len(prices)

    @functools.lru_cache(maxsize=None)
    def best(need: Fraction, top: int) -> Fraction:
        # items are taken in non-increasing index order to skip permutations
        if need <= 0:
            return Fraction(0)
        return min(prices[i] + best(need - eps[i], i) for i in range(top + 1))

    return best(Fraction(target), n - 1)


def check_arbitrage_free(prices: Sequence | PriceSchedule, epsilons: Sequence) -> ArbitrageReport:
    """Check monotonicity, non-increasing unit price and subadditivity.

    Subadditivity here means no tier costs more than the cheapest bundle of
    lower tiers whose budgets add up to at least its own; pairs whose
    budgets sum exactly to a tier's budget are the simplest such bundles.
    """
    if isinstance(prices, PriceSchedule):
        prices = prices.prices
    p = [as_rational(x) for x in prices]
    eps = _epsilons(epsilons)
    if len(p) != len(eps):
        raise InputError("one price per tier expected")
    violations = []
    monotone = relaxed = summed = True
    for a, b in itertools.combinations(range(len(p)), 2):
        if p[a] > p[b]:
            monotone = False
            violations.append(f"monotonicity: p{a + 1}={p[a]} > p{b + 1}={p[b]}")
        if p[a] / eps[a] < p[b] / eps[b]:
            relaxed = False
            violations.append(f"unit price rises: p{a + 1}/eps={p[a] / eps[a]} < p{b + 1}/eps={p[b] / eps[b]}")
    for c in range(1, len(p)):
        bundle = cover_cost(p[:c], eps[:c], eps[c])
        if bundle < p[c]:
            summed = False
            violations.append(f"subadditivity: lower tiers cover eps{c + 1} for {bundle} < p{c + 1}={p[c]}")
    return ArbitrageReport(monotone, relaxed, summed, violations)


# -- exhaustive oracles -----------------------------------------------------------


def _tier_revenue_tables(candidates: Sequence[Sequence[Fraction]], survey, M) -> list[dict[Fraction, Fraction]]:
    bids = _survey_by_tier(survey, M)
    return [{c: c * sum(1 for b in bids[m] if b >= c) for c in candidates[m]} for m in range(M)]


def _exhaustive(survey, epsilons, candidates, accept_step, method) -> PriceSchedule:
    eps = _epsilons(epsilons)
    M = len(eps)
    if candidates is None:
        candidates = [[pt.price for pt in tier] for tier in build_solution_space(survey, eps)]
    candidates = [sorted(set(as_rational(c) for c in tier)) for tier in candidates]
    size = math.prod(len(c) for c in candidates)
    if size > MAX_SEARCH_SPACE:
        raise SearchSpaceTooLarge(f"{size} price combinations exceeds guard {MAX_SEARCH_SPACE}")
    if not survey:
        return _zero_schedule(M, method, True)
    rev = _tier_revenue_tables(candidates, survey, M)
    best: tuple[Fraction, tuple] | None = None
    chosen: list[Fraction] = []

    def search(m: int, acc: Fraction) -> None:
        nonlocal best
        if m == M:
            if best is None or acc > best[0]:
                best = (acc, tuple(chosen))
            return
        for c in candidates[m]:
            if not accept_step(chosen, c, m, eps):
                continue
            chosen.append(c)
            search(m + 1, acc + rev[m][c])
            chosen.pop()

    search(0, Fraction(0))
    if best is None:
        return _zero_schedule(M, method, False)
    return PriceSchedule(best[1], best[0], method)


def _relaxed_step(chosen, c, m, eps) -> bool:
    if not chosen:
        return True
    prev = chosen[-1]
    return prev <= c and prev / eps[m - 1] >= c / eps[m]


def rrm_bruteforce(survey: Sequence[SurveyPoint], epsilons: Sequence, candidates=None) -> PriceSchedule:
    """Best relaxed-feasible schedule by trying every candidate combination.

    ``candidates`` (per-tier price lists) defaults to the complete grid.
    Both relaxed constraints are transitive, so checking adjacent tiers
    suffices.
    """
    return _exhaustive(survey, epsilons, candidates, _relaxed_step, PricingMethod.BRUTE_FORCE_RRM)


def _rm_search(survey: Sequence[SurveyPoint], eps: list[Fraction]) -> PriceSchedule:
    M = len(eps)
    bids = _survey_by_tier(survey, M)
    above = [sorted({b for tier in bids[m:] for b in tier}) for m in range(M)]
    best: tuple[Fraction, tuple] | None = None
    chosen: list[Fraction] = []
    visited = 0

    def search(m: int, acc: Fraction) -> None:
        nonlocal best, visited
        visited += 1
        if visited > MAX_SEARCH_SPACE:
            raise SearchSpaceTooLarge(f"more than {MAX_SEARCH_SPACE} partial schedules")
        if m == M:
            if best is None or acc > best[0]:
                best = (acc, tuple(chosen))
            return
        caps = [cover_cost(chosen, eps[:m], eps[k]) for k in range(m, M)] if chosen else []
        cap = caps[0] if caps else None
        floor = chosen[-1] if chosen else Fraction(0)
        options = set(above[m]) | set(caps) | ({floor} if chosen else set())
        for c in sorted(options):
            if c < floor or (cap is not None and c > cap):
                continue
            chosen.append(c)
            search(m + 1, acc + c * sum(1 for b in bids[m] if b >= c))
            chosen.pop()

    search(0, Fraction(0))
    if best is None:
        return _zero_schedule(M, PricingMethod.BRUTE_FORCE_RM, False)
    return PriceSchedule(best[1], best[0], PricingMethod.BRUTE_FORCE_RM)


def rm_bruteforce(
    survey: Sequence[SurveyPoint], epsilons: Sequence, candidates=None, subadditive: bool = True
) -> PriceSchedule:
    """Best monotone, subadditive schedule by exhaustive search.

    Subadditivity is the bundle condition of :func:`check_arbitrage_free`.
    Without ``candidates`` the search is over all real prices: some optimum
    prices every tier at a bid on that tier or a higher one, at the bundle
    cap a higher tier inherits from the tiers already priced, or at the
    previous tier's price (raise any other price until one of those binds),
    so only those values are tried.  With ``candidates`` (per-tier price
    lists) the search is restricted to them.  ``subadditive=False`` keeps
    only monotonicity and needs ``candidates``.
    """
    eps = _epsilons(epsilons)
    if not survey:
        return _zero_schedule(len(eps), PricingMethod.BRUTE_FORCE_RM, True)
    if candidates is None:
        if not subadditive:
            raise InputError("monotone-only search needs an explicit candidate grid")
        return _rm_search(survey, eps)
    bundles: dict[tuple, Fraction | None] = {}

    def step(chosen, c, m, eps_):
        if chosen and chosen[-1] > c:
            return False
        if not subadditive or not chosen:
            return True
        key = tuple(chosen)
        if key not in bundles:
            bundles[key] = cover_cost(key, eps[:m], eps[m])
        return c <= bundles[key]

    return _exhaustive(survey, eps, candidates, step, PricingMethod.BRUTE_FORCE_RM)


def midpoint_grid(space: SolutionSpace) -> list[list[Fraction]]:
    """Each tier's candidates plus the midpoints between neighbours (and half the lowest)."""
    out = []
    for tier in space:
        prices = [pt.price for pt in tier]
        extra = [(a + b) / 2 for a, b in zip(prices, prices[1:])]
        if prices:
            extra.append(prices[0] / 2)
        out.append(sorted(set(prices) | set(extra)))
    return out


def price_all(survey: Sequence[SurveyPoint], epsilons: Sequence) -> dict[PricingMethod, PriceSchedule]:
    """Complete-grid DP, survey-only DP and every baseline on one survey."""
    M = len(epsilons)
    out = {
        PricingMethod.COMPLETE_DP: maximize_revenue(survey, epsilons),
        PricingMethod.SURVEY_DP: maximize_revenue_survey_only(survey, epsilons),
    }
    if survey:
        for kind in (PricingMethod.LINEAR, PricingMethod.LOW, PricingMethod.MEDIAN, PricingMethod.HIGH):
            out[kind] = baseline_prices(kind, survey, M)
    return out


def survey_from_pairs(pairs: Iterable[tuple[int, int]]) -> list[SurveyPoint]:
    """Convenience constructor: ``[(tier, bid_in_minor_units), ...]``."""
    return [SurveyPoint(int(m), Money(int(b))) for m, b in pairs]
