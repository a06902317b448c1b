"""Owner compensation and budget-constrained maximum-value subset selection.

Selection maximizes the total Shapley value of the chosen owners subject to
their total compensation (base + extra) staying within a tier's
manufacturing budget: a 0/1 knapsack with real values and integer costs.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Curve, DataOwner, ModelTier, Money, Restriction, as_rational
from .errors import AllZeroShapley, BudgetTooLargeForTable, EnumerationTooLarge, InputError, TooManyItems

MAX_BRUTEFORCE_ITEMS = 22
MAX_DP_CELLS = 50_000_000
MAX_GUESS_SUBSETS = 1_000_000


class Solver(str, enum.Enum):
    BRUTE_FORCE = "bruteforce"
    PSEUDO_POLY_DP = "dp"
    GREEDY = "greedy"
    GUESS_GREEDY = "guess_greedy"


@dataclass(frozen=True)
class CompItem:
    """An owner's Shapley value and compensation cost for one tier.

    Negative Shapley values are clipped to zero on construction.
    """

    owner_id: int
    shapley: float
    base_comp: Money
    extra_comp: Money = Money(0)

    def __post_init__(self):
        if not math.isfinite(self.shapley):
            raise InputError(f"owner {self.owner_id}: non-finite Shapley value")
        object.__setattr__(self, "shapley", max(0.0, float(self.shapley)))

    @property
    def total_cost(self) -> Money:
        return self.base_comp + self.extra_comp


@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple[int, ...]
    total_value: float
    total_cost: Money
    solver: Solver


def _result(items: Sequence[CompItem], picked: Iterable[int], solver: Solver) -> SelectionResult:
    picked = sorted(set(picked), key=lambda k: items[k].owner_id)
    return SelectionResult(
        chosen=tuple(items[k].owner_id for k in picked),
        total_value=math.fsum(items[k].shapley for k in picked),
        total_cost=Money(sum(int(items[k].total_cost) for k in picked)),
        solver=solver,
    )


# -- compensation ---------------------------------------------------------------


def base_compensation(shapley: Sequence[float], budget: Money) -> list[Money]:
    """Split ``budget`` proportionally to (clipped) Shapley values.

    Shares are rounded down to minor units; whatever is left over goes to the
    owner with the largest value (the later one on ties), so the shares always
    sum to the budget.
    """
    values = [Fraction(max(0.0, float(v))) for v in shapley]
    total = sum(values)
    if total <= 0:
        raise AllZeroShapley("Shapley values sum to zero; proportional split undefined")
    shares = [v / total * int(budget) for v in values]
    floors = [math.floor(s) for s in shares]
    leftover = int(budget) - sum(floors)
    if leftover:
        top = max(range(len(values)), key=lambda k: (values[k], k))
        floors[top] += leftover
    return [Money(f) for f in floors]


def equal_split(n: int, budget: Money) -> list[Money]:
    """Equal shares, remainder units to the last owners."""
    if n == 0:
        return []
    q, r = divmod(int(budget), n)
    return [Money(q + (1 if k >= n - r else 0)) for k in range(n)]


def _exact_sqrt(x: Fraction) -> Fraction | None:
    num, den = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if num * num == x.numerator and den * den == x.denominator:
        return Fraction(num, den)
    return None


def extra_rate(curve: Curve | str, rho: float, eps_prefer: float, eps_model: float) -> Fraction | float:
    """Multiplier of the base compensation owed as extra compensation.

    ``rho * g**p`` with ``g = max(0, eps_model - eps_prefer)`` and ``p`` = 1,
    2 or 1/2 for the linear, convex and concave curves.
    """
    curve = Curve(curve)
    if rho < 0:
        raise InputError("rho must be non-negative")
    gap = max(Fraction(0), as_rational(eps_model) - as_rational(eps_prefer))
    if gap == 0 or rho == 0:
        return Fraction(0)
    r = as_rational(rho)
    if curve is Curve.LINEAR:
        return r * gap
    if curve is Curve.CONVEX:
        return r * gap * gap
    root = _exact_sqrt(gap)
    return r * root if root is not None else float(r) * math.sqrt(gap)


def extra_compensation(curve: Curve | str, rho: float, base_comp: Money, eps_prefer: float, eps_model: float) -> Money:
    """Extra compensation in minor units, rounded half up."""
    rate = extra_rate(curve, rho, eps_prefer, eps_model)
    amount = rate * int(base_comp)
    if isinstance(amount, Fraction):
        return Money(math.floor(amount + Fraction(1, 2)))
    return Money(math.floor(amount + 0.5))


def is_eligible(owner: DataOwner, tier: ModelTier) -> bool:
    if owner.mode is Restriction.HARD:
        return as_rational(tier.epsilon) <= as_rational(owner.eps_prefer)
    return True


def eligible_owners(
    owners: Sequence[DataOwner], tier: ModelTier, base: Mapping[int, Money] | None = None
) -> dict[int, Money]:
    """Owners usable for ``tier`` mapped to their selection cost.

    Hard owners qualify only when the tier's epsilon does not exceed their
    preference and cost their base compensation.  Negotiable owners always
    qualify and additionally cost the extra compensation their curve demands.
    Without ``base`` every base compensation is taken as zero.
    """
    out: dict[int, Money] = {}
    for o in owners:
        if not is_eligible(o, tier):
            continue
        bc = (base or {}).get(o.id, Money(0))
        cost = bc
        if o.mode is Restriction.NEGOTIABLE:
            cost = bc + extra_compensation(o.curve, o.rho_for(tier.index), bc, o.eps_prefer, tier.epsilon)
        out[o.id] = cost
    return out


# -- solvers --------------------------------------------------------------------


def bcmvp_bruteforce(items: Sequence[CompItem], budget: Money, max_items: int = MAX_BRUTEFORCE_ITEMS) -> SelectionResult:
    """Exact optimum by enumerating all subsets.

    Ties prefer the cheaper subset, then the lexicographically smaller id tuple.
    """
    n = len(items)
    if n > max_items:
        raise TooManyItems(f"{n} items exceeds brute-force guard of {max_items}")
    costs = np.zeros(1, dtype=np.int64)
    values = np.zeros(1)
    for it in items:
        costs = np.concatenate([costs, costs + int(it.total_cost)])
        values = np.concatenate([values, values + it.shapley])
    feasible = np.flatnonzero(costs <= int(budget))
    best = float(values[feasible].max())
    slack = 1e-9 * max(1.0, abs(best))
    candidates = feasible[values[feasible] >= best - slack]

    def picked(mask: int) -> list[int]:
        return [k for k in range(n) if mask >> k & 1]

    # numpy sums are order dependent; re-rank near-ties by the exact sum
    exact = np.array([math.fsum(items[k].shapley for k in picked(int(m))) for m in candidates])
    candidates = candidates[exact == exact.max()]
    candidates = candidates[costs[candidates] == costs[candidates].min()]
    mask = min((int(m) for m in candidates), key=lambda m: tuple(sorted(items[k].owner_id for k in picked(m))))
    return _result(items, picked(mask), Solver.BRUTE_FORCE)


def bcmvp_dp(items: Sequence[CompItem], budget: Money, max_cells: int = MAX_DP_CELLS) -> SelectionResult:
    """Pseudo-polynomial knapsack table over budget units of size ``gcd(costs, budget)``.

    ``table[i, j]`` is the best value using the first ``i`` items with total
    cost at most ``j`` units; the chosen set is recovered by walking the table
    back from ``table[n, budget/a]``.
    """
    n = len(items)
    costs = [int(it.total_cost) for it in items]
    a = math.gcd(*costs, int(budget)) if n else int(budget)
    if a == 0:
        return _result(items, range(n), Solver.PSEUDO_POLY_DP)
    cap = int(budget) // a
    if (n + 1) * (cap + 1) > max_cells:
        raise BudgetTooLargeForTable(f"table of {(n + 1) * (cap + 1)} cells exceeds guard {max_cells}")
    units = [c // a for c in costs]
    table = np.zeros((n + 1, cap + 1))
    for i, it in enumerate(items, start=1):
        w = units[i - 1]
        table[i] = table[i - 1]
        if w <= cap:
            take = table[i - 1, : cap + 1 - w] + it.shapley
            table[i, w:] = np.maximum(table[i - 1, w:], take)
    picked = []
    j = cap
    for i in range(n, 0, -1):
        if table[i, j] != table[i - 1, j]:
            picked.append(i - 1)
            j -= units[i - 1]
    return _result(items, picked, Solver.PSEUDO_POLY_DP)


def _density_order(items: Sequence[CompItem], pool: Iterable[int]) -> list[int]:
    def key(k: int):
        it = items[k]
        cost = int(it.total_cost)
        density = math.inf if cost == 0 else Fraction(it.shapley) / cost
        return (-density, -it.shapley, it.owner_id)

    return sorted(pool, key=key)


def _greedy_prefix(items: Sequence[CompItem], pool: Iterable[int], budget: int) -> list[int]:
    picked, spent = [], 0
    for k in _density_order(items, pool):
        cost = int(items[k].total_cost)
        if spent + cost > budget:
            break
        picked.append(k)
        spent += cost
    return picked


def bcmvp_greedy(items: Sequence[CompItem], budget: Money) -> SelectionResult:
    """Take owners by decreasing value per unit cost, stopping at the first misfit.

    Ties in density go to the higher value, then the lower owner id.  Zero-cost
    owners have infinite density.  Stopping at the first item that does not
    fit (rather than skipping it) is what the ``(1 - zeta)`` bound assumes.
    """
    return _result(items, _greedy_prefix(items, range(len(items)), int(budget)), Solver.GREEDY)


def bcmvp_guess_greedy(
    items: Sequence[CompItem], budget: Money, alpha: float, max_subsets: int = MAX_GUESS_SUBSETS
) -> SelectionResult:
    """Guess up to ``ceil(1/alpha)`` owners, fill the rest greedily.

    For every affordable seed set ``S'`` of at most ``h`` owners, owners worth
    more than the cheapest-valued member of ``S'`` are dropped from the pool
    and the greedy prefix is run on what remains with the leftover budget.
    The best ``S'`` plus its greedy completion is returned.
    """
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    n = len(items)
    h = min(n, math.ceil(1 / as_rational(alpha)))
    count = sum(math.comb(n, i) for i in range(h + 1))
    if count > max_subsets:
        raise EnumerationTooLarge(f"{count} seed subsets exceeds guard {max_subsets}")
    cap = int(budget)
    best_key, best_pick = None, []
    for size in range(h + 1):
        for seed in itertools.combinations(range(n), size):
            spent = sum(int(items[k].total_cost) for k in seed)
            if spent > cap:
                continue
            floor_value = min((items[k].shapley for k in seed), default=math.inf)
            chosen = set(seed)
            pool = [k for k in range(n) if k not in chosen and items[k].shapley <= floor_value]
            picked = list(seed) + _greedy_prefix(items, pool, cap - spent)
            value = math.fsum(items[k].shapley for k in picked)
            key = (-value, tuple(sorted(items[k].owner_id for k in picked)))
            if best_key is None or key < best_key:
                best_key, best_pick = key, picked
    return _result(items, best_pick, Solver.GUESS_GREEDY)


def select(items: Sequence[CompItem], budget: Money, solver: Solver | str, alpha: float = 0.5) -> SelectionResult:
    solver = Solver(solver)
    if solver is Solver.BRUTE_FORCE:
        return bcmvp_bruteforce(items, budget)
    if solver is Solver.PSEUDO_POLY_DP:
        return bcmvp_dp(items, budget)
    if solver is Solver.GREEDY:
        return bcmvp_greedy(items, budget)
    return bcmvp_guess_greedy(items, budget, alpha)
