"""Shapley valuation of data owners against a model-utility oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Dataset
from .errors import EmptyEvalSet, InputError, TooManyOwners
from .training import LossSpec, accuracy, train_erm

MAX_EXACT_OWNERS = 20


class UtilityOracle:
    """Memoizing wrapper around a set function ``U(frozenset[int]) -> float``.

    The cache lives on the instance; create a fresh oracle per report if the
    underlying function can change.
    """

    def __init__(self, fn: Callable[[frozenset], float]):
        self._fn = fn
        self._cache: dict[frozenset, float] = {}
        self.calls = 0

    def __call__(self, subset: Iterable[int]) -> float:
        key = subset if isinstance(subset, frozenset) else frozenset(subset)
        hit = self._cache.get(key)
        if hit is None:
            self.calls += 1
            hit = float(self._fn(key))
            self._cache[key] = hit
        return hit

    def clear(self) -> None:
        self._cache.clear()


@dataclass
class ShapleyReport:
    owners: tuple[int, ...]
    values: np.ndarray
    permutations_used: int
    seed: int | None
    method: str
    std: np.ndarray | None = None
    running_mean_history: list[np.ndarray] = field(default_factory=list)
    utility_empty: float = 0.0
    utility_full: float = 0.0

    def as_dict(self) -> dict[int, float]:
        return {o: float(v) for o, v in zip(self.owners, self.values)}

    def __len__(self) -> int:
        return len(self.owners)


def exact_shapley(owners: Iterable[int], oracle: Callable[[frozenset], float], max_owners: int = MAX_EXACT_OWNERS) -> ShapleyReport:
    """Shapley values by enumerating every coalition.

    ``SV_i = sum_{S not containing i} |S|! (n-|S|-1)! / n! * (U(S+i) - U(S))``.
    """
    ids = tuple(sorted(set(owners)))
    n = len(ids)
    if n > max_owners:
        raise TooManyOwners(f"{n} owners exceeds exact enumeration guard of {max_owners}")
    if n == 0:
        return ShapleyReport((), np.zeros(0), 0, None, "exact", utility_empty=0.0, utility_full=0.0)

    utility = np.empty(1 << n)
    for mask in range(1 << n):
        utility[mask] = oracle(frozenset(ids[b] for b in range(n) if mask >> b & 1))

    masks = np.arange(1 << n)
    sizes = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        sizes += (masks >> b) & 1
    weight_by_size = np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])

    values = np.empty(n)
    for b in range(n):
        without = masks[((masks >> b) & 1) == 0]
        marg = utility[without | (1 << b)] - utility[without]
        values[b] = float(np.sum(weight_by_size[sizes[without]] * marg))
    return ShapleyReport(
        ids, values, 0, None, "exact", utility_empty=float(utility[0]), utility_full=float(utility[-1])
    )


def monte_carlo_shapley(
    owners: Iterable[int],
    oracle: Callable[[frozenset], float],
    permutations: int,
    seed: int,
    tolerance: float | None = None,
    checkpoint_every: int | None = None,
) -> ShapleyReport:
    """Permutation-sampling Shapley estimate.

    Each sampled ordering is scanned front to back; owner ``pi_i`` is credited
    ``U(pi_1..pi_i) - U(pi_1..pi_{i-1})``.  The estimate is the mean over the
    orderings actually used.  With ``tolerance`` set, sampling stops early at a
    checkpoint where no running mean moved by more than ``tolerance`` relative
    to the largest absolute value.
    """
    if permutations < 1:
        raise InputError("permutations must be at least 1")
    ids = tuple(sorted(set(owners)))
    n = len(ids)
    rng = np.random.default_rng(seed)
    every = checkpoint_every or max(1, permutations // 100)

    total = np.zeros(n)
    total_sq = np.zeros(n)
    history: list[np.ndarray] = []
    u_empty = oracle(frozenset())
    u_full = oracle(frozenset(ids)) if n else u_empty
    used = 0
    for k in range(permutations):
        order = rng.permutation(n)
        prefix: set[int] = set()
        prev = u_empty
        for pos in order:
            prefix.add(ids[pos])
            cur = oracle(frozenset(prefix))
            marg = cur - prev
            total[pos] += marg
            total_sq[pos] += marg * marg
            prev = cur
        used = k + 1
        if used % every == 0 or used == permutations:
            mean = total / used
            if tolerance is not None and history:
                scale = max(float(np.max(np.abs(mean))), 1e-12)
                if float(np.max(np.abs(mean - history[-1]))) / scale <= tolerance:
                    history.append(mean)
                    break
            history.append(mean)

    mean = total / used
    var = total_sq / used - mean**2
    if used > 1:
        var = var * used / (used - 1)
    std = np.sqrt(np.maximum(var, 0.0))
    return ShapleyReport(ids, mean, used, seed, "monte_carlo", std, history, u_empty, u_full)


def majority_baseline(eval_set: Dataset) -> float:
    """Accuracy of always predicting the majority class (ties predict +1)."""
    if len(eval_set) == 0:
        raise EmptyEvalSet("evaluation set is empty")
    pos = float(np.mean(np.sign(eval_set.y) > 0))
    return max(pos, 1.0 - pos)


def utility_accuracy(
    train_ids: Iterable[int],
    eval_set: Dataset,
    trainer: Callable[[Dataset], np.ndarray],
    pool: Dataset,
) -> float:
    """Accuracy on ``eval_set`` of ``trainer`` fit on the ``train_ids`` rows of ``pool``.

    The empty coalition scores the majority-class baseline.
    """
    if len(eval_set) == 0:
        raise EmptyEvalSet("evaluation set is empty")
    wanted = set(train_ids)
    if not wanted:
        return majority_baseline(eval_set)
    rows = [k for k, i in enumerate(pool.ids) if i in wanted]
    if len(rows) != len(wanted):
        missing = wanted - set(pool.ids)
        raise InputError(f"unknown owner ids {sorted(missing)}")
    subset = Dataset(pool.X[rows], pool.y[rows], tuple(pool.ids[k] for k in rows))
    return accuracy(trainer(subset), eval_set)


def erm_trainer(spec: LossSpec, tolerance: float = 1e-6, seed: int | None = None) -> Callable[[Dataset], np.ndarray]:
    """Deterministic non-private trainer for use inside utility oracles."""

    def fit(data: Dataset) -> np.ndarray:
        return train_erm(data, spec, tolerance=tolerance, seed=seed)

    return fit


def accuracy_oracle(
    pool: Dataset,
    eval_set: Dataset | None,
    spec: LossSpec,
    tolerance: float = 1e-6,
    in_sample: bool = False,
) -> UtilityOracle:
    """Utility oracle scoring coalitions by held-out (or in-sample) accuracy."""
    target = pool if in_sample else eval_set
    if target is None or len(target) == 0:
        raise EmptyEvalSet("evaluation set is empty")
    trainer = erm_trainer(spec, tolerance)
    return UtilityOracle(lambda subset: utility_accuracy(subset, target, trainer, pool))


def efficiency_gap(report: ShapleyReport) -> float:
    """``sum(SV) - (U(N) - U(empty))``; zero for exact values."""
    return float(np.sum(report.values)) - (report.utility_full - report.utility_empty)


def clip_negative(values: Sequence[float]) -> np.ndarray:
    return np.maximum(np.asarray(values, dtype=float), 0.0)
