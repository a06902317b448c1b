import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datamarket.core import Dataset
from datamarket.errors import EmptyEvalSet, InputError, TooManyOwners
from datamarket.training import LossSpec
from datamarket.valuation import (
    UtilityOracle,
    accuracy_oracle,
    clip_negative,
    efficiency_gap,
    erm_trainer,
    exact_shapley,
    majority_baseline,
    monte_carlo_shapley,
    utility_accuracy,
)


def permutation_shapley(ids, fn):
    """Independent oracle: average marginals over every ordering."""
    ids = list(ids)
    total = {i: 0.0 for i in ids}
    perms = list(itertools.permutations(ids))
    for order in perms:
        prefix = set()
        for i in order:
            before = fn(frozenset(prefix))
            prefix.add(i)
            total[i] += fn(frozenset(prefix)) - before
    return np.array([total[i] / len(perms) for i in sorted(ids)])


def random_game(n, seed):
    rng = np.random.default_rng(seed)
    table = {frozenset(s): float(rng.random()) for r in range(n + 1) for s in itertools.combinations(range(n), r)}
    return table.__getitem__


def test_additive_game_is_its_own_value():
    c = {0: 0.1, 1: 0.2, 2: 0.3}
    oracle = UtilityOracle(lambda s: sum(c[i] for i in s))
    rep = exact_shapley([0, 1, 2], oracle)
    np.testing.assert_allclose(rep.values, [0.1, 0.2, 0.3], atol=1e-15)
    mc = monte_carlo_shapley([0, 1, 2], oracle, permutations=7, seed=1)
    np.testing.assert_allclose(mc.values, [0.1, 0.2, 0.3], atol=1e-15)


def test_unanimity_game_splits_evenly():
    rep = exact_shapley([0, 1], UtilityOracle(lambda s: float(len(s) == 2)))
    np.testing.assert_allclose(rep.values, [0.5, 0.5])


def test_one_nearest_neighbour_utility_against_enumeration():
    rng = np.random.default_rng(0)
    train_x = rng.standard_normal((5, 2))
    train_y = np.array([1, -1, 1, -1, 1])
    ev_x = rng.standard_normal((10, 2))
    ev_y = np.where(ev_x[:, 0] > 0, 1, -1)

    def nn_accuracy(subset):
        if not subset:
            pos = np.mean(ev_y > 0)
            return max(pos, 1 - pos)
        idx = sorted(subset)
        dist = np.linalg.norm(ev_x[:, None, :] - train_x[idx][None, :, :], axis=2)
        pred = train_y[idx][np.argmin(dist, axis=1)]
        return float(np.mean(pred == ev_y))

    rep = exact_shapley(range(5), UtilityOracle(nn_accuracy))
    np.testing.assert_allclose(rep.values, permutation_shapley(range(5), nn_accuracy), atol=1e-12)
    assert abs(efficiency_gap(rep)) < 1e-12


@settings(max_examples=30)
@given(n=st.integers(1, 5), seed=st.integers(0, 10**6))
def test_exact_matches_permutation_enumeration(n, seed):
    game = random_game(n, seed)
    rep = exact_shapley(range(n), UtilityOracle(game))
    np.testing.assert_allclose(rep.values, permutation_shapley(range(n), game), atol=1e-12)


@settings(max_examples=30)
@given(n=st.integers(1, 7), seed=st.integers(0, 10**6))
def test_efficiency_symmetry_null_player(n, seed):
    rng = np.random.default_rng(seed)
    weights = rng.random(n)
    weights[0] = 0.0  # owner 0 is a null player
    if n > 2:
        weights[2] = weights[1]  # owners 1 and 2 are symmetric

    def game(s):
        return math.sqrt(sum(weights[i] for i in s))

    rep = exact_shapley(range(n), UtilityOracle(game))
    assert abs(rep.values.sum() - (game(range(n)) - game(()))) <= 1e-9 * max(1.0, game(range(n)))
    assert abs(rep.values[0]) < 1e-12
    if n > 2:
        assert abs(rep.values[1] - rep.values[2]) < 1e-12


def test_exact_guard():
    with pytest.raises(TooManyOwners):
        exact_shapley(range(21), UtilityOracle(len))


def test_single_permutation_is_its_marginals():
    game = random_game(4, 3)
    rep = monte_carlo_shapley(range(4), UtilityOracle(game), permutations=1, seed=9)
    order = np.random.default_rng(9).permutation(4)
    expected = np.zeros(4)
    prefix = set()
    for pos in order:
        before = game(frozenset(prefix))
        prefix.add(pos)
        expected[pos] = game(frozenset(prefix)) - before
    np.testing.assert_allclose(rep.values, expected)
    assert rep.permutations_used == 1


def test_monte_carlo_within_three_standard_errors():
    game = random_game(8, 42)
    exact = exact_shapley(range(8), UtilityOracle(game)).values
    mc = monte_carlo_shapley(range(8), UtilityOracle(game), permutations=2000, seed=5)
    bound = 3 * mc.std / math.sqrt(2000)
    assert np.all(np.abs(mc.values - exact) <= bound)


def test_monte_carlo_is_seed_deterministic():
    game = random_game(5, 1)
    a = monte_carlo_shapley(range(5), UtilityOracle(game), 50, seed=3)
    b = monte_carlo_shapley(range(5), UtilityOracle(game), 50, seed=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_running_mean_settles_on_additive_game():
    oracle = UtilityOracle(lambda s: 0.1 * len(s) + 0.05 * (0 in s))
    rep = monte_carlo_shapley(range(4), oracle, permutations=200, seed=0, checkpoint_every=10)
    tail = rep.running_mean_history[-max(2, len(rep.running_mean_history) // 10):]
    assert max(float(np.max(np.abs(a - b))) for a, b in zip(tail, tail[1:])) <= 1e-12


def test_tolerance_stops_early():
    oracle = UtilityOracle(lambda s: float(len(s)))
    rep = monte_carlo_shapley(range(3), oracle, permutations=1000, seed=0, tolerance=1e-9, checkpoint_every=5)
    assert rep.permutations_used == 10


def test_oracle_memoizes():
    calls = []
    oracle = UtilityOracle(lambda s: calls.append(s) or 0.0)
    oracle({1, 2})
    oracle([2, 1])
    assert len(calls) == 1 and oracle.calls == 1


def test_majority_baseline():
    ev = Dataset(np.zeros((5, 1)), np.array([1, 1, 1, -1, -1]))
    assert majority_baseline(ev) == pytest.approx(0.6)
    assert majority_baseline(Dataset(np.zeros((2, 1)), np.array([1, -1]))) == 0.5
    with pytest.raises(EmptyEvalSet):
        majority_baseline(Dataset(np.zeros((0, 1)), np.zeros(0)))


def test_utility_accuracy_on_separable_blobs():
    rng = np.random.default_rng(0)
    pos = rng.normal([0.5, 0.5], 0.05, (20, 2))
    neg = rng.normal([-0.5, -0.5], 0.05, (20, 2))
    pool = Dataset(np.vstack([pos, neg]), np.r_[np.ones(20), -np.ones(20)])
    trainer = erm_trainer(LossSpec(lam=1e-3))
    assert utility_accuracy(range(40), pool, trainer, pool) == 1.0
    assert utility_accuracy([], pool, trainer, pool) == 0.5
    single = Dataset(np.array([[0.5, 0.5]]), np.array([1.0]))
    assert utility_accuracy(range(40), single, trainer, pool) == 1.0
    with pytest.raises(InputError):
        utility_accuracy([99], pool, trainer, pool)
    with pytest.raises(EmptyEvalSet):
        utility_accuracy([0], Dataset(np.zeros((0, 2)), np.zeros(0)), trainer, pool)


def test_accuracy_oracle_in_sample_and_missing_eval():
    pool = Dataset(np.array([[1.0], [-1.0]]), np.array([1.0, -1.0]))
    oracle = accuracy_oracle(pool, None, LossSpec(), in_sample=True)
    assert oracle({0, 1}) == 1.0
    with pytest.raises(EmptyEvalSet):
        accuracy_oracle(pool, None, LossSpec())


def test_clip_negative():
    np.testing.assert_array_equal(clip_negative([-1.0, 0.5]), [0.0, 0.5])
