import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from datamarket.core import Dataset
from datamarket.errors import DimensionMismatch, InputError, InvalidPrivacyParams
from datamarket.io import synthetic_classification
from datamarket.training import (
    _minimize,
    LossKind,
    LossSpec,
    accuracy,
    empirical_constants,
    excess_loss_estimate,
    loss_and_gradient,
    noise_scales,
    objective,
    perturbation_noise,
    predict,
    project,
    train_dp_erm,
    train_erm,
)

KINDS = list(LossKind)


def _fd_grad(spec, w, sample, h=1e-6):
    out = np.zeros_like(w)
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = h
        out[k] = (loss_and_gradient(spec, w + e, sample)[0] - loss_and_gradient(spec, w - e, sample)[0]) / (2 * h)
    return out


def test_loss_values_at_known_points():
    ls = LossSpec(LossKind.LEAST_SQUARES)
    assert loss_and_gradient(ls, [0.5, 0.0], ([1.0, 0.0], 1.0))[0] == pytest.approx(0.25)
    lg = LossSpec(LossKind.LOGISTIC)
    assert loss_and_gradient(lg, [0.0], ([1.0], 1.0))[0] == pytest.approx(math.log(2))
    hinge = LossSpec(LossKind.SMOOTHED_HINGE)
    # margin 2 -> 0, margin 0.5 -> 0.125, margin -1 -> 1.5
    assert loss_and_gradient(hinge, [2.0], ([1.0], 1.0))[0] == 0.0
    assert loss_and_gradient(hinge, [0.5], ([1.0], 1.0))[0] == pytest.approx(0.125)
    assert loss_and_gradient(hinge, [1.0], ([1.0], -1.0))[0] == pytest.approx(1.5)


def test_gradient_rejects_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        loss_and_gradient(LossSpec(), [0.0, 0.0], ([1.0], 1.0))


@pytest.mark.parametrize("kind", KINDS)
@given(
    w=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    x=st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    y=st.sampled_from([-1.0, 1.0]),
)
def test_gradient_matches_central_difference(kind, w, x, y):
    spec = LossSpec(kind)
    w, x = np.array(w), np.array(x)
    if kind is LossKind.SMOOTHED_HINGE:
        margin = y * float(w @ x)
        # the hinge kinks at margins 0 and 1 are where finite differences are invalid
        if min(abs(margin), abs(margin - 1.0)) < 1e-3:
            return
    _, g = loss_and_gradient(spec, w, (x, y))
    fd = _fd_grad(spec, w, (x, y))
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_objective_includes_regularizer_and_linear_term():
    data = Dataset(np.array([[1.0, 0.0]]), np.array([1.0]))
    spec = LossSpec(LossKind.LEAST_SQUARES, lam=0.5)
    w = np.array([1.0, 2.0])
    value, grad = objective(spec, w, data, linear=np.array([1.0, 1.0]))
    assert value == pytest.approx(0.0 + 0.5 * 5 + 3.0)
    np.testing.assert_allclose(grad, [0 + 1.0 + 1.0, 2.0 + 1.0])


def test_project_onto_ball():
    np.testing.assert_allclose(project(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    np.testing.assert_array_equal(project(np.array([0.1, 0.1]), 1.0), [0.1, 0.1])


def test_least_squares_matches_normal_equations():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, (40, 3)) / math.sqrt(3)
    y = X @ np.array([0.5, -1.0, 0.25]) + 0.05 * rng.standard_normal(40)
    spec = LossSpec(LossKind.LEAST_SQUARES, lam=0.05, smoothness=2.0, radius=100.0)
    w = train_erm(Dataset(X, y), spec, tolerance=1e-14)
    # stationarity of mean (x.w - y)^2 + lam |w|^2
    closed = np.linalg.solve(X.T @ X / 40 + 0.05 * np.eye(3), X.T @ y / 40)
    np.testing.assert_allclose(w, closed, atol=1e-6)


def test_train_erm_respects_radius_and_seed_determinism():
    data = synthetic_classification(60, 3, seed=1)
    spec = LossSpec(lam=1e-4, radius=0.5)
    a = train_erm(data, spec, seed=3)
    b = train_erm(data, spec, seed=3)
    np.testing.assert_array_equal(a, b)
    assert np.linalg.norm(a) <= 0.5 + 1e-12


def test_train_erm_empty_dataset():
    with pytest.raises(InputError):
        train_erm(Dataset(np.zeros((0, 2)), np.zeros(0)), LossSpec())


def test_noise_scales_formula():
    s1, s2 = noise_scales(LossSpec(lipschitz=2.0, lam=0.1), epsilon=0.5, delta=1e-5, alpha=0.01)
    log_term = math.log(1e5)
    assert s1 == pytest.approx(20 * 4 * log_term / 0.25)
    assert s2 == pytest.approx(40 * 0.01 * log_term / (0.1 * 0.25))


@pytest.mark.parametrize("eps,delta,alpha", [(0, 1e-6, 0.1), (1, 0, 0.1), (1, 1, 0.1), (1, 1e-6, 0)])
def test_noise_scales_reject_bad_params(eps, delta, alpha):
    with pytest.raises(InvalidPrivacyParams):
        noise_scales(LossSpec(), eps, delta, alpha)


def test_dp_training_deterministic_and_bounded():
    data = synthetic_classification(100, 4, seed=2)
    spec = LossSpec(radius=3.0)
    a = train_dp_erm(data, spec, 1.0, 1e-6, 1e-6, seed=11)
    b = train_dp_erm(data, spec, 1.0, 1e-6, 1e-6, seed=11)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert np.linalg.norm(a.weights) <= 3.0 + 1e-12
    assert a.sigma1 == pytest.approx(noise_scales(spec, 1.0, 1e-6, 1e-6)[0])


def test_dp_training_approaches_nonprivate_at_large_epsilon():
    data = synthetic_classification(300, 3, seed=5)
    spec = LossSpec(lam=0.01, radius=10.0)
    w = train_erm(data, spec, tolerance=1e-12)
    dp = train_dp_erm(data, spec, 1e4, 1e-6, 1e-12, seed=0)
    np.testing.assert_allclose(dp.weights, w, atol=1e-3)


def test_predict_ties_positive_and_accuracy():
    X = np.array([[0.0], [1.0], [-1.0]])
    np.testing.assert_array_equal(predict(np.array([1.0]), X), [1.0, 1.0, -1.0])
    assert accuracy(np.array([1.0]), Dataset(X, np.array([1.0, 1.0, 1.0]))) == pytest.approx(2 / 3)


def test_excess_loss_estimate():
    assert excess_loss_estimate(100, 1, 1e6, 1e-6) == pytest.approx(0.1)
    n, d, eps = 100, 4, 0.1
    assert excess_loss_estimate(n, d, eps, 1e-6) == pytest.approx(math.sqrt(d * math.log(1e6)) / (eps * n))
    with pytest.raises(InputError):
        excess_loss_estimate(0, 1, 1.0, 1e-6)


def test_empirical_constants_do_not_exceed_logistic_bounds():
    data = synthetic_classification(50, 3, seed=0)
    lip, smooth = empirical_constants(LossSpec(radius=5.0), data, probes=100)
    # ||x|| <= 1 so logistic is 1-Lipschitz and 1/4-smooth
    assert 0 < lip <= 1.0 + 1e-9
    assert 0 <= smooth <= 0.25 + 1e-9


def test_dp_weights_reconstruct_from_seeded_noise():
    data = synthetic_classification(80, 3, seed=9)
    spec = LossSpec(radius=1e9)
    model = train_dp_erm(data, spec, 2.0, 1e-6, 1e-12, seed=4)
    n1, n2 = perturbation_noise(model.sigma1, model.sigma2, 3, np.random.default_rng(4))
    # the perturbed objective's minimizer plus N2, with no projection active
    w_hat, _ = _minimize(spec, data, 1e-12, np.zeros(3), linear=n1 / 80, constrained=False)
    np.testing.assert_allclose(model.weights, w_hat + n2, atol=1e-9)
