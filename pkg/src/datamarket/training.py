"""Regularized ERM losses, projected gradient training and objective perturbation.

The private trainer is the two-phase "approximate minima perturbation" scheme:
a Gaussian linear term is added to the objective, the perturbed objective is
solved to a certified sub-optimality ``alpha``, and the approximate minimizer
is perturbed again before projection onto the L2 ball of the loss spec.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, ModelTier
from .errors import DimensionMismatch, InputError, InvalidPrivacyParams, NonFinite

logger = logging.getLogger(__name__)


class LossKind(str, enum.Enum):
    LEAST_SQUARES = "least_squares"
    LOGISTIC = "logistic"
    SMOOTHED_HINGE = "smoothed_hinge"


@dataclass(frozen=True)
class LossSpec:
    """Loss family plus the constants the DP calibration depends on.

    ``lipschitz`` and ``smoothness`` must upper-bound the per-sample loss
    constants over the ball ``{w : ||w|| <= radius}`` for the data in use;
    :func:`empirical_constants` probes them.
    """

    kind: LossKind = LossKind.LOGISTIC
    lam: float = 0.01
    lipschitz: float = 1.0
    smoothness: float = 0.25
    radius: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        for name in ("lam", "lipschitz", "smoothness", "radius"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InputError(f"LossSpec.{name} must be positive and finite, got {value!r}")

    @property
    def step_size(self) -> float:
        return 1.0 / (self.smoothness + 2.0 * self.lam)


def _batch_loss_grad(kind: LossKind, w: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Per-sample losses (n,) and the mean gradient (d,)."""
    scores = X @ w
    if kind is LossKind.LEAST_SQUARES:
        resid = scores - y
        losses = resid**2
        dscore = 2.0 * resid
    elif kind is LossKind.LOGISTIC:
        margin = y * scores
        losses = np.logaddexp(0.0, -margin)
        # d/dm log(1 + e^{-m}) = -1 / (1 + e^{m})
        dscore = -np.exp(-np.logaddexp(0.0, margin)) * y
    elif kind is LossKind.SMOOTHED_HINGE:
        margin = y * scores
        losses = np.where(margin >= 1.0, 0.0, np.where(margin <= 0.0, 0.5 - margin, 0.5 * (1.0 - margin) ** 2))
        dmargin = np.where(margin >= 1.0, 0.0, np.where(margin <= 0.0, -1.0, margin - 1.0))
        dscore = dmargin * y
    else:  # pragma: no cover
        raise ValueError(kind)
    n = X.shape[0]
    grad = X.T @ dscore / n if n else np.zeros_like(w)
    return losses, grad


def loss_and_gradient(spec: LossSpec, weights, sample) -> tuple[float, np.ndarray]:
    """Loss ``l(w; z)`` and its gradient in ``w`` for one sample ``z = (x, y)``."""
    w = np.asarray(weights, dtype=float)
    x, y = sample
    x = np.asarray(x, dtype=float)
    if w.ndim != 1 or x.shape != w.shape:
        raise DimensionMismatch(f"weights {w.shape} vs features {x.shape}")
    losses, grad = _batch_loss_grad(spec.kind, w, x[None, :], np.array([float(y)]))
    return float(losses[0]), grad


def objective(spec: LossSpec, w: np.ndarray, data: Dataset, linear: np.ndarray | None = None):
    """Regularized empirical risk and its gradient.

    ``linear`` adds ``<linear, w>`` to the objective (used for perturbation).
    """
    losses, grad = _batch_loss_grad(spec.kind, w, data.X, data.y)
    value = float(losses.mean()) + spec.lam * float(w @ w)
    grad = grad + 2.0 * spec.lam * w
    if linear is not None:
        value += float(linear @ w)
        grad = grad + linear
    return value, grad


def project(w: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(w))
    if norm <= radius:
        return w
    return w * (radius / norm)


def _minimize(spec, data, tolerance, w0, linear=None, constrained=True, max_iter=200_000):
    """Projected gradient descent with step 1/(beta + 2 lambda).

    Stops once ``||G||^2 / (2 lambda) <= tolerance`` where ``G`` is the
    gradient mapping (the plain gradient when unconstrained).
    """
    eta = spec.step_size
    w = np.array(w0, dtype=float)
    if constrained:
        w = project(w, spec.radius)
    for it in range(max_iter):
        value, grad = objective(spec, w, data, linear)
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            raise NonFinite(f"objective diverged at iteration {it}")
        step = w - eta * grad
        w_next = project(step, spec.radius) if constrained else step
        mapping = (w - w_next) / eta
        if float(mapping @ mapping) / (2.0 * spec.lam) <= tolerance:
            return w, it
        w = w_next
    logger.warning("gradient descent hit max_iter=%d before reaching tolerance %g", max_iter, tolerance)
    return w, max_iter


def train_erm(
    data: Dataset,
    spec: LossSpec,
    tolerance: float = 1e-8,
    seed: int | None = None,
    w0=None,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Non-private regularized ERM over the ball of radius ``spec.radius``.

    Starts at ``w0`` if given, otherwise at a random feasible point drawn from
    ``seed``, otherwise at zero.
    """
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    d = data.dim
    if w0 is None:
        if seed is None:
            w0 = np.zeros(d)
        else:
            rng = np.random.default_rng(seed)
            direction = rng.standard_normal(d)
            w0 = direction / max(np.linalg.norm(direction), 1e-300) * spec.radius * rng.uniform()
    w, _ = _minimize(spec, data, tolerance, w0, max_iter=max_iter)
    return w


def noise_scales(spec: LossSpec, epsilon: float, delta: float, alpha: float) -> tuple[float, float]:
    """Standard deviations of the objective and output perturbations."""
    if not (epsilon > 0 and 0 < delta < 1 and alpha > 0):
        raise InvalidPrivacyParams(f"need epsilon>0, 0<delta<1, alpha>0; got {epsilon}, {delta}, {alpha}")
    log_term = math.log(1.0 / delta)
    sigma1 = 20.0 * spec.lipschitz**2 * log_term / epsilon**2
    sigma2 = 40.0 * alpha * log_term / (spec.lam * epsilon**2)
    return sigma1, sigma2


def perturbation_noise(sigma1: float, sigma2: float, d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """The objective noise ``N1 ~ N(0, sigma1^2 I)`` and output noise ``N2 ~ N(0, sigma2^2 I)``.

    ``N1`` is drawn first, so for one generator state the direction of each
    vector does not depend on the scales.
    """
    return sigma1 * rng.standard_normal(d), sigma2 * rng.standard_normal(d)


@dataclass(frozen=True)
class DPModel:
    weights: np.ndarray
    epsilon: float
    delta: float
    alpha: float
    seed: int
    sigma1: float
    sigma2: float
    trained_on: tuple[int, ...] = ()
    tier: ModelTier | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return predict(self.weights, X)


def train_dp_erm(
    data: Dataset,
    spec: LossSpec,
    epsilon: float,
    delta: float,
    alpha: float,
    seed: int,
    tier: ModelTier | None = None,
    max_iter: int = 200_000,
) -> DPModel:
    """Train an (epsilon, delta)-DP linear model by objective perturbation.

    The perturbed objective is minimized without the ball constraint to the
    sub-optimality certificate ``alpha``; only the final noisy point is
    projected.  Both noise vectors come from one generator seeded by
    ``seed``, so equal seeds give identical noise directions across epsilon.
    """
    sigma1, sigma2 = noise_scales(spec, epsilon, delta, alpha)
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    n, d = len(data), data.dim
    n1, n2 = perturbation_noise(sigma1, sigma2, d, np.random.default_rng(seed))
    w_hat, iters = _minimize(spec, data, alpha, np.zeros(d), linear=n1 / n, constrained=False, max_iter=max_iter)
    w_dp = project(w_hat + n2, spec.radius)
    return DPModel(
        weights=w_dp,
        epsilon=epsilon,
        delta=delta,
        alpha=alpha,
        seed=seed,
        sigma1=sigma1,
        sigma2=sigma2,
        trained_on=tuple(data.ids),
        tier=tier,
        iterations=iters,
    )


def predict(w: np.ndarray, X) -> np.ndarray:
    """Sign predictions in {-1, +1}; a zero score predicts +1."""
    scores = np.asarray(X, dtype=float) @ w
    return np.where(scores >= 0.0, 1.0, -1.0)


def accuracy(w: np.ndarray, data: Dataset) -> float:
    if len(data) == 0:
        raise InputError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(w, data.X) == np.sign(data.y)))


def excess_loss_estimate(n: int, d: int, epsilon: float, delta: float) -> float:
    """Order-of-magnitude excess population loss of the DP model.

    ``max(1/sqrt(n), sqrt(d log(1/delta)) / (epsilon n))`` with unit constant.
    """
    if n < 1 or d < 1:
        raise InputError("n and d must be at least 1")
    return max(1.0 / math.sqrt(n), math.sqrt(d * math.log(1.0 / delta)) / (epsilon * n))


def empirical_constants(spec: LossSpec, data: Dataset, probes: int = 200, seed: int = 0) -> tuple[float, float]:
    """Sampled lower estimates of the per-sample Lipschitz and smoothness constants.

    Draws pairs of points in the ball and records the largest observed
    ``|l(a)-l(b)|/||a-b||`` and ``||grad l(a) - grad l(b)||/||a-b||``.
    """
    rng = np.random.default_rng(seed)
    d = data.dim
    lip = smooth = 0.0
    for _ in range(probes):
        i = rng.integers(len(data))
        x, y = data.X[i], data.y[i]
        a, b = (project(rng.standard_normal(d) * spec.radius, spec.radius) for _ in range(2))
        la, ga = loss_and_gradient(spec, a, (x, y))
        lb, gb = loss_and_gradient(spec, b, (x, y))
        dist = float(np.linalg.norm(a - b))
        if dist == 0:
            continue
        lip = max(lip, abs(la - lb) / dist)
        smooth = max(smooth, float(np.linalg.norm(ga - gb)) / dist)
    return lip, smooth
