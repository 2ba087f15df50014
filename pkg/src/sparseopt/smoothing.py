"""Uniform-ball randomized smoothing and its gradient estimators.

The smoothed objective is the expectation of the loss under a perturbation
``u`` drawn uniformly from the l-infinity ball of radius ``alpha/2``.  Two
unbiased estimators of its gradient are provided: a zeroth-order one built
from 2d coordinatewise differences at width ``alpha``, and a first-order one
that evaluates the problem's backprop gradient at the perturbed point.

Randomness is organized as a tree of counter-based streams: the stream for
iteration k, sample i and purpose tag is derived from
``(master_seed, k, i, tag)``, so zeroth- and first-order runs with the same
seed see identical perturbations and independent runs never share draws.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SmoothingParams",
    "GradientEstimate",
    "StreamTree",
    "substream",
    "derive_seed",
    "sample_u",
    "zeroth_order_estimate",
    "first_order_estimate",
    "minibatch_estimate",
    "estimate_f_alpha",
    "check_configuration",
]

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer; stable across platforms.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _component(p) -> int:
    if isinstance(p, (bool,)):
        raise TypeError("boolean stream path components are ambiguous")
    if isinstance(p, (int, np.integer)):
        return int(p) & _MASK64
    if isinstance(p, str):
        return zlib.crc32(p.encode("utf-8"))
    raise TypeError(f"stream path components must be int or str, got {type(p).__name__}")


def substream(seed: int, *path) -> np.random.Generator:
    """Counter-based generator keyed by the seed and a label path."""
    h = _mix64(int(seed) & _MASK64)
    for p in path:
        h = _mix64(h ^ _component(p))
    k2 = _mix64(h ^ 0xD6E8FEB86659FD93)
    key = np.array([h, k2], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *path) -> int:
    """A 63-bit integer seed derived from a label path, for nested runs."""
    h = _mix64(int(seed) & _MASK64)
    for p in path:
        h = _mix64(h ^ _component(p))
    return h >> 1


@dataclass(frozen=True)
class StreamTree:
    """Handle to a node in the stream tree; children are addressed by
    int/str labels and generators are independent across distinct paths."""

    seed: int
    path: tuple = field(default_factory=tuple)

    def child(self, *more) -> "StreamTree":
        return StreamTree(self.seed, self.path + tuple(more))

    def generator(self) -> np.random.Generator:
        return substream(self.seed, *self.path)


@dataclass(frozen=True)
class SmoothingParams:
    """Perturbation radius ``alpha`` and dimension; ``alpha_hat`` is the
    Euclidean radius ``sqrt(d) * alpha / 2`` of the perturbation's support."""

    alpha: float
    d: int

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not self.d >= 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")

    @property
    def alpha_hat(self) -> float:
        return math.sqrt(self.d) * self.alpha / 2.0


@dataclass(frozen=True)
class GradientEstimate:
    """Mini-batch mean of per-sample gradient estimates (summed in sample
    order), with per-coordinate standard errors and the mean squared norm of
    the per-sample estimates."""

    g: np.ndarray
    batch_size: int
    mode: str
    stderr: np.ndarray
    mean_sq_norm: float


def check_configuration(box, params: SmoothingParams) -> None:
    """The loss must be trusted on a margin around the box: kappa > beta + alpha/2."""
    if not box.kappa > box.beta + params.alpha / 2.0:
        raise ValueError(
            f"kappa={box.kappa} must exceed beta + alpha/2 = {box.beta + params.alpha / 2.0}"
        )


def sample_u(rng: np.random.Generator, params: SmoothingParams) -> np.ndarray:
    """Componentwise independent uniform draw on [-alpha/2, alpha/2]."""
    return rng.uniform(-params.alpha / 2.0, params.alpha / 2.0, size=params.d)


def _check_radius(problem, w: np.ndarray, alpha: float) -> None:
    kappa = getattr(problem, "kappa", math.inf)
    if math.isfinite(kappa):
        reach = float(np.max(np.abs(w))) + alpha / 2.0
        if reach > kappa + 1e-12:
            raise ValueError(
                f"evaluation would leave the trusted region: |w|_inf + alpha/2 = {reach} > kappa = {kappa}"
            )


def zeroth_order_estimate(problem, w, u, xi, params: SmoothingParams) -> np.ndarray:
    """Coordinatewise difference estimator: component i evaluates the loss at
    ``w_i +- alpha/2`` with the perturbation on all other coordinates, and the
    difference is divided by ``alpha``.  Costs 2d loss evaluations."""
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_radius(problem, w, params.alpha)
    half = params.alpha / 2.0
    point = w + u
    g = np.empty(params.d)
    for i in range(params.d):
        ui = point[i]
        point[i] = w[i] + half
        f_plus = problem.value(point, xi)
        point[i] = w[i] - half
        f_minus = problem.value(point, xi)
        point[i] = ui
        g[i] = (f_plus - f_minus) / params.alpha
    return g


def first_order_estimate(problem, w, u, xi, params: SmoothingParams) -> np.ndarray:
    """Backprop gradient of the loss at the perturbed point ``w + u``."""
    w = np.asarray(w, dtype=float)
    _check_radius(problem, w, params.alpha)
    return np.asarray(problem.bp_gradient(w + np.asarray(u, dtype=float), xi), dtype=float)


def _one_sample(problem, w, params, mode, streams: StreamTree, i: int, smoothing: bool):
    if smoothing:
        u = sample_u(streams.child(i, "u").generator(), params)
    else:
        u = np.zeros(params.d)
    xi = problem.sample_xi(streams.child(i, "xi").generator())
    if mode == "zeroth":
        return zeroth_order_estimate(problem, w, u, xi, params)
    return first_order_estimate(problem, w, u, xi, params)


def minibatch_estimate(
    problem,
    w,
    params: SmoothingParams,
    M: int,
    mode: str,
    streams: StreamTree,
    smoothing: bool = True,
) -> GradientEstimate:
    """Mean of M independent per-sample estimates; consumes exactly M draws
    of the perturbation and M of the data sample, reduced in sample order."""
    if mode not in ("zeroth", "first"):
        raise ValueError(f"mode must be 'zeroth' or 'first', got {mode!r}")
    if not M >= 1:
        raise ValueError(f"batch size must be >= 1, got {M}")
    if not smoothing and mode == "zeroth":
        raise ValueError("disabling smoothing only makes sense for the first-order mode")
    acc = np.zeros(params.d)
    m2 = np.zeros(params.d)
    sq = 0.0
    for i in range(1, M + 1):
        gi = _one_sample(problem, w, params, mode, streams, i, smoothing)
        acc += gi
        m2 += gi * gi
        sq += float(gi @ gi)
    g = acc / M
    if M > 1:
        var = np.maximum(m2 / M - g * g, 0.0) * (M / (M - 1))
        stderr = np.sqrt(var / M)
    else:
        stderr = np.zeros(params.d)
    return GradientEstimate(g=g, batch_size=M, mode=mode, stderr=stderr, mean_sq_norm=sq / M)


def estimate_f_alpha(
    problem,
    w,
    params: SmoothingParams,
    num_samples: int,
    streams: StreamTree,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the smoothed objective at ``w`` with its
    standard error, over paired perturbation/data draws."""
    if not num_samples >= 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    w = np.asarray(w, dtype=float)
    _check_radius(problem, w, params.alpha)
    total = 0.0
    total_sq = 0.0
    for i in range(1, num_samples + 1):
        u = sample_u(streams.child(i, "u").generator(), params)
        xi = problem.sample_xi(streams.child(i, "xi").generator())
        v = float(problem.value(w + u, xi))
        total += v
        total_sq += v * v
    mean = total / num_samples
    if num_samples > 1:
        var = max(total_sq / num_samples - mean * mean, 0.0) * (
            num_samples / (num_samples - 1)
        )
        se = math.sqrt(var / num_samples)
    else:
        se = math.inf
    return mean, se
