"""Sampling estimators for the Lipschitz constants and the initial gap.

``estimate_l0_q`` measures secant slopes of the per-sample loss over random
nearby point pairs inside the trusted box: the per-sample constant is the max
slope over all pairs, L0 is the mean of those maxima over sampled data and Q
the mean of their squares.  Slopes never exceed the true constant, so these
are underestimates by construction.

``estimate_delta`` bounds the initial smoothed-objective gap by averaging the
(nonnegative) loss at a perturbed feasible start over a data pass, taking the
worst of several random starts.  ``delta_bound`` is the analytic alternative
needing only the loss value at the start and a lower bound at the optimum.
"""

from __future__ import annotations

import math

import numpy as np

from .constraint import BoxParams, GroupPartition, project
from .smoothing import SmoothingParams, StreamTree, sample_u

__all__ = ["LipschitzEstimate", "estimate_l0_q", "estimate_delta", "delta_bound"]

from dataclasses import dataclass


@dataclass(frozen=True)
class LipschitzEstimate:
    L0_hat: float
    Q_hat: float
    q: int
    iota: float
    per_xi_slopes: tuple[float, ...]


def default_pairing_radius(kappa: float) -> float:
    return 0.01 / kappa


def estimate_l0_q(
    problem,
    kappa: float,
    streams: StreamTree,
    q: int = 250,
    iota: float | None = None,
) -> LipschitzEstimate:
    """Estimate L0 and Q from q data samples and q point pairs.

    Pair j is an anchor drawn uniformly in the box of radius ``kappa - iota``
    plus a mate within ``iota`` of it; the per-sample constant is the max
    secant slope over all pairs.  The default pairing radius ``0.01 / kappa``
    is unusual in how it scales with kappa but is kept for comparability;
    override ``iota`` to change it.  Deterministic given the stream handle,
    and prefix-stable in q (a larger q reuses the first pairs and samples).
    """
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    if not (math.isfinite(kappa) and kappa > 0):
        raise ValueError(f"kappa must be positive and finite, got {kappa}")
    if iota is None:
        iota = default_pairing_radius(kappa)
    if not 0 < iota < kappa:
        raise ValueError(f"pairing radius {iota} must lie in (0, kappa={kappa})")

    d = problem.d
    rng_pairs = streams.child("pairs").generator()
    rng_xi = streams.child("xi").generator()

    ws = np.empty((q, d))
    vs = np.empty((q, d))
    for j in range(q):
        while True:
            w = rng_pairs.uniform(-(kappa - iota), kappa - iota, size=d)
            v = w + rng_pairs.uniform(-iota, iota, size=d)
            if np.any(v != w):
                break
        ws[j] = w
        vs[j] = v
    gaps = np.linalg.norm(ws - vs, axis=1)

    slopes = []
    for _ in range(q):
        xi = problem.sample_xi(rng_xi)
        best = 0.0
        for j in range(q):
            s = abs(problem.value(ws[j], xi) - problem.value(vs[j], xi)) / gaps[j]
            if s > best:
                best = s
        slopes.append(best)
    slopes_arr = np.asarray(slopes)
    return LipschitzEstimate(
        L0_hat=float(slopes_arr.mean()),
        Q_hat=float((slopes_arr**2).mean()),
        q=q,
        iota=float(iota),
        per_xi_slopes=tuple(slopes),
    )


def _delta_samples(problem, num_samples, rng):
    if hasattr(problem, "dataset_size"):
        return list(range(problem.dataset_size))
    if num_samples is None:
        raise ValueError("num_samples is required for problems without a finite dataset")
    return [problem.sample_xi(rng) for _ in range(num_samples)]


def estimate_delta(
    problem,
    part: GroupPartition,
    box: BoxParams,
    alpha: float,
    streams: StreamTree,
    w1=None,
    num_samples: int | None = None,
    starts: int = 3,
) -> float:
    """Average perturbed loss at a projected random start, maximized over
    several starts.  Valid as a gap bound because the loss is nonnegative;
    a negative loss sample is rejected loudly.

    Passing ``w1`` pins the start (and implies a single start); otherwise
    each start projects a fresh random initial point.
    """
    if starts < 1:
        raise ValueError(f"starts must be >= 1, got {starts}")
    params = SmoothingParams(alpha=alpha, d=problem.d)
    xi_rng = streams.child("xi").generator()
    samples = _delta_samples(problem, num_samples, xi_rng)

    best = -math.inf
    n_starts = 1 if w1 is not None else starts
    for ell in range(n_starts):
        if w1 is not None:
            start = np.asarray(w1, dtype=float)
        else:
            w0 = problem.initial_point(streams.child("init", ell).generator())
            start = project(w0, part, box)
        u_rng = streams.child("u", ell).generator()
        total = 0.0
        for xi in samples:
            u = sample_u(u_rng, params)
            val = float(problem.value(start + u, xi))
            if val < 0:
                raise ValueError(
                    f"loss {val} < 0: the sampling bound needs a nonnegative loss"
                )
            total += val
        best = max(best, total / len(samples))
    return best


def delta_bound(
    f_w1: float,
    f_wstar_lower: float,
    L0: float,
    d: int,
    alpha: float,
    beta: float,
) -> float:
    """Analytic gap bound: the smaller of the box-diameter bound
    ``2 * beta * sqrt(d) * L0`` and the value-gap bound
    ``f(w1) - f_lower + alpha * L0 * sqrt(d / 3)``."""
    if f_w1 < f_wstar_lower:
        raise ValueError(f"f_w1={f_w1} below the claimed optimum lower bound {f_wstar_lower}")
    if min(L0, d, alpha) < 0 or beta <= 0:
        raise ValueError("L0, d, alpha must be nonnegative and beta positive")
    box_side = 2.0 * beta * math.sqrt(d) * L0 if math.isfinite(beta) else math.inf
    gap_side = f_w1 - f_wstar_lower + alpha * L0 * math.sqrt(d / 3.0)
    return min(box_side, gap_side)
