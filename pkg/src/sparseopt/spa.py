"""The stochastic projected algorithm and its theory-derived configuration.

One run draws a uniform stopping index R in {2, ..., K+1} up front, then
iterates ``w <- project(w - eta * G)`` for k = 1..R-1, where G is a
mini-batch smoothed-gradient estimate (zeroth- or first-order).  The step
size, iteration budget, batch size and smoothing radius can all be derived
from accuracy targets and the problem's Lipschitz metadata; wrappers provide
a best-of-r high-probability variant and a multi-stage schedule with
shrinking targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constraint import BoxParams, GroupPartition, is_feasible, project, stationarity_distance
from .smoothing import (
    SmoothingParams,
    StreamTree,
    check_configuration,
    derive_seed,
    minibatch_estimate,
)

__all__ = [
    "SPAConfig",
    "Targets",
    "TraceRow",
    "RunResult",
    "ProblemMeta",
    "meta_from_problem",
    "constants_c1_c2",
    "derive_params",
    "initialize_feasible",
    "run_spa",
    "evaluate_stationarity",
    "hp_parameters",
    "argmin_candidate",
    "run_high_probability",
    "HPResult",
    "geometric_schedule",
    "run_asymptotic",
    "StageResult",
    "write_trace_csv",
]

BETA_SAFETY = 0.99  # box radius is set to this fraction of (kappa - alpha/2)
INIT_RETRIES = 10


def constants_c1_c2(rho, tau=0, M: int = 1):
    """The two convergence-bound constants for a given (rho, tau, M).

    Exact over ``fractions.Fraction`` inputs, which makes the integer-valued
    reference choices reproducible exactly.
    """
    if rho <= 0 or tau < 0:
        raise ValueError(f"need rho > 0 and tau >= 0, got rho={rho}, tau={tau}")
    if not rho + tau > 1:
        raise ValueError(f"need rho + tau > 1, got {rho + tau}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    c1 = 2 * (1 + 3 * rho) / (tau + rho - 1) + 3 * rho
    # 4*(1+3*rho)/(tau+rho-1) * (1/2 + (2/3)*M*tau/rho^2) + 3, written with
    # rational operations only so Fraction inputs stay exact.
    c2 = (
        2 * (1 + 3 * rho) / (tau + rho - 1)
        + 8 * (1 + 3 * rho) * M * tau / (3 * rho * rho * (tau + rho - 1))
        + 3
    )
    return c1, c2


@dataclass(frozen=True)
class Targets:
    """Accuracy targets: either the (eps1, eps2) pair (uniform smoothing
    error / expected stationarity gap) or the (eps3, eps4) pair (perturbation
    radius / relaxed gap).  gamma, c, phi parameterize the high-probability
    wrapper."""

    eps1: float | None = None
    eps2: float | None = None
    eps3: float | None = None
    eps4: float | None = None
    gamma: float = 0.1
    c: float = 0.5
    phi: float = 2.0

    def __post_init__(self):
        pair12 = (self.eps1 is not None) and (self.eps2 is not None)
        pair34 = (self.eps3 is not None) and (self.eps4 is not None)
        if pair12 == pair34:
            raise ValueError("provide exactly one target pair: (eps1, eps2) or (eps3, eps4)")
        for name in ("eps1", "eps2", "eps3", "eps4"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if not 0 < self.c < 1:
            raise ValueError(f"c must lie in (0,1), got {self.c}")
        if not self.phi > 1:
            raise ValueError(f"phi must exceed 1, got {self.phi}")

    @property
    def pair(self) -> str:
        return "eps12" if self.eps1 is not None else "eps34"


@dataclass(frozen=True)
class ProblemMeta:
    L0: float
    Q: float
    d: int
    kappa: float


def meta_from_problem(problem) -> ProblemMeta:
    if problem.L0 is None or problem.Q is None:
        raise ValueError("problem has no Lipschitz metadata; estimate it first")
    return ProblemMeta(L0=problem.L0, Q=problem.Q, d=problem.d, kappa=problem.kappa)


@dataclass(frozen=True)
class SPAConfig:
    """Everything one run needs: step size, budgets, smoothing radius, the
    (rho, tau) pair behind the constants, the estimator mode, the gap bound
    used in the derivation, and the master seed."""

    eta: float
    K: int
    M: int
    rho: float
    tau: float
    mode: str
    alpha: float
    delta: float | None = None
    seed: int | None = None
    smoothing: bool = True
    projection: bool = True
    fhat_every: int | None = None
    fhat_batch: int = 32

    def __post_init__(self):
        if self.mode not in ("zeroth", "first"):
            raise ValueError(f"mode must be 'zeroth' or 'first', got {self.mode!r}")
        if self.K < 1 or self.M < 1:
            raise ValueError("K and M must be >= 1")
        if not self.eta >= 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.rho + self.tau > 1:
            raise ValueError("need rho + tau > 1")


def upsilon_for(mode: str, d: int) -> int:
    return d if mode == "zeroth" else 1


def derive_params(
    targets: Targets,
    meta: ProblemMeta,
    rho: float,
    mode: str,
    delta: float,
    seed: int | None = None,
) -> tuple[float, float, SPAConfig]:
    """Smoothing radius, box radius and full configuration from targets.

    The (eps1, eps2) route picks the largest radius keeping the uniform
    smoothing error within eps1; the (eps3, eps4) route pins the perturbation
    radius to eps3.  K and M are the ceilings that split the convergence
    bound evenly between its two terms; the box is set to
    ``0.99 * (kappa - alpha/2)`` so the trusted region strictly contains the
    reachable set.
    """
    if mode not in ("zeroth", "first"):
        raise ValueError(f"mode must be 'zeroth' or 'first', got {mode!r}")
    if not delta >= 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    c1, c2 = constants_c1_c2(rho, 0)
    ups = upsilon_for(mode, meta.d)
    L0, Q, d, kappa = meta.L0, meta.Q, meta.d, meta.kappa

    if targets.pair == "eps12":
        eps1, eps2 = targets.eps1, targets.eps2
        alpha = eps1 / (L0 * math.sqrt(d / 12.0))
        K = math.ceil(c1 * math.sqrt(4.0 / 3.0) * d * L0 * L0 * delta / (eps1 * eps2 * eps2))
        M = math.ceil(c2 * 2.0 * ups * Q / (eps2 * eps2))
    else:
        eps3, eps4 = targets.eps3, targets.eps4
        alpha = 2.0 * eps3 / math.sqrt(d)
        K = math.ceil(c1 * 2.0 * d * L0 * delta / (eps3 * eps4 * eps4))
        M = math.ceil(c2 * 2.0 * ups * Q / (eps4 * eps4))

    if not kappa > alpha / 2.0:
        raise ValueError(
            f"kappa={kappa} too small for the derived smoothing radius: need kappa > {alpha / 2.0}"
        )
    beta = BETA_SAFETY * (kappa - alpha / 2.0)
    if targets.pair == "eps34" and not kappa > beta + targets.eps3:
        required = 100.0 * targets.eps3 * (1.0 - BETA_SAFETY / math.sqrt(d))
        raise ValueError(
            f"kappa={kappa} too small for eps3={targets.eps3}: need kappa > {required}"
        )

    eta = alpha / (3.0 * rho * math.sqrt(d) * L0)
    cfg = SPAConfig(
        eta=eta,
        K=max(K, 1),
        M=max(M, 1),
        rho=float(rho),
        tau=0.0,
        mode=mode,
        alpha=alpha,
        delta=float(delta),
        seed=seed,
    )
    return alpha, beta, cfg


def initialize_feasible(
    problem,
    part: GroupPartition,
    box: BoxParams,
    streams: StreamTree,
    retries: int = INIT_RETRIES,
) -> tuple[np.ndarray, list[str]]:
    """Project a random initial point; when the problem declares structural
    blocks, redraw up to ``retries`` times if projection empties one (the
    layer-collapse pathology), then keep the last draw with a warning."""
    warnings: list[str] = []
    blocks = getattr(problem, "structural_blocks", None)
    w1 = None
    for attempt in range(retries + 1):
        w0 = problem.initial_point(streams.child("init", attempt).generator())
        w1 = project(w0, part, box)
        if not blocks:
            return w1, warnings
        dead = _dead_blocks(w1, part, blocks)
        if not dead:
            return w1, warnings
    warnings.append(
        f"layer_collapse at initialization: blocks {sorted(_dead_blocks(w1, part, blocks))} "
        f"have no active group after {retries} redraws"
    )
    return w1, warnings


def _dead_blocks(w, part: GroupPartition, blocks) -> list[int]:
    dead = []
    for bi, (g0, g1) in enumerate(blocks):
        if all(not np.any(part.group(w, g) != 0.0) for g in range(g0, g1)):
            dead.append(bi)
    return dead


@dataclass(frozen=True)
class TraceRow:
    k: int
    fhat: float | None
    step_norm: float
    feasible_groups: int


@dataclass(frozen=True)
class RunResult:
    w: np.ndarray
    R: int
    trace: tuple[TraceRow, ...]
    warnings: tuple[str, ...]
    draws: dict
    config: SPAConfig


def run_spa(
    problem,
    part: GroupPartition,
    box: BoxParams,
    config: SPAConfig,
    w1,
) -> RunResult:
    """One run from a feasible start; every iterate stays feasible because
    projection runs every step.  Ablations: ``smoothing=False`` turns the
    loop into projected minibatch SGD, additionally ``projection=False``
    into plain SGD."""
    if config.seed is None:
        raise ValueError("config.seed must be set")
    w = np.asarray(w1, dtype=float).copy()
    if config.projection and not is_feasible(w, part, box):
        raise ValueError("w1 is not feasible for the constraint and box")
    params = SmoothingParams(alpha=config.alpha, d=problem.d)
    if config.projection and config.smoothing:
        check_configuration(box, params)

    kit = StreamTree(config.seed)
    K = config.K
    R = int(2 + kit.child("stop").generator().integers(K))  # uniform on {2,...,K+1}
    every = config.fhat_every or max(1, math.ceil(K / 100))
    fhat_rng = kit.child("fhat").generator()
    held_out = [problem.sample_xi(fhat_rng) for _ in range(config.fhat_batch)]
    blocks = getattr(problem, "structural_blocks", None)

    warnings: list[str] = []
    collapsed_blocks: set[int] = set()
    trace: list[TraceRow] = []
    for k in range(1, R):
        est = minibatch_estimate(
            problem, w, params, config.M, config.mode, kit.child("iter", k), smoothing=config.smoothing
        )
        target = w - config.eta * est.g
        w_next = project(target, part, box) if config.projection else target
        if blocks and config.projection:
            for bi in _dead_blocks(w_next, part, blocks):
                if bi not in collapsed_blocks:
                    collapsed_blocks.add(bi)
                    warnings.append(f"layer_collapse block={bi} k={k}")
        fhat = None
        if k % every == 0:
            fhat = float(np.mean([problem.value(w_next, xi) for xi in held_out]))
        trace.append(
            TraceRow(
                k=k,
                fhat=fhat,
                step_norm=float(np.linalg.norm(w_next - w)),
                feasible_groups=len(part.nonzero_groups(w_next)),
            )
        )
        w = w_next

    draws = {"u": (R - 1) * config.M, "xi": (R - 1) * config.M + config.fhat_batch}
    return RunResult(
        w=w, R=R, trace=tuple(trace), warnings=tuple(warnings), draws=draws, config=config
    )


def evaluate_stationarity(
    problem,
    w,
    part: GroupPartition,
    box: BoxParams,
    alpha: float,
    mode: str,
    num_samples: int,
    streams: StreamTree,
) -> tuple[float, np.ndarray]:
    """Stationarity gap at ``w`` using a ``num_samples``-sample estimate of
    the smoothed gradient."""
    params = SmoothingParams(alpha=alpha, d=problem.d)
    est = minibatch_estimate(problem, w, params, num_samples, mode, streams)
    return stationarity_distance(est.g, w, part, box), est.g


def hp_parameters(
    eps: float, gamma: float, c: float, phi: float, Q: float, upsilon: int
) -> tuple[int, float, int, float]:
    """Number of runs r, the confidence weight psi, the evaluation sample
    count T and the shrunken per-run target eps'."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0 < gamma < 1 or not 0 < c < 1 or not phi > 1:
        raise ValueError("need gamma in (0,1), c in (0,1) and phi > 1")
    r = math.ceil(-math.log(c * gamma))
    psi = r / ((1.0 - c) * gamma)
    T = max(1, math.ceil(6.0 * phi * psi * upsilon * Q / (eps * eps)))
    variance_term = 6.0 * psi * upsilon * Q / T
    if not eps * eps - variance_term > 0:
        raise ValueError(
            f"targets infeasible: eps^2={eps * eps} <= variance term {variance_term}; increase phi"
        )
    eps_prime = math.sqrt((eps * eps - variance_term) / (4.0 * math.e))
    return r, psi, T, eps_prime


def argmin_candidate(distances) -> int:
    """Index of the smallest recorded distance; ties go to the earliest run."""
    best = 0
    for i in range(1, len(distances)):
        if distances[i] < distances[best]:
            best = i
    return best


@dataclass(frozen=True)
class HPResult:
    w_star: np.ndarray
    index: int
    distances: tuple[float, ...]
    runs: tuple[RunResult, ...]
    r: int
    psi: float
    T: int
    eps_prime: float
    alpha: float
    beta: float


def run_high_probability(
    problem,
    part: GroupPartition,
    box: BoxParams,
    targets: Targets,
    rho: float,
    mode: str,
    delta: float,
    seed: int,
    jobs: int = 1,
) -> HPResult:
    """Best-of-r wrapper: run r independently seeded configurations derived
    for the shrunken target, score every output with one shared
    T-sample gradient estimate, and return the smallest recorded gap."""
    meta = meta_from_problem(problem)
    ups = upsilon_for(mode, meta.d)
    eps = targets.eps2 if targets.pair == "eps12" else targets.eps4
    r, psi, T, eps_prime = hp_parameters(eps, targets.gamma, targets.c, targets.phi, meta.Q, ups)
    if targets.pair == "eps12":
        shrunk = Targets(eps1=targets.eps1, eps2=eps_prime)
    else:
        shrunk = Targets(eps3=targets.eps3, eps4=eps_prime)
    alpha, beta, cfg = derive_params(shrunk, meta, rho, mode, delta=delta)
    run_box = BoxParams(beta=beta, kappa=meta.kappa)

    def one_run(j: int) -> RunResult:
        kit = StreamTree(seed).child("hp", j)
        w1, _ = initialize_feasible(problem, part, run_box, kit)
        cfg_j = replace(cfg, seed=derive_seed(seed, "hp", j, "run"))
        return run_spa(problem, part, run_box, cfg_j, w1)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(one_run, range(r)))
    else:
        runs = [one_run(j) for j in range(r)]

    # Shared evaluation draws: every candidate is scored with the same
    # perturbations and data samples.
    eval_streams = StreamTree(seed).child("hp_eval")
    distances = []
    for res in runs:
        dist, _ = evaluate_stationarity(
            problem, res.w, part, run_box, alpha, mode, T, eval_streams
        )
        distances.append(dist)
    idx = argmin_candidate(distances)
    return HPResult(
        w_star=runs[idx].w,
        index=idx,
        distances=tuple(distances),
        runs=tuple(runs),
        r=r,
        psi=psi,
        T=T,
        eps_prime=eps_prime,
        alpha=alpha,
        beta=beta,
    )


def geometric_schedule(eps3: float, eps4: float, num_stages: int, factor: float = 2.0):
    """Strictly decreasing target schedule halving (by default) per stage."""
    if num_stages < 1:
        raise ValueError("num_stages must be >= 1")
    if factor <= 1:
        raise ValueError("factor must exceed 1")
    return [(eps3 / factor**i, eps4 / factor**i) for i in range(num_stages)]


@dataclass(frozen=True)
class StageResult:
    eps3: float
    eps4: float
    alpha: float
    beta: float
    run: RunResult
    stationarity: float


def run_asymptotic(
    problem,
    part: GroupPartition,
    box: BoxParams,
    schedule,
    rho: float,
    mode: str,
    delta: float,
    seed: int,
    eval_samples: int = 1000,
) -> list[StageResult]:
    """Run the algorithm per stage of a strictly decreasing (eps3, eps4)
    schedule, warm-starting each stage from the previous output, and report
    the per-stage measured stationarity gap so the decreasing trend is
    observable.  ``box.kappa`` is used; the box radius is re-derived per
    stage from the stage's smoothing radius."""
    schedule = list(schedule)
    if not schedule:
        raise ValueError("schedule must not be empty")
    for (e3, e4) in schedule:
        if not (e3 > 0 and e4 > 0):
            raise ValueError("schedule targets must be positive")
    for prev, cur in zip(schedule, schedule[1:]):
        if not (cur[0] < prev[0] and cur[1] < prev[1]):
            raise ValueError(f"schedule must be strictly decreasing, got {prev} -> {cur}")
    meta = meta_from_problem(problem)
    if not meta.kappa > schedule[0][0]:
        raise ValueError(f"kappa={meta.kappa} must exceed the first eps3={schedule[0][0]}")

    results: list[StageResult] = []
    w_prev = None
    for i, (e3, e4) in enumerate(schedule):
        targets = Targets(eps3=e3, eps4=e4)
        alpha, beta, cfg = derive_params(
            targets, meta, rho, mode, delta=delta, seed=derive_seed(seed, "stage", i)
        )
        stage_box = BoxParams(beta=beta, kappa=meta.kappa)
        if w_prev is None:
            w1, _ = initialize_feasible(problem, part, stage_box, StreamTree(seed).child("stage", i))
        else:
            w1 = project(w_prev, part, stage_box)
        res = run_spa(problem, part, stage_box, cfg, w1)
        dist, _ = evaluate_stationarity(
            problem,
            res.w,
            part,
            stage_box,
            alpha,
            mode,
            eval_samples,
            StreamTree(seed).child("stage_eval", i),
        )
        results.append(
            StageResult(eps3=e3, eps4=e4, alpha=alpha, beta=beta, run=res, stationarity=dist)
        )
        w_prev = res.w
    return results


def write_trace_csv(path, result: RunResult) -> None:
    """Header ``k,fhat,step_norm,feasible_groups``; fhat is blank on
    iterations where it was not sampled."""
    with open(path, "w", newline="") as fh:
        fh.write("k,fhat,step_norm,feasible_groups\n")
        for row in result.trace:
            fhat = "" if row.fhat is None else format(row.fhat, ".17g")
            fh.write(
                f"{row.k},{fhat},{format(row.step_norm, '.17g')},{row.feasible_groups}\n"
            )
