"""The weighted group support constraint and its box intersection.

A point ``w`` in R^d is split into ``n`` groups of sizes ``dims``; it is
feasible when the penalties of its nonzero groups sum to at most ``budget``
and every component lies in ``[-beta, beta]``.  This module provides
feasibility testing, the exact Euclidean projection (via a 0-1 knapsack
problem on per-group gains), the active/free index sets, the family of
maximal active sets, and the distance from a gradient to the negative of the
limiting normal cone (the stationarity gap).

Group support uses exact-zero semantics: a group is nonzero iff any stored
component differs from 0.0.  The projection writes literal zeros, so a
tolerance here would silently change the constraint set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .knapsack import KnapsackInstance, solve_bnb

__all__ = [
    "GroupPartition",
    "BoxParams",
    "IndexSets",
    "is_feasible",
    "project",
    "index_sets",
    "maximal_active_sets",
    "stationarity_distance",
    "frechet_cone_contains",
]

Y_ENUMERATION_LIMIT = 25


@dataclass(frozen=True)
class GroupPartition:
    """Group sizes, per-group penalties and the aggregate budget.

    Groups with a penalty larger than the budget can never be active; they
    are kept in the partition (so vectors keep their length) but are treated
    as permanently zero by projection and feasibility.
    """

    dims: tuple[int, ...]
    penalties: tuple[float, ...]
    budget: float

    def __post_init__(self):
        if len(self.dims) == 0:
            raise ValueError("partition needs at least one group")
        if len(self.dims) != len(self.penalties):
            raise ValueError(
                f"dims/penalties length mismatch: {len(self.dims)} vs {len(self.penalties)}"
            )
        for i, di in enumerate(self.dims):
            if not (isinstance(di, (int, np.integer)) and di > 0):
                raise ValueError(f"dims[{i}] must be a positive integer, got {di!r}")
        for i, p in enumerate(self.penalties):
            if not (math.isfinite(p) and p > 0):
                raise ValueError(f"penalties[{i}] must be positive and finite, got {p}")
        if not (math.isfinite(self.budget) and self.budget > 0):
            raise ValueError(f"budget must be positive and finite, got {self.budget}")

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return int(sum(self.dims))

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        off = [0]
        for di in self.dims:
            off.append(off[-1] + int(di))
        return tuple(off)

    @cached_property
    def selectable(self) -> tuple[bool, ...]:
        return tuple(p <= self.budget for p in self.penalties)

    def group(self, w: np.ndarray, i: int) -> np.ndarray:
        return w[self.offsets[i] : self.offsets[i + 1]]

    def nonzero_groups(self, w: np.ndarray) -> list[int]:
        return [i for i in range(self.n) if np.any(self.group(w, i) != 0.0)]

    def support_cost(self, w: np.ndarray) -> float:
        return sum(self.penalties[i] for i in self.nonzero_groups(w))


@dataclass(frozen=True)
class BoxParams:
    """Component bound ``beta`` (may be inf) and the Lipschitz-region radius
    ``kappa`` the loss is trusted on.  ``kappa > beta + alpha/2`` must hold
    once a smoothing radius is chosen; see ``smoothing.check_configuration``.
    """

    beta: float = math.inf
    kappa: float = math.inf

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive (inf allowed), got {self.beta}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive (inf allowed), got {self.kappa}")


@dataclass(frozen=True)
class IndexSets:
    """Active groups I, free zero groups J, and (optionally) the family Y of
    maximal active supersets of I."""

    active: frozenset[int]
    free: frozenset[int]
    maximal: tuple[frozenset[int], ...] | None = None


def _check_point(w, part: GroupPartition) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (part.d,):
        raise ValueError(f"point has shape {w.shape}, expected ({part.d},)")
    return w


def is_feasible(w, part: GroupPartition, box: BoxParams = BoxParams()) -> bool:
    w = _check_point(w, part)
    if np.any(np.abs(w) > box.beta):
        return False
    return part.support_cost(w) <= part.budget


def project(w, part: GroupPartition, box: BoxParams = BoxParams()) -> np.ndarray:
    """Euclidean projection onto the constraint intersected with the box.

    The gain of keeping group i is ``||w^i||^2 - ||max(|w^i|-beta, 0)||^2``
    (just ``||w^i||^2`` for an unbounded box); an exact knapsack over these
    gains picks the active set, kept groups are clamped componentwise to
    ``[-beta, beta]`` and the rest are zeroed.
    """
    w = _check_point(w, part)
    beta = box.beta
    items = [i for i in range(part.n) if part.selectable[i]]
    gains = []
    for i in items:
        g = part.group(w, i)
        excess = np.maximum(np.abs(g) - beta, 0.0)
        gains.append(float(g @ g - excess @ excess))

    x = np.zeros_like(w)
    if items:
        inst = KnapsackInstance(
            values=tuple(gains),
            weights=tuple(part.penalties[i] for i in items),
            capacity=part.budget,
        )
        sol = solve_bnb(inst)
        for z, i in zip(sol.selection, items):
            if z:
                g = part.group(w, i)
                lo, hi = part.offsets[i], part.offsets[i + 1]
                x[lo:hi] = np.sign(g) * np.minimum(np.abs(g), beta)
    return x


def maximal_active_sets(active, part: GroupPartition) -> list[frozenset[int]]:
    """All supersets X of the active set that fit the budget and admit no
    feasible extension, in deterministic order."""
    active = frozenset(active)
    base_cost = sum(part.penalties[i] for i in active)
    if base_cost > part.budget:
        raise ValueError("active set already exceeds the budget")
    addable = sorted(
        j
        for j in range(part.n)
        if j not in active and base_cost + part.penalties[j] <= part.budget
    )
    out: list[frozenset[int]] = []

    def visit(pos: int, chosen: tuple[int, ...], cost: float):
        if pos == len(addable):
            # Maximal iff no excluded addable group still fits.
            for j in addable:
                if j not in chosen and cost + part.penalties[j] <= part.budget:
                    return
            out.append(active | frozenset(chosen))
            return
        j = addable[pos]
        if cost + part.penalties[j] <= part.budget:
            visit(pos + 1, chosen + (j,), cost + part.penalties[j])
        visit(pos + 1, chosen, cost)

    visit(0, (), base_cost)
    return out


def index_sets(
    w,
    part: GroupPartition,
    enumerate_maximal: bool = False,
    limit: int = Y_ENUMERATION_LIMIT,
) -> IndexSets:
    """Active groups, free zero groups, and optionally the maximal family.

    Enumeration of the maximal family is only attempted when the number of
    inactive groups is at most ``limit``; larger instances should go through
    the stationarity solver's search instead.
    """
    w = _check_point(w, part)
    if not is_feasible(w, part, BoxParams()):
        raise ValueError("point is not feasible for the group constraint")
    active = frozenset(part.nonzero_groups(w))
    cost = sum(part.penalties[i] for i in active)
    free = frozenset(
        j
        for j in range(part.n)
        if j not in active and cost + part.penalties[j] <= part.budget
    )
    maximal = None
    if enumerate_maximal:
        inactive = part.n - len(active)
        if inactive > limit:
            raise ValueError(
                f"{inactive} inactive groups exceed the enumeration limit {limit}"
            )
        maximal = tuple(maximal_active_sets(active, part))
    return IndexSets(active=active, free=free, maximal=maximal)


def _boundary_kill_mask(G_i: np.ndarray, w_i: np.ndarray, beta: float) -> np.ndarray:
    """Components of an active group whose gradient can be absorbed by the
    cone: the point sits on the box boundary and the gradient pushes outward
    against it (sign opposite to the coordinate)."""
    if not math.isfinite(beta):
        return np.zeros(w_i.shape, dtype=bool)
    return (np.abs(w_i) == beta) & (np.sign(G_i) == -np.sign(w_i))


def stationarity_distance(
    G,
    w,
    part: GroupPartition,
    box: BoxParams = BoxParams(),
    method: str = "auto",
) -> float:
    """Distance from 0 to ``G + N(w)`` where N is the limiting normal cone of
    the constraint-box intersection at the feasible point ``w``.

    With no free zero group the distance has a closed form: gradients of
    inactive groups are absorbed entirely, and within active groups only the
    boundary components with opposing sign are absorbed.  Otherwise the
    minimum runs over all maximal active supersets; a depth-first search over
    the free groups (binary choices, pruned by partial objective and budget)
    solves it exactly.
    """
    if method not in ("auto", "closed_form", "search"):
        raise ValueError(f"unknown method {method!r}")
    w = _check_point(w, part)
    G = np.asarray(G, dtype=float)
    if G.shape != (part.d,):
        raise ValueError(f"gradient has shape {G.shape}, expected ({part.d},)")
    if not is_feasible(w, part, box):
        raise ValueError("point is not feasible")

    sets = index_sets(w, part)
    active = sorted(sets.active)
    free = sorted(sets.free)

    fixed_sq = 0.0
    for i in active:
        g = part.group(G, i)
        kill = _boundary_kill_mask(g, part.group(w, i), box.beta)
        kept = g[~kill]
        fixed_sq += float(kept @ kept)

    if method == "closed_form" and free:
        raise ValueError("closed form requires no free zero group")
    if not free:
        return math.sqrt(fixed_sq)

    # Search over which free groups join the active set.  Joining group j
    # forces its gradient block to be kept (cost ||G^j||^2); left-out groups
    # are absorbed at no cost, but the final set must be maximal.
    costs = [float(part.group(G, j) @ part.group(G, j)) for j in free]
    pens = [part.penalties[j] for j in free]
    slack0 = part.budget - sum(part.penalties[i] for i in active)
    order = sorted(range(len(free)), key=lambda k: costs[k])

    best = math.inf

    def visit(pos: int, obj: float, slack: float, out_pens: tuple[float, ...]):
        nonlocal best
        if obj >= best:
            return
        if pos == len(order):
            if all(p > slack for p in out_pens):
                best = obj
            return
        k = order[pos]
        # Leave group out first: cheapest objective, maximality checked last.
        visit(pos + 1, obj, slack, out_pens + (pens[k],))
        if pens[k] <= slack:
            visit(pos + 1, obj + costs[k], slack - pens[k], out_pens)

    visit(0, 0.0, slack0, ())
    return math.sqrt(fixed_sq + best)


def frechet_cone_contains(y, w, part: GroupPartition, box: BoxParams = BoxParams()) -> bool:
    """Membership test for the regular normal cone at a feasible point.

    On every active or free group, components must vanish strictly inside
    the box and may only point outward on the boundary.  Groups that are
    forced to zero are unconstrained.
    """
    w = _check_point(w, part)
    y = np.asarray(y, dtype=float)
    if y.shape != (part.d,):
        raise ValueError(f"vector has shape {y.shape}, expected ({part.d},)")
    if not is_feasible(w, part, box):
        raise ValueError("point is not feasible")
    sets = index_sets(w, part)
    beta = box.beta
    for i in sorted(sets.active | sets.free):
        wi = part.group(w, i)
        yi = part.group(y, i)
        for wj, yj in zip(wi, yi):
            if math.isfinite(beta) and wj == beta:
                if yj < 0:
                    return False
            elif math.isfinite(beta) and wj == -beta:
                if yj > 0:
                    return False
            elif yj != 0.0:
                return False
    return True
