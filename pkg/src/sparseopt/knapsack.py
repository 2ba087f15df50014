"""Exact 0-1 knapsack solvers.

Projecting a point onto the weighted group support constraint reduces to a
0-1 knapsack problem whose gains are squared norms, so the solvers here
accept arbitrary nonnegative real values and positive real weights.
``solve_bnb`` is the production solver; ``solve_dp`` (integer weights) and
``solve_exhaustive`` (small n) are independent oracles used to validate it.

All solvers break ties between optimal selections the same way: the returned
bit vector is the one with the smallest binary encoding ``sum(z_i << i)``
over original item indices, i.e. earlier items are preferred and the all-zero
selection wins when every value is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "KnapsackInstance",
    "KnapsackSolution",
    "solve_bnb",
    "solve_dp",
    "solve_exhaustive",
    "scale_to_integer_weights",
    "read_instance",
    "write_instance",
]

# Absolute slack for bound-based pruning; gains are squared norms of O(1)
# weight vectors, so 1e-12 is far below any meaningful objective gap.
PRUNE_TOL = 1e-12

MAX_EXHAUSTIVE_ITEMS = 25
MAX_DP_CAPACITY = 10_000_000
MAX_DP_CELLS = 200_000_000


@dataclass(frozen=True)
class KnapsackInstance:
    """A 0-1 knapsack instance with real values and weights."""

    values: tuple[float, ...]
    weights: tuple[float, ...]
    capacity: float

    def __post_init__(self):
        if len(self.values) != len(self.weights):
            raise ValueError(
                f"values/weights length mismatch: {len(self.values)} vs {len(self.weights)}"
            )
        if not (math.isfinite(self.capacity) and self.capacity > 0):
            raise ValueError(f"capacity must be positive and finite, got {self.capacity}")
        for i, (v, w) in enumerate(zip(self.values, self.weights)):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"value[{i}] must be nonnegative and finite, got {v}")
            if not (math.isfinite(w) and w > 0):
                raise ValueError(f"weight[{i}] must be strictly positive, got {w}")
            if w > self.capacity:
                raise ValueError(
                    f"weight[{i}]={w} exceeds capacity {self.capacity}; "
                    "items heavier than the capacity must be removed by the caller"
                )

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class KnapsackSolution:
    selection: tuple[int, ...]
    objective: float


def _objective(values, selection) -> float:
    # Summed in fixed index order so the reported objective is reproducible.
    total = 0.0
    for v, z in zip(values, selection):
        if z:
            total += v
    return total


def _mask_of(selection) -> int:
    mask = 0
    for i, z in enumerate(selection):
        if z:
            mask |= 1 << i
    return mask


def _selection_of(mask: int, n: int) -> tuple[int, ...]:
    return tuple((mask >> i) & 1 for i in range(n))


def _finish(inst: KnapsackInstance, mask: int) -> KnapsackSolution:
    sel = _selection_of(mask, inst.n)
    return KnapsackSolution(selection=sel, objective=_objective(inst.values, sel))


def solve_exhaustive(inst: KnapsackInstance) -> KnapsackSolution:
    """Optimum by enumerating all 2^n subsets; n is capped at 25."""
    n = inst.n
    if n > MAX_EXHAUSTIVE_ITEMS:
        raise ValueError(f"exhaustive solver limited to n <= {MAX_EXHAUSTIVE_ITEMS}, got {n}")
    if n == 0:
        return KnapsackSolution(selection=(), objective=0.0)

    values = np.asarray(inst.values, dtype=float)
    weights = np.asarray(inst.weights, dtype=float)

    # Subset sums built by doubling: index = bitmask with item i at bit i.
    low = min(n, 20)
    wsum = np.zeros(1)
    vsum = np.zeros(1)
    for i in range(low):
        wsum = np.concatenate([wsum, wsum + weights[i]])
        vsum = np.concatenate([vsum, vsum + values[i]])

    best_val = -1.0
    best_mask = 0
    # High bits enumerated in ascending order so the first optimum found has
    # the smallest mask, matching the tie-breaking rule.
    for high in range(1 << (n - low)):
        hw = hv = 0.0
        for j in range(n - low):
            if (high >> j) & 1:
                hw += weights[low + j]
                hv += values[low + j]
        if hw > inst.capacity:
            continue
        feas = wsum + hw <= inst.capacity
        if not feas.any():
            continue
        cand = np.where(feas, vsum + hv, -np.inf)
        k = int(np.argmax(cand))  # first occurrence = smallest low mask
        if cand[k] > best_val:
            best_val = float(cand[k])
            best_mask = (high << low) | k
    return _finish(inst, best_mask)


def _as_int(x, what: str) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, float) and x.is_integer():
        return int(x)
    raise ValueError(f"{what} must be a positive integer for the DP solver, got {x!r}")


def solve_dp(inst: KnapsackInstance) -> KnapsackSolution:
    """Exact optimum by weight-indexed dynamic programming.

    Requires integer weights and capacity; rational inputs can be scaled
    first with :func:`scale_to_integer_weights`.
    """
    n = inst.n
    cap = _as_int(inst.capacity, "capacity")
    weights = [_as_int(w, f"weight[{i}]") for i, w in enumerate(inst.weights)]
    if cap > MAX_DP_CAPACITY:
        raise ValueError(f"capacity {cap} exceeds DP limit {MAX_DP_CAPACITY}")
    if n * (cap + 1) > MAX_DP_CELLS:
        raise ValueError(f"DP table of {n}x{cap + 1} cells exceeds memory guard")
    if n == 0:
        return KnapsackSolution(selection=(), objective=0.0)

    values = np.asarray(inst.values, dtype=float)
    dp = np.zeros(cap + 1)
    take = np.zeros((n, cap + 1), dtype=bool)
    for i in range(n):
        w = weights[i]
        shifted = dp[: cap + 1 - w] + values[i]
        region = dp[w:]
        improve = shifted > region  # strict: prefer not taking on ties
        take[i, w:] = improve
        dp = np.concatenate([dp[:w], np.where(improve, shifted, region)])

    # Backward extraction; the strict-improvement rule above makes this the
    # smallest-mask optimal selection.
    sel = [0] * n
    c = cap
    for i in range(n - 1, -1, -1):
        if take[i, c]:
            sel[i] = 1
            c -= weights[i]
    return KnapsackSolution(selection=tuple(sel), objective=_objective(inst.values, sel))


def scale_to_integer_weights(
    weights, capacity, max_capacity: int = MAX_DP_CAPACITY
) -> tuple[list[int], int]:
    """Scale rational weights and capacity to integers by their LCD.

    Floats are treated exactly (every float is rational); a blow-up beyond
    ``max_capacity`` after scaling is rejected rather than approximated.
    """
    fracs = [Fraction(w) for w in weights]
    cap = Fraction(capacity)
    lcd = 1
    for f in fracs:
        lcd = lcd * f.denominator // math.gcd(lcd, f.denominator)
    scaled_cap = cap * lcd
    int_cap = math.floor(scaled_cap)  # weights are integral, so flooring is exact
    if int_cap > max_capacity:
        raise ValueError(
            f"scaled capacity {int_cap} exceeds {max_capacity}; "
            "weights are not representable with a small common denominator"
        )
    return [int(f * lcd) for f in fracs], int_cap


def _dominates(vj, wj, vk, wk) -> bool:
    """Item j dominates item k: at least as valuable and strictly lighter,
    or strictly more valuable and at most as heavy."""
    return (vj >= vk and wj < wk) or (vj > vk and wj <= wk)


def solve_bnb(inst: KnapsackInstance, dominance_pruning: bool = True) -> KnapsackSolution:
    """Depth-first branch and bound on the critical item.

    Items are processed in value/weight ratio order (stable on ties by
    original index).  Each node keeps a feasible incumbent from a
    greedy-split pass over the undetermined items (better of the split
    solution and the critical item alone), is bounded by the fractional
    critical-item relaxation without floor operators, and branches on the
    critical item.  Branches are additionally pruned by the dominance rule:
    excluding an item that dominates one already fixed in, or including an
    item dominated by one already fixed out, cannot lead to a new optimum.
    """
    n = inst.n
    if n == 0:
        return KnapsackSolution(selection=(), objective=0.0)

    values = inst.values
    weights = inst.weights
    order = sorted(range(n), key=lambda i: (-(values[i] / weights[i]), i))

    best_val = 0.0
    best_mask = 0  # the empty selection is always feasible

    def offer(val: float, mask: int):
        nonlocal best_val, best_mask
        if val > best_val:
            best_val = val
            best_mask = mask
        elif val == best_val and mask < best_mask:
            best_mask = mask

    # Node: (undetermined items in ratio order, residual capacity,
    #        fixed value, fixed mask, items fixed to 1, items fixed to 0)
    stack = [(tuple(order), inst.capacity, 0.0, 0, (), ())]
    while stack:
        und, cap, fv, mask, ones, zeros = stack.pop()

        # Greedy pass over undetermined items to find the critical item.
        packed_val = 0.0
        packed_mask = 0
        rem = cap
        crit_pos = -1
        for pos, item in enumerate(und):
            w = weights[item]
            if w <= rem:
                rem -= w
                packed_val += values[item]
                packed_mask |= 1 << item
            else:
                crit_pos = pos
                break

        if crit_pos < 0:
            # Everything fits: the node is solved exactly.
            offer(fv + packed_val, mask | packed_mask)
            continue

        s = und[crit_pos]
        # Greedy-split incumbents: split solution, and the critical item alone.
        offer(fv + packed_val, mask | packed_mask)
        if weights[s] <= cap:
            offer(fv + values[s], mask | (1 << s))

        # Fractional relaxation: fill the leftover capacity at the critical
        # item's ratio (no flooring; values are real).
        ub = fv + packed_val + rem * (values[s] / weights[s])
        if ub <= best_val + PRUNE_TOL:
            continue

        rest = und[:crit_pos] + und[crit_pos + 1 :]

        # Exclude branch first so the include branch is explored first (LIFO).
        if not (
            dominance_pruning
            and any(_dominates(values[s], weights[s], values[o], weights[o]) for o in ones)
        ):
            stack.append((rest, cap, fv, mask, ones, zeros + (s,)))
        if weights[s] <= cap and not (
            dominance_pruning
            and any(_dominates(values[z], weights[z], values[s], weights[s]) for z in zeros)
        ):
            stack.append(
                (rest, cap - weights[s], fv + values[s], mask | (1 << s), ones + (s,), zeros)
            )

    return _finish(inst, best_mask)


def write_instance(path, inst: KnapsackInstance) -> None:
    """Flat text format: n / values / weights / capacity, one group per line."""
    with open(path, "w") as fh:
        fh.write(f"{inst.n}\n")
        fh.write(" ".join(format(v, ".17g") for v in inst.values) + "\n")
        fh.write(" ".join(format(w, ".17g") for w in inst.weights) + "\n")
        fh.write(format(inst.capacity, ".17g") + "\n")


def read_instance(path) -> KnapsackInstance:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh.read().splitlines()]
    if len(lines) < 4:
        raise ValueError(f"expected 4 lines (n / values / weights / capacity), got {len(lines)}")
    n = int(lines[0])
    values = tuple(float(tok) for tok in lines[1].split()) if n else ()
    weights = tuple(float(tok) for tok in lines[2].split()) if n else ()
    if len(values) != n or len(weights) != n:
        raise ValueError(f"instance declares n={n} but has {len(values)} values / {len(weights)} weights")
    return KnapsackInstance(values=values, weights=weights, capacity=float(lines[3]))
