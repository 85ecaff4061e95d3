"""Greedy leader selection for static (or known-distribution) networks."""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dynamics import total_error
from .graph import Topology, is_strongly_connected

__all__ = [
    "SelectionResult",
    "greedy",
    "select_k_leaders",
    "select_minimal_leaders",
    "baseline_order",
    "select_baseline",
    "select_k_total_error",
    "POLICIES",
]

POLICIES = ("random", "max_degree", "average_degree")


@dataclass
class SelectionResult:
    leaders: list[int]
    bound_trace: list[float]
    objective: float
    evaluations: int
    policy: str = "supermodular"
    gains: list[float] = field(default_factory=list, repr=False)

    def to_dict(self, one_based: bool = True) -> dict:
        d = asdict(self)
        if one_based:
            d["leaders"] = [v + 1 for v in self.leaders]
        return d


def _key(gain: float) -> float:
    # strictly increasing in gain; the slack absorbs round-off in stale bounds
    return -(gain + 1e-12 * (abs(gain) + 1.0))


def greedy(
    fn: Callable,
    n: int,
    *,
    k: int | None = None,
    alpha: float | None = None,
    lazy: bool = True,
) -> SelectionResult:
    """Greedy minimisation of a nonincreasing supermodular set function.

    Stops after ``k`` insertions, or once ``fn(S) <= alpha``.  Each step adds
    the node with the largest decrease ``fn(S) - fn(S + v)``, ties going to
    the lowest index.  The lazy engine keeps decreases from earlier steps in
    a heap as upper bounds; they can only shrink as ``S`` grows.
    """
    if (k is None) == (alpha is None):
        raise ValueError("give exactly one of k or alpha")
    calls = 0

    def f(S):
        nonlocal calls
        calls += 1
        return fn(S)

    S: list[int] = []
    current = f(frozenset())
    trace, gains = [], []

    def gain_of(v):
        val = f(frozenset(S) | {v})
        # with an infinite f(S) every decrease is infinite: rank by f(S + v)
        g = current - val if math.isfinite(current) else -val
        return g, val

    heap = [(-math.inf, v, -1, math.nan, math.nan) for v in range(n)] if lazy else []

    while (len(S) < k) if k is not None else (current > alpha and len(S) < n):
        step = len(S)
        if lazy:
            while True:
                _, v, computed_at, val, g = heapq.heappop(heap)
                if computed_at == step:
                    break
                g, val = gain_of(v)
                heapq.heappush(heap, (_key(g), v, step, val, g))
        else:
            v, val, g = None, None, -math.inf
            for u in range(n):
                if u in S:
                    continue
                gu, valu = gain_of(u)
                if v is None or gu > g:
                    v, val, g = u, valu, gu
        S.append(v)
        if lazy and not math.isfinite(current):
            # keys ranked -f(S + v), not decreases: they bound nothing
            heap = [(-math.inf, u, -1, math.nan, math.nan) for u in range(n) if u not in S]
        current = val
        trace.append(val)
        gains.append(g)

    return SelectionResult(S, trace, current, calls, gains=gains)


def select_k_leaders(evaluator, k: int, lazy: bool = True) -> SelectionResult:
    """Greedy choice of ``k`` leaders minimising the error bound."""
    if not 1 <= k <= evaluator.n:
        raise ValueError(f"k must be in [1, {evaluator.n}], got {k}")
    return greedy(evaluator.bound, evaluator.n, k=k, lazy=lazy)


def select_minimal_leaders(evaluator, alpha: float, lazy: bool = True) -> SelectionResult:
    """Grow the leader set greedily until the error bound is at most ``alpha``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return greedy(evaluator.bound, evaluator.n, alpha=alpha, lazy=lazy)


def baseline_order(topo: Topology, policy: str, rng=None) -> list[int]:
    """Full node ranking used by a baseline policy; prefixes are leader sets."""
    deg = topo.out_degree()
    idx = np.arange(topo.n)
    if policy == "random":
        return [int(v) for v in np.random.default_rng(rng).permutation(topo.n)]
    if policy == "max_degree":
        return [int(v) for v in np.lexsort((idx, -deg))]
    if policy == "average_degree":
        return [int(v) for v in np.lexsort((idx, np.abs(deg - deg.mean())))]
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def select_baseline(
    topo: Topology, k: int, policy: str, rng=None, evaluator=None
) -> SelectionResult:
    """Random, max-degree or average-degree leaders, scored with ``evaluator``."""
    if not 0 <= k <= topo.n:
        raise ValueError(f"k must be in [0, {topo.n}], got {k}")
    S = baseline_order(topo, policy, rng)[:k]
    if evaluator is None:
        return SelectionResult(S, [], math.nan, 0, policy=policy)
    trace = [evaluator.bound(S[: i + 1]) for i in range(k)]
    obj = trace[-1] if trace else evaluator.bound(())
    return SelectionResult(S, trace, obj, k, policy=policy)


def select_k_total_error(
    topo: Topology, k: int, p: float = 2.0, tol: float = 1e-6, lazy: bool = True
) -> SelectionResult:
    """Greedy on the time-integrated bound instead of a fixed horizon."""
    if not 1 <= k <= topo.n:
        raise ValueError(f"k must be in [1, {topo.n}], got {k}")
    if not is_strongly_connected(topo):
        raise ValueError("total error selection needs a strongly connected topology")
    cache = {}

    def w(S):
        if S not in cache:
            cache[S] = math.inf if not S else total_error(topo, S, p, tol).value
        return cache[S]

    return greedy(w, topo.n, k=k, lazy=lazy)
