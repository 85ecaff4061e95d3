"""Brute-force oracles: absorbing random walks and exhaustive set checks.

Nothing here is used by the selection code paths.  The transition matrix of
a :class:`WalkChain` is built with its own Taylor-series exponential so that
comparisons against :func:`leaderselect.dynamics.expm_neg` are independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .graph import Topology, build_laplacian

__all__ = [
    "WalkChain",
    "Violation",
    "series_expm",
    "hit_probabilities",
    "escape_probability",
    "simulate_walk",
    "monte_carlo_escape",
    "check_supermodular",
    "check_nonincreasing",
    "exhaustive_best",
    "exhaustive_minimal",
]


def series_expm(A: np.ndarray, terms: int = 30) -> np.ndarray:
    """``exp(A)`` by a truncated Taylor series with scaling and squaring."""
    A = np.asarray(A, float)
    norm = np.abs(A).sum(axis=1).max(initial=0.0)
    s = max(0, math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0
    B = A / 2.0**s
    E = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms + 1):
        term = term @ B / k
        E = E + term
        if np.abs(term).max(initial=0.0) < 1e-18:
            break
    for _ in range(s):
        E = E @ E
    return E


@dataclass(frozen=True, eq=False)
class WalkChain:
    transition: np.ndarray
    step: float
    absorbing: frozenset

    def __post_init__(self):
        P = np.asarray(self.transition, float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition must be square")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("transition rows must sum to one")
        eye = np.eye(len(P))
        for j in self.absorbing:
            if not np.allclose(P[j], eye[j], atol=1e-12):
                raise ValueError(f"absorbing state {j} has a non-identity row")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "absorbing", frozenset(int(j) for j in self.absorbing))

    @classmethod
    def from_topology(cls, topo: Topology, leaders: Iterable[int], step: float) -> "WalkChain":
        leaders = frozenset(leaders)
        L = build_laplacian(topo, leaders)
        P = series_expm(-step * L)
        P = np.clip(P, 0.0, None)
        P /= P.sum(axis=1, keepdims=True)
        P[list(leaders)] = np.eye(topo.n)[list(leaders)]
        return cls(P, step, leaders)

    @property
    def n(self) -> int:
        return len(self.transition)


def hit_probabilities(chain: WalkChain, steps: int) -> np.ndarray:
    """``H[i, j] = Pr(X(steps) = j | X(0) = i)`` by pushing distributions forward."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    D = np.eye(chain.n)
    for _ in range(steps):
        D = D @ chain.transition
    return D


def escape_probability(chain: WalkChain, steps: int, start: int) -> float:
    """``Pr(X(steps) not in S | X(0) = start)``."""
    if start in chain.absorbing:
        return 0.0
    row = hit_probabilities(chain, steps)[start]
    return float(1.0 - sum(row[j] for j in chain.absorbing))


def simulate_walk(chain: WalkChain, steps: int, start: int, trajectories: int, rng) -> np.ndarray:
    """Final positions of independent trajectories of the chain."""
    rng = np.random.default_rng(rng)
    cum = np.cumsum(chain.transition, axis=1)
    cum[:, -1] = 1.0
    pos = np.full(trajectories, start, dtype=int)
    for _ in range(steps):
        u = rng.random(trajectories)
        pos = (u[:, None] > cum[pos]).sum(axis=1)
    return pos


class Estimate(NamedTuple):
    mean: float
    stderr: float


def monte_carlo_escape(chain: WalkChain, steps: int, start: int, trajectories: int, rng) -> Estimate:
    pos = simulate_walk(chain, steps, start, trajectories, rng)
    escaped = ~np.isin(pos, list(chain.absorbing))
    m = escaped.mean()
    return Estimate(float(m), float(math.sqrt(m * (1 - m) / trajectories)))


class Violation(NamedTuple):
    S: frozenset
    T: frozenset
    v: int
    small_gain: float
    large_gain: float


def _memo(fn):
    cache = {}

    def f(S):
        key = frozenset(S)
        if key not in cache:
            cache[key] = fn(key)
        return cache[key]

    return f


def _subsets(items):
    items = list(items)
    for r in range(len(items) + 1):
        yield from (frozenset(c) for c in itertools.combinations(items, r))


def check_supermodular(
    fn: Callable, ground: int | Iterable[int], max_n: int = 10, tol: float = 1e-9
) -> list[Violation]:
    """Every ``(S, T, v)`` with ``S ⊆ T``, ``v ∉ T`` where
    ``f(S) - f(S+v) < f(T) - f(T+v) - tol``.  Empty list means supermodular."""
    V = list(range(ground)) if isinstance(ground, int) else list(ground)
    if len(V) > max_n or max_n > 10:
        raise ValueError(f"exhaustive check refused for |V|={len(V)} (limit {min(max_n, 10)})")
    f = _memo(fn)
    out = []
    for T in _subsets(V):
        for S in _subsets(T):
            for v in V:
                if v in T:
                    continue
                a = f(S) - f(S | {v})
                b = f(T) - f(T | {v})
                if a < b - tol:
                    out.append(Violation(S, T, v, a, b))
    return out


def check_nonincreasing(fn: Callable, ground: int, tol: float = 1e-12) -> list[tuple]:
    """Pairs ``(S, v)`` where adding ``v`` increases ``fn``."""
    f = _memo(fn)
    out = []
    for S in _subsets(range(ground)):
        for v in range(ground):
            if v not in S and f(S | {v}) > f(S) + tol:
                out.append((S, v))
    return out


def exhaustive_best(fn: Callable, n: int, k: int) -> tuple[frozenset, float]:
    """Minimiser of ``fn`` over sets of size at most ``k``."""
    best, best_val = frozenset(), fn(frozenset())
    for r in range(1, k + 1):
        for c in itertools.combinations(range(n), r):
            val = fn(frozenset(c))
            if val < best_val:
                best, best_val = frozenset(c), val
    return best, best_val


def exhaustive_minimal(fn: Callable, n: int, alpha: float) -> frozenset:
    """Smallest set with ``fn(S) <= alpha``."""
    for r in range(n + 1):
        for c in itertools.combinations(range(n), r):
            if fn(frozenset(c)) <= alpha:
                return frozenset(c)
    raise ValueError(f"no set reaches alpha={alpha}")
