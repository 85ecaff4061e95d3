"""Leader-follower state propagation and convergence-error bounds.

The bound ``f̂_t(S)`` only depends on the follower block of ``exp(-L t)``:
leader rows of the leader-absorbing Laplacian vanish, so

    exp(-L t) = [[exp(-L_FF t), C], [0, I]]

and ``1 - sum_{j in S} P_ij`` equals the follower row sum of ``P``.  The
evaluators below therefore only exponentiate ``L_FF``.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .graph import EpochSequence, LeaderConfig, Topology, build_laplacian, leaderless_laplacian

__all__ = [
    "StateVector",
    "ErrorEvaluator",
    "MeanEvaluator",
    "MonteCarloEstimate",
    "TotalError",
    "DivergenceError",
    "expm_neg",
    "follower_transition",
    "propagate",
    "propagate_sequence",
    "hull_distance",
    "convergence_error",
    "error_bound",
    "scaled_bound",
    "total_error",
    "dynamic_error_bound",
    "per_epoch_terms",
    "per_epoch_metric",
    "single_epoch_bound",
    "choose_horizon",
    "conjugate_exponent",
    "sample_initial_state",
]

ROWSUM_TOL = 1e-9


class DivergenceError(ValueError):
    """The total error integral does not converge."""


def _check_laplacian(L: np.ndarray) -> None:
    L = np.asarray(L, float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {L.shape}")
    scale = max(1.0, float(np.abs(L).max(initial=0.0)))
    if np.any(np.abs(L.sum(axis=1)) > ROWSUM_TOL * scale):
        raise ValueError("not a Laplacian: row sums are not zero")
    off = L - np.diag(np.diag(L))
    if np.any(off > ROWSUM_TOL * scale):
        raise ValueError("not a Laplacian: positive off-diagonal entry")


def _clip_rows(P: np.ndarray, substochastic: bool = False) -> np.ndarray:
    P = np.where(P < 0.0, 0.0, P)
    s = P.sum(axis=1, keepdims=True)
    if substochastic:
        # follower blocks: rows may sum to less than one, never more
        return np.where(s > 1.0, P / np.where(s > 0, s, 1.0), P)
    return P / s


# beyond this many squarings the row-sum round-off of plain scaling and
# squaring compounds like (1 + eps)**(2**s) and can overflow
_MAX_PLAIN_SQUARINGS = 16


def _expm_projected(A: np.ndarray, substochastic: bool) -> np.ndarray:
    """``exp(A)`` for ``A = -L t``, re-projecting rows after each squaring."""
    norm = float(np.abs(A).sum(axis=1).max(initial=0.0))
    s = max(0, math.ceil(math.log2(norm))) if norm > 1.0 else 0
    if s <= _MAX_PLAIN_SQUARINGS:
        return _clip_rows(scipy.linalg.expm(A), substochastic)
    E = _clip_rows(scipy.linalg.expm(A / 2.0**s), substochastic)
    for _ in range(s):
        E = _clip_rows(E @ E, substochastic)
    return E


def expm_neg(L: np.ndarray, t: float) -> np.ndarray:
    """Row-stochastic ``exp(-L t)`` for a Laplacian ``L``.

    Negative round-off entries are clipped and rows renormalised; rows of
    absorbing nodes (zero rows of ``L``) are exact identity rows.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    L = np.asarray(L, float)
    _check_laplacian(L)
    n = L.shape[0]
    if t == 0 or not np.any(L):
        return np.eye(n)
    P = _expm_projected(-t * L, False)
    absorbing = ~np.any(L != 0.0, axis=1)
    P[absorbing] = np.eye(n)[absorbing]
    return P


def follower_transition(L_full: np.ndarray, followers: np.ndarray, t: float) -> np.ndarray:
    """``exp(-L_FF t)`` for the follower block of a leaderless Laplacian."""
    if len(followers) == 0:
        return np.zeros((0, 0))
    A = L_full[np.ix_(followers, followers)]
    if t == 0:
        return np.eye(len(followers))
    return _expm_projected(-t * A, True)


def _bound_from_block(P_FF: np.ndarray, p: float) -> float:
    if P_FF.size == 0:
        return 0.0
    escape = np.minimum(P_FF.sum(axis=1), 1.0)
    return float(np.sum(P_FF**p) + np.sum(escape**p))


def _leader_array(S, n) -> np.ndarray:
    S = np.array(sorted({int(v) for v in S}), dtype=int)
    if S.size and (S[0] < 0 or S[-1] >= n):
        raise ValueError(f"leader index out of range for n={n}: {S.tolist()}")
    return S


def _followers(S: np.ndarray, n: int) -> np.ndarray:
    mask = np.ones(n, bool)
    mask[S] = False
    return np.flatnonzero(mask)


def conjugate_exponent(p: float) -> float:
    return math.inf if p == 1 else p / (p - 1)


class StateVector(NamedTuple):
    values: np.ndarray
    time: float


def _state_values(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return np.asarray(x.values, float)
    return np.asarray(x, float)


def propagate(topo: Topology, config: LeaderConfig, x0, t: float) -> StateVector:
    """Solve ``dx/dt = -L x`` from ``x0`` for time ``t``."""
    config.validate(topo.n)
    start = x0.time if isinstance(x0, StateVector) else 0.0
    x0 = _state_values(x0)
    if x0.shape != (topo.n,):
        raise ValueError(f"x0 must have length {topo.n}")
    for j, xj in config.anchor_states.items():
        if not math.isclose(x0[j], xj, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError(f"leader {j} starts at {x0[j]} but is anchored at {xj}")
    P = expm_neg(build_laplacian(topo, config.leaders), t)
    x = P @ x0
    for j, xj in config.anchor_states.items():
        x[j] = xj
    return StateVector(x, start + t)


def propagate_sequence(seq: EpochSequence, leader_sets, x0, anchor: float = 0.0) -> StateVector:
    """Propagate through every epoch, switching leader sets between epochs.

    All leaders hold the common state ``anchor``; a node that becomes a
    leader at the start of an epoch is reset to it.
    """
    if isinstance(leader_sets, (set, frozenset)):
        leader_sets = [leader_sets] * seq.r
    if len(leader_sets) != seq.r:
        raise ValueError("need one leader set per epoch")
    x = _state_values(x0).copy()
    for (topo, dwell), S in zip(seq.epochs, leader_sets):
        cfg = LeaderConfig.uniform(S, anchor)
        x[list(cfg.leaders)] = anchor
        x = propagate(topo, cfg, x, dwell).values
    return StateVector(x, seq.start_time + seq.duration)


def hull_distance(x: np.ndarray, hull: tuple[float, float]) -> np.ndarray:
    lo, hi = hull
    return np.maximum(0.0, np.maximum(lo - x, x - hi))


def convergence_error(
    topo: Topology, config: LeaderConfig, x0, t: float, p: float = 2.0
) -> float:
    """l^p norm of the distances of ``x(t)`` to the leaders' hull."""
    if not config.leaders:
        raise ValueError("convergence error needs a nonempty leader set")
    if t <= 0 or p < 1:
        raise ValueError("need t > 0 and p >= 1")
    x = propagate(topo, config, x0, t).values
    d = hull_distance(x, config.hull)
    return float(np.sum(d**p) ** (1.0 / p))


class ErrorEvaluator:
    """Memoised ``S -> f̂_t(S)`` for a topology or a fixed epoch sequence.

    For an :class:`EpochSequence` the transition matrix is the product of the
    per-epoch exponentials (earliest epoch applied to ``x(0)`` first) and
    ``horizon`` is ignored in favour of the sequence duration.
    """

    def __init__(self, source: Topology | EpochSequence, horizon: float | None = None, p: float = 2.0):
        if p < 1 or not math.isfinite(p):
            raise ValueError(f"p must be in [1, inf), got {p}")
        self.source = source
        self.p = float(p)
        if isinstance(source, EpochSequence):
            self.n = source.n
            self.horizon = source.duration
            self._laplacians = [leaderless_laplacian(topo) for topo in source.topologies]
            self._dwells = list(source.dwells)
        else:
            if horizon is None or not horizon > 0:
                raise ValueError("a positive horizon is required for a static topology")
            self.n = source.n
            self.horizon = float(horizon)
            self._laplacians = [leaderless_laplacian(source)]
            self._dwells = [self.horizon]
        self._cache: dict[frozenset, float] = {}
        self._lock = threading.Lock()
        self._fmax = None

    @property
    def topology(self) -> Topology:
        if isinstance(self.source, EpochSequence):
            return self.source.topologies[0]
        return self.source

    def follower_block(self, S) -> np.ndarray:
        S = _leader_array(S, self.n)
        F = _followers(S, self.n)
        # x(t) = P_r ... P_1 x(0); follower blocks multiply the same way
        M = None
        for L, dwell in zip(self._laplacians, self._dwells):
            B = follower_transition(L, F, dwell)
            M = B if M is None else B @ M
        return M

    def transition(self, S) -> np.ndarray:
        """Full row-stochastic transition matrix for leader set ``S``."""
        S = _leader_array(S, self.n)
        M = np.eye(self.n)
        for topo_L, dwell in zip(self._laplacians, self._dwells):
            L = topo_L.copy()
            L[S, :] = 0.0
            M = expm_neg(L, dwell) @ M
        return M

    def bound(self, S) -> float:
        key = frozenset(int(v) for v in S)
        val = self._cache.get(key)
        if val is None:
            val = _bound_from_block(self.follower_block(key), self.p)
            with self._lock:
                val = self._cache.setdefault(key, val)
        return val

    __call__ = bound

    def f_max(self) -> float:
        """Largest singleton bound."""
        if self._fmax is None:
            self._fmax = max(self.bound({v}) for v in range(self.n))
        return self._fmax

    @property
    def cache_size(self) -> int:
        return len(self._cache)


class MeanEvaluator:
    """Average of several evaluators over the same node set."""

    def __init__(self, evaluators: Sequence[ErrorEvaluator]):
        if not evaluators:
            raise ValueError("need at least one evaluator")
        ns = {ev.n for ev in evaluators}
        if len(ns) != 1:
            raise ValueError("evaluators must share the node set")
        self.evaluators = list(evaluators)
        self.n = ns.pop()
        self.p = self.evaluators[0].p
        self._cache: dict[frozenset, float] = {}
        self._fmax = None

    @property
    def topology(self) -> Topology:
        return self.evaluators[0].topology

    def bound(self, S) -> float:
        key = frozenset(int(v) for v in S)
        val = self._cache.get(key)
        if val is None:
            val = self._cache.setdefault(
                key, float(np.mean([ev.bound(key) for ev in self.evaluators]))
            )
        return val

    __call__ = bound

    def f_max(self) -> float:
        if self._fmax is None:
            self._fmax = max(self.bound({v}) for v in range(self.n))
        return self._fmax


def error_bound(evaluator, S) -> float:
    return evaluator.bound(S)


def scaled_bound(evaluator, S, K: float = 1.0) -> float:
    """``K * f̂_t(S)**(1/p)``, the bound on ``f_t(S)`` when ``||x(0)||_q <= K``."""
    if K <= 0:
        raise ValueError("K must be positive")
    return K * evaluator.bound(S) ** (1.0 / evaluator.p)


class TotalError(NamedTuple):
    value: float
    truncation: float
    tail: float


def _bound_at(L_full, F, p):
    def f(t):
        return _bound_from_block(follower_transition(L_full, F, t), p)

    return f


def total_error(topo: Topology, S, p: float = 2.0, tol: float = 1e-6) -> TotalError:
    """Integral of ``f̂_t(S)`` over ``t`` in ``[0, inf)``.

    The truncation point is doubled until an exponential tail fitted over the
    last tenth of ``[0, T]`` is below ``tol / 2``.
    """
    S = _leader_array(S, topo.n)
    if S.size == 0:
        raise DivergenceError("no leaders: the error never decays")
    F = _followers(S, topo.n)
    if F.size == 0:
        return TotalError(0.0, 0.0, 0.0)
    L = leaderless_laplacian(topo)
    L_FF = L[np.ix_(F, F)]
    eig = np.linalg.eigvals(L_FF).real
    if eig.min() <= 1e-12:
        raise DivergenceError("some follower cannot reach a leader")
    f = _bound_at(L, F, p)
    T = 4.0 / (p * eig.min())
    for _ in range(60):
        a, b = 0.9 * T, T
        fa, fb = f(a), f(b)
        if fb <= 0.0:
            tail = 0.0
        elif fa > fb:
            rate = math.log(fa / fb) / (b - a)
            tail = fb / rate
        else:
            tail = math.inf
        if tail < tol / 2:
            break
        T *= 2
    else:
        raise DivergenceError("tail did not decay below tolerance")
    # split at a geometric grid so quad resolves the fast initial transient
    knots = np.concatenate([[0.0], T * np.geomspace(1e-4, 1.0, 12)])
    head = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, _ = scipy.integrate.quad(f, lo, hi, epsabs=tol / 40, epsrel=1e-10, limit=200)
        head += val
    return TotalError(head + tail, T, tail)


class MonteCarloEstimate(NamedTuple):
    mean: float
    stderr: float
    samples: int


def dynamic_error_bound(
    sequence: EpochSequence | Callable, S, p: float = 2.0, samples: int = 1, rng=None
):
    """Bound for a leader set held fixed over switching topologies.

    With an :class:`EpochSequence` the value is deterministic.  With a
    callable ``rng -> EpochSequence`` the bound is averaged over ``samples``
    realizations and returned as a :class:`MonteCarloEstimate`.
    """
    if isinstance(sequence, EpochSequence):
        return ErrorEvaluator(sequence, p=p).bound(S)
    if not callable(sequence):
        raise ValueError("expected an EpochSequence or a sequence sampler")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng)
    vals = np.array([ErrorEvaluator(sequence(rng), p=p).bound(S) for _ in range(samples)])
    stderr = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return MonteCarloEstimate(float(vals.mean()), stderr, samples)


def single_epoch_bound(topo: Topology, dwell: float, S, p: float = 2.0) -> float:
    return ErrorEvaluator(topo, dwell, p).bound(S)


def per_epoch_terms(sequence: EpochSequence, leader_sets, p: float = 2.0) -> np.ndarray:
    if len(leader_sets) != sequence.r:
        raise ValueError(f"need {sequence.r} leader sets, got {len(leader_sets)}")
    return np.array(
        [
            single_epoch_bound(topo, dwell, S, p)
            for (topo, dwell), S in zip(sequence.epochs, leader_sets)
        ]
    )


def per_epoch_metric(sequence: EpochSequence, leader_sets, p: float = 2.0) -> float:
    """Average over epochs of the single-epoch bound with that epoch's leaders."""
    return float(per_epoch_terms(sequence, leader_sets, p).mean())


def choose_horizon(
    topo: Topology,
    beta: float = 1.0,
    p: float = 2.0,
    rng=None,
    leaders=None,
    size: int = 1,
    rtol: float = 1e-6,
) -> float:
    """Smallest ``t`` with ``f̂_t(S) <= beta``.

    ``S`` is ``leaders`` if given, else ``size`` nodes drawn uniformly.
    """
    rng = np.random.default_rng(rng)
    if leaders is None:
        leaders = {int(v) for v in rng.choice(topo.n, size, replace=False)}
    L = leaderless_laplacian(topo)
    F = _followers(_leader_array(leaders, topo.n), topo.n)
    f = _bound_at(L, F, p)
    if f(0.0) <= beta:
        return 0.0
    hi = 1.0 / max(L.diagonal().max(), 1e-12)
    for _ in range(200):
        if f(hi) <= beta:
            break
        hi *= 2
    else:
        raise DivergenceError(f"bound never drops below beta={beta}")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) <= beta:
            hi = mid
        else:
            lo = mid
    return hi


def sample_initial_state(n: int, leaders: Iterable[int], p: float, rng, K: float = 1.0):
    """Random ``x(0)`` with ``||x(0)||_q = K`` and the implied leader config."""
    q = conjugate_exponent(p)
    x = rng.standard_normal(n)
    x *= K / np.linalg.norm(x, ord=q)
    leaders = tuple(leaders)
    return x, LeaderConfig(leaders, {j: x[j] for j in leaders})
