"""Online leader selection when the topology distribution is unknown.

Leaders for epoch ``m`` are drawn from multiplicative-weights experts, one
expert per leader slot, fed with the error bounds the previous epoch's
topology would have produced.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import ErrorEvaluator, MeanEvaluator
from .graph import EpochSequence, Topology
from .selection import select_k_leaders

__all__ = [
    "ExpertsState",
    "RegretLedger",
    "AdversarialStats",
    "randomized_experts_step",
    "select_dynamic_leaders",
    "run_dynamic_selection",
    "regret_of_run",
    "greedy_guarantee_terms",
    "adversarial_lower_bound_experiment",
    "default_eta",
]

UNDERFLOW = 1e-100


def default_eta(n: int, horizon: int | None = None) -> float:
    if horizon is None:
        return 0.3
    return min(1.0, math.sqrt(8 * math.log(n) / horizon)) if n > 1 else 0.0


@dataclass(frozen=True, eq=False)
class ExpertsState:
    """Weights ``w[i, j]`` of node ``i`` as the ``j``-th leader.

    ``beta`` drives :func:`select_dynamic_leaders`, ``eta`` drives
    :func:`randomized_experts_step` (which uses column 0 only).
    """

    weights: np.ndarray
    beta: float = 0.8
    eta: float = 0.3
    epoch: int = 0
    last_leaders: tuple[int, ...] = ()

    def __post_init__(self):
        w = np.array(self.weights, float)
        if w.ndim == 1:
            w = w[:, None]
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise FloatingPointError("expert weights must be finite and positive")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int, k: int = 1, beta: float = 0.8, eta: float = 0.3) -> "ExpertsState":
        return cls(np.ones((n, k)), beta, eta)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.weights.shape[1]

    def probabilities(self, slot: int = 0, exclude=()) -> np.ndarray:
        w = self.weights[:, slot].copy()
        w[list(exclude)] = 0.0
        total = w.sum()
        if not total > 0 or not math.isfinite(total):
            raise FloatingPointError("weights cannot be normalised")
        return w / total


def _rescale(w: np.ndarray) -> np.ndarray:
    top = w.max(axis=0, keepdims=True)
    if np.any(top <= 0) or not np.all(np.isfinite(top)):
        raise FloatingPointError("all expert weights underflowed")
    return np.where(top < UNDERFLOW, w / top, w)


def randomized_experts_step(state: ExpertsState, losses, rng) -> tuple[int, ExpertsState]:
    """Draw an action from the current weights, then apply ``exp(-eta * loss)``."""
    losses = np.asarray(losses, float)
    if losses.shape != (state.n,):
        raise ValueError(f"expected {state.n} losses")
    if np.any(losses < 0):
        raise ValueError("losses must be nonnegative")
    action = int(rng.choice(state.n, p=state.probabilities(0)))
    w = state.weights.copy()
    w[:, 0] *= np.exp(-state.eta * losses)
    return action, replace(state, weights=_rescale(w), epoch=state.epoch + 1)


def select_dynamic_leaders(
    state: ExpertsState,
    observed: Topology | None,
    dwell: float,
    k: int,
    p: float = 2.0,
    rng=None,
    *,
    exponent: str = "loss",
) -> tuple[tuple[int, ...], ExpertsState]:
    """Leaders for the coming epoch.

    ``observed`` is the topology of the epoch just finished (``None`` before
    the first epoch).  For each slot ``j`` and node ``i`` the weight is
    multiplied by ``beta ** x`` where ``x`` is the normalised bound
    ``f̂(S^{j-1} + i) / f_max`` (``exponent="loss"``) or the raw decrease
    ``f̂(S^{j-1}) - f̂(S^{j-1} + i)`` (``exponent="gain"``).  ``S^{j-1}`` is
    the first ``j - 1`` leaders played in the observed epoch.
    """
    if k > state.n:
        raise ValueError(f"k={k} exceeds n={state.n}")
    if k != state.k:
        raise ValueError(f"state tracks {state.k} slots, asked for {k}")
    if exponent not in ("loss", "gain"):
        raise ValueError("exponent must be 'loss' or 'gain'")
    rng = np.random.default_rng(rng)
    w = state.weights.copy()
    if observed is not None and state.last_leaders:
        ev = ErrorEvaluator(observed, dwell, p)
        fmax = ev.f_max()
        prev = list(state.last_leaders)
        for j in range(k):
            prefix = frozenset(prev[:j])
            base = ev.bound(prefix)
            vals = np.array([ev.bound(prefix | {i}) for i in range(state.n)])
            if exponent == "gain":
                x = base - vals
            elif fmax > 0:
                x = vals / fmax
            else:
                # every singleton already drives the bound to zero: no signal
                x = np.zeros(state.n)
            w[:, j] *= state.beta**x
        w = _rescale(w)
    new = replace(state, weights=w)
    S: list[int] = []
    for j in range(k):
        S.append(int(rng.choice(state.n, p=new.probabilities(j, exclude=S))))
    return tuple(S), replace(new, epoch=state.epoch + 1, last_leaders=tuple(S))


def run_dynamic_selection(
    sequence: EpochSequence,
    k: int,
    p: float = 2.0,
    rng=None,
    beta: float = 0.8,
    exponent: str = "loss",
) -> list[tuple[int, ...]]:
    """Play :func:`select_dynamic_leaders` through a whole sequence."""
    rng = np.random.default_rng(rng)
    state = ExpertsState.uniform(sequence.n, k, beta=beta)
    observed, dwell = None, sequence.epochs[0][1]
    chosen = []
    for topo, d in sequence.epochs:
        S, state = select_dynamic_leaders(state, observed, dwell, k, p, rng, exponent=exponent)
        chosen.append(S)
        observed, dwell = topo, d
    return chosen


@dataclass
class RegretLedger:
    per_epoch_losses: np.ndarray
    best_fixed_set: tuple[int, ...]
    best_fixed_losses: np.ndarray
    exact: bool
    f_max: float
    chosen_sets: list = field(default_factory=list)

    @property
    def average_loss(self) -> float:
        return float(np.mean(self.per_epoch_losses))

    @property
    def best_fixed_objective(self) -> float:
        return float(np.mean(self.best_fixed_losses))

    @property
    def regret(self) -> float:
        return self.average_loss - self.best_fixed_objective

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.per_epoch_losses - self.best_fixed_losses)

    def rows(self, one_based: bool = True):
        off = 1 if one_based else 0
        for m, (S, loss, cum) in enumerate(
            zip(self.chosen_sets, self.per_epoch_losses, self.cumulative_regret), start=1
        ):
            yield {
                "epoch": m,
                "leaders": " ".join(str(v + off) for v in S),
                "loss": float(loss),
                "cumulative_regret": float(cum),
            }

    def to_dict(self) -> dict:
        return {
            "per_epoch_losses": [float(x) for x in self.per_epoch_losses],
            "best_fixed_set": [v + 1 for v in self.best_fixed_set],
            "best_fixed_objective": self.best_fixed_objective,
            "regret": self.regret,
            "exact": self.exact,
            "f_max": self.f_max,
        }


def regret_of_run(
    sequence: EpochSequence, chosen_sets: Sequence, p: float = 2.0, max_exhaustive: int = 100_000
) -> RegretLedger:
    """Realised per-epoch losses against the best fixed set in hindsight.

    The hindsight set has the size of the largest chosen set.  It is found
    exhaustively when there are at most ``max_exhaustive`` candidates, else
    greedily (``exact=False``: the regret is then only a lower estimate of
    the true hindsight comparison).
    """
    if len(chosen_sets) != sequence.r:
        raise ValueError(f"need {sequence.r} chosen sets, got {len(chosen_sets)}")
    evs = [ErrorEvaluator(topo, dwell, p) for topo, dwell in sequence.epochs]
    losses = np.array([ev.bound(S) for ev, S in zip(evs, chosen_sets)])
    mean_ev = MeanEvaluator(evs)
    n = sequence.n
    k = max((len(S) for S in chosen_sets), default=0)
    if math.comb(n, k) <= max_exhaustive:
        best = min(
            (frozenset(c) for c in itertools.combinations(range(n), k)),
            key=lambda c: (mean_ev.bound(c), sorted(c)),
        )
        exact = True
    else:
        best = frozenset(select_k_leaders(mean_ev, k).leaders)
        exact = False
    best_losses = np.array([ev.bound(best) for ev in evs])
    return RegretLedger(
        losses,
        tuple(sorted(best)),
        best_losses,
        exact,
        mean_ev.f_max(),
        [tuple(S) for S in chosen_sets],
    )


def greedy_guarantee_terms(ledger: RegretLedger, k: int, n: int) -> dict:
    """Both sides of the online greedy guarantee, term by term."""
    r = len(ledger.per_epoch_losses)
    fmax = ledger.f_max
    R_j = (math.sqrt(2 * fmax * r * math.log(n)) + math.log(n)) / r
    rhs = (1 - 1 / math.e) * ledger.best_fixed_objective + fmax / math.e + k * R_j
    return {
        "lhs": ledger.average_loss,
        "best_fixed": ledger.best_fixed_objective,
        "f_max": fmax,
        "R_j": R_j,
        "rhs": rhs,
        "holds": ledger.average_loss <= rhs,
    }


@dataclass
class AdversarialStats:
    regrets: np.ndarray
    min_A: np.ndarray
    B: np.ndarray
    A_means: np.ndarray
    A_stderr: np.ndarray
    n: int
    r: int

    @property
    def lower_bound(self) -> float:
        """``sqrt(r/2 * ln n) / r``."""
        return math.sqrt(self.r / 2 * math.log(self.n)) / self.r if self.n > 1 else 0.0

    def upper_bound(self, C: float = 2.0) -> float:
        """``C * sqrt(r ln n / 2) / r``: the experts regret rate with constant ``C``."""
        return C * math.sqrt(self.r * math.log(self.n) / 2) / self.r if self.n > 1 else 0.0

    @property
    def mean_regret(self) -> float:
        return float(self.regrets.mean())

    @property
    def stderr(self) -> float:
        return float(self.regrets.std(ddof=1) / math.sqrt(len(self.regrets))) if len(self.regrets) > 1 else 0.0


def adversarial_lower_bound_experiment(
    n: int,
    r: int,
    trials: int,
    rng=None,
    policy: str | Callable = "uniform",
    sigma: float = 0.0,
    eta: float | None = None,
) -> AdversarialStats:
    """Single-leader game where every node's loss is ``sigma`` or ``1`` with
    probability 1/2, independently per epoch.

    ``policy`` is ``"uniform"``, ``"experts"`` or a callable
    ``(past_losses, rng) -> node`` where ``past_losses`` has shape ``(m, n)``.
    Regret is ``(sum of realised losses - min_i A_i) / r`` with ``A_i`` the
    total loss of node ``i``.
    """
    rng = np.random.default_rng(rng)
    regrets, min_A, B, A_all = [], [], [], []
    scale = math.sqrt(r / 2 * math.log(n)) if n > 1 else math.nan
    for _ in range(trials):
        losses = np.where(rng.random((r, n)) < 0.5, sigma, 1.0)
        if policy == "uniform":
            picks = rng.integers(n, size=r)
        elif policy == "experts":
            state = ExpertsState.uniform(n, 1, eta=default_eta(n, r) if eta is None else eta)
            picks = np.empty(r, dtype=int)
            for m in range(r):
                picks[m], state = randomized_experts_step(state, losses[m], rng)
        elif callable(policy):
            picks = np.array([policy(losses[:m], rng) for m in range(r)])
        else:
            raise ValueError(f"unknown policy {policy!r}")
        A = losses.sum(axis=0)
        realised = losses[np.arange(r), picks].sum()
        regrets.append((realised - A.min()) / r)
        min_A.append(A.min())
        B.append((A.min() - r / 2) / scale if n > 1 else math.nan)
        A_all.append(A)
    A_all = np.array(A_all)
    return AdversarialStats(
        regrets=np.array(regrets),
        min_A=np.array(min_A),
        B=np.array(B),
        A_means=A_all.mean(axis=0),
        A_stderr=A_all.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(n),
        n=n,
        r=r,
    )
