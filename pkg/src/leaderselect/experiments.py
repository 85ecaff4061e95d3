"""Configuration-driven experiment sweeps with resumable CSV output.

Seeds: trial ``i`` of a run with master seed ``s`` draws its instance from
``SeedSequence(s, spawn_key=(i,))`` and each sweep point ``j`` of that trial
from ``SeedSequence(s, spawn_key=(i, j))``.  Any cell can therefore be
recomputed on its own, which is what makes resuming and concurrent trials
safe.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import (
    DivergenceError,
    ErrorEvaluator,
    MeanEvaluator,
    choose_horizon,
    convergence_error,
    expm_neg,
    sample_initial_state,
)
from .graph import (
    LeaderConfig,
    LinkFailureModel,
    WaypointModel,
    build_laplacian,
    gen_geometric,
)
from .online import adversarial_lower_bound_experiment, run_dynamic_selection
from .selection import (
    POLICIES,
    SelectionResult,
    baseline_order,
    select_baseline,
    select_k_leaders,
    select_minimal_leaders,
)

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "validate_config",
    "run_experiment",
    "summarize",
    "COLUMNS",
    "KINDS",
    "THREADS_ENV",
]

KINDS = ("static_k", "static_alpha", "link_failure", "waypoint", "regret_lower_bound")
COLUMNS = (
    "trial",
    "seed",
    "policy",
    "sweep",
    "n_leaders",
    "metric",
    "objective",
    "realized_error",
    "evaluations",
    "wall_time_s",
)
THREADS_ENV = "LEADERSELECT_THREADS"

_STATIC_POLICIES = ("supermodular",) + POLICIES
_DYNAMIC_POLICIES = ("known", "online") + POLICIES
_REGRET_POLICIES = ("uniform", "experts")


class ConfigError(ValueError):
    """Raised with every problem found in a configuration document."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


@dataclass
class ExperimentConfig:
    kind: str = "static_k"
    n: int = 100
    area: float = 1000.0
    comm_range: float = 300.0
    weight_range: tuple[float, float] = (0.0, 50.0)
    symmetric_weights: bool = False
    p: float = 2.0
    # horizon: fixed ``t`` if given, else the smallest t with f̂_t(random set) <= horizon_beta
    t: float | None = None
    horizon_beta: float = 1.0
    k_values: tuple[int, ...] = tuple(range(1, 16))
    alpha_values: tuple[float, ...] = (0.5, 1.0, 2.0)
    fail_probs: tuple[float, ...] = (0.0, 0.05, 0.1, 0.15)
    k: int = 1
    epochs: int = 8
    ref_speed: float = 100.0
    disturbance_range: tuple[float, float] = (0.0, 50.0)
    beta: float = 0.8
    eta: float | None = None
    exponent: str = "loss"
    known_samples: int = 10
    initial_states: int = 10
    sigma: float = 0.0
    policies: tuple[str, ...] | None = None
    trials: int = 50
    seed: int = 0
    out: str | None = None

    @property
    def policy_list(self) -> tuple[str, ...]:
        if self.policies is not None:
            return self.policies
        return {
            "static_k": _STATIC_POLICIES,
            "static_alpha": _STATIC_POLICIES,
            "link_failure": _DYNAMIC_POLICIES,
            "waypoint": _DYNAMIC_POLICIES,
            "regret_lower_bound": _REGRET_POLICIES,
        }[self.kind]

    @property
    def sweep_values(self) -> tuple:
        if self.kind == "static_k":
            return self.k_values
        if self.kind == "static_alpha":
            return self.alpha_values
        if self.kind == "link_failure":
            return self.fail_probs
        if self.kind == "waypoint":
            return tuple(range(1, self.epochs + 1))
        return (self.epochs,)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_DESK = {"n": 50, "trials": 20}
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def validate_config(raw: dict | None = None, scale: str = "paper") -> ExperimentConfig:
    """Parse a configuration document, filling defaults for missing keys.

    ``scale="desk"`` lowers the defaults for ``n`` and ``trials``; explicit
    values always win.  All problems are collected before raising.
    """
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    if scale not in ("desk", "paper"):
        raise ConfigError([f"scale: expected 'desk' or 'paper', got {scale!r}"])
    problems = []
    for key in raw:
        if key not in _FIELDS:
            problems.append(f"{key}: unknown key")
    vals = {k: v for k, v in raw.items() if k in _FIELDS}
    if scale == "desk":
        for k, v in _DESK.items():
            vals.setdefault(k, v)

    def check(name, ok, msg):
        if name in vals and not ok(vals[name]):
            problems.append(f"{name}: {msg}, got {vals[name]!r}")
            vals.pop(name)

    def pos_int(v):
        return _is_int(v) and v >= 1

    def num_list(pred):
        return lambda v: isinstance(v, list) and len(v) > 0 and all(pred(x) for x in v)

    def pair(v):
        return isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v) and 0 <= v[0] <= v[1]

    check("kind", lambda v: v in KINDS, f"expected one of {KINDS}")
    check("n", lambda v: _is_int(v) and v >= 2, "expected an integer >= 2")
    check("area", lambda v: _is_num(v) and v > 0, "expected a positive number")
    check("comm_range", lambda v: _is_num(v) and v > 0, "expected a positive number")
    check("weight_range", pair, "expected [low, high] with 0 <= low <= high")
    check("symmetric_weights", lambda v: isinstance(v, bool), "expected a boolean")
    check("p", lambda v: _is_num(v) and v >= 1, "expected a number >= 1")
    check("t", lambda v: v is None or (_is_num(v) and v > 0), "expected a positive number or null")
    check("horizon_beta", lambda v: _is_num(v) and v > 0, "expected a positive number")
    check("k_values", num_list(pos_int), "expected a nonempty list of positive integers")
    check("alpha_values", num_list(lambda x: _is_num(x) and x >= 0), "expected a nonempty list of numbers >= 0")
    check("fail_probs", num_list(lambda x: _is_num(x) and 0 <= x < 1), "expected probabilities in [0, 1)")
    check("k", pos_int, "expected a positive integer")
    check("epochs", pos_int, "expected a positive integer")
    check("ref_speed", lambda v: _is_num(v) and v >= 0, "expected a number >= 0")
    check("disturbance_range", pair, "expected [low, high] with 0 <= low <= high")
    check("beta", lambda v: _is_num(v) and 0 < v < 1, "expected a number in (0, 1)")
    check("eta", lambda v: v is None or (_is_num(v) and v >= 0), "expected a number >= 0 or null")
    check("exponent", lambda v: v in ("loss", "gain"), "expected 'loss' or 'gain'")
    check("known_samples", pos_int, "expected a positive integer")
    check("initial_states", pos_int, "expected a positive integer")
    check("sigma", lambda v: _is_num(v) and 0 <= v <= 1, "expected a number in [0, 1]")
    check("policies", lambda v: v is None or (isinstance(v, list) and v and all(isinstance(x, str) for x in v)),
          "expected a nonempty list of policy names or null")
    check("trials", pos_int, "expected a positive integer")
    check("seed", lambda v: _is_int(v) and 0 <= v < 2**64, "expected an integer in [0, 2**64)")
    check("out", lambda v: v is None or isinstance(v, str), "expected a path string or null")

    for name in ("weight_range", "disturbance_range", "k_values", "alpha_values", "fail_probs", "policies"):
        if vals.get(name) is not None:
            vals[name] = tuple(vals[name])
    for name in ("area", "comm_range", "p", "t", "horizon_beta", "ref_speed", "beta", "sigma", "eta"):
        if vals.get(name) is not None:
            vals[name] = float(vals[name])
    for name in ("alpha_values", "fail_probs", "weight_range", "disturbance_range"):
        if name in vals:
            vals[name] = tuple(float(x) for x in vals[name])

    if not problems:
        cfg = ExperimentConfig(**vals)
        allowed = {
            "static_k": _STATIC_POLICIES,
            "static_alpha": _STATIC_POLICIES,
            "link_failure": _DYNAMIC_POLICIES,
            "waypoint": _DYNAMIC_POLICIES,
            "regret_lower_bound": _REGRET_POLICIES,
        }[cfg.kind]
        bad = [x for x in cfg.policy_list if x not in allowed]
        if bad:
            problems.append(f"policies: {bad} not available for {cfg.kind}; expected a subset of {allowed}")
        if cfg.kind == "static_k" and max(cfg.k_values) > cfg.n:
            problems.append(f"k_values: largest k {max(cfg.k_values)} exceeds n={cfg.n}")
        if cfg.kind in ("link_failure", "waypoint") and cfg.k > cfg.n:
            problems.append(f"k: {cfg.k} exceeds n={cfg.n}")
    if problems:
        raise ConfigError(problems)
    return cfg


# -- cells -------------------------------------------------------------------


def _trial_seq(cfg, trial):
    return np.random.SeedSequence(cfg.seed, spawn_key=(trial,))


def _trial_seed(cfg, trial) -> int:
    return int(_trial_seq(cfg, trial).generate_state(1, np.uint64)[0])


def _cell_rng(cfg, trial, j):
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(trial, j)))


def _horizon(cfg, topo, rng, size=1):
    if cfg.t is not None:
        return cfg.t
    return choose_horizon(topo, cfg.horizon_beta, cfg.p, rng, size=size)


def _geometric(cfg, rng):
    return gen_geometric(
        cfg.n, cfg.area, cfg.comm_range, cfg.weight_range, rng, symmetric=cfg.symmetric_weights
    )


def _static_context(cfg, trial):
    rng = np.random.default_rng(_trial_seq(cfg, trial))
    topo = _geometric(cfg, rng)
    t = _horizon(cfg, topo, rng)
    return {"topo": topo, "ev": ErrorEvaluator(topo, t, cfg.p), "t": t}


def _realized(cfg, topo, t, S, rng_states):
    """Mean ``f_t(S)`` over shared initial-state draws (``||x(0)||_q = 1``)."""
    S = tuple(S)
    errs = [
        convergence_error(topo, LeaderConfig(S, {j: x[j] for j in S}), x, t, cfg.p)
        for x in rng_states
    ]
    return float(np.mean(errs))


def _initial_draws(cfg, n, rng):
    return [sample_initial_state(n, (), cfg.p, rng)[0] for _ in range(cfg.initial_states)]


def _static_k_cell(cfg, ctx, j, rng):
    k = cfg.k_values[j]
    topo, ev = ctx["topo"], ctx["ev"]
    xs = _initial_draws(cfg, topo.n, rng)
    rows = []
    for policy in cfg.policy_list:
        t0 = time.perf_counter()
        if policy == "supermodular":
            res = select_k_leaders(ev, k)
        else:
            res = select_baseline(topo, k, policy, rng, ev)
        wall = time.perf_counter() - t0
        real = _realized(cfg, topo, ctx["t"], res.leaders, xs)
        # evaluations counts set-function calls, memo hits included
        rows.append((policy, k, len(res.leaders), "bound", res.objective, real, res.evaluations, wall))
    return rows


def _prefix_until(topo, ev, policy, alpha, rng) -> SelectionResult:
    order = baseline_order(topo, policy, rng)
    S, val, calls = [], ev.bound(()), 1
    while val > alpha and len(S) < topo.n:
        S.append(order[len(S)])
        val = ev.bound(S)
        calls += 1
    return SelectionResult(S, [], val, calls, policy=policy)


def _static_alpha_cell(cfg, ctx, j, rng):
    alpha = cfg.alpha_values[j]
    topo, ev = ctx["topo"], ctx["ev"]
    xs = _initial_draws(cfg, topo.n, rng)
    rows = []
    for policy in cfg.policy_list:
        t0 = time.perf_counter()
        if policy == "supermodular":
            res = select_minimal_leaders(ev, alpha)
        else:
            res = _prefix_until(topo, ev, policy, alpha, rng)
        wall = time.perf_counter() - t0
        real = _realized(cfg, topo, ctx["t"], res.leaders, xs) if res.leaders else math.nan
        rows.append((policy, alpha, len(res.leaders), "bound", res.objective, real, res.evaluations, wall))
    return rows


def _per_epoch_errors(cfg, seq, sets, xs):
    """Mean ``||x||_p`` after each epoch, leaders pinned at 0."""
    X = np.array(xs, float).T
    out = []
    for (topo, dwell), S in zip(seq.epochs, sets):
        S = sorted(S)
        X[S] = 0.0
        X = expm_neg(build_laplacian(topo, S), dwell) @ X
        X[S] = 0.0
        out.append(float(np.mean(np.sum(np.abs(X) ** cfg.p, axis=0) ** (1 / cfg.p))))
    return out


def _dynamic_policies(cfg, seq, sample_topology, dwell, base, rng):
    """Leader sets per epoch for every policy, with evaluation counts."""
    out = {}
    for policy in cfg.policy_list:
        t0 = time.perf_counter()
        if policy == "known":
            evs = [ErrorEvaluator(sample_topology(rng), dwell, cfg.p) for _ in range(cfg.known_samples)]
            res = select_k_leaders(MeanEvaluator(evs), cfg.k)
            sets, calls = [frozenset(res.leaders)] * seq.r, res.evaluations
        elif policy == "online":
            sets = [frozenset(S) for S in run_dynamic_selection(seq, cfg.k, cfg.p, rng, cfg.beta, cfg.exponent)]
            calls = (seq.r - 1) * cfg.k * (cfg.n + 1)
        else:
            S = frozenset(baseline_order(base, policy, rng)[: cfg.k])
            sets, calls = [S] * seq.r, 0
        out[policy] = (sets, calls, time.perf_counter() - t0)
    return out


def _link_context(cfg, trial):
    rng = np.random.default_rng(_trial_seq(cfg, trial))
    base = _geometric(cfg, rng)
    return {"base": base, "dwell": _horizon(cfg, base, rng, size=cfg.k)}


def _link_cell(cfg, ctx, j, rng):
    q = cfg.fail_probs[j]
    base, dwell = ctx["base"], ctx["dwell"]
    model = LinkFailureModel(base, q)
    seq = model.sample_sequence(cfg.epochs, dwell, rng)
    xs = _initial_draws(cfg, cfg.n, rng)
    rows = []
    for policy, (sets, calls, wall) in _dynamic_policies(
        cfg, seq, model.sample_topology, dwell, base, rng
    ).items():
        terms = [ErrorEvaluator(tp, d, cfg.p).bound(S) for (tp, d), S in zip(seq.epochs, sets)]
        real = _per_epoch_errors(cfg, seq, sets, xs)[-1]
        rows.append((policy, q, cfg.k, "per_epoch_bound", float(np.mean(terms)), real, calls, wall))
    return rows


def _waypoint_context(cfg, trial):
    rng = np.random.default_rng(_trial_seq(cfg, trial))
    model = WaypointModel.random(
        cfg.n, cfg.area, cfg.comm_range, cfg.ref_speed, cfg.disturbance_range, rng,
        cfg.weight_range, cfg.symmetric_weights,
    )
    for _ in range(100):
        first = model.sample_topology(rng)
        try:
            dwell = _horizon(cfg, first, rng, size=cfg.k)
            break
        except DivergenceError:
            # the draw left some node unreachable from the calibration leaders
            continue
    else:
        raise DivergenceError("no calibration topology found for the horizon rule")
    seq = model.sample_sequence(cfg.epochs, dwell, rng)
    xs = _initial_draws(cfg, cfg.n, rng)
    table = {}
    for policy, (sets, calls, wall) in _dynamic_policies(
        cfg, seq, model.sample_topology, dwell, first, rng
    ).items():
        terms = [ErrorEvaluator(tp, d, cfg.p).bound(S) for (tp, d), S in zip(seq.epochs, sets)]
        table[policy] = (sets, terms, _per_epoch_errors(cfg, seq, sets, xs), calls, wall)
    return {"table": table}


def _waypoint_cell(cfg, ctx, j, rng):
    rows = []
    for policy, (sets, terms, errs, calls, wall) in ctx["table"].items():
        rows.append((policy, j + 1, len(sets[j]), "epoch_bound", terms[j], errs[j], calls, wall))
    return rows


def _regret_context(cfg, trial):
    return {}


def _regret_cell(cfg, ctx, j, rng):
    rows = []
    for policy in cfg.policy_list:
        t0 = time.perf_counter()
        stats = adversarial_lower_bound_experiment(
            cfg.n, cfg.epochs, 1, rng, policy=policy, sigma=cfg.sigma, eta=cfg.eta
        )
        wall = time.perf_counter() - t0
        rows.append((policy, cfg.epochs, 1, "regret", stats.mean_regret, math.nan, cfg.epochs, wall))
    return rows


_KIND_IMPL = {
    "static_k": (_static_context, _static_k_cell),
    "static_alpha": (_static_context, _static_alpha_cell),
    "link_failure": (_link_context, _link_cell),
    "waypoint": (_waypoint_context, _waypoint_cell),
    "regret_lower_bound": (_regret_context, _regret_cell),
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _trial_rows(cfg, trial, cells) -> list[list[str]]:
    make_ctx, make_cell = _KIND_IMPL[cfg.kind]
    ctx = make_ctx(cfg, trial)
    seed = _trial_seed(cfg, trial)
    out = []
    for j in cells:
        for policy, sweep, n_lead, metric, obj, real, calls, wall in make_cell(
            cfg, ctx, j, _cell_rng(cfg, trial, j)
        ):
            out.append(
                [str(trial), str(seed), policy, _fmt(sweep), str(n_lead), metric,
                 _fmt(float(obj)), _fmt(float(real)), str(int(calls)), f"{wall:.6f}"]
            )
    return out


def _read_done(path: Path, cfg) -> tuple[list[list[str]], set]:
    """Rows of complete cells in an existing output file."""
    if not path.exists():
        return [], set()
    text = path.read_text()
    if not text.endswith("\n"):
        # a torn final line from an interrupted write
        text = text[: text.rfind("\n") + 1]
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"{path}: existing file is not a results table for this run")
    sweeps = [_fmt(v) for v in cfg.sweep_values]
    policies = set(cfg.policy_list)
    cells: dict[tuple, list] = {}
    for row in rows[1:]:
        if len(row) != len(COLUMNS) or row[3] not in sweeps:
            continue
        cells.setdefault((int(row[0]), sweeps.index(row[3])), []).append(row)
    done = {c for c, rs in cells.items() if {r[2] for r in rs} == policies and len(rs) == len(policies)}
    kept = [r for c in sorted(done) for r in cells[c]]
    return kept, done


def run_experiment(cfg: ExperimentConfig, out=None, threads: int | None = None) -> list[dict]:
    """Run the sweep and return its rows.

    With an output path, rows are appended cell by cell and flushed; an
    existing partial file is resumed, keeping its complete cells.  Trials
    run on ``threads`` workers (default: ``$LEADERSELECT_THREADS`` or 1)
    and are written in trial order.
    """
    out = out if out is not None else cfg.out
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    n_cells = len(cfg.sweep_values)
    kept, done = [], set()
    fh = None
    if out is not None:
        path = Path(out)
        try:
            kept, done = _read_done(path, cfg)
            path.parent.mkdir(parents=True, exist_ok=True)
            fh = open(path, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc}") from exc
    rows = [list(r) for r in kept]
    todo = []
    for trial in range(cfg.trials):
        missing = [j for j in range(n_cells) if (trial, j) not in done]
        if missing:
            todo.append((trial, missing))

    writer = csv.writer(fh, lineterminator="\n") if fh else None
    try:
        if writer:
            writer.writerow(COLUMNS)
            writer.writerows(kept)
            fh.flush()
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            for new in pool.map(lambda tc: _trial_rows(cfg, *tc), todo):
                rows.extend(new)
                if writer:
                    writer.writerows(new)
                    fh.flush()
    finally:
        if fh:
            fh.close()
    rows.sort(key=lambda r: (int(r[0]), [_fmt(v) for v in cfg.sweep_values].index(r[3])))
    if fh:
        # completed cells from a previous run may interleave with new ones
        with open(out, "w", newline="") as g:
            w = csv.writer(g, lineterminator="\n")
            w.writerow(COLUMNS)
            w.writerows(rows)
    return [dict(zip(COLUMNS, r)) for r in rows]


# -- summaries ---------------------------------------------------------------

SUMMARY_COLUMNS = (
    "sweep",
    "policy",
    "metric",
    "count",
    "objective_mean",
    "objective_stderr",
    "n_leaders_mean",
    "n_leaders_stderr",
    "realized_error_mean",
    "realized_error_stderr",
)


def _mean_se(vals):
    a = np.asarray(vals, float)
    a = a[~np.isnan(a)]
    if a.size == 0:
        return math.nan, math.nan
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    return float(a.mean()), se


def summarize(path, out=None) -> list[dict[str, Any]]:
    """Mean, standard error and count per (sweep point, policy)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        need = ("sweep", "policy", "objective")
        missing = [c for c in need if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        data = list(reader)
    groups: dict[tuple, list] = {}
    for row in data:
        groups.setdefault((row["sweep"], row["policy"], row.get("metric", "")), []).append(row)

    def num(r, c):
        return float(r[c]) if r.get(c) not in (None, "") else math.nan

    table = []
    for (sweep, policy, metric), rs in groups.items():
        om, ose = _mean_se([num(r, "objective") for r in rs])
        nm, nse = _mean_se([num(r, "n_leaders") for r in rs])
        rm, rse = _mean_se([num(r, "realized_error") for r in rs])
        table.append(dict(zip(SUMMARY_COLUMNS, (sweep, policy, metric, len(rs), om, ose, nm, nse, rm, rse))))
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in table:
                w.writerow({k: _fmt(v) for k, v in row.items()})
    return table
