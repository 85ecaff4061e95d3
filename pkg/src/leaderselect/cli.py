"""Command line entry point: ``leaderselect {gen,select,run,summarize,oracle}``.

Node indices in files and printed output are 1-based.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .dynamics import ErrorEvaluator, choose_horizon, expm_neg
from .experiments import THREADS_ENV, ConfigError, run_experiment, summarize, validate_config
from .graph import (
    EpochSequence,
    GenerationError,
    Topology,
    build_laplacian,
    gen_geometric,
    gen_link_failures,
    gen_waypoint,
    load_json,
    save_json,
)
from .selection import POLICIES, select_baseline, select_k_leaders, select_minimal_leaders, SelectionResult, baseline_order
from .walk_oracle import WalkChain, check_nonincreasing, check_supermodular, escape_probability, hit_probabilities


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {s}")
    return v


def _emit(doc, out):
    text = json.dumps(doc, indent=1)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _leaders(s: str) -> list[int]:
    return [int(x) - 1 for x in s.replace(",", " ").split()] if s else []


def cmd_gen(a) -> int:
    rng = np.random.default_rng(a.seed)
    wr = (a.weight_low, a.weight_high)
    if a.model == "geometric":
        obj = gen_geometric(a.n, a.area, a.range, wr, rng, symmetric=a.symmetric)
    elif a.model == "link_failure":
        base = gen_geometric(a.n, a.area, a.range, wr, rng, symmetric=a.symmetric)
        obj = gen_link_failures(base, a.fail_prob, a.epochs, a.dwell, rng)
    else:
        obj = gen_waypoint(
            a.n, a.area, a.range, a.speed, (0.0, a.disturbance), a.epochs, a.dwell, rng,
            weight_range=wr, symmetric=a.symmetric,
        )
    if a.out:
        save_json(obj, a.out)
    else:
        from .graph import sequence_to_json, topology_to_json

        print(json.dumps(topology_to_json(obj) if isinstance(obj, Topology) else sequence_to_json(obj)))
    return 0


def cmd_select(a) -> int:
    src = load_json(a.topology)
    rng = np.random.default_rng(a.seed)
    if isinstance(src, EpochSequence):
        ev, t, topo = ErrorEvaluator(src, p=a.p), src.duration, src.topologies[0]
    else:
        t = a.t if a.t is not None else choose_horizon(src, 1.0, a.p, rng)
        ev, topo = ErrorEvaluator(src, t, a.p), src
    if (a.k is None) == (a.alpha is None):
        print("error: give exactly one of --k or --alpha", file=sys.stderr)
        return 2
    if a.policy == "supermodular":
        res = select_k_leaders(ev, a.k) if a.k is not None else select_minimal_leaders(ev, a.alpha)
    elif a.k is not None:
        res = select_baseline(topo, a.k, a.policy, rng, ev)
    else:
        order = baseline_order(topo, a.policy, rng)
        S = []
        while ev.bound(S) > a.alpha and len(S) < topo.n:
            S.append(order[len(S)])
        res = SelectionResult(S, [ev.bound(S[: i + 1]) for i in range(len(S))], ev.bound(S), len(S) + 1, a.policy)
    doc = res.to_dict()
    doc.pop("gains", None)
    doc.update({"t": t, "p": a.p, "f_max": ev.f_max(), "n": ev.n})
    _emit(doc, a.out)
    return 0


def cmd_run(a) -> int:
    raw = {}
    if a.config:
        with open(a.config) as fh:
            text = fh.read()
        raw = json.loads(text) if text.strip() else {}
    if a.seed is not None:
        raw["seed"] = a.seed
    for flag, key in (("p", "p"), ("t", "t"), ("k", "k")):
        if getattr(a, flag) is not None:
            raw[key] = getattr(a, flag)
    if a.alpha is not None:
        raw["alpha_values"] = [a.alpha]
    if a.policy is not None:
        raw["policies"] = [a.policy]
    try:
        cfg = validate_config(raw, a.scale)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = a.out or cfg.out
    if out is None:
        print("error: no output path (--out or 'out' in the config)", file=sys.stderr)
        return 2
    rows = run_experiment(cfg, out)
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return 0


def cmd_summarize(a) -> int:
    table = summarize(a.results, a.out)
    if not a.out:
        import csv

        from .experiments import SUMMARY_COLUMNS

        w = csv.DictWriter(sys.stdout, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    return 0


def cmd_oracle(a) -> int:
    src = load_json(a.topology)
    if isinstance(src, EpochSequence):
        print("error: the oracle takes a single topology", file=sys.stderr)
        return 2
    rng = np.random.default_rng(a.seed)
    S = _leaders(a.leaders)
    t = a.t if a.t is not None else choose_horizon(src, 1.0, a.p, rng)
    P = expm_neg(build_laplacian(src, S), t)
    report = {"n": src.n, "leaders": [v + 1 for v in S], "t": t, "walk": []}
    for tau in a.tau:
        chain = WalkChain.from_topology(src, S, t / tau)
        H = hit_probabilities(chain, tau)
        esc = max(
            (abs(escape_probability(chain, tau, i) - (1 - H[i, S].sum())) for i in range(src.n) if i not in S),
            default=0.0,
        )
        report["walk"].append(
            {"tau": tau, "max_abs_diff": float(np.abs(H - P).max()), "escape_mismatch": float(esc)}
        )
    if src.n <= 10:
        ev = ErrorEvaluator(src, t, a.p)
        report["supermodular_violations"] = len(check_supermodular(ev.bound, src.n))
        report["increasing_pairs"] = len(check_nonincreasing(ev.bound, src.n))
    _emit(report, a.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="leaderselect",
        description=f"Leader selection for consensus networks. Threads for 'run': ${THREADS_ENV}.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write a random topology or epoch sequence as JSON")
    g.add_argument("model", choices=("geometric", "link_failure", "waypoint"))
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--area", type=float, default=1000.0)
    g.add_argument("--range", type=float, default=300.0)
    g.add_argument("--weight-low", type=float, default=0.0)
    g.add_argument("--weight-high", type=float, default=50.0)
    g.add_argument("--symmetric", action="store_true")
    g.add_argument("--fail-prob", type=float, default=0.1)
    g.add_argument("--epochs", type=int, default=8)
    g.add_argument("--dwell", type=float, default=0.01)
    g.add_argument("--speed", type=float, default=100.0)
    g.add_argument("--disturbance", type=float, default=50.0)
    g.add_argument("--seed", type=_u64, default=0)
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gen)

    s = sub.add_parser("select", help="choose leaders on a topology or sequence file")
    s.add_argument("topology")
    s.add_argument("--k", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--policy", choices=("supermodular",) + POLICIES, default="supermodular")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--t", type=float, help="horizon; default: smallest t with bound <= 1 for a random leader")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_select)

    r = sub.add_parser("run", help="run an experiment sweep from a JSON config")
    r.add_argument("--config")
    r.add_argument("--scale", choices=("desk", "paper"), default="desk")
    r.add_argument("--seed", type=_u64)
    r.add_argument("--out")
    r.add_argument("--policy")
    r.add_argument("--p", type=float)
    r.add_argument("--t", type=float)
    r.add_argument("--k", type=int)
    r.add_argument("--alpha", type=float)
    r.set_defaults(fn=cmd_run)

    m = sub.add_parser("summarize", help="mean, stderr and count per sweep point and policy")
    m.add_argument("results")
    m.add_argument("--out")
    m.set_defaults(fn=cmd_summarize)

    o = sub.add_parser("oracle", help="compare against absorbing-walk and exhaustive oracles")
    o.add_argument("topology")
    o.add_argument("--leaders", default="1", help="1-based, comma separated")
    o.add_argument("--t", type=float)
    o.add_argument("--p", type=float, default=2.0)
    o.add_argument("--tau", type=int, nargs="+", default=[8, 64, 512])
    o.add_argument("--seed", type=_u64, default=0)
    o.add_argument("--out")
    o.set_defaults(fn=cmd_oracle)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return a.fn(a)
    except (OSError, ValueError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
