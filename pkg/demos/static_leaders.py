"""Choosing leaders on a fixed wireless network.

Fifty agents are scattered over a 1 km square and talk to anyone within
300 m.  We pick a horizon at which one random leader would leave a bound of
about 1, then compare greedy selection against the three heuristics.

    python demos/static_leaders.py
"""

import numpy as np

from leaderselect import (
    ErrorEvaluator,
    WalkChain,
    choose_horizon,
    convergence_error,
    gen_geometric,
    hit_probabilities,
    sample_initial_state,
    select_baseline,
    select_k_leaders,
    select_minimal_leaders,
)
from leaderselect.dynamics import expm_neg
from leaderselect.graph import build_laplacian

rng = np.random.default_rng(2024)
topo = gen_geometric(50, 1000.0, 300.0, (0.0, 50.0), rng)
print(f"{topo.n} nodes, {len(topo.edges)} directed links, mean degree {topo.out_degree().mean():.1f}")

t = choose_horizon(topo, beta=1.0, p=2.0, rng=rng)
ev = ErrorEvaluator(topo, t, p=2.0)
print(f"horizon t = {t:.4f}, f_max = {ev.f_max():.3f}")

# The bound is the expected squared escape of an absorbing random walk.
# Check it against the walk itself for one leader set.
S = {0, 7}
P = expm_neg(build_laplacian(topo, S), t)
H = hit_probabilities(WalkChain.from_topology(topo, S, t / 64), 64)
print(f"walk vs exponential, max difference: {np.abs(H - P).max():.1e}")

print("\n k   greedy      random      max-degree  avg-degree")
for k in (1, 3, 5, 10):
    row = [select_k_leaders(ev, k).objective]
    row += [select_baseline(topo, k, pol, rng, ev).objective for pol in ("random", "max_degree", "average_degree")]
    print(f"{k:2d}  " + "  ".join(f"{v:10.3e}" for v in row))

# The bound holds for every start with ||x(0)||_q <= 1.
res = select_k_leaders(ev, 3)
worst = 0.0
for _ in range(500):
    x0, cfg = sample_initial_state(topo.n, res.leaders, 2.0, rng)
    worst = max(worst, convergence_error(topo, cfg, x0, t, 2.0))
print(f"\nleaders {[v + 1 for v in res.leaders]}: worst sampled error {worst:.2e} <= bound {res.objective ** 0.5:.2e}")

# Smallest greedy set meeting an error budget.
for alpha in (1.0, 0.1, 0.01):
    print(f"alpha = {alpha:<5}: {len(select_minimal_leaders(ev, alpha).leaders)} leaders")
