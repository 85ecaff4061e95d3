"""Leaders for the whole transient rather than one horizon.

Integrating the bound over all time removes the horizon choice.  On a
small network the greedy answer is compared with brute force.

    python demos/total_error.py
"""

import itertools

import numpy as np

from leaderselect import gen_geometric, select_k_total_error, total_error

rng = np.random.default_rng(3)
topo = gen_geometric(8, 1000.0, 500.0, (0.0, 50.0), rng)

for k in (1, 2, 3):
    res = select_k_total_error(topo, k)
    best = min(
        (total_error(topo, c).value, c) for c in itertools.combinations(range(topo.n), k)
    )
    print(f"k={k}: greedy {[v + 1 for v in res.leaders]} w={res.objective:.5f}   "
          f"optimum {[v + 1 for v in best[1]]} w={best[0]:.5f}")
