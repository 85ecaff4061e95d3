"""No single-leader policy beats sqrt(ln n / r) regret in the worst case.

Every epoch each of n candidate leaders independently turns out perfect
(loss 0) or useless (loss 1).  Whatever the policy does, the best fixed
leader in hindsight was lucky, and that luck grows like sqrt(r ln n).

    python demos/adversarial_regret.py
"""

import numpy as np

from leaderselect import adversarial_lower_bound_experiment

rng = np.random.default_rng(7)
print("   n      r   policy    regret             rate sqrt(ln n / 2r)")
for n in (10, 50, 200):
    for r in (200, 2000):
        for policy in ("uniform", "experts"):
            st = adversarial_lower_bound_experiment(n, r, 40, rng, policy=policy)
            print(f"{n:4d} {r:6d}   {policy:8s}  {st.mean_regret:.4f} +- {st.stderr:.4f}   {st.lower_bound:.4f}")

# The gap to the rate is the finite-n shortfall of E[max of n normals]
# against sqrt(2 ln n).
for n in (10, 50, 200, 5000):
    z = rng.standard_normal((2000, n)).max(axis=1).mean()
    print(f"n = {n:5d}: E[max] ~ {z:.3f}, sqrt(2 ln n) = {np.sqrt(2 * np.log(n)):.3f}")
