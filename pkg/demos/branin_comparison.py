"""
Adaptive versus random search on a discrete Branin grid
=======================================================

Both arms share the same ten random warm-up trials, then spend thirty more
evaluations either on surrogate-guided proposals or on further random draws.
"""

import numpy as np

from hpsearch.benchmarks import BraninGrid, compare_search

grid = BraninGrid(32)
print(f"grid minimum {grid.minimum:.4f} over {grid.space.cardinality} points")

c = compare_search(grid, seeds=range(20), warmup=10, iterations=30)
print(f"adaptive wins {c.wins}, random wins {c.losses}, sign test p = {c.p_value:.2e}")
print(f"median best: adaptive {np.median(c.adaptive_best):.4f}, random {np.median(c.random_best):.4f}")

# %%
# per-seed view
for seed, (a, r) in enumerate(zip(c.adaptive_best, c.random_best)):
    print(f"seed {seed:2d}  adaptive {a:7.4f}  random {r:7.4f}")
