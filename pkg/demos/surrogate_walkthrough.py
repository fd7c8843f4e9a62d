"""
A surrogate model on a one-dimensional grid
===========================================

Fit the Gaussian-process surrogate to a handful of noisy evaluations and see
which grid point probability of improvement would pick next, for both the
"best so far" target and the more ambitious 0.75 x best target.
"""

import numpy as np

from hpsearch.acquire import CandidateSet, dual_targets, improvement_z, normal_cdf, propose
from hpsearch.space import ParamDim, ParamSpace
from hpsearch.surrogate import GPConfig, fit, log_marginal_likelihood, predict_many

# a 41-point line; the hidden objective has its minimum near index 28
space = ParamSpace((ParamDim("i", "integer-range", tuple(range(41))),))
grid = np.arange(41)
truth = 1.0 + np.sin(grid / 6.0) + 0.002 * (grid - 28) ** 2

rng = np.random.default_rng(3)
seen = [int(i) for i in rng.choice(41, size=6, replace=False)]
losses = truth[seen] + rng.normal(0, 0.02, len(seen))
print("evaluated:", sorted(seen))

model = fit([space.encode((i,)) for i in seen], losses, GPConfig(seed=0))
print("lengthscale %.3f  noise %.2e  log marginal likelihood %.3f"
      % (model.lengthscales[0], model.noise_variance, log_marginal_likelihood(model)))

# %%
# posterior and probability of improvement along the line
cands = CandidateSet.full(space)
mean, var = predict_many(model, cands.coords)
best = float(losses.min())
for target in dual_targets(best):
    pi = normal_cdf(improvement_z(mean, var, target.value))
    pick = propose(model, cands, target, visited=[(i,) for i in seen])
    print(f"target {target.label:>10} ({target.value:.3f}): max PI {pi.max():.3f}, proposes {pick}")

print("\n  i   truth    mean     sd")
for i in range(0, 41, 5):
    print(f"{i:3d}  {truth[i]:6.3f}  {mean[i]:6.3f}  {np.sqrt(var[i]):5.3f}")
