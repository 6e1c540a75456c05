"""
Ridge decoders from responses to representations
================================================

Fit a multi-output ridge map, pick alpha by k-fold search, and check that
cross-validated predictions never use the row they predict.
"""

import numpy as np

from repdecode import DecoderJob, LabeledMatrix, RidgeConfig, fit, predict, select_alpha, train_and_predict
from repdecode.ridge import normal_equation_residual

rng = np.random.default_rng(0)

# 200 stimuli, 80 "voxels", a 10-d target that depends on a few voxels
X = rng.standard_normal((200, 80))
W = np.zeros((80, 10))
W[:5] = rng.standard_normal((5, 10))
Y = X @ W + 0.5 * rng.standard_normal((200, 10))

###############################################################################
# One fit.  The primal path is used when there are fewer features than rows,
# the dual (kernel) path otherwise.
cfg = RidgeConfig(standardize=False)
f = fit(X, Y, 0.1, cfg)
print("solver:", f.solver, " weights:", f.weights.shape)
print("normal-equation residual:", normal_equation_residual(f, X, Y))

wide = fit(X[:40], Y[:40], 0.1, cfg)
print("40 rows, 80 features ->", wide.solver)

###############################################################################
# Choosing alpha: one eigendecomposition per fold covers the whole grid.
best, mse = select_alpha(X, Y, RidgeConfig(), folds=10, seed=0)
for a, e in zip(RidgeConfig().alpha_grid, mse):
    print(f"  alpha={a:>9.3g}  cv mse={e:.4f}{'  <-' if a == best else ''}")

###############################################################################
# A full decoder job: 12 outer folds, alpha re-chosen inside each fold.
ids = [f"stim-{i:03d}" for i in range(200)]
job = DecoderJob("sub-01", "toy", LabeledMatrix(ids, X), LabeledMatrix(ids, Y), folds=12)
ps = train_and_predict(job)
print("alphas per fold:", ps.alphas)

# each fold's rows are reproduced by a fit that excludes them
k = 3
test = ps.fold_of == k
ref = predict(fit(X[~test], Y[~test], ps.alphas[k], job.cfg), X[test])
print("fold", k, "matches a held-out refit:", np.array_equal(ref, ps.Y_hat.values[test]))

r2 = 1 - ((ps.Y_hat.values - Y) ** 2).sum() / ((Y - Y.mean(0)) ** 2).sum()
print(f"out-of-fold r2: {r2:.3f}")
