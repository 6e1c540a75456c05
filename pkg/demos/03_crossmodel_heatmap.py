"""
How well does one model's representation predict another's?
===========================================================

Ridge-regress every model onto every other and report pooled r2, then write
the matrix as CSV and as an SVG heatmap.
"""

import numpy as np

from repdecode import LabeledMatrix, RidgeConfig, pairwise_predictivity, r2_multioutput

rng = np.random.default_rng(2)
n = 300
ids = [f"stim-{i:03d}" for i in range(n)]
Z = rng.standard_normal((n, 12))

models = [
    ("base", LabeledMatrix(ids, Z @ rng.standard_normal((12, 20)))),
    # an invertible remix of the same latent
    ("remix", LabeledMatrix(ids, Z @ rng.standard_normal((12, 12)))),
    # keeps only part of the latent, plus noise
    ("partial", LabeledMatrix(ids, Z[:, :4] @ rng.standard_normal((4, 16)) + 0.5 * rng.standard_normal((n, 16)))),
    ("unrelated", LabeledMatrix(ids, rng.standard_normal((n, 16)))),
]

print("r2 of a perfect prediction:", r2_multioutput([[0.0], [2.0]], [[0.0], [2.0]]))
print("r2 of the mean:", r2_multioutput([[0.0], [2.0]], [[1.0], [1.0]]))

###############################################################################
# Held-out r2, so "unrelated" stays near 0 instead of fitting noise.
res = pairwise_predictivity(models, mode="cross_validated", folds=5, seed=0)
print(res.to_csv())

###############################################################################
# In-sample with the smallest alpha: the diagonal is a self-map, r2 = 1.
tiny = pairwise_predictivity(models, RidgeConfig((1e-12,)), alpha_policy="min")
print("diagonal:", np.diag(tiny.values))

svg = res.to_svg()
print(svg.count('class="cell"'), "cells,", len(svg), "bytes of SVG")
