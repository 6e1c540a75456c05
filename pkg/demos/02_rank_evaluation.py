"""
Rank scores and mean average rank
=================================

Score each prediction by where its true stimulus lands when all candidates
are sorted by cosine distance, then average over stimuli and subjects.
"""

import numpy as np

from repdecode import LabeledMatrix, bootstrap_ci, cosine_distance, mean_average_rank, rank_score
from repdecode.decoder import PredictionSet
from repdecode.rankeval import rank_scores, summary_csv_text

print(cosine_distance([1, 0], [1, 0]), cosine_distance([1, 0], [0, 1]), cosine_distance([1, 0], [-1, 0]))

# rank 0 is a perfect hit; tied candidates share the mid-rank
C = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [-1.0, 0.0]])
print("strict hit:", rank_score([1.0, 0.1], C[[0, 1, 3]], 0))
print("tied with a duplicate:", rank_score([1.0, 0.1], C, 0))

###############################################################################
# Random predictions sit at chance, (n - 1) / 2.
rng = np.random.default_rng(1)
n = 384
cands = rng.standard_normal((n, 32))
guesses = rng.standard_normal((5000, 32))
print("random mean rank:", rank_scores(guesses, cands, rng.integers(0, n, 5000)).mean(), "chance:", (n - 1) / 2)

###############################################################################
# MAR for three subjects whose predictions are noisy copies of the truth.
ids = [f"s{i:03d}" for i in range(n)]
truth = LabeledMatrix(ids, cands)


def noisy(subject, sd):
    Y_hat = LabeledMatrix(ids, cands + sd * rng.standard_normal(cands.shape))
    return PredictionSet(subject, "toy", Y_hat, (1.0,), np.full(n, -1), "in_sample")


report = mean_average_rank([noisy("a", 1.0), noisy("b", 2.0), noisy("c", 4.0)], truth, bootstrap=1000)
print({s: round(v, 1) for s, v in report.avg_rank.items()})
print(f"MAR {report.mar:.2f}  95% CI [{report.ci_low:.2f}, {report.ci_high:.2f}]")
print(summary_csv_text([report]))

# the bootstrap resamples stimuli; a constant input has a zero-width interval
print(bootstrap_ci(np.full((2, 50), 3.0), 200))
