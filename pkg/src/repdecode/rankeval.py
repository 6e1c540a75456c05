"""Cosine-distance rank scores and mean average rank (MAR).

For a predicted representation, every candidate stimulus representation is
ordered by cosine distance to the prediction.  The rank score is the 0-based
position of the true stimulus in that order, with ties split evenly
(mid-rank)::

    rank = #{j : d_j < d_true} + 0.5 * #{j != true : d_j == d_true}

A perfect decoder scores 0 everywhere; a random one scores (n - 1) / 2 on
average.  MAR averages ranks over stimuli within a subject and then over
subjects.
"""

import csv
from dataclasses import dataclass
import io
import json
from pathlib import Path

import numpy as np

from .rng import derive_seed, keyed_generator


class ZeroVectorError(ValueError):
    pass


def _as_rows(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2-D array")
    return a


def _row_norms(a, name):
    norms = np.sqrt((a * a).sum(axis=-1))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroVectorError(f"{name} row {int(zero[0])} is the zero vector")
    return norms


def distance_matrix(P, C, block_elements=1 << 21):
    """Cosine distances between every row of ``P`` and every row of ``C``.

    Each entry is computed by the same elementwise product and row sum, so
    identical candidate rows always produce bit-identical distances.
    """
    P = _as_rows(P, "prediction")
    C = _as_rows(C, "candidates")
    if P.shape[1] != C.shape[1]:
        raise ValueError(f"dimension mismatch: {P.shape[1]} vs {C.shape[1]}")
    p_norm = _row_norms(P, "prediction")
    c_norm = _row_norms(C, "candidate")
    D = np.empty((P.shape[0], C.shape[0]))
    step = max(1, block_elements // C.size)
    for start in range(0, P.shape[0], step):
        block = P[start:start + step]
        dots = (block[:, None, :] * C[None, :, :]).sum(axis=-1)
        D[start:start + step] = 1.0 - dots / (p_norm[start:start + step, None] * c_norm[None, :])
    return np.clip(D, 0.0, 2.0, out=D)


def cosine_distance(u, v):
    """``1 - u.v / (|u| |v|)``, in [0, 2]; zero vectors raise :class:`ZeroVectorError`."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape:
        raise ValueError(f"expected two vectors of equal length, got {u.shape} and {v.shape}")
    return float(distance_matrix(u, v)[0, 0])


def _mid_rank(dist_row, true_index):
    d_true = dist_row[true_index]
    less = np.count_nonzero(dist_row < d_true)
    ties = np.count_nonzero(dist_row == d_true) - 1
    return less + 0.5 * ties


def rank_score(prediction, candidates, true_index):
    C = _as_rows(candidates, "candidates")
    if C.shape[0] < 2:
        raise ValueError("need at least 2 candidates")
    if not 0 <= true_index < C.shape[0]:
        raise IndexError(f"true_index {true_index} out of range for {C.shape[0]} candidates")
    p = np.asarray(prediction, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("prediction must be a vector")
    return float(_mid_rank(distance_matrix(p, C)[0], true_index))


def rank_scores(predictions, candidates, true_indices=None):
    """Rank score of each prediction row; row ``i`` targets candidate ``true_indices[i]``.

    ``true_indices`` defaults to ``0..m-1`` (predictions aligned with candidates).
    """
    P = _as_rows(predictions, "predictions")
    C = _as_rows(candidates, "candidates")
    if C.shape[0] < 2:
        raise ValueError("need at least 2 candidates")
    if true_indices is None:
        if P.shape[0] != C.shape[0]:
            raise ValueError("aligned ranking needs as many predictions as candidates")
        true_indices = np.arange(P.shape[0])
    true_indices = np.asarray(true_indices)
    D = distance_matrix(P, C)
    d_true = D[np.arange(P.shape[0]), true_indices][:, None]
    less = np.count_nonzero(D < d_true, axis=1)
    ties = np.count_nonzero(D == d_true, axis=1) - 1
    return less + 0.5 * ties


@dataclass(frozen=True, eq=False)
class RankReport:
    model_id: str
    stimulus_ids: tuple
    per_subject: dict
    avg_rank: dict
    mar: float
    ci_low: float
    ci_high: float
    chance_level: float
    bootstrap_replicates: int
    seed: int

    @property
    def n_stimuli(self):
        return len(self.stimulus_ids)

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "mar": self.mar,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "chance_level": self.chance_level,
            "n_stimuli": self.n_stimuli,
            "bootstrap_replicates": self.bootstrap_replicates,
            "seed": self.seed,
            "avg_rank": {s: float(v) for s, v in self.avg_rank.items()},
            "stimulus_ids": list(self.stimulus_ids),
            "per_subject": {s: [float(r) for r in v] for s, v in self.per_subject.items()},
        }


def bootstrap_ci(per_sentence_stats, replicates=1000, level=0.95, seed=0):
    """Percentile bootstrap interval for MAR, resampling sentences.

    ``per_sentence_stats`` is a ``subjects x n`` array of rank scores; every
    replicate draws one set of sentence indices shared by all subjects.
    """
    stats = np.asarray(per_sentence_stats, dtype=np.float64)
    if stats.ndim == 1:
        stats = stats[None, :]
    if stats.size == 0:
        raise ValueError("empty input")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if np.all(stats == stats.flat[0]):
        c = float(stats.flat[0])
        return c, c
    n = stats.shape[1]
    sentence_means = stats.mean(axis=0)
    rng = keyed_generator(seed, "bootstrap")
    idx = rng.integers(0, n, size=(replicates, n))
    boot = sentence_means[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0 * 100.0
    low, high = np.percentile(boot, [tail, 100.0 - tail])
    return float(low), float(high)


def mean_average_rank(predictions, candidates, bootstrap=1000, seed=0, level=0.95):
    """Score one model's prediction sets against its candidate matrix.

    ``predictions`` is a list of :class:`~repdecode.decoder.PredictionSet`
    (one per subject) for the model whose representations are
    ``candidates`` (a :class:`LabeledMatrix`).
    """
    if not predictions:
        raise ValueError("empty subject list")
    model_ids = {p.model_id for p in predictions}
    if len(model_ids) != 1:
        raise ValueError(f"predictions span several models: {sorted(model_ids)}")
    model_id = model_ids.pop()
    ids = candidates.stimulus_ids
    per_subject = {}
    for ps in predictions:
        if ps.stimulus_ids != ids:
            raise ValueError(
                f"predictions for ({ps.subject_id}, {ps.model_id}) are not aligned with candidates"
            )
        if ps.subject_id in per_subject:
            raise ValueError(f"duplicate subject {ps.subject_id!r}")
        per_subject[ps.subject_id] = rank_scores(ps.Y_hat.values, candidates.values)
    avg = {s: float(r.mean()) for s, r in per_subject.items()}
    mar = float(np.mean([avg[s] for s in per_subject]))
    stats = np.vstack([per_subject[s] for s in per_subject])
    low, high = bootstrap_ci(stats, bootstrap, level, derive_seed(seed, "rank", model_id))
    # percentile intervals need not cover the point estimate on skewed data
    low, high = min(low, mar), max(high, mar)
    return RankReport(
        model_id=model_id,
        stimulus_ids=ids,
        per_subject=per_subject,
        avg_rank=avg,
        mar=mar,
        ci_low=low,
        ci_high=high,
        chance_level=(len(ids) - 1) / 2.0,
        bootstrap_replicates=bootstrap,
        seed=seed,
    )


def save_report(report, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")


def rank_csv_text(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_id", "subject_id", "stimulus_id", "rank"])
    for sid, ranks in report.per_subject.items():
        for stim, r in zip(report.stimulus_ids, ranks):
            w.writerow([report.model_id, sid, stim, repr(float(r))])
    return buf.getvalue()


def summary_csv_text(reports):
    """One row per model, sorted by MAR ascending."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_id", "mar", "ci_low", "ci_high", "chance_level", "n_subjects", "n_stimuli"])
    for r in sorted(reports, key=lambda r: (r.mar, r.model_id)):
        w.writerow([
            r.model_id, repr(r.mar), repr(r.ci_low), repr(r.ci_high),
            repr(r.chance_level), len(r.per_subject), r.n_stimuli,
        ])
    return buf.getvalue()
