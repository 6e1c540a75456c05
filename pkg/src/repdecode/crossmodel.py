"""Pairwise cross-model predictivity (r² heatmap).

Entry ``(i, j)`` of a :class:`PredictivityMatrix` is the pooled r² of a ridge
map from model ``i``'s representations to model ``j``'s.  Both sides are
column-standardized first so differences in embedding scale do not matter.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass
from datetime import datetime, timezone
import io
from xml.sax.saxutils import escape

import numpy as np

from .ridge import RidgeConfig, column_stats, fit, kfold_indices, predict, select_alpha
from .rng import derive_seed

MODES = ("in_sample", "cross_validated")
ALPHA_POLICIES = ("cv", "min")


def r2_multioutput(Y_true, Y_pred):
    """Pooled r²: ``1 - SSE / SST`` with both sums over every cell.

    SST is taken around each column's mean.  Negative values are possible
    for out-of-sample predictions.
    """
    Y_true = np.asarray(Y_true, dtype=np.float64)
    Y_pred = np.asarray(Y_pred, dtype=np.float64)
    if Y_true.ndim == 1:
        Y_true = Y_true[:, None]
    if Y_pred.ndim == 1:
        Y_pred = Y_pred[:, None]
    if Y_true.shape != Y_pred.shape:
        raise ValueError(f"shape mismatch: {Y_true.shape} vs {Y_pred.shape}")
    if Y_true.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    centered = Y_true - Y_true.mean(axis=0)
    sst = float(np.sum(centered * centered))
    if sst == 0:
        raise ValueError("Y_true has zero total variance")
    resid = Y_true - Y_pred
    return 1.0 - float(np.sum(resid * resid)) / sst


@dataclass(frozen=True, eq=False)
class PredictivityMatrix:
    model_ids: tuple
    values: np.ndarray
    mode: str
    alpha_policy: str
    alphas: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model_id"] + list(self.model_ids))
        for mid, row in zip(self.model_ids, self.values):
            w.writerow([mid] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def to_svg(self, cell=64, reproducible=True):
        """Grayscale heatmap: 0 is white, 1 is black, values printed in cells.

        Layout: a ``margin``-pixel band on the top and left holds the column
        and row labels; cell ``(i, j)`` sits at
        ``x = margin + j*cell, y = margin + i*cell``.
        """
        m = len(self.model_ids)
        margin = 120
        size = margin + m * cell + 10
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="12">',
        ]
        if not reproducible:
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
            out.append(f"<metadata>generated {stamp}</metadata>")
        out.append(f'<desc>r2 predictivity, mode={self.mode}, alpha_policy={self.alpha_policy}</desc>')
        for j, mid in enumerate(self.model_ids):
            x = margin + j * cell + cell / 2
            out.append(
                f'<text class="col-label" x="{x:g}" y="{margin - 8}" text-anchor="start" '
                f'transform="rotate(-45 {x:g} {margin - 8})">{escape(mid)}</text>'
            )
        for i, mid in enumerate(self.model_ids):
            y = margin + i * cell + cell / 2
            out.append(
                f'<text class="row-label" x="{margin - 8}" y="{y:g}" text-anchor="end" '
                f'dominant-baseline="middle">{escape(mid)}</text>'
            )
        for i in range(m):
            for j in range(m):
                v = float(self.values[i, j])
                level = int(round(255 * (1.0 - min(max(v, 0.0), 1.0))))
                x, y = margin + j * cell, margin + i * cell
                ink = "#ffffff" if level < 128 else "#000000"
                out.append(
                    f'<rect class="cell" data-row="{i}" data-col="{j}" x="{x}" y="{y}" '
                    f'width="{cell}" height="{cell}" fill="rgb({level},{level},{level})" '
                    'stroke="#808080"/>'
                )
                out.append(
                    f'<text x="{x + cell / 2:g}" y="{y + cell / 2:g}" text-anchor="middle" '
                    f'dominant-baseline="middle" fill="{ink}">{v:.2f}</text>'
                )
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _zscore(values):
    means, scales = column_stats(values)
    return (values - means) / scales


def _cell(args):
    i, j, X, Y, cfg, mode, folds, inner_folds, seed, alpha_policy, key_i, key_j = args
    n = X.shape[0]
    if mode == "in_sample":
        alpha = _choose_alpha(X, Y, cfg, inner_folds, seed, alpha_policy, key_i, key_j, "all")
        pred = predict(fit(X, Y, alpha, cfg), X)
        return i, j, r2_multioutput(Y, pred), alpha
    pred = np.empty_like(Y)
    alphas = []
    for f, test_idx in enumerate(kfold_indices(n, folds, seed, "crossmodel", key_i, key_j)):
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        alpha = _choose_alpha(X[mask], Y[mask], cfg, inner_folds, seed, alpha_policy, key_i, key_j, f)
        pred[test_idx] = predict(fit(X[mask], Y[mask], alpha, cfg), X[test_idx])
        alphas.append(alpha)
    return i, j, r2_multioutput(Y, pred), float(np.median(alphas))


def _choose_alpha(X, Y, cfg, inner_folds, seed, policy, key_i, key_j, fold):
    if policy == "min":
        return cfg.alpha_grid[0]
    inner_seed = derive_seed(seed, "crossmodel-inner", key_i, key_j, fold)
    alpha, _ = select_alpha(X, Y, cfg, min(inner_folds, X.shape[0]), inner_seed)
    return alpha


def pairwise_predictivity(models, cfg=None, mode="in_sample", folds=10, seed=0,
                          alpha_policy="cv", inner_folds=10, workers=1):
    """Compute the r² predictivity matrix for ``models``.

    Parameters
    ----------
    models : list of (str, LabeledMatrix)
        Model ids with representation matrices sharing one stimulus order.
    cfg : RidgeConfig, optional
        Alpha grid, input standardization and solver policy.
    mode : {"in_sample", "cross_validated"}
        Score in-sample fits, or out-of-fold predictions from ``folds`` folds.
    alpha_policy : {"cv", "min"}
        ``"cv"`` selects alpha by inner k-fold search; ``"min"`` uses the
        smallest grid value (for self-map sanity checks).

    Returns
    -------
    PredictivityMatrix
        ``alphas[i, j]`` records the alpha used (median over folds when
        cross-validated).
    """
    cfg = cfg or RidgeConfig()
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if alpha_policy not in ALPHA_POLICIES:
        raise ValueError(f"unknown alpha_policy {alpha_policy!r}")
    if not models:
        raise ValueError("no models given")
    ids = [mid for mid, _ in models]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate model ids")
    ref = models[0][1].stimulus_ids
    for mid, mat in models:
        if mat.stimulus_ids != ref:
            raise ValueError(f"model {mid!r} is not aligned with {ids[0]!r}")
    reps = [_zscore(np.asarray(mat.values)) for _, mat in models]
    tasks = [
        (i, j, reps[i], reps[j], cfg, mode, folds, inner_folds, seed, alpha_policy, ids[i], ids[j])
        for i in range(len(ids)) for j in range(len(ids))
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    values = np.empty((len(ids), len(ids)))
    alphas = np.empty_like(values)
    for i, j, r2, alpha in results:
        values[i, j] = r2
        alphas[i, j] = alpha
    return PredictivityMatrix(tuple(ids), values, mode, alpha_policy, alphas)
