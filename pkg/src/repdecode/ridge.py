"""Closed-form multi-output ridge regression.

The objective is the per-sample averaged squared error plus an unscaled
penalty::

    J(theta) = (1/n) * sum_i ||x_i^T theta - y_i||^2 + alpha * ||theta||_F^2

whose minimizer solves ``(X^T X + n*alpha*I) theta = X^T Y``.  Libraries that
minimize ``||X theta - Y||^2 + a ||theta||^2`` use ``a = n * alpha``.

Two factorizations are available:

- primal: Cholesky of the ``d_in x d_in`` matrix ``X^T X + n*alpha*I``
- dual:   Cholesky of the ``n x n`` Gram matrix ``X X^T + n*alpha*I``, then
  ``theta = X^T (X X^T + n*alpha*I)^{-1} Y``

``solver_policy="auto"`` picks primal when ``d_in <= n`` and dual otherwise.
"""

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np
from scipy import linalg

from .matrixio import DEFAULT_ALPHA_GRID, LabeledMatrix, load_matrix, save_matrix
from .rng import keyed_permutation


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class RidgeConfig:
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    standardize: bool = True
    solver_policy: str = "auto"

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid:
            raise ValueError("alpha_grid must be non-empty")
        if any(not np.isfinite(a) or a <= 0 for a in grid):
            raise ValueError("alpha_grid entries must be finite and > 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("alpha_grid must be strictly increasing")
        if self.solver_policy not in ("auto", "primal", "dual"):
            raise ValueError(f"unknown solver_policy {self.solver_policy!r}")
        object.__setattr__(self, "alpha_grid", grid)


@dataclass(frozen=True, eq=False)
class RidgeFit:
    weights: np.ndarray
    alpha_used: float
    input_means: np.ndarray = None
    input_scales: np.ndarray = None
    solver: str = field(default="primal")

    @property
    def standardize(self):
        return self.input_means is not None

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.weights.shape[0]:
            raise ValueError(
                f"expected inputs with {self.weights.shape[0]} columns, got shape {X.shape}"
            )
        if self.input_means is None:
            return X
        return (X - self.input_means) / self.input_scales


def _check_xy(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("X and Y must be 2-D")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    return X, Y


def column_stats(X):
    """Column means and standard deviations; zero-variance columns get scale 1."""
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0)
    return means, scales


def _use_dual(policy, n, d):
    if policy == "auto":
        return d > n
    return policy == "dual"


def fit(X, Y, alpha, cfg=None):
    """Fit ridge weights for inputs ``X`` (n x d_in) and targets ``Y`` (n x d_out).

    ``alpha = 0`` is accepted only when ``X^T X`` is numerically full rank,
    and always uses the primal path.
    """
    cfg = cfg or RidgeConfig()
    X, Y = _check_xy(X, Y)
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    n, d = X.shape
    means = scales = None
    if cfg.standardize:
        means, scales = column_stats(X)
        X = (X - means) / scales
    lam = n * alpha

    if alpha == 0:
        gram = X.T @ X
        ev = np.linalg.eigvalsh(gram)
        if ev[0] <= ev[-1] * max(n, d) * np.finfo(float).eps:
            raise SingularSystemError("X^T X is numerically singular; alpha = 0 not allowed")
        weights = _cho(gram, X.T @ Y)
        solver = "primal"
    elif _use_dual(cfg.solver_policy, n, d):
        K = X @ X.T
        K[np.diag_indices_from(K)] += lam
        weights = X.T @ _cho(K, Y)
        solver = "dual"
    else:
        A = X.T @ X
        A[np.diag_indices_from(A)] += lam
        weights = _cho(A, X.T @ Y)
        solver = "primal"
    return RidgeFit(weights, alpha, means, scales, solver)


def _cho(A, B):
    try:
        factor = linalg.cho_factor(A, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from None
    return linalg.cho_solve(factor, B, check_finite=False)


def predict(fit, X):
    return fit.transform(X) @ fit.weights


def normal_equation_residual(fit, X, Y):
    """Relative residual ``||(X^T X + n a I) theta - X^T Y|| / ||X^T Y||``."""
    X, Y = _check_xy(X, Y)
    Xs = fit.transform(X)
    n = Xs.shape[0]
    rhs = Xs.T @ Y
    lhs = Xs.T @ (Xs @ fit.weights) + n * fit.alpha_used * fit.weights
    denom = np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / denom) if denom > 0 else float(np.linalg.norm(lhs))


def kfold_indices(n, folds, seed, *keys):
    """Deterministic shuffled contiguous k-fold split of ``range(n)``.

    Returns a list of ``folds`` index arrays (each sorted).
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"{n} rows cannot be split into {folds} folds")
    perm = keyed_permutation(n, seed, *keys)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def ridge_path_predictions(X_train, Y_train, X_test, alphas, standardize=True, solver_policy="auto"):
    """Test-set predictions for every alpha from one eigendecomposition.

    Returns an array of shape ``(len(alphas), n_test, d_out)``.
    """
    n, d = X_train.shape
    if standardize:
        means, scales = column_stats(X_train)
        X_train = (X_train - means) / scales
        X_test = (X_test - means) / scales
    if _use_dual(solver_policy, n, d):
        evals, vecs = np.linalg.eigh(X_train @ X_train.T)
        proj_y = vecs.T @ Y_train
        left = (X_test @ X_train.T) @ vecs
    else:
        evals, vecs = np.linalg.eigh(X_train.T @ X_train)
        proj_y = vecs.T @ (X_train.T @ Y_train)
        left = X_test @ vecs
    evals = np.clip(evals, 0.0, None)
    out = np.empty((len(alphas), X_test.shape[0], Y_train.shape[1]))
    for i, a in enumerate(alphas):
        out[i] = left @ (proj_y / (evals + n * a)[:, None])
    return out


def select_alpha(X, Y, cfg=None, folds=10, seed=0):
    """Choose alpha from ``cfg.alpha_grid`` by k-fold cross-validated MSE.

    Returns ``(best_alpha, cv_mse)`` where ``cv_mse`` is an array aligned with
    the grid.  Ties go to the larger alpha.  A single-entry grid is returned
    without fitting anything.
    """
    cfg = cfg or RidgeConfig()
    X, Y = _check_xy(X, Y)
    grid = cfg.alpha_grid
    if len(grid) == 1:
        return grid[0], np.array([np.nan])
    n = X.shape[0]
    if n < folds:
        raise ValueError(f"{n} rows cannot be split into {folds} folds")
    parts = kfold_indices(n, folds, seed, "select_alpha")
    sse = np.zeros(len(grid))
    for test_idx in parts:
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        preds = ridge_path_predictions(
            X[train_mask], Y[train_mask], X[test_idx], grid,
            standardize=cfg.standardize, solver_policy=cfg.solver_policy,
        )
        resid = preds - Y[test_idx][None]
        sse += np.einsum("aij,aij->a", resid, resid)
    mse = sse / Y.size
    best = 0
    for i in range(1, len(grid)):
        if mse[i] <= mse[best]:
            best = i
    return grid[best], mse


def save_fit(fit, path):
    """Write weights as a binary matrix plus a ``.json`` metadata sidecar."""
    path = Path(path)
    rows = [f"w{i}" for i in range(fit.weights.shape[0])]
    save_matrix(LabeledMatrix(rows, fit.weights), path, "binary")
    meta = {
        "alpha_used": fit.alpha_used,
        "solver": fit.solver,
        "standardize": fit.standardize,
        "input_means": None if fit.input_means is None else [float(v) for v in fit.input_means],
        "input_scales": None if fit.input_scales is None else [float(v) for v in fit.input_scales],
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_fit(path):
    path = Path(path)
    w = load_matrix(path, "binary")
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    means = None if meta["input_means"] is None else np.array(meta["input_means"])
    scales = None if meta["input_scales"] is None else np.array(meta["input_scales"])
    return RidgeFit(np.array(w.values), float(meta["alpha_used"]), means, scales, meta["solver"])
