"""Subject x model decoder grid.

Each (subject, model) pair gets a ridge decoder from the subject's response
matrix to the model's representation matrix.  In ``cross_validated`` mode
every predicted row comes from a fold fit that never saw that row, and the
regularization strength is chosen by an inner k-fold search on that fold's
training rows only.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

from . import __version__
from .matrixio import LabeledMatrix, MatrixFormatError, load_matrix, save_matrix
from .ridge import RidgeConfig, fit, predict, select_alpha
from .rng import derive_seed, keyed_permutation

MODES = ("cross_validated", "in_sample")


class GridError(RuntimeError):
    """A decoder-grid job failed; ``subject_id``/``model_id``/``path`` locate it."""

    def __init__(self, message, subject_id=None, model_id=None, path=None):
        self.subject_id = subject_id
        self.model_id = model_id
        self.path = path
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class DecoderJob:
    subject_id: str
    model_id: str
    X: LabeledMatrix
    Y: LabeledMatrix
    cfg: RidgeConfig = RidgeConfig()
    folds: int = 12
    seed: int = 0
    mode: str = "cross_validated"
    inner_folds: int = 10

    def __post_init__(self):
        if self.X.stimulus_ids != self.Y.stimulus_ids:
            raise MatrixFormatError(
                f"responses of {self.subject_id} and representations of {self.model_id} "
                "are not aligned to the same stimulus order"
            )
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        n = len(self.X)
        if self.mode == "cross_validated" and not 2 <= self.folds <= n:
            raise ValueError(f"need 2 <= folds <= n, got folds={self.folds}, n={n}")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Predicted representations for one subject-model pair.

    ``fold_of[i]`` is the outer fold that produced row ``i`` (``-1`` in
    ``in_sample`` mode); ``alphas[f]`` is the alpha used for fold ``f``.
    """

    subject_id: str
    model_id: str
    Y_hat: LabeledMatrix
    alphas: tuple
    fold_of: np.ndarray
    mode: str

    @property
    def stimulus_ids(self):
        return self.Y_hat.stimulus_ids


def outer_folds(stimulus_ids, folds, seed, subject_id, model_id):
    """Row-index folds: ids sorted, shuffled by a keyed stream, split contiguously."""
    ids = list(stimulus_ids)
    row_of = {s: i for i, s in enumerate(ids)}
    ordered = sorted(ids)
    perm = keyed_permutation(len(ordered), seed, "outer-folds", subject_id, model_id)
    shuffled = np.array([row_of[ordered[p]] for p in perm], dtype=np.intp)
    return [np.sort(part) for part in np.array_split(shuffled, folds)]


def train_and_predict(job):
    X = np.asarray(job.X.values)
    Y = np.asarray(job.Y.values)
    n = X.shape[0]
    Y_hat = np.empty_like(Y)
    if job.mode == "in_sample":
        inner_seed = derive_seed(job.seed, "inner", job.subject_id, job.model_id, "all")
        alpha, _ = select_alpha(X, Y, job.cfg, min(job.inner_folds, n), inner_seed)
        Y_hat[:] = predict(fit(X, Y, alpha, job.cfg), X)
        alphas = (alpha,)
        fold_of = np.full(n, -1, dtype=np.int64)
    else:
        parts = outer_folds(job.X.stimulus_ids, job.folds, job.seed, job.subject_id, job.model_id)
        fold_of = np.empty(n, dtype=np.int64)
        alphas = []
        for f, test_idx in enumerate(parts):
            train_mask = np.ones(n, dtype=bool)
            train_mask[test_idx] = False
            X_tr, Y_tr = X[train_mask], Y[train_mask]
            inner_seed = derive_seed(job.seed, "inner", job.subject_id, job.model_id, f)
            alpha, _ = select_alpha(X_tr, Y_tr, job.cfg, min(job.inner_folds, len(X_tr)), inner_seed)
            Y_hat[test_idx] = predict(fit(X_tr, Y_tr, alpha, job.cfg), X[test_idx])
            fold_of[test_idx] = f
            alphas.append(alpha)
        alphas = tuple(alphas)
    if not np.all(np.isfinite(Y_hat)):
        raise FloatingPointError(f"non-finite predictions for ({job.subject_id}, {job.model_id})")
    return PredictionSet(
        job.subject_id, job.model_id, LabeledMatrix(job.X.stimulus_ids, Y_hat),
        alphas, fold_of, job.mode,
    )


def _run_job(job):
    try:
        return train_and_predict(job)
    except Exception as exc:
        raise GridError(
            f"decoder ({job.subject_id}, {job.model_id}) failed: {exc}",
            subject_id=job.subject_id, model_id=job.model_id,
        ) from exc


def _load_all(manifest):
    loaded = {}
    for kind, entries in (("subject", manifest.subjects), ("model", manifest.models)):
        for entity_id, path in entries:
            full = manifest.resolve(path)
            try:
                m = manifest._load(path)
            except (OSError, MatrixFormatError) as exc:
                raise GridError(
                    f"cannot load {kind} {entity_id!r} from {full}: {exc}",
                    subject_id=entity_id if kind == "subject" else None,
                    model_id=entity_id if kind == "model" else None,
                    path=str(full),
                ) from exc
            loaded[kind, entity_id] = m
    return loaded


def build_jobs(manifest, mode=None, folds=None, seed=None):
    ev = manifest.eval
    cfg = RidgeConfig(ev.alpha_grid, ev.standardize, ev.solver_policy)
    loaded = _load_all(manifest)
    jobs = []
    for sid, _ in manifest.subjects:
        for mid, _ in manifest.models:
            jobs.append(DecoderJob(
                sid, mid, loaded["subject", sid], loaded["model", mid], cfg,
                folds=ev.folds if folds is None else folds,
                seed=ev.seed if seed is None else seed,
                mode=ev.mode if mode is None else mode,
                inner_folds=ev.inner_folds,
            ))
    return jobs


def run_grid(manifest, workers=1, mode=None, folds=None, seed=None):
    """Train and predict every (subject, model) pair of ``manifest``.

    Results come back in manifest order (subjects outer, models inner) and do
    not depend on ``workers``.  The first failing pair raises
    :class:`GridError`; no partial results are returned.
    """
    jobs = build_jobs(manifest, mode=mode, folds=folds, seed=seed)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_job, jobs))


def prediction_path(out_dir, subject_id, model_id):
    return Path(out_dir) / f"{subject_id}__{model_id}.rdmx"


def save_predictions(pred_sets, out_dir, seed, folds):
    """Write one binary matrix per pair plus ``metadata.json``.

    Returns the list of written paths, metadata last.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    pairs = []
    for ps in pred_sets:
        path = prediction_path(out_dir, ps.subject_id, ps.model_id)
        save_matrix(ps.Y_hat, path, "binary")
        written.append(path)
        pairs.append({
            "subject_id": ps.subject_id,
            "model_id": ps.model_id,
            "file": path.name,
            "mode": ps.mode,
            "alphas": list(ps.alphas),
            "fold_of": [int(f) for f in ps.fold_of],
        })
    meta = {
        "toolkit_version": __version__,
        "seed": seed,
        "folds": folds,
        "pairs": pairs,
    }
    meta_path = out_dir / "metadata.json"
    meta_path.write_text(json.dumps(meta, indent=1) + "\n")
    written.append(meta_path)
    return written


def load_prediction_set(pred_dir, subject_id, model_id, metadata=None):
    pred_dir = Path(pred_dir)
    if metadata is None:
        metadata = json.loads((pred_dir / "metadata.json").read_text())
    for entry in metadata["pairs"]:
        if entry["subject_id"] == subject_id and entry["model_id"] == model_id:
            Y_hat = load_matrix(pred_dir / entry["file"], "binary")
            return PredictionSet(
                subject_id, model_id, Y_hat, tuple(entry["alphas"]),
                np.array(entry["fold_of"], dtype=np.int64), entry["mode"],
            )
    raise FileNotFoundError(f"no predictions for ({subject_id}, {model_id}) in {pred_dir}")
