"""Stimulus-labeled matrices and experiment manifests.

Two on-disk matrix formats are supported:

CSV
    Header ``stimulus_id,<c1>,<c2>,...`` followed by one row per stimulus.
    Values are written with Python's shortest round-trip float repr, so a
    save/load cycle reproduces every value exactly.

Binary (``.rdmx``)
    All little-endian::

        b"RDMX"            magic
        u32                version (1)
        u64                n_rows
        u64                n_cols
        n_rows x (u32 byte length, UTF-8 bytes)   stimulus id table
        n_rows * n_cols f64                        row-major payload

Manifests are JSON documents; see :class:`ExperimentManifest`.
"""

import csv
import io
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"RDMX"
BINARY_VERSION = 1

_HEADER = struct.Struct("<4sIQQ")
_U32 = struct.Struct("<I")


class MatrixFormatError(ValueError):
    """A matrix file or value violates the format or the matrix invariants.

    ``row`` and ``column`` are 0-based data positions (header excluded) when
    the problem can be pinned to a cell, otherwise ``None``.
    """

    def __init__(self, message, row=None, column=None, path=None):
        self.row = row
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    """Dense float64 matrix whose rows are labeled by unique stimulus IDs.

    The value array is copied and marked read-only on construction.
    """

    stimulus_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.stimulus_ids)
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise MatrixFormatError(f"values must be 2-D, got {values.ndim}-D")
        n, d = values.shape
        if n < 1:
            raise MatrixFormatError("matrix has no rows")
        if d < 1:
            raise MatrixFormatError("matrix has no columns")
        if len(ids) != n:
            raise MatrixFormatError(
                f"{len(ids)} stimulus ids for {n} rows"
            )
        seen = {}
        for i, s in enumerate(ids):
            if s in seen:
                raise MatrixFormatError(
                    f"duplicate stimulus id {s!r} (first at row {seen[s]})", row=i
                )
            seen[s] = i
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = (int(x) for x in bad[0])
            raise MatrixFormatError(f"non-finite value {values[r, c]!r}", row=r, column=c)
        values.setflags(write=False)
        object.__setattr__(self, "stimulus_ids", ids)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.values.shape[0]

    def equals(self, other):
        """Exact equality of ids and values (bitwise for finite floats)."""
        return (
            self.stimulus_ids == other.stimulus_ids
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


def _infer_format(path, format):
    if format is not None:
        if format not in ("csv", "binary"):
            raise ValueError(f"unknown matrix format {format!r}")
        return format
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def load_matrix(path, format=None):
    """Load a :class:`LabeledMatrix` from ``path``.

    ``format`` is ``"csv"`` or ``"binary"``; when omitted it is inferred from
    the file extension (``.csv`` means CSV, anything else binary).
    """
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return _read_csv(fh, path)
    with open(path, "rb") as fh:
        return _read_binary(fh.read(), path)


def save_matrix(m, path, format=None):
    fmt = _infer_format(path, format)
    if not isinstance(m, LabeledMatrix):
        raise TypeError("save_matrix expects a LabeledMatrix")
    if fmt == "csv":
        data = _csv_bytes(m)
    else:
        data = _binary_bytes(m)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


def _read_csv(fh, path):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise MatrixFormatError("empty file", path=path) from None
    if not header or header[0].lstrip("﻿") != "stimulus_id":
        raise MatrixFormatError(
            "malformed header: first column must be 'stimulus_id'", path=path
        )
    n_cols = len(header) - 1
    if n_cols < 1:
        raise MatrixFormatError("malformed header: no value columns", path=path)
    ids = []
    rows = []
    for r, record in enumerate(reader):
        if not record:
            continue
        if len(record) != n_cols + 1:
            raise MatrixFormatError(
                f"ragged row: expected {n_cols + 1} fields, got {len(record)}",
                row=r, path=path,
            )
        vals = []
        for c, cell in enumerate(record[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise MatrixFormatError(
                    f"unparseable value {cell!r}", row=r, column=c, path=path
                ) from None
            if not math.isfinite(v):
                raise MatrixFormatError(
                    f"non-finite value {cell!r}", row=r, column=c, path=path
                )
            vals.append(v)
        ids.append(record[0])
        rows.append(vals)
    if not rows:
        raise MatrixFormatError("no data rows", path=path)
    try:
        return LabeledMatrix(ids, np.array(rows, dtype=np.float64))
    except MatrixFormatError as exc:
        raise MatrixFormatError(str(exc), row=exc.row, column=exc.column, path=path) from None


def _csv_bytes(m):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stimulus_id"] + [f"c{j}" for j in range(m.shape[1])])
    for sid, row in zip(m.stimulus_ids, m.values):
        writer.writerow([sid] + [repr(float(v)) for v in row])
    return buf.getvalue().encode("utf-8")


def _binary_bytes(m):
    n, d = m.shape
    parts = [_HEADER.pack(MAGIC, BINARY_VERSION, n, d)]
    for sid in m.stimulus_ids:
        b = sid.encode("utf-8")
        parts.append(_U32.pack(len(b)))
        parts.append(b)
    parts.append(np.ascontiguousarray(m.values, dtype="<f8").tobytes())
    return b"".join(parts)


def _read_binary(data, path):
    if len(data) < _HEADER.size:
        raise MatrixFormatError("truncated header", path=path)
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}", path=path)
    if version != BINARY_VERSION:
        raise MatrixFormatError(f"unsupported version {version}", path=path)
    off = _HEADER.size
    ids = []
    for r in range(n):
        if off + 4 > len(data):
            raise MatrixFormatError("truncated id table", row=r, path=path)
        (length,) = _U32.unpack_from(data, off)
        off += 4
        if off + length > len(data):
            raise MatrixFormatError("truncated id table", row=r, path=path)
        try:
            ids.append(data[off:off + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise MatrixFormatError("id is not valid UTF-8", row=r, path=path) from None
        off += length
    expected = n * d * 8
    if len(data) - off != expected:
        raise MatrixFormatError(
            f"payload has {len(data) - off} bytes, expected {expected}", path=path
        )
    values = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    try:
        return LabeledMatrix(ids, values)
    except MatrixFormatError as exc:
        raise MatrixFormatError(str(exc), row=exc.row, column=exc.column, path=path) from None


def align(m, canonical_ids):
    """Reorder the rows of ``m`` to follow ``canonical_ids``.

    ``canonical_ids`` must be a permutation of ``m.stimulus_ids``; missing
    and unexpected ids are reported by name.
    """
    canonical = [str(s) for s in canonical_ids]
    index = {s: i for i, s in enumerate(m.stimulus_ids)}
    unknown = [s for s in canonical if s not in index]
    wanted = set(canonical)
    missing = [s for s in m.stimulus_ids if s not in wanted]
    if len(set(canonical)) != len(canonical):
        raise MatrixFormatError("canonical id list contains duplicates")
    if unknown or missing:
        msg = []
        if unknown:
            msg.append(f"ids not in matrix: {', '.join(unknown)}")
        if missing:
            msg.append(f"ids not in canonical list: {', '.join(missing)}")
        raise MatrixFormatError("; ".join(msg))
    order = np.fromiter((index[s] for s in canonical), dtype=np.intp, count=len(canonical))
    if np.array_equal(order, np.arange(len(order))):
        return m
    return LabeledMatrix(canonical, m.values[order])


DEFAULT_ALPHA_GRID = tuple(float(a) for a in np.logspace(-3, 6, 10))


@dataclass(frozen=True)
class EvalSettings:
    folds: int = 12
    inner_folds: int = 10
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    standardize: bool = True
    solver_policy: str = "auto"
    bootstrap: int = 1000
    seed: int = 0
    mode: str = "cross_validated"

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if self.folds < 2 or self.inner_folds < 2:
            raise ManifestError("folds and inner_folds must be >= 2")
        if self.bootstrap < 1:
            raise ManifestError("bootstrap must be >= 1")
        if self.mode not in ("cross_validated", "in_sample"):
            raise ManifestError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class ExperimentManifest:
    """Subjects, models, canonical stimulus order and evaluation settings.

    JSON layout::

        {
          "stimulus_ids": ["s000", "s001", ...],
          "subjects": [{"id": "sub-01", "path": "subjects/sub-01.rdmx"}, ...],
          "models":   [{"id": "glove",  "path": "models/glove.csv"}, ...],
          "eval": {"folds": 12, "inner_folds": 10, "alpha_grid": [...],
                   "standardize": true, "solver_policy": "auto",
                   "bootstrap": 1000, "seed": 0, "mode": "cross_validated"}
        }

    Relative paths are resolved against the manifest's own directory.
    ``eval`` and each of its keys are optional.
    """

    subjects: tuple
    models: tuple
    stimulus_ids: tuple
    eval: EvalSettings = field(default_factory=EvalSettings)
    base_dir: str = "."

    def __post_init__(self):
        subjects = tuple((str(i), str(p)) for i, p in self.subjects)
        models = tuple((str(i), str(p)) for i, p in self.models)
        for kind, entries in (("subject", subjects), ("model", models)):
            ids = [i for i, _ in entries]
            dup = sorted({i for i in ids if ids.count(i) > 1})
            if dup:
                raise ManifestError(f"duplicate {kind} ids: {', '.join(dup)}")
            for i in ids:
                _check_entity_id(i, kind)
        stim = tuple(str(s) for s in self.stimulus_ids)
        if len(set(stim)) != len(stim):
            raise ManifestError("duplicate stimulus ids in manifest")
        if len(stim) < 2:
            raise ManifestError("manifest needs at least 2 stimuli")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "stimulus_ids", stim)

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def load_subject(self, subject_id):
        return self._load(dict(self.subjects)[subject_id])

    def load_model(self, model_id):
        return self._load(dict(self.models)[model_id])

    def _load(self, path):
        return align(load_matrix(self.resolve(path)), self.stimulus_ids)

    def to_dict(self):
        ev = self.eval
        return {
            "stimulus_ids": list(self.stimulus_ids),
            "subjects": [{"id": i, "path": p} for i, p in self.subjects],
            "models": [{"id": i, "path": p} for i, p in self.models],
            "eval": {
                "folds": ev.folds,
                "inner_folds": ev.inner_folds,
                "alpha_grid": list(ev.alpha_grid),
                "standardize": ev.standardize,
                "solver_policy": ev.solver_policy,
                "bootstrap": ev.bootstrap,
                "seed": ev.seed,
                "mode": ev.mode,
            },
        }


def _check_entity_id(i, kind):
    if not i or any(not (ch.isalnum() or ch in "-_.") for ch in i) or i.startswith("."):
        raise ManifestError(
            f"{kind} id {i!r} must be non-empty and use only letters, digits, '-', '_', '.'"
        )


def manifest_from_dict(doc, base_dir="."):
    try:
        ev = EvalSettings(**doc.get("eval", {}))
        return ExperimentManifest(
            subjects=[(e["id"], e["path"]) for e in doc["subjects"]],
            models=[(e["id"], e["path"]) for e in doc["models"]],
            stimulus_ids=doc["stimulus_ids"],
            eval=ev,
            base_dir=str(base_dir),
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"malformed manifest: {exc}") from None


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: {exc}") from None
    return manifest_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def save_manifest(manifest, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")
