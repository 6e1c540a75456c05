"""Synthetic worlds with a known shared latent space.

A world has ``n_stimuli`` stimuli with a standard-normal latent ``Z``.
Subject ``j`` responds with ``X_j = Z A_j + noise``.  Model ``k`` represents
each stimulus as::

    Y_k = sqrt(f_k) Z B_k + sqrt(1 - f_k) U_k C_k + noise

where ``U_k`` is a model-private latent and ``f_k`` is the model's shared
fraction.  Each column of ``Y_k`` is then divided by its standard deviation
(no centering, so ``Y_k`` stays an exact linear function of the latents).

Every block is drawn from its own keyed stream, so adding or removing a
model or subject leaves all other draws untouched.
"""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np

from .matrixio import EvalSettings, ExperimentManifest, LabeledMatrix, save_manifest, save_matrix
from .rng import keyed_generator

CHANCE = "≈chance"
NEAR_ZERO = "≈0"
BELOW_CHANCE = "below chance"


class WorldSpecError(ValueError):
    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    rep_dim: int
    shared_fraction: float


@dataclass(frozen=True)
class WorldSpec:
    n_stimuli: int
    latent_dim: int
    n_subjects: int
    voxels_per_subject: int
    models: tuple
    brain_noise_sd: float = 1.0
    rep_noise_sd: float = 0.5
    seed: int = 0
    private_dim: int = None

    def __post_init__(self):
        models = tuple(m if isinstance(m, ModelSpec) else ModelSpec(*m) for m in self.models)
        object.__setattr__(self, "models", models)
        if self.private_dim is None:
            object.__setattr__(self, "private_dim", self.latent_dim)
        for name in ("latent_dim", "n_subjects", "voxels_per_subject", "private_dim"):
            if int(getattr(self, name)) < 1:
                raise WorldSpecError(name, "must be >= 1")
        if self.n_stimuli < 2:
            raise WorldSpecError("n_stimuli", "must be >= 2")
        if not models:
            raise WorldSpecError("models", "at least one model is required")
        for name in ("brain_noise_sd", "rep_noise_sd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise WorldSpecError(name, f"must be a finite value >= 0, got {v}")
        seen = set()
        for m in models:
            if m.model_id in seen:
                raise WorldSpecError("models", f"duplicate model id {m.model_id!r}")
            seen.add(m.model_id)
            if m.rep_dim < 1:
                raise WorldSpecError("rep_dim", f"model {m.model_id!r}: must be >= 1")
            if not (0.0 <= m.shared_fraction <= 1.0):
                raise WorldSpecError(
                    "shared_fraction",
                    f"model {m.model_id!r}: must lie in [0, 1], got {m.shared_fraction}",
                )

    @property
    def subject_ids(self):
        return tuple(f"sub-{j + 1:02d}" for j in range(self.n_subjects))

    @property
    def stimulus_ids(self):
        width = max(3, len(str(self.n_stimuli - 1)))
        return tuple(f"stim-{i:0{width}d}" for i in range(self.n_stimuli))

    def to_dict(self):
        return {
            "n_stimuli": self.n_stimuli,
            "latent_dim": self.latent_dim,
            "n_subjects": self.n_subjects,
            "voxels_per_subject": self.voxels_per_subject,
            "private_dim": self.private_dim,
            "brain_noise_sd": self.brain_noise_sd,
            "rep_noise_sd": self.rep_noise_sd,
            "seed": self.seed,
            "models": [
                {"id": m.model_id, "rep_dim": m.rep_dim, "shared_fraction": m.shared_fraction}
                for m in self.models
            ],
        }


def worldspec_from_dict(doc):
    """Build a :class:`WorldSpec` from its JSON form; problems raise :class:`WorldSpecError`."""
    if not isinstance(doc, dict):
        raise WorldSpecError("spec", "must be a JSON object")
    required = ("n_stimuli", "latent_dim", "n_subjects", "voxels_per_subject", "models")
    for key in required:
        if key not in doc:
            raise WorldSpecError(key, "missing")
    ints = {}
    for key in required[:-1] + ("private_dim", "seed"):
        if key in doc and doc[key] is not None:
            if not isinstance(doc[key], int) or isinstance(doc[key], bool):
                raise WorldSpecError(key, f"must be an integer, got {doc[key]!r}")
            ints[key] = doc[key]
    models = []
    for m in doc["models"]:
        try:
            models.append(ModelSpec(str(m["id"]), int(m["rep_dim"]), float(m["shared_fraction"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise WorldSpecError("models", f"bad entry {m!r}: {exc}") from None
    floats = {}
    for key in ("brain_noise_sd", "rep_noise_sd"):
        if key in doc:
            try:
                floats[key] = float(doc[key])
            except (TypeError, ValueError):
                raise WorldSpecError(key, f"must be a number, got {doc[key]!r}") from None
    unknown = set(doc) - set(required) - {"private_dim", "seed", "brain_noise_sd", "rep_noise_sd"}
    if unknown:
        raise WorldSpecError(sorted(unknown)[0], "unknown field")
    return WorldSpec(models=tuple(models), **ints, **floats)


def load_worldspec(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorldSpecError("spec", f"invalid JSON: {exc}") from None
    return worldspec_from_dict(doc)


@dataclass(frozen=True, eq=False)
class WorldTruth:
    latent: np.ndarray
    readouts: dict = field(default_factory=dict)
    shared_loadings: dict = field(default_factory=dict)
    private_latents: dict = field(default_factory=dict)
    private_loadings: dict = field(default_factory=dict)
    column_scales: dict = field(default_factory=dict)


def generate(spec):
    """Draw a world.

    Returns ``(subjects, models, truth)`` where ``subjects`` and ``models``
    are lists of ``(id, LabeledMatrix)``.
    """
    seed = spec.seed
    n, L, P = spec.n_stimuli, spec.latent_dim, spec.private_dim
    ids = spec.stimulus_ids
    Z = keyed_generator(seed, "latent").standard_normal((n, L))
    truth = WorldTruth(latent=Z)

    subjects = []
    for sid in spec.subject_ids:
        A = keyed_generator(seed, "subject", sid, "readout").standard_normal(
            (L, spec.voxels_per_subject)) / math.sqrt(L)
        X = Z @ A
        if spec.brain_noise_sd > 0:
            X = X + spec.brain_noise_sd * keyed_generator(seed, "subject", sid, "noise").standard_normal(X.shape)
        truth.readouts[sid] = A
        subjects.append((sid, LabeledMatrix(ids, X)))

    models = []
    for m in spec.models:
        f = m.shared_fraction
        B = keyed_generator(seed, "model", m.model_id, "shared-loading").standard_normal(
            (L, m.rep_dim)) / math.sqrt(L)
        U = keyed_generator(seed, "model", m.model_id, "private-latent").standard_normal((n, P))
        C = keyed_generator(seed, "model", m.model_id, "private-loading").standard_normal(
            (P, m.rep_dim)) / math.sqrt(P)
        Y = np.zeros((n, m.rep_dim))
        if f > 0:
            Y += math.sqrt(f) * (Z @ B)
        if f < 1:
            Y += math.sqrt(1.0 - f) * (U @ C)
        if spec.rep_noise_sd > 0:
            Y += spec.rep_noise_sd * keyed_generator(seed, "model", m.model_id, "noise").standard_normal(Y.shape)
        scales = Y.std(axis=0)
        scales = np.where(scales > 0, scales, 1.0)
        Y = Y / scales
        truth.shared_loadings[m.model_id] = B
        truth.private_latents[m.model_id] = U
        truth.private_loadings[m.model_id] = C
        truth.column_scales[m.model_id] = scales
        models.append((m.model_id, LabeledMatrix(ids, Y)))
    return subjects, models, truth


def expected_outcome(spec):
    """Qualitative decoding MAR expected for each model of ``spec``.

    Rules, per model:

    - shared fraction 0: the representation carries nothing the brain
      responses see, so MAR should sit at chance.
    - shared fraction 1 with no brain or representation noise and
      ``n_stimuli >= 4 * max(latent_dim, rep_dim)``: MAR near 0.
    - anything else: below chance.
    """
    out = {}
    noiseless = spec.brain_noise_sd == 0 and spec.rep_noise_sd == 0
    for m in spec.models:
        if m.shared_fraction == 0:
            out[m.model_id] = CHANCE
        elif (m.shared_fraction == 1 and noiseless
              and spec.n_stimuli >= 4 * max(spec.latent_dim, m.rep_dim)):
            out[m.model_id] = NEAR_ZERO
        else:
            out[m.model_id] = BELOW_CHANCE
    return out


def write_world(spec, out_dir, eval_settings=None, format="binary"):
    """Generate ``spec`` and write matrices plus ``manifest.json`` under ``out_dir``.

    Returns the list of written paths, manifest last.
    """
    out_dir = Path(out_dir)
    subjects, models, _ = generate(spec)
    ext = "csv" if format == "csv" else "rdmx"
    written = []
    entries = {"subjects": [], "models": []}
    for kind, items in (("subjects", subjects), ("models", models)):
        for entity_id, mat in items:
            rel = f"{kind}/{entity_id}.{ext}"
            save_matrix(mat, out_dir / rel, format)
            written.append(out_dir / rel)
            entries[kind].append((entity_id, rel))
    ev = eval_settings or EvalSettings(seed=spec.seed)
    manifest = ExperimentManifest(
        subjects=entries["subjects"], models=entries["models"],
        stimulus_ids=spec.stimulus_ids, eval=ev, base_dir=str(out_dir),
    )
    save_manifest(manifest, out_dir / "manifest.json")
    written.append(out_dir / "manifest.json")
    return written
