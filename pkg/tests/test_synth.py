import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repdecode.decoder import DecoderJob, train_and_predict
from repdecode.matrixio import load_manifest
from repdecode.rankeval import mean_average_rank
from repdecode.ridge import RidgeConfig
from repdecode.synth import (
    BELOW_CHANCE,
    CHANCE,
    NEAR_ZERO,
    ModelSpec,
    WorldSpec,
    WorldSpecError,
    expected_outcome,
    generate,
    load_worldspec,
    worldspec_from_dict,
    write_world,
)


def spec(models, **kw):
    base = dict(n_stimuli=384, latent_dim=8, n_subjects=1, voxels_per_subject=20, seed=1)
    base.update(kw)
    return WorldSpec(models=tuple(ModelSpec(*m) for m in models), **base)


class TestGenerate:
    def test_zero_shared_uncorrelated(self):
        subjects, models, _ = generate(spec([("p", 16, 0.0)]))
        X, Y = subjects[0][1].values, models[0][1].values
        Xz = (X - X.mean(0)) / X.std(0)
        Yz = (Y - Y.mean(0)) / Y.std(0)
        corr = Xz.T @ Yz / len(X)
        assert np.abs(corr).max() < 0.2

    def test_fully_shared_noiseless_is_linear(self):
        s = spec([("lin", 8, 1.0)], brain_noise_sd=0.0, rep_noise_sd=0.0)
        subjects, models, truth = generate(s)
        Z, Y = truth.latent, models[0][1].values
        W, *_ = np.linalg.lstsq(Z, Y, rcond=None)
        assert np.linalg.norm(Z @ W - Y) / np.linalg.norm(Y) < 1e-8
        X = subjects[0][1].values
        W, *_ = np.linalg.lstsq(Z, X, rcond=None)
        assert np.linalg.norm(Z @ W - X) / np.linalg.norm(X) < 1e-8

    def test_unit_column_scale(self):
        _, models, _ = generate(spec([("a", 12, 0.4)]))
        np.testing.assert_allclose(models[0][1].values.std(0), 1.0, rtol=1e-12)

    def test_deterministic(self):
        s = spec([("a", 5, 0.3), ("b", 7, 0.9)], n_subjects=2)
        one, two = generate(s), generate(s)
        for (ia, a), (ib, b) in zip(one[0] + one[1], two[0] + two[1]):
            assert ia == ib and a.values.tobytes() == b.values.tobytes()

    def test_adding_model_leaves_others(self):
        s1 = spec([("a", 5, 0.3)], n_subjects=2)
        s2 = spec([("a", 5, 0.3), ("b", 7, 0.9)], n_subjects=2)
        g1, g2 = generate(s1), generate(s2)
        assert g1[1][0][1].values.tobytes() == g2[1][0][1].values.tobytes()
        for (_, a), (_, b) in zip(g1[0], g2[0]):
            assert a.values.tobytes() == b.values.tobytes()

    def test_seed_changes_world(self):
        a = generate(spec([("a", 4, 0.5)], seed=1))[1][0][1].values
        b = generate(spec([("a", 4, 0.5)], seed=2))[1][0][1].values
        assert not np.array_equal(a, b)

    def test_ids(self):
        s = spec([("a", 3, 0.5)], n_subjects=3, n_stimuli=12)
        subjects, models, _ = generate(s)
        assert [i for i, _ in subjects] == ["sub-01", "sub-02", "sub-03"]
        assert models[0][1].stimulus_ids[0] == "stim-000"


class TestExpectedOutcome:
    def test_labels(self):
        s = spec([("zero", 8, 0.0), ("full", 8, 1.0), ("half", 8, 0.5)],
                 brain_noise_sd=0.0, rep_noise_sd=0.0)
        assert expected_outcome(s) == {"zero": CHANCE, "full": NEAR_ZERO, "half": BELOW_CHANCE}

    def test_noise_or_few_stimuli_downgrade(self):
        assert expected_outcome(spec([("f", 8, 1.0)]))["f"] == BELOW_CHANCE
        s = spec([("f", 8, 1.0)], n_stimuli=20, brain_noise_sd=0.0, rep_noise_sd=0.0)
        assert expected_outcome(s)["f"] == BELOW_CHANCE


class TestValidation:
    def doc(self, **kw):
        d = {"n_stimuli": 20, "latent_dim": 3, "n_subjects": 1, "voxels_per_subject": 5,
             "models": [{"id": "a", "rep_dim": 4, "shared_fraction": 0.5}]}
        d.update(kw)
        return d

    def test_shared_fraction_out_of_range(self):
        with pytest.raises(WorldSpecError) as err:
            worldspec_from_dict(self.doc(models=[{"id": "a", "rep_dim": 4, "shared_fraction": 1.5}]))
        assert err.value.field == "shared_fraction"

    @pytest.mark.parametrize("key, value", [
        ("latent_dim", 0), ("n_subjects", 0), ("voxels_per_subject", -1), ("n_stimuli", 1),
        ("brain_noise_sd", -0.1), ("latent_dim", 2.5), ("bogus", 1),
    ])
    def test_bad_fields(self, key, value):
        with pytest.raises(WorldSpecError) as err:
            worldspec_from_dict(self.doc(**{key: value}))
        assert err.value.field == key

    def test_missing_field(self):
        d = self.doc()
        del d["latent_dim"]
        with pytest.raises(WorldSpecError, match="latent_dim"):
            worldspec_from_dict(d)

    def test_duplicate_model(self):
        m = {"id": "a", "rep_dim": 4, "shared_fraction": 0.5}
        with pytest.raises(WorldSpecError, match="duplicate"):
            worldspec_from_dict(self.doc(models=[m, m]))

    def test_json_roundtrip(self, tmp_path):
        s = worldspec_from_dict(self.doc(seed=4, rep_noise_sd=0.0))
        (tmp_path / "w.json").write_text(json.dumps(s.to_dict()))
        assert load_worldspec(tmp_path / "w.json") == s


def test_write_world(tmp_path):
    s = spec([("a", 4, 0.5), ("b", 3, 0.0)], n_subjects=2, n_stimuli=30)
    written = write_world(s, tmp_path)
    assert len(written) == 5 and written[-1].name == "manifest.json"
    man = load_manifest(tmp_path / "manifest.json")
    assert man.eval.seed == s.seed
    subjects, models, _ = generate(s)
    assert man.load_subject("sub-02").equals(subjects[1][1])
    assert man.load_model("b").equals(models[1][1])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.integers(1, 6), st.integers(1, 6))
def test_generated_world_properties(seed, f, L, rep_dim):
    s = WorldSpec(n_stimuli=30, latent_dim=L, n_subjects=1, voxels_per_subject=4,
                  models=(ModelSpec("m", rep_dim, f),), seed=seed)
    subjects, models, truth = generate(s)
    Y = models[0][1].values
    assert Y.shape == (30, rep_dim) and np.all(np.isfinite(Y))
    assert np.all(np.abs(Y.std(0) - 1) < 1e-9)
    assert subjects[0][1].values.shape == (30, 4)


def _mar(world_spec, cfg, folds=8):
    subjects, models, _ = generate(world_spec)
    out = {}
    for mid, Y in models:
        preds = [train_and_predict(DecoderJob(sid, mid, X, Y, cfg, folds=folds, seed=world_spec.seed))
                 for sid, X in subjects]
        out[mid] = mean_average_rank(preds, Y, bootstrap=500, seed=world_spec.seed)
    return out


@pytest.mark.slow
def test_chance_calibration_over_seeds():
    """Zero-shared MAR should land inside its own CI around chance for >= 9 of 10 seeds."""
    cfg = RidgeConfig()
    hits = 0
    for seed in range(10):
        s = WorldSpec(n_stimuli=192, latent_dim=16, n_subjects=2, voxels_per_subject=100,
                      models=(ModelSpec("null", 32, 0.0),), seed=seed)
        rep = _mar(s, cfg)["null"]
        hits += rep.ci_low <= rep.chance_level <= rep.ci_high
    assert hits >= 9


@pytest.mark.slow
def test_mar_monotone_in_shared_fraction():
    cfg = RidgeConfig()
    fractions = (1.0, 0.6, 0.2, 0.0)
    s = WorldSpec(n_stimuli=192, latent_dim=16, n_subjects=2, voxels_per_subject=100,
                  models=tuple(ModelSpec(f"f{f}", 32, f) for f in fractions), seed=5)
    mars = [r.mar for r in _mar(s, cfg).values()]
    assert all(a <= b for a, b in zip(mars, mars[1:]))
