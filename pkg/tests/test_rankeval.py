import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.stats import special_ortho_group

from repdecode.decoder import PredictionSet
from repdecode.matrixio import LabeledMatrix
from repdecode.rankeval import (
    ZeroVectorError,
    bootstrap_ci,
    cosine_distance,
    mean_average_rank,
    rank_csv_text,
    rank_score,
    rank_scores,
    summary_csv_text,
)

from oracles import brute_force_rank, random_instance


class TestCosineDistance:
    def test_identical(self):
        assert cosine_distance([1, 2, 3], [1, 2, 3]) == pytest.approx(0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine_distance([1, 0], [0, 1]) == 1.0

    def test_antipodal(self):
        assert cosine_distance([1, 0], [-1, 0]) == 2.0

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            cosine_distance([0, 0], [1, 0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine_distance([1, 0], [1, 0, 0])


class TestRankScore:
    def test_strict_nearest(self):
        assert rank_score([1, 0], [[1, 0], [0, 1], [-1, 0]], 0) == 0

    def test_total_tie(self):
        n = 7
        assert rank_score([0.3, -2.0], [[1.0, 1.0]] * n, 4) == (n - 1) / 2

    def test_hand_computed(self):
        d1 = 1 - 0.9 / math.sqrt(0.82)
        d2 = 1 - 0.1 / math.sqrt(0.82)
        assert cosine_distance([0.9, 0.1], [1, 0]) == pytest.approx(d1, rel=1e-12)
        assert cosine_distance([0.9, 0.1], [0, 1]) == pytest.approx(d2, rel=1e-12)
        assert rank_score([0.9, 0.1], [[1, 0], [0, 1]], 1) == 1

    def test_partial_tie(self):
        # two duplicates of the true candidate plus one closer item
        cands = [[1, 1], [1, 0], [1, 1], [1, 1], [-1, 0]]
        assert rank_score([1, 0.2], cands, 0) == 1 + 0.5 * 2

    def test_zero_candidate(self):
        with pytest.raises(ZeroVectorError):
            rank_score([1, 0], [[1, 0], [0, 0]], 0)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            rank_score([1, 0], [[1, 0]], 0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        P, C = rng.standard_normal((20, 5)), rng.standard_normal((20, 5))
        batch = rank_scores(P, C)
        assert [rank_score(P[i], C, i) for i in range(20)] == list(batch)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_brute_force(seed):
    p, C, i = random_instance(np.random.default_rng(seed))
    assert rank_score(p, C, i) == brute_force_rank(p.tolist(), C.tolist(), i)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_scale_invariance(seed, lam):
    p, C, i = random_instance(np.random.default_rng(seed))
    if np.any(C != np.round(C)):
        # continuous instance: ties have probability zero
        assert rank_score(lam * p, C, i) == rank_score(p, C, i)
    else:
        assert rank_score(4.0 * p, C, i) == rank_score(p, C, i)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 40)), int(rng.integers(2, 8))
    C = rng.standard_normal((n, d))
    p = rng.standard_normal(d)
    i = int(rng.integers(n))
    Q = special_ortho_group.rvs(d, random_state=rng)
    D = 1 - C @ p / (np.linalg.norm(C, axis=1) * np.linalg.norm(p))
    gaps = np.abs(D[:, None] - D[None, :])[~np.eye(n, dtype=bool)]
    if gaps.size and gaps.min() < 1e-9:
        return  # tie boundary, excluded by construction
    assert rank_score(p @ Q.T, C @ Q.T, i) == rank_score(p, C, i)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    p, C, i = random_instance(rng)
    perm = rng.permutation(len(C))
    new_i = int(np.flatnonzero(perm == i)[0])
    assert rank_score(p, C[perm], new_i) == rank_score(p, C, i)


def test_random_baseline_calibration():
    rng = np.random.default_rng(2024)
    n, d = 384, 32
    C = rng.standard_normal((n, d))
    P = rng.standard_normal((10_000, d))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    truth = rng.integers(0, n, 10_000)
    ranks = rank_scores(P, C, truth)
    assert np.all((ranks >= 0) & (ranks <= n - 1))
    assert abs(ranks.mean() - (n - 1) / 2) <= 3


def pset(subject, model, ids, values):
    return PredictionSet(subject, model, LabeledMatrix(ids, values), (1.0,),
                         np.full(len(ids), -1), "in_sample")


class TestMeanAverageRank:
    def test_perfect_decoder(self):
        rng = np.random.default_rng(0)
        ids = [f"s{i}" for i in range(30)]
        C = LabeledMatrix(ids, rng.standard_normal((30, 6)))
        rep = mean_average_rank([pset("a", "m", ids, C.values)], C, bootstrap=50)
        assert rep.mar == 0 and rep.ci_low == rep.ci_high == 0
        assert rep.chance_level == 14.5

    def test_two_subject_average(self):
        # one-hot candidates: the distance to candidate j falls as p_j grows,
        # so giving the true coordinate 0.5 and r others 1.0 yields rank r
        n = 30
        ids = [f"s{i}" for i in range(n)]
        cand = LabeledMatrix(ids, np.eye(n))

        def with_rank(r):
            P = np.zeros((n, n))
            for i in range(n):
                P[i, i] = 0.5
                P[i, [(i + k) % n for k in range(1, r + 1)]] = 1.0
            return P

        rep = mean_average_rank(
            [pset("a", "m", ids, with_rank(10)), pset("b", "m", ids, with_rank(20))], cand, bootstrap=20
        )
        assert rep.avg_rank == {"a": 10.0, "b": 20.0}
        assert rep.mar == 15.0

    def test_misaligned(self):
        C = LabeledMatrix(["a", "b"], [[1.0, 0], [0, 1.0]])
        with pytest.raises(ValueError, match="aligned"):
            mean_average_rank([pset("s", "m", ["b", "a"], [[1.0, 0], [0, 1.0]])], C)

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_average_rank([], LabeledMatrix(["a", "b"], [[1.0], [2.0]]))

    def test_report_invariants_and_exports(self):
        rng = np.random.default_rng(5)
        ids = [f"s{i}" for i in range(50)]
        C = LabeledMatrix(ids, rng.standard_normal((50, 4)))
        sets = [pset(s, "m", ids, C.values + rng.standard_normal((50, 4))) for s in ("x", "y", "z")]
        rep = mean_average_rank(sets, C, bootstrap=200, seed=1)
        all_ranks = np.vstack(list(rep.per_subject.values()))
        assert np.all((all_ranks >= 0) & (all_ranks <= 49))
        assert abs(rep.mar - np.mean([r.mean() for r in all_ranks])) <= 1e-12
        assert rep.ci_low <= rep.mar <= rep.ci_high
        assert 0 <= rep.mar <= 49
        lines = rank_csv_text(rep).splitlines()
        assert lines[0] == "model_id,subject_id,stimulus_id,rank" and len(lines) == 151
        summary = summary_csv_text([rep]).splitlines()
        assert summary[0].startswith("model_id,mar,ci_low,ci_high")


class TestBootstrap:
    def test_constant(self):
        assert bootstrap_ci(np.full((3, 40), 7.25), 100, seed=1) == (7.25, 7.25)

    def test_single_sentence(self):
        stats_ = np.array([[3.0], [5.0]])
        low, high = bootstrap_ci(stats_, 100)
        assert low == high == 4.0

    def test_two_point_binomial_oracle(self):
        ranks = np.r_[np.zeros(192), np.full(192, 383.0)]
        low, high = bootstrap_ci(ranks[None], 2000, seed=0)
        assert low <= 191.5 <= high
        assert high - low < 60
        # resampled mean is 383 * K / 384 with K ~ Binomial(384, 1/2)
        k_lo, k_hi = stats.binom.ppf([0.025, 0.975], 384, 0.5)
        assert low == pytest.approx(383 * k_lo / 384, abs=4)
        assert high == pytest.approx(383 * k_hi / 384, abs=4)

    def test_deterministic(self):
        x = np.random.default_rng(0).uniform(0, 100, (2, 60))
        assert bootstrap_ci(x, 300, seed=4) == bootstrap_ci(x, 300, seed=4)
        assert bootstrap_ci(x, 300, seed=4) != bootstrap_ci(x, 300, seed=5)

    def test_empty(self):
        with pytest.raises(ValueError):
            bootstrap_ci(np.zeros((1, 0)), 10)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(1, 30), st.floats(-50, 400), st.integers(1, 50))
def test_bootstrap_degenerate_cases(subjects, n, c, B):
    assert bootstrap_ci(np.full((subjects, n), c), B) == (c, c)
    column = np.random.default_rng(n).uniform(0, 10, (subjects, 1))
    low, high = bootstrap_ci(column, B)
    assert low == high == pytest.approx(column.mean(), rel=1e-12)
