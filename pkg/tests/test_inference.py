"""Exact inference against exhaustive enumeration oracles.

Every optimized path (tree sweep, gain test, vectorized brute force) is
checked against a naive loop that scores whole configurations with
``score_view``.
"""

import itertools

import numpy as np
import pytest

from meetgist.corpus import prepare
from meetgist.features import build_registry, fit_stats
from meetgist.inference import (
    DEFAULT_MAX_ITERS,
    brute_force_infer,
    cluster_gains,
    decode_discussion,
    infer_phrases,
    infer_relations,
    joint_infer,
    joint_infer_arrays,
)
from meetgist.model import ModelError, Weights, compile_discussion, score_view
from meetgist.rng import Pcg32

LABELS = ("elaboration", "negative", "positive")


@pytest.fixture
def setup(pair_corpus):
    preps = [prepare(d) for d in pair_corpus]
    stats = fit_stats(preps)
    registry = build_registry(preps, LABELS, stats)
    views = [compile_discussion(p, registry, stats) for p in preps]
    return preps, stats, registry, views


def draw(registry, stats, seed):
    return Weights.random(registry, Pcg32(seed), stats.fingerprint())


def all_selections(G):
    for m in range(2 ** G):
        yield np.array([(m >> (G - 1 - b)) & 1 for b in range(G)],
                       dtype=np.int8)


def naive_best_relations(view, csel, weights):
    best_d, best_s = None, -np.inf
    d = np.zeros(view.n_units, dtype=np.int64)
    for assign in itertools.product(range(view.n_labels),
                                    repeat=len(view.nonroot)):
        d[view.nonroot] = assign
        s = score_view(view, csel, d, weights)
        if s > best_s:
            best_s, best_d = s, d.copy()
    return best_d, best_s


def naive_best_phrases(view, d, weights):
    best_c, best_s = None, -np.inf
    for csel in all_selections(view.n_clusters):
        s = score_view(view, csel, d, weights)
        if s > best_s:
            best_s, best_c = s, csel
    return best_c, best_s


def naive_best_joint(view, weights):
    best, best_s = None, -np.inf
    d = np.zeros(view.n_units, dtype=np.int64)
    for assign in itertools.product(range(view.n_labels),
                                    repeat=len(view.nonroot)):
        d[view.nonroot] = assign
        for csel in all_selections(view.n_clusters):
            s = score_view(view, csel, d, weights)
            if s > best_s:
                best_s, best = s, (csel.copy(), d.copy())
    return best[0], best[1], best_s


class TestRelationHalfStep:
    def test_matches_exhaustive(self, setup):
        preps, stats, registry, views = setup
        for view in views:
            for seed in range(25):
                w = draw(registry, stats, seed)
                for csel in all_selections(view.n_clusters):
                    d = infer_relations(view, csel, w)
                    want_d, want_s = naive_best_relations(view, csel, w)
                    got = score_view(view, csel, d, w)
                    assert got == pytest.approx(want_s, abs=1e-9)
                    np.testing.assert_array_equal(d, want_d)

    def test_ties_take_first_label(self, setup):
        preps, stats, registry, views = setup
        w = Weights.zeros(registry, stats.fingerprint())
        for view in views:
            d = infer_relations(view, np.ones(view.n_clusters, np.int8), w)
            np.testing.assert_array_equal(d, np.zeros(view.n_units))

    def test_root_label_untouched(self, setup):
        preps, stats, registry, views = setup
        w = draw(registry, stats, 40)
        d = infer_relations(views[0], np.zeros(3, np.int8), w)
        assert d[0] == 0


class TestPhraseHalfStep:
    def test_matches_exhaustive(self, setup):
        preps, stats, registry, views = setup
        for view in views:
            for seed in range(25):
                w = draw(registry, stats, 100 + seed)
                for trial in range(4):
                    d = np.zeros(view.n_units, dtype=np.int64)
                    rng = Pcg32(trial)
                    for i in view.nonroot:
                        d[i] = rng.below(view.n_labels)
                    csel = infer_phrases(view, d, w)
                    want_c, want_s = naive_best_phrases(view, d, w)
                    got = score_view(view, csel, d, w)
                    assert got == pytest.approx(want_s, abs=1e-9)
                    np.testing.assert_array_equal(csel, want_c)

    def test_selection_is_gain_sign(self, setup):
        preps, stats, registry, views = setup
        view = views[0]
        w = draw(registry, stats, 7)
        d = np.zeros(view.n_units, dtype=np.int64)
        gains = cluster_gains(view, d, w)
        np.testing.assert_array_equal(infer_phrases(view, d, w),
                                      (gains > 0).astype(np.int8))

    def test_zero_gain_stays_unselected(self, setup):
        preps, stats, registry, views = setup
        w = Weights.zeros(registry, stats.fingerprint())
        for view in views:
            csel = infer_phrases(view, np.zeros(view.n_units, np.int64), w)
            assert not csel.any()


class TestAlternation:
    def test_score_never_decreases(self, setup):
        preps, stats, registry, views = setup
        for view in views:
            for seed in range(20):
                w = draw(registry, stats, 200 + seed)
                d = np.zeros(view.n_units, dtype=np.int64)
                csel = infer_phrases(view, d, w)
                last = score_view(view, csel, d, w)
                for _ in range(DEFAULT_MAX_ITERS):
                    d = infer_relations(view, csel, w)
                    s = score_view(view, csel, d, w)
                    assert s >= last - 1e-9
                    last = s
                    csel = infer_phrases(view, d, w)
                    s = score_view(view, csel, d, w)
                    assert s >= last - 1e-9
                    last = s

    def test_returns_fixpoint(self, setup):
        preps, stats, registry, views = setup
        for view in views:
            for seed in range(20):
                w = draw(registry, stats, 300 + seed)
                csel, d, value, sweeps = joint_infer_arrays(view, w)
                assert value == pytest.approx(
                    score_view(view, csel, d, w), abs=1e-12)
                if sweeps < DEFAULT_MAX_ITERS:
                    np.testing.assert_array_equal(
                        infer_relations(view, csel, w), d)
                    np.testing.assert_array_equal(
                        infer_phrases(view, d, w), csel)

    def test_zero_weights_converge_immediately(self, setup):
        preps, stats, registry, views = setup
        w = Weights.zeros(registry, stats.fingerprint())
        csel, d, value, sweeps = joint_infer_arrays(views[0], w)
        assert sweeps == 1
        assert value == 0.0
        assert not csel.any() and not d.any()


class TestBruteForce:
    def test_matches_naive_enumeration(self, setup):
        preps, stats, registry, views = setup
        for prep, view in zip(preps, views):
            for seed in range(25):
                w = draw(registry, stats, 400 + seed)
                config = brute_force_infer(view, w)
                want_c, want_d, want_s = naive_best_joint(view, w)
                assert config.score == pytest.approx(want_s, abs=1e-9)
                assert config.selected == tuple(
                    int(want_c[g]) for g in view.cand_cluster)
                assert config.relations == {
                    int(i) + 1: LABELS[int(want_d[i])] for i in view.nonroot}

    def test_alternation_never_beats_it(self, setup):
        preps, stats, registry, views = setup
        for view in views:
            for seed in range(40):
                w = draw(registry, stats, 500 + seed)
                exact = brute_force_infer(view, w)
                _, _, value, _ = joint_infer_arrays(view, w)
                assert value <= exact.score + 1e-9

    def test_agrees_with_alternation_when_converged_globally(self, setup):
        # Not every random draw converges to the global optimum; when the
        # scores do agree the assignments must agree too (no co-optimal
        # drift under continuous random weights).
        preps, stats, registry, views = setup
        agreed = 0
        for view in views:
            for seed in range(40):
                w = draw(registry, stats, 500 + seed)
                exact = brute_force_infer(view, w)
                approx = joint_infer(view, w)
                if abs(approx.score - exact.score) <= 1e-9:
                    agreed += 1
                    assert exact.same_assignment(approx)
        assert agreed > 0

    def test_zero_weight_ties(self, setup):
        preps, stats, registry, views = setup
        w = Weights.zeros(registry, stats.fingerprint())
        config = brute_force_infer(views[0], w)
        assert config.selected == (0, 0, 0, 0)
        assert set(config.relations.values()) == {"elaboration"}

    def test_enumeration_limit(self, setup):
        preps, stats, registry, views = setup
        w = draw(registry, stats, 1)
        with pytest.raises(ValueError, match="limit"):
            brute_force_infer(views[0], w, limit=1)


class TestDecode:
    def test_output_shape_and_consistency(self, setup):
        preps, stats, registry, views = setup
        w = draw(registry, stats, 9)
        for prep in preps:
            config = decode_discussion(prep, w, stats)
            assert len(config.selected) == len(prep.candidates)
            by_cluster = {}
            for cand, sel in zip(prep.candidates, config.selected):
                by_cluster.setdefault(cand.cluster_key, set()).add(sel)
            assert all(len(v) == 1 for v in by_cluster.values())
            assert set(config.relations) == set(prep.tree.attachments)
            assert set(config.relations.values()) <= set(LABELS)
            assert config.score is not None

    def test_rejects_foreign_stats(self, setup):
        preps, stats, registry, views = setup
        w = draw(registry, stats, 9)
        other = fit_stats(preps[:1])
        with pytest.raises(ModelError, match="fingerprint"):
            decode_discussion(preps[0], w, other)
