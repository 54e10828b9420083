"""Weight blocks, configuration scoring, compiled views, and model files.

The central oracle: the sparse string-id scoring path and the compiled
array scoring path must agree on every configuration.
"""

import numpy as np
import pytest

from meetgist.corpus import CorpusError, prepare
from meetgist.features import build_registry, fit_stats
from meetgist.learning import latent_label_space
from meetgist.model import (
    Configuration,
    ModelError,
    Weights,
    arrays_from_config,
    check_fingerprint,
    compile_discussion,
    config_from_arrays,
    delta_score,
    load_model,
    relation_strings,
    save_model,
    score,
    score_view,
    selected_from_clusters,
)
from meetgist.rng import Pcg32

LABELS = ("elaboration", "negative", "positive")


@pytest.fixture
def preps(pair_corpus):
    return [prepare(d) for d in pair_corpus]


@pytest.fixture
def stats(preps):
    return fit_stats(preps)


@pytest.fixture
def registry(preps, stats):
    return build_registry(preps, LABELS, stats)


@pytest.fixture
def weights(registry, stats):
    return Weights.random(registry, Pcg32(5), stats.fingerprint())


def random_config(prep, rng):
    sel = {}
    for c in prep.candidates:
        sel.setdefault(c.cluster_key, rng.below(2))
    selected = tuple(sel[c.cluster_key] for c in prep.candidates)
    relations = {uid: LABELS[rng.below(len(LABELS))]
                 for uid in prep.tree.attachments}
    return Configuration(selected=selected, relations=relations)


class TestWeights:
    def test_zero_shapes(self, registry):
        w = Weights.zeros(registry)
        C, D, L = registry.n_content, registry.n_discourse, registry.n_labels
        assert w.wc.shape == (C,)
        assert w.wd.shape == (D, L)
        assert w.wo2.shape == (L, L)
        assert w.wcd.shape == (C, L)

    def test_random_block_draw_order(self, registry):
        w = Weights.random(registry, Pcg32(3))
        replay = Pcg32(3)
        expect = [replay.uniform_symmetric() for _ in range(w.flat().size)]
        np.testing.assert_array_equal(w.flat(), np.asarray(expect))
        assert np.all(w.flat() >= -1) and np.all(w.flat() <= 1)

    def test_copy_is_deep(self, weights):
        dup = weights.copy()
        dup.wc[0] += 1.0
        assert weights.wc[0] != dup.wc[0]

    def test_flat_layout(self, weights):
        flat = weights.flat()
        n_c = weights.wc.size
        n_d = weights.wd.size
        np.testing.assert_array_equal(flat[:n_c], weights.wc)
        np.testing.assert_array_equal(flat[n_c:n_c + n_d],
                                      weights.wd.reshape(-1))

    def test_resolve_forms(self, weights):
        reg = weights.registry
        blk, i, l = weights.resolve("c::tfidf_avg")
        assert blk == "c" and i == reg.content_index("c::tfidf_avg")
        blk, i, l = weights.resolve("d::jaccard::rel=positive")
        assert blk == "d" and l == 2
        blk, i, l = weights.resolve(
            "d::order2::rel=positive::prel=negative")
        assert (blk, i, l) == ("o2", 2, 1)
        blk, i, l = weights.resolve("cd::tfidf_avg::rel=elaboration")
        assert blk == "cd" and l == 0
        assert weights.resolve("c::never_seen") is None

    def test_resolve_rejects_malformed(self, weights):
        with pytest.raises(ModelError):
            weights.resolve("d::jaccard")
        with pytest.raises(ModelError):
            weights.resolve("bogus::x")

    def test_dot_matches_manual_sum(self, weights):
        reg = weights.registry
        phi = {"c::tfidf_avg": 0.5,
               "d::jaccard::rel=positive": 0.25,
               "d::order2::rel=negative::prel=positive": 1.0,
               "cd::tfidf_avg::rel=negative": 0.75,
               "c::unknown_template": 9.0}
        want = (weights.wc[reg.content_index("c::tfidf_avg")] * 0.5
                + weights.wd[reg.discourse_index("d::jaccard"), 2] * 0.25
                + weights.wo2[1, 2]
                + weights.wcd[reg.content_index("c::tfidf_avg"), 1] * 0.75)
        assert weights.dot(phi) == pytest.approx(want, abs=1e-12)


class TestScoringPaths:
    def test_string_and_array_paths_agree(self, preps, stats, registry):
        rng = Pcg32(11)
        for prep in preps:
            view = compile_discussion(prep, registry, stats)
            for trial in range(60):
                w = Weights.random(registry, Pcg32(100 + trial),
                                   stats.fingerprint())
                config = random_config(prep, rng)
                s_string = score(prep, config, w, stats)
                csel, d = arrays_from_config(view, config, registry)
                s_array = score_view(view, csel, d, w)
                assert s_array == pytest.approx(s_string, abs=1e-9)

    def test_delta_equals_rescore(self, preps, stats, registry, weights):
        rng = Pcg32(13)
        for prep in preps:
            view = compile_discussion(prep, registry, stats)
            config = random_config(prep, rng)
            csel, d = arrays_from_config(view, config, registry)
            base = score_view(view, csel, d, weights)
            for g in range(view.n_clusters):
                moved = csel.copy()
                moved[g] = 1 - moved[g]
                want = score_view(view, moved, d, weights) - base
                got = delta_score(view, csel, d, ("phrase", g), weights)
                assert got == pytest.approx(want, abs=1e-9)
            for i in view.nonroot:
                for new in range(len(LABELS)):
                    moved = d.copy()
                    moved[i] = new
                    want = score_view(view, csel, moved, weights) - base
                    got = delta_score(view, csel, d,
                                      ("relation", int(i), new), weights)
                    assert got == pytest.approx(want, abs=1e-9)

    def test_relabeling_root_rejected(self, preps, stats, registry, weights):
        view = compile_discussion(preps[0], registry, stats)
        csel = np.zeros(view.n_clusters, dtype=np.int8)
        d = np.zeros(view.n_units, dtype=np.int64)
        with pytest.raises(ValueError, match="root"):
            delta_score(view, csel, d, ("relation", 0, 1), weights)


class TestCompiledView:
    def test_gold_arrays(self, preps, stats, registry):
        view = compile_discussion(preps[0], registry, stats)
        # Candidates: merged report (1), NP report (1), two ADJP good (0).
        gold_sel = [view.gold_cluster[g] for g in view.cand_cluster]
        assert gold_sel == [1, 1, 0, 0]
        assert view.gold_d[0] == -1
        assert view.gold_d[1] == registry.label_index("elaboration")
        assert view.gold_d[2] == registry.label_index("positive")
        assert view.has_gold_phrases
        assert view.has_gold_relations

    def test_latent_registry_hides_gold_relations(self, preps, stats):
        latent = build_registry(preps, latent_label_space(4), stats)
        view = compile_discussion(preps[0], latent, stats)
        assert list(view.gold_d) == [-1, -1, -1]
        assert not view.has_gold_relations
        assert view.has_gold_phrases

    def test_cluster_membership(self, preps, stats, registry):
        view = compile_discussion(preps[0], registry, stats)
        assert view.n_cands == 4
        assert view.n_clusters == 3
        members = {g: sorted(view.clus_members[view.clus_ptr[g]:
                                               view.clus_ptr[g + 1]])
                   for g in range(view.n_clusters)}
        # Cluster order: (ADJP good), (NP report), (merged report).
        assert members == {0: [2, 3], 1: [1], 2: [0]}
        np.testing.assert_array_equal(view.cluster_size, [2, 1, 1])

    def test_tree_arrays(self, preps, stats, registry):
        view = compile_discussion(preps[1], registry, stats)
        np.testing.assert_array_equal(view.parent, [-1, 0, 1])
        np.testing.assert_array_equal(view.nonroot, [1, 2])
        assert list(view.children[view.children_ptr[1]:
                                  view.children_ptr[2]]) == [2]


class TestConfigArrays:
    def test_round_trip(self, preps, stats, registry):
        rng = Pcg32(17)
        for prep in preps:
            view = compile_discussion(prep, registry, stats)
            config = random_config(prep, rng)
            csel, d = arrays_from_config(view, config, registry)
            again = config_from_arrays(view, csel, d, registry)
            assert again.selected == config.selected
            assert again.relations == config.relations

    def test_cluster_split_rejected(self, preps, stats, registry):
        view = compile_discussion(preps[0], registry, stats)
        config = Configuration(selected=(0, 0, 1, 0),
                               relations={2: "positive", 3: "positive"})
        with pytest.raises(CorpusError, match="cluster"):
            arrays_from_config(view, config, registry)

    def test_selected_from_clusters(self, preps, stats, registry):
        view = compile_discussion(preps[0], registry, stats)
        csel = np.array([1, 0, 1], dtype=np.int8)
        assert selected_from_clusters(view, csel) == (1, 0, 1, 1)

    def test_relation_strings(self, preps, stats, registry):
        view = compile_discussion(preps[1], registry, stats)
        d = np.array([0, 2, 0])
        assert relation_strings(view, d, registry) \
            == {2: "positive", 3: "elaboration"}


class TestModelFile:
    def test_round_trip(self, weights, stats, tmp_path):
        path = tmp_path / "model.json"
        save_model(weights, stats, path)
        loaded, loaded_stats = load_model(path)
        np.testing.assert_array_equal(loaded.wc, weights.wc)
        np.testing.assert_array_equal(loaded.wd, weights.wd)
        np.testing.assert_array_equal(loaded.wo2, weights.wo2)
        np.testing.assert_array_equal(loaded.wcd, weights.wcd)
        assert loaded.registry.content == weights.registry.content
        assert loaded.registry.labels == weights.registry.labels
        assert loaded.stats_fingerprint == weights.stats_fingerprint
        assert loaded_stats.fingerprint() == stats.fingerprint()

    def test_rejects_non_model_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ModelError, match="not a model file"):
            load_model(path)

    def test_rejects_bad_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{")
        with pytest.raises(ModelError, match="JSON"):
            load_model(path)

    def test_fingerprint_guard(self, weights, stats):
        check_fingerprint(weights, stats)
        doctored = type(stats)(idf=dict(stats.idf),
                               feature_ranges=dict(stats.feature_ranges),
                               document_count=stats.document_count + 1)
        with pytest.raises(ModelError, match="fingerprint"):
            check_fingerprint(weights, doctored)
